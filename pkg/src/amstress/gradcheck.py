"""Finite-difference check of every training objective on a small LSTM."""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .domain import YieldPoint
from .lstm import GraphParams, dense_head, init_params, lstm_forward, weights_to_arrays
from .objectives import (ELASTIC, HOLLOMON, LAW_VARS, VOCE, constrain_physics_vars, law_stress,
                         total_loss_activation_based, total_loss_loss_based)

OBJECTIVES = tuple(f"{kind}/{law}" for kind in ("loss", "activation") for law in (ELASTIC, VOCE, HOLLOMON))


def build_objective(name: str, seed: int, hidden: int = 4, seq_len: int = 3):
    """(loss graph, bindings) for one objective on random inputs and weights."""
    kind, law = name.split("/")
    rng = np.random.default_rng(seed)
    outputs = len(LAW_VARS[law]) + (1 if kind == "loss" else 0)
    lstm_w, head_w = init_params(hidden, outputs, seed)
    bindings = weights_to_arrays(lstm_w, head_w)
    # perturb biases so no derivative sits exactly at a symmetric point
    bindings["lstm.b"] = bindings["lstm.b"] + rng.normal(0, 0.1, bindings["lstm.b"].shape)
    bindings["head.c"] = rng.normal(0, 0.5, bindings["head.c"].shape)

    scale = 100.0
    yp = YieldPoint(0.01, 50.0)
    if law == ELASTIC:
        strain = float(rng.uniform(0.002, 0.009))
        stress = 5000.0 * strain * (1 + rng.normal(0, 0.05))
    else:
        strain = float(rng.uniform(0.015, 0.05))
        stress = 50.0 + 30.0 * (1 + rng.normal(0, 0.05))
    gp = GraphParams.create(hidden)
    raw = dense_head(gp, lstm_forward(gp, rng.normal(size=(seq_len, 3))))
    if kind == "loss":
        bindings["lambda"] = np.array(rng.uniform(0.8, 1.2))
        g = total_loss_loss_based(raw, [strain], [stress], yp, law, ad.param("lambda"),
                                  0.1, scale, modulus_scale=scale / yp.eps_y)
        return g.total, bindings
    pv = constrain_physics_vars(raw, law, scale, modulus_scale=scale / yp.eps_y)
    out = law_stress(pv, [strain], yp)
    return total_loss_activation_based(out, [stress], scale), bindings


def objective_gradient_errors(seeds=(1, 2, 3), hidden: int = 4, seq_len: int = 3,
                              h: float = 1e-5) -> dict[str, float]:
    """Worst relative gradient error per objective over ``seeds``."""
    out = {}
    for name in OBJECTIVES:
        worst = 0.0
        for seed in seeds:
            root, bindings = build_objective(name, seed, hidden, seq_len)
            worst = max(worst, ad.grad_check(root, bindings, h))
        out[name] = float(worst)
    return out
