"""Loss-based and activation-based physics-informed training objectives.

Stress-valued terms are divided by a stress scale (the training-set maximum
stress) before squaring, so polymer and metal losses live on similar scales.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import autodiff as ad
from .constitutive import HOLLOMON_DELTA
from .domain import Elastic, HollomonPlastic, MaterialClass, VocePlastic, YieldPoint

ELASTIC, VOCE, HOLLOMON = "elastic", "voce", "hollomon"
LAW_VARS = {ELASTIC: ("E",), VOCE: ("a", "b"), HOLLOMON: ("K", "n")}
VOCE_RATE_SCALE = 100.0


class ArchitectureMode(enum.Enum):
    NON_SEGMENTAL = "non-segmental"
    SEGMENTAL_PLAIN = "segmental"
    LOSS_BASED = "loss-piml"
    ACTIVATION_BASED = "activation-piml"
    CONSTITUTIVE = "constitutive"
    RIDGE = "ridge"

    @property
    def uses_lstm(self) -> bool:
        return self not in (ArchitectureMode.CONSTITUTIVE, ArchitectureMode.RIDGE)

    @property
    def data_loss_only(self) -> bool:
        return self in (ArchitectureMode.NON_SEGMENTAL, ArchitectureMode.SEGMENTAL_PLAIN)

    @classmethod
    def parse(cls, name: str) -> "ArchitectureMode":
        for m in cls:
            if m.value == name or m.name.lower() == name.lower():
                return m
        raise ValueError(f"unknown mode {name!r}; expected one of {[m.value for m in cls]}")


def region_law(region: str, material: MaterialClass) -> str:
    if region == "elastic":
        return ELASTIC
    return VOCE if material is MaterialClass.POLYMER else HOLLOMON


def head_outputs(mode: ArchitectureMode, law: str) -> int:
    if mode is ArchitectureMode.LOSS_BASED:
        return 1 + len(LAW_VARS[law])
    if mode is ArchitectureMode.ACTIVATION_BASED:
        return len(LAW_VARS[law])
    return 1


@dataclass(frozen=True)
class GraphPhysicsVars:
    law: str
    values: tuple  # Exprs in LAW_VARS order, each shaped (1, B)


def constrain_physics_vars(raw, law: str, scale: float,
                           modulus_scale: Optional[float] = None) -> GraphPhysicsVars:
    """Map unconstrained head outputs to positive physics variables.

    ``raw`` is an Expr of shape (k, B) (rows are variables) or a sequence of
    per-variable Exprs.  E uses ``modulus_scale`` when given (stress scale over
    a typical yield strain), otherwise ``scale``.
    """
    rows = list(raw) if isinstance(raw, (list, tuple)) else [raw[i:i + 1] for i in range(len(LAW_VARS[law]))]
    if law == ELASTIC:
        return GraphPhysicsVars(law, ((modulus_scale or scale) * ad.softplus(rows[0]),))
    if law == VOCE:
        return GraphPhysicsVars(law, (scale * ad.softplus(rows[0]),
                                      VOCE_RATE_SCALE * ad.softplus(rows[1])))
    if law == HOLLOMON:
        return GraphPhysicsVars(law, (scale * ad.softplus(rows[0]), ad.logistic(rows[1])))
    raise ValueError(f"unknown law {law!r}")


def physics_vars_numeric(raw: np.ndarray, law: str, scale: float,
                         modulus_scale: Optional[float] = None):
    """Numeric twin of ``constrain_physics_vars`` returning domain objects per column."""
    raw = np.atleast_2d(np.asarray(raw, dtype=float))
    sp = lambda x: np.logaddexp(0.0, x)
    if law == ELASTIC:
        return [Elastic(float(v)) for v in (modulus_scale or scale) * sp(raw[0])]
    if law == VOCE:
        return [VocePlastic(float(a), float(b))
                for a, b in zip(scale * sp(raw[0]), VOCE_RATE_SCALE * sp(raw[1]))]
    n = 0.5 * (1.0 + np.tanh(0.5 * raw[1]))
    return [HollomonPlastic(float(K), float(nn)) for K, nn in zip(scale * sp(raw[0]), n)]


def _row(x) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(1, -1)


def _yield_arrays(yield_point):
    if yield_point is None:
        return None
    if isinstance(yield_point, YieldPoint):
        return np.asarray(yield_point.eps_y), np.asarray(yield_point.sigma_y)
    eps = _row([y.eps_y for y in yield_point])
    sig = _row([y.sigma_y for y in yield_point])
    return eps, sig


def law_stress(pv: GraphPhysicsVars, strain, yield_point=None) -> ad.Expr:
    """Stress from physics variables at the given strain(s), in MPa.

    ``yield_point`` is a YieldPoint or one YieldPoint per window column.
    """
    eps = _row(strain)
    if pv.law == ELASTIC:
        return pv.values[0] * ad.inp(eps)
    ya = _yield_arrays(yield_point)
    if ya is None:
        raise ValueError(f"{pv.law} law requires the predicted yield point")
    eps_y, sig_y = ya
    plastic = eps - eps_y
    if pv.law == VOCE:
        a, b = pv.values
        return sig_y + a * (1.0 - ad.exp(-(b * ad.inp(plastic))))
    K, n = pv.values
    p = ad.inp(np.maximum(plastic, HOLLOMON_DELTA))
    return sig_y + K * (p ** n)


activation_stress = law_stress


def _as_pred(pred) -> tuple[ad.Expr, Optional[int]]:
    if isinstance(pred, ad.Expr):
        return pred, None
    parts = list(pred)
    if not parts:
        raise ValueError("empty prediction sequence")
    return ad.concat([ad.as_expr(p) if isinstance(p, ad.Expr) else ad.const(np.reshape(p, (1, 1)))
                      for p in parts], axis=1), len(parts)


def data_loss(pred_stress, actual_stress) -> ad.Expr:
    """Mean squared error between predicted (graph) and actual stresses."""
    actual = _row(actual_stress)
    pred, n = _as_pred(pred_stress)
    if actual.size == 0:
        raise ValueError("empty stress sequence")
    if n is not None and n != actual.size:
        raise ValueError(f"length mismatch: {n} predictions vs {actual.size} targets")
    return ad.mean_all(ad.square(pred - ad.inp(actual)))


def physics_residual_loss(pred_stress, pv: GraphPhysicsVars, target_strains,
                          yield_point=None, scale: float = 1.0) -> ad.Expr:
    """Mean squared gap between the stress output and the law at (vars, strain)."""
    if pv.law != ELASTIC and yield_point is None:
        raise ValueError(f"{pv.law} physics loss requires the predicted yield point")
    pred, n = _as_pred(pred_stress)
    strains = _row(target_strains)
    if n is not None and n != strains.size:
        raise ValueError("prediction and strain sequences are not aligned")
    resid = pred - law_stress(pv, strains, yield_point)
    if scale != 1.0:
        resid = resid / scale
    return ad.mean_all(ad.square(resid))


def auxiliary_loss(lambda_physics, alpha: float = 0.1) -> ad.Expr:
    if alpha < 0:
        raise ValueError("alpha must be >= 0")
    return alpha * ad.square(ad.as_expr(lambda_physics) - 1.0)


@dataclass(frozen=True)
class LossGraph:
    """Graph-valued components; ``total`` is built from the other three."""

    data: ad.Expr
    physics: Optional[ad.Expr]
    aux: Optional[ad.Expr]
    lam: Optional[ad.Expr]
    total: ad.Expr


@dataclass(frozen=True)
class LossBreakdown:
    data_loss: float
    physics_loss: float
    aux_loss: float
    lambda_physics: float
    total: float

    def identity_gap(self) -> float:
        return abs(self.total - (self.data_loss + self.lambda_physics * self.physics_loss + self.aux_loss))


def total_loss_loss_based(raw: ad.Expr, target_strains, target_stresses, yield_point,
                          law: str, lambda_physics: ad.Expr, alpha: float,
                          scale: float, modulus_scale: Optional[float] = None) -> LossGraph:
    """Data + lambda * physics + auxiliary loss.

    Row 0 of ``raw`` is the stress output in units of ``scale``; the remaining
    rows are the law's unconstrained physics variables.
    """
    k = len(LAW_VARS[law])
    stress_norm = raw[0:1]
    pv = constrain_physics_vars(raw[1:1 + k], law, scale, modulus_scale)
    ld = data_loss(stress_norm, _row(target_stresses) / scale)
    lp = physics_residual_loss(stress_norm * scale, pv, target_strains, yield_point, scale)
    la = auxiliary_loss(lambda_physics, alpha)
    return LossGraph(ld, lp, la, lambda_physics, ld + lambda_physics * lp + la)


def total_loss_activation_based(stress: ad.Expr, target_stresses, scale: float) -> ad.Expr:
    """MSE between activation-produced stresses and actual stresses (scaled)."""
    return data_loss(stress / scale, _row(target_stresses) / scale)


def total_loss_plain(raw: ad.Expr, target_stresses, scale: float) -> ad.Expr:
    return data_loss(raw[0:1], _row(target_stresses) / scale)


def breakdown_from_values(graph: LossGraph) -> LossBreakdown:
    """Read component values cached by the last evaluation of ``graph.total``."""
    def val(e, default=0.0):
        return default if e is None else float(np.reshape(e.value, ()))
    return LossBreakdown(val(graph.data), val(graph.physics), val(graph.aux),
                         val(graph.lam, 1.0), val(graph.total))


def evaluate_breakdown(graph: LossGraph, bindings) -> LossBreakdown:
    ad.evaluate(graph.total, bindings)
    return breakdown_from_values(graph)
