"""LSTM cell, dense heads, windowing and parameter initialization.

Gate pre-activations are stacked in the order forget, input, candidate,
output: rows [0:H] of the input/hidden weight matrices and bias belong to the
forget gate, [H:2H] to the input gate, and so on.  Node values are column
batches, so one graph can run many windows at once at inference time.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .domain import ProcessParameters, Sample, StressStrainCurve

log = logging.getLogger(__name__)

INPUT_WIDTH = 3  # strain + two process parameters


@dataclass(frozen=True)
class NormalizationStats:
    mean: np.ndarray
    std: np.ndarray
    stress_scale: float
    modulus_scale: Optional[float] = None

    @classmethod
    def from_samples(cls, samples: Sequence[Sample],
                     yield_strains: Optional[Sequence[float]] = None) -> "NormalizationStats":
        """Feature statistics, max stress, and (given yield strains) a modulus scale."""
        return cls.from_curves([(s.curve, s.params) for s in samples], yield_strains)

    @classmethod
    def from_curves(cls, pairs: Sequence[tuple],
                    yield_strains: Optional[Sequence[float]] = None) -> "NormalizationStats":
        """Same as from_samples over (curve, params) pairs, e.g. one region of each sample."""
        pairs = [(c, p) for c, p in pairs if len(c) > 0]
        if not pairs:
            raise ValueError("no points to compute normalization statistics from")
        rows = np.vstack([feature_rows(c.strain, p) for c, p in pairs])
        std = rows.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        scale = max(float(np.max(c.stress)) for c, _ in pairs)
        mod = scale / float(np.mean(yield_strains)) if yield_strains else None
        return cls(rows.mean(axis=0), std, scale, mod)

    def apply(self, rows: np.ndarray) -> np.ndarray:
        return (rows - self.mean) / self.std

    def as_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist(),
                "stress_scale": self.stress_scale, "modulus_scale": self.modulus_scale}

    @classmethod
    def from_dict(cls, d: dict) -> "NormalizationStats":
        mod = d.get("modulus_scale")
        return cls(np.asarray(d["mean"]), np.asarray(d["std"]), float(d["stress_scale"]),
                   None if mod is None else float(mod))


def feature_rows(strain, params: ProcessParameters) -> np.ndarray:
    strain = np.asarray(strain, dtype=float)
    return np.column_stack([strain, np.tile(params.as_array(), (len(strain), 1))])


@dataclass(frozen=True)
class Window:
    inputs: np.ndarray  # (n, 3), normalized
    target_strain: float
    target_stress: float
    region: str
    target_index: int


def build_windows(region_curve: StressStrainCurve, params: ProcessParameters, n: int,
                  norm: NormalizationStats, region: str = "elastic") -> list[Window]:
    """One window per region point from index 1 on, left-padded with row 0."""
    if n < 1:
        raise ValueError("sequence length must be >= 1")
    L = len(region_curve)
    if L < 2:
        log.info("%s region has %d point(s); no windows built", region, L)
        return []
    rows = norm.apply(feature_rows(region_curve.strain, params))
    padded = np.vstack([np.repeat(rows[:1], n - 1, axis=0), rows])
    return [Window(padded[k - 1:k - 1 + n], float(region_curve.strain[k]),
                   float(region_curve.stress[k]), region, k)
            for k in range(1, L)]


def stack_windows(windows: Sequence[Window]) -> np.ndarray:
    """(n, 3, B) batch of window inputs."""
    return np.stack([w.inputs for w in windows], axis=-1)


# --- parameters -------------------------------------------------------------------------

class ParamLayout:
    """Named array shapes packed into one flat float vector."""

    def __init__(self, shapes: dict[str, tuple]):
        self.shapes = dict(shapes)
        self.slices = {}
        off = 0
        for name, shape in self.shapes.items():
            size = int(np.prod(shape)) if shape else 1
            self.slices[name] = slice(off, off + size)
            off += size
        self.size = off

    def views(self, flat: np.ndarray) -> dict[str, np.ndarray]:
        return {k: flat[s].reshape(self.shapes[k]) for k, s in self.slices.items()}

    def flatten(self, arrays: dict) -> np.ndarray:
        out = np.zeros(self.size)
        for k, s in self.slices.items():
            out[s] = np.reshape(arrays[k], -1)
        return out


def lstm_shapes(hidden: int, outputs: int, input_width: int = INPUT_WIDTH) -> dict[str, tuple]:
    H = hidden
    return {"lstm.W": (4 * H, input_width), "lstm.U": (4 * H, H), "lstm.b": (4 * H, 1),
            "head.V": (outputs, H), "head.c": (outputs, 1)}


def parameter_count(hidden: int, outputs: int, input_width: int = INPUT_WIDTH) -> int:
    return ParamLayout(lstm_shapes(hidden, outputs, input_width)).size


@dataclass(frozen=True)
class LstmWeights:
    W: np.ndarray
    U: np.ndarray
    b: np.ndarray

    @property
    def hidden(self) -> int:
        return self.U.shape[1]


@dataclass(frozen=True)
class HeadWeights:
    V: np.ndarray
    c: np.ndarray


def init_params(hidden: int, outputs: int, seed: int, input_width: int = INPUT_WIDTH):
    """Uniform(+-1/sqrt(fan_in)) weights, forget bias 1, other biases 0."""
    rng = np.random.default_rng(seed)
    H = hidden
    k = 1.0 / np.sqrt(input_width + H)
    W = rng.uniform(-k, k, size=(4 * H, input_width))
    U = rng.uniform(-k, k, size=(4 * H, H))
    b = np.zeros((4 * H, 1))
    b[:H] = 1.0
    kh = 1.0 / np.sqrt(H)
    V = rng.uniform(-kh, kh, size=(outputs, H))
    c = np.zeros((outputs, 1))
    return LstmWeights(W, U, b), HeadWeights(V, c)


def weights_to_arrays(lstm: LstmWeights, head: HeadWeights) -> dict[str, np.ndarray]:
    return {"lstm.W": lstm.W, "lstm.U": lstm.U, "lstm.b": lstm.b, "head.V": head.V, "head.c": head.c}


# --- graph builders -----------------------------------------------------------------------

@dataclass(frozen=True)
class GraphParams:
    """Parameter leaves for one model; ids match ``lstm_shapes``."""

    W: ad.Expr
    U: ad.Expr
    b: ad.Expr
    V: ad.Expr
    c: ad.Expr
    hidden: int

    @classmethod
    def create(cls, hidden: int, prefix: str = "") -> "GraphParams":
        return cls(ad.param(prefix + "lstm.W"), ad.param(prefix + "lstm.U"),
                   ad.param(prefix + "lstm.b"), ad.param(prefix + "head.V"),
                   ad.param(prefix + "head.c"), hidden)


def lstm_forward(p: GraphParams, inputs: np.ndarray) -> ad.Expr:
    """Final hidden state for a window (n, 3) or a batch of windows (n, 3, B).

    Zero initial hidden and cell states; result has shape (H, B).
    """
    X = np.asarray(inputs, dtype=float)
    if X.ndim == 2:
        X = X[:, :, None]
    H = p.hidden
    h = c = None
    for t in range(X.shape[0]):
        z = p.W @ ad.inp(X[t]) + p.b
        if h is not None:
            z = z + p.U @ h
        f = ad.logistic(z[0:H])
        i = ad.logistic(z[H:2 * H])
        g = ad.tanh(z[2 * H:3 * H])
        o = ad.logistic(z[3 * H:4 * H])
        c = i * g if c is None else f * c + i * g
        h = o * ad.tanh(c)
    return h


def dense_head(p: GraphParams, hidden: ad.Expr) -> ad.Expr:
    """Affine map of the final hidden state to raw outputs, shape (m, B)."""
    return p.V @ hidden + p.c
