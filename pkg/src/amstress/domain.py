"""Shared domain types for stress-strain curve prediction.

Strain is a dimensionless fraction (0.01 == 1 %), stress is in MPa.  All
types are frozen dataclasses; pipeline stages build new values instead of
mutating old ones.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, fields
from typing import Optional, Union

import numpy as np


class MaterialClass(enum.Enum):
    POLYMER = "polymer"
    METAL = "metal"

    @property
    def plastic_law(self) -> str:
        return "voce" if self is MaterialClass.POLYMER else "hollomon"


class Dataset(enum.Enum):
    """The four material datasets; each fixes a material class and defaults."""

    NYLON = "nylon"
    CF_ABS = "cf-abs"
    ALSI10MG = "alsi10mg"
    TI6AL4V = "ti6al4v"

    @property
    def material(self) -> MaterialClass:
        if self in (Dataset.NYLON, Dataset.CF_ABS):
            return MaterialClass.POLYMER
        return MaterialClass.METAL

    @property
    def param_names(self) -> tuple[str, str]:
        if self.material is MaterialClass.POLYMER:
            return ("print_temperature_c", "print_speed_mm_s")
        return ("laser_power_w", "scanning_speed_mm_s")

    @classmethod
    def parse(cls, name: str) -> "Dataset":
        key = name.strip().lower().replace("_", "-")
        aliases = {"cfabs": "cf-abs", "alsi": "alsi10mg", "ti": "ti6al4v", "ti64": "ti6al4v"}
        key = aliases.get(key, key)
        for d in cls:
            if d.value == key:
                return d
        raise ValueError(f"unknown material {name!r}; expected one of {[d.value for d in cls]}")


# sequence lengths (elastic, plastic) used by the LSTM windows
SEQ_LENS = {
    Dataset.NYLON: (2, 10),
    Dataset.CF_ABS: (2, 10),
    Dataset.ALSI10MG: (5, 5),
    Dataset.TI6AL4V: (10, 10),
}


@dataclass(frozen=True)
class ProcessParameters:
    names: tuple[str, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.names, self.values))


@dataclass(frozen=True, eq=False)
class StressStrainCurve:
    strain: np.ndarray
    stress: np.ndarray

    def __post_init__(self):
        strain = np.array(self.strain, dtype=float)
        stress = np.array(self.stress, dtype=float)
        strain.flags.writeable = False
        stress.flags.writeable = False
        object.__setattr__(self, "strain", strain)
        object.__setattr__(self, "stress", stress)

    def __len__(self) -> int:
        return len(self.strain)

    def __eq__(self, other):
        if not isinstance(other, StressStrainCurve):
            return NotImplemented
        return (self.strain.shape == other.strain.shape
                and self.stress.shape == other.stress.shape
                and bool(np.array_equal(self.strain, other.strain))
                and bool(np.array_equal(self.stress, other.stress)))

    __hash__ = None

    def slice(self, start: int, stop: Optional[int] = None) -> "StressStrainCurve":
        return StressStrainCurve(self.strain[start:stop], self.stress[start:stop])

    @staticmethod
    def concat(a: "StressStrainCurve", b: "StressStrainCurve") -> "StressStrainCurve":
        return StressStrainCurve(np.concatenate([a.strain, b.strain]),
                                 np.concatenate([a.stress, b.stress]))


@dataclass(frozen=True)
class YieldPoint:
    eps_y: float
    sigma_y: float


@dataclass(frozen=True)
class SegmentedCurve:
    elastic: StressStrainCurve
    plastic: StressStrainCurve
    boundary_index: int

    def merged(self) -> StressStrainCurve:
        return StressStrainCurve.concat(self.elastic, self.plastic)


@dataclass(frozen=True)
class Elastic:
    E: float


@dataclass(frozen=True)
class VocePlastic:
    a: float
    b: float


@dataclass(frozen=True)
class HollomonPlastic:
    K: float
    n: float


PhysicsVariables = Union[Elastic, VocePlastic, HollomonPlastic]
PlasticParams = Union[VocePlastic, HollomonPlastic]


@dataclass(frozen=True)
class ConstitutiveParams:
    E: float
    eps_y: float
    sigma_y: float
    plastic: PlasticParams

    @property
    def yield_point(self) -> YieldPoint:
        return YieldPoint(self.eps_y, self.sigma_y)

    @property
    def material(self) -> MaterialClass:
        if isinstance(self.plastic, VocePlastic):
            return MaterialClass.POLYMER
        return MaterialClass.METAL

    def as_dict(self) -> dict[str, float]:
        d = {"E": self.E, "eps_y": self.eps_y, "sigma_y": self.sigma_y}
        if isinstance(self.plastic, VocePlastic):
            d.update(a=self.plastic.a, b=self.plastic.b)
        else:
            d.update(K=self.plastic.K, n=self.plastic.n)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ConstitutiveParams":
        if "a" in d:
            plastic: PlasticParams = VocePlastic(float(d["a"]), float(d["b"]))
        else:
            plastic = HollomonPlastic(float(d["K"]), float(d["n"]))
        return cls(float(d["E"]), float(d["eps_y"]), float(d["sigma_y"]), plastic)


@dataclass(frozen=True)
class Sample:
    id: str
    material: MaterialClass
    params: ProcessParameters
    curve: StressStrainCurve
    truth_yield: Optional[YieldPoint] = None
    truth_params: Optional[ConstitutiveParams] = None


@dataclass(frozen=True)
class ModelConfig:
    hidden_units: int = 32
    learning_rate: float = 0.01
    batch_size: int = 1
    epochs: int = 10
    seq_len_elastic: int = 2
    seq_len_plastic: int = 10
    alpha_aux: float = 0.1
    ridge_degree: int = 2
    ridge_penalty: float = 1.0
    curve_ridge_degree: int = 3
    seed: int = 0

    @classmethod
    def for_dataset(cls, dataset: Dataset, **overrides) -> "ModelConfig":
        el, pl = SEQ_LENS[dataset]
        kw = {"seq_len_elastic": el, "seq_len_plastic": pl}
        kw.update(overrides)
        return cls(**kw)

    def as_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


def _finite(x) -> bool:
    return bool(np.all(np.isfinite(np.asarray(x, dtype=float))))


def _physics_violations(prefix: str, p) -> list[str]:
    out = []
    if isinstance(p, Elastic):
        if not p.E > 0:
            out.append(f"{prefix}.E: must be > 0")
    elif isinstance(p, VocePlastic):
        if not p.a > 0:
            out.append(f"{prefix}.a: must be > 0")
        if not p.b > 0:
            out.append(f"{prefix}.b: must be > 0")
    elif isinstance(p, HollomonPlastic):
        if not p.K > 0:
            out.append(f"{prefix}.K: must be > 0")
        if not 0 < p.n <= 1:
            out.append(f"{prefix}.n: must satisfy 0 < n <= 1")
    return out


def curve_violations(curve: StressStrainCurve, prefix: str = "curve") -> list[str]:
    out = []
    s, t = curve.strain, curve.stress
    if s.ndim != 1 or t.ndim != 1 or len(s) != len(t):
        return [f"{prefix}: strain and stress must be 1-D with equal lengths"]
    if len(s) < 4:
        out.append(f"{prefix}: expected at least 4 points")
    if not (_finite(s) and _finite(t)):
        out.append(f"{prefix}: non-finite values")
        return out
    if len(s) and s[0] < 0:
        out.append(f"{prefix}: strain[0] must be >= 0")
    if len(s) > 1 and not np.all(np.diff(s) > 0):
        out.append("strain not strictly increasing")
    return out


def validate_sample(sample: Sample) -> list[str]:
    """Return a list of human-readable invariant violations (empty if valid)."""
    out: list[str] = []
    if len(sample.params.values) != 2 or len(sample.params.names) != 2:
        out.append("params: expected 2")
    vals = sample.params.values
    if not all(math.isfinite(v) and v > 0 for v in vals):
        out.append("params: values must be finite and positive")
    out.extend(curve_violations(sample.curve))

    if (sample.truth_yield is None) != (sample.truth_params is None):
        out.append("truth: yield and params must be both present or both absent")

    y = sample.truth_yield
    if y is not None:
        if not (y.eps_y > 0):
            out.append("truth_yield.eps_y: must be > 0")
        if not (y.sigma_y > 0):
            out.append("truth_yield.sigma_y: must be > 0")
        s = sample.curve.strain
        if len(s) and not (s[0] < y.eps_y < s[-1]):
            out.append("truth_yield.eps_y: must lie strictly inside the strain range")

    p = sample.truth_params
    if p is not None:
        if not p.E > 0:
            out.append("truth_params.E: must be > 0")
        if not (p.eps_y > 0 and p.sigma_y > 0):
            out.append("truth_params: eps_y and sigma_y must be > 0")
        out.extend(_physics_violations("truth_params.plastic", p.plastic))
        if p.material is not sample.material:
            out.append("truth_params.plastic: law does not match material class")
    return out
