"""Synthetic stress-strain datasets with known constitutive ground truth.

Each DOE row gets constitutive parameters from a linear truth map over the
process parameters (normalized to [-1, 1] across the DOE box); the curve is
the piecewise Hooke + hardening law on a uniform strain grid, optionally with
multiplicative Gaussian noise.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Optional

import numpy as np

from .constitutive import piecewise_stress
from .domain import (ConstitutiveParams, Dataset, MaterialClass, ProcessParameters,
                     Sample, StressStrainCurve, YieldPoint)
from .io import sample_to_entry, write_curve_csv, write_manifest

log = logging.getLogger(__name__)


_NYLON = [(t, s) for t in (220, 230, 240, 250, 260) for s in (10, 20, 30, 40, 50)]
_CF_ABS = [(t, s) for t in (200, 220, 240, 260, 280) for s in (10, 30, 50, 70, 90)]
_ALSI10MG = [
    (60, 250), (160, 250), (160, 800), (260, 250), (260, 800), (260, 1350), (360, 250),
    (360, 800), (360, 1350), (360, 1900), (460, 250), (460, 800), (460, 1350), (460, 1900),
    (460, 2450), (110, 250), (110, 500), (160, 500), (260, 500), (360, 500), (460, 500),
    (210, 250), (210, 500), (210, 800), (210, 1100), (260, 1100), (360, 1100), (460, 1100),
]
_TI6AL4V = [
    (275, 800), (275, 760), (275, 720), (275, 680), (275, 640), (275, 600), (275, 840),
    (275, 880), (275, 920), (275, 960), (275, 1000), (175, 800), (195, 800), (215, 800),
    (235, 800), (255, 800), (295, 800), (315, 800), (335, 800), (355, 800), (375, 800),
    (135, 400), (205, 600), (345, 1000), (415, 1200), (485, 1400), (500, 1480), (155, 400),
    (235, 600), (395, 1000), (475, 1200), (500, 1290), (115, 400), (175, 600), (295, 1000),
    (355, 1200), (475, 1600), (75, 400), (115, 600), (195, 1000), (235, 1200), (315, 1600),
]
_DOE = {Dataset.NYLON: _NYLON, Dataset.CF_ABS: _CF_ABS,
        Dataset.ALSI10MG: _ALSI10MG, Dataset.TI6AL4V: _TI6AL4V}


def doe_table(dataset: Dataset) -> list[ProcessParameters]:
    """The published design of experiments, in sample-id order (row 1 first)."""
    names = dataset.param_names
    return [ProcessParameters(names, row) for row in _DOE[dataset]]


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    max_strain: float
    points: int

    def grid(self) -> np.ndarray:
        return np.linspace(self.max_strain / self.points, self.max_strain, self.points)


_BASE = {
    Dataset.NYLON: {"E": 1200.0, "eps_y": 0.025, "a": 12.0, "b": 60.0},
    Dataset.CF_ABS: {"E": 2500.0, "eps_y": 0.018, "a": 15.0, "b": 90.0},
    Dataset.ALSI10MG: {"E": 70000.0, "eps_y": 0.0035, "K": 450.0, "n": 0.35},
    Dataset.TI6AL4V: {"E": 110000.0, "eps_y": 0.008, "K": 900.0, "n": 0.30},
}

# sensitivity of each parameter to (param1, param2) normalized to [-1, 1]
_POLYMER_COEFFS = {"E": (0.08, -0.06), "eps_y": (0.05, -0.04), "a": (0.10, -0.08), "b": (-0.05, 0.05)}
_METAL_COEFFS = {"E": (0.04, -0.03), "eps_y": (0.06, -0.05), "K": (0.10, -0.08), "n": (-0.05, 0.05)}


@dataclass(frozen=True)
class TruthMap:
    dataset: Dataset
    base: Mapping[str, float]
    coefficients: Mapping[str, tuple[float, float]]
    grid: GridSpec
    noise_std: float = 0.0

    @classmethod
    def default(cls, dataset: Dataset, noise_std: float = 0.0, constant: bool = False) -> "TruthMap":
        polymer = dataset.material is MaterialClass.POLYMER
        coeffs = dict(_POLYMER_COEFFS if polymer else _METAL_COEFFS)
        if constant:
            coeffs = {k: (0.0, 0.0) for k in coeffs}
        grid = GridSpec(0.08, 160) if polymer else GridSpec(0.02, 100)
        return cls(dataset, dict(_BASE[dataset]), coeffs, grid, noise_std)

    def bounds(self) -> np.ndarray:
        rows = np.array([p.values for p in doe_table(self.dataset)])
        return np.stack([rows.min(axis=0), rows.max(axis=0)], axis=1)

    def as_dict(self) -> dict:
        return {"dataset": self.dataset.value, "base": dict(self.base),
                "coefficients": {k: list(v) for k, v in self.coefficients.items()},
                "grid": {"max_strain": self.grid.max_strain, "points": self.grid.points},
                "noise_std": self.noise_std}


def normalized_params(params: ProcessParameters, bounds: np.ndarray) -> np.ndarray:
    lo, hi = bounds[:, 0], bounds[:, 1]
    return 2.0 * (params.as_array() - lo) / (hi - lo) - 1.0


def truth_params(params: ProcessParameters, tmap: TruthMap) -> ConstitutiveParams:
    u = normalized_params(params, tmap.bounds())
    if np.any(np.abs(u) > 1.0 + 1e-12):
        log.warning("process parameters %s lie outside the DOE box; extrapolating", params.values)
    vals = {}
    for key, base in tmap.base.items():
        c = tmap.coefficients.get(key, (0.0, 0.0))
        v = base * (1.0 + float(np.dot(c, u)))
        if not v > 0:
            raise GenerationError(f"coefficient {key}={tuple(c)} drives {key} non-positive at {params.values}")
        vals[key] = v
    if "n" in vals and vals["n"] > 1:
        raise GenerationError(f"coefficient n={tuple(tmap.coefficients['n'])} drives n above 1")
    vals["sigma_y"] = vals["E"] * vals["eps_y"]
    return ConstitutiveParams.from_dict(vals)


def synthesize_curve(truth: ConstitutiveParams, material: MaterialClass, grid: GridSpec,
                     noise_std: float, seed, *, sample_id: str = "synthetic",
                     params: Optional[ProcessParameters] = None) -> Sample:
    if noise_std < 0:
        raise ValueError("noise_std must be >= 0")
    eps = grid.grid()
    sig = piecewise_stress(truth, material, eps)
    if noise_std > 0:
        rng = np.random.default_rng(seed)
        sig = sig * (1.0 + rng.normal(0.0, noise_std, size=sig.shape))
    sig = np.maximum(sig, 0.0)
    if params is None:
        params = ProcessParameters(("p1", "p2"), (1.0, 1.0))
    return Sample(sample_id, material, params, StressStrainCurve(eps, sig),
                  truth_yield=truth.yield_point, truth_params=truth)


def make_samples(tmap: TruthMap, seed: int) -> list[Sample]:
    ds = tmap.dataset
    out = []
    for i, p in enumerate(doe_table(ds), start=1):
        truth = truth_params(p, tmap)
        out.append(synthesize_curve(truth, ds.material, tmap.grid, tmap.noise_std,
                                    [seed, i], sample_id=f"{ds.value}-{i:02d}", params=p))
    return out


def generate_dataset(dataset: Dataset, tmap: Optional[TruthMap], noise_std: float,
                     seed: int, out_dir) -> Path:
    """Write one curve CSV per DOE row plus ``manifest.json``; return the manifest path."""
    tmap = replace(tmap or TruthMap.default(dataset), noise_std=noise_std)
    out_dir = Path(out_dir)
    (out_dir / "curves").mkdir(parents=True, exist_ok=True)
    entries = []
    for s in make_samples(tmap, seed):
        rel = f"curves/{s.id}.csv"
        write_curve_csv(out_dir / rel, s.curve)
        entries.append(sample_to_entry(s, rel))
    generator = {"seed": seed, "truth_map": tmap.as_dict()}
    return write_manifest(out_dir / "manifest.json", dataset, entries, generator)
