"""File formats: curve CSV, dataset manifest JSON, report JSON."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .domain import (ConstitutiveParams, Dataset, ProcessParameters, Sample,
                     StressStrainCurve, YieldPoint)

CSV_HEADER = "strain,stress_mpa"


class DataFormatError(ValueError):
    pass


def write_curve_csv(path, curve: StressStrainCurve) -> None:
    lines = [CSV_HEADER]
    lines += [f"{float(e)!r},{float(s)!r}" for e, s in zip(curve.strain, curve.stress)]
    Path(path).write_bytes(("\n".join(lines) + "\n").encode("utf-8"))


def read_curve_csv(path) -> StressStrainCurve:
    text = Path(path).read_text(encoding="utf-8")
    rows = [ln for ln in text.splitlines() if ln.strip()]
    if not rows or rows[0].strip() != CSV_HEADER:
        raise DataFormatError(f"{path}: expected header {CSV_HEADER!r}")
    try:
        data = np.array([[float(x) for x in ln.split(",")] for ln in rows[1:]], dtype=float)
    except ValueError as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    if data.ndim != 2 or data.shape[1] != 2:
        raise DataFormatError(f"{path}: expected two columns")
    return StressStrainCurve(data[:, 0], data[:, 1])


@dataclass(frozen=True)
class Manifest:
    dataset: Dataset
    samples: tuple[Sample, ...]
    generator: Optional[dict] = None
    path: Optional[Path] = field(default=None, compare=False)

    @property
    def material(self):
        return self.dataset.material


def sample_to_entry(sample: Sample, curve_path: str) -> dict:
    entry = {"id": sample.id, "params": sample.params.as_dict(), "curve_path": curve_path}
    if sample.truth_yield is not None:
        entry["truth_yield"] = {"eps_y": sample.truth_yield.eps_y,
                                "sigma_y": sample.truth_yield.sigma_y}
    if sample.truth_params is not None:
        entry["truth_params"] = sample.truth_params.as_dict()
    return entry


def write_manifest(path, dataset: Dataset, entries: list[dict],
                   generator: Optional[dict] = None) -> Path:
    doc: dict = {"material": dataset.value}
    if generator is not None:
        doc["generator"] = generator
    doc["samples"] = entries
    path = Path(path)
    path.write_bytes((json.dumps(doc, indent=2) + "\n").encode("utf-8"))
    return path


def load_manifest(path) -> Manifest:
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise DataFormatError(f"cannot read manifest {path}: {exc}") from None
    try:
        dataset = Dataset.parse(doc["material"])
        samples = []
        for s in doc["samples"]:
            params = ProcessParameters(tuple(s["params"].keys()), tuple(s["params"].values()))
            curve = read_curve_csv(path.parent / s["curve_path"])
            ty = s.get("truth_yield")
            tp = s.get("truth_params")
            samples.append(Sample(
                id=str(s["id"]), material=dataset.material, params=params, curve=curve,
                truth_yield=YieldPoint(ty["eps_y"], ty["sigma_y"]) if ty else None,
                truth_params=ConstitutiveParams.from_dict(tp) if tp else None))
    except (KeyError, TypeError, ValueError) as exc:
        raise DataFormatError(f"malformed manifest {path}: {exc}") from None
    return Manifest(dataset, tuple(samples), doc.get("generator"), path)


def dumps_report(report: dict) -> str:
    return json.dumps(report, indent=2, sort_keys=False) + "\n"


def write_report(path, report: dict) -> None:
    Path(path).write_bytes(dumps_report(report).encode("utf-8"))


def read_report(path) -> dict:
    return json.loads(Path(path).read_text(encoding="utf-8"))


def default_output_dir() -> Path:
    return Path(os.environ.get("AMSTRESS_OUT", "out"))
