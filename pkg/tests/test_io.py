import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from amstress.domain import Dataset, StressStrainCurve
from amstress.io import (CSV_HEADER, DataFormatError, dumps_report, load_manifest, read_curve_csv,
                         read_report, sample_to_entry, write_curve_csv, write_manifest, write_report)


@given(st.lists(st.tuples(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6)), min_size=1, max_size=30))
def test_curve_csv_roundtrip_is_exact(tmp_path_factory, pts):
    path = tmp_path_factory.mktemp("csv") / "c.csv"
    c = StressStrainCurve([p[0] for p in pts], [p[1] for p in pts])
    write_curve_csv(path, c)
    back = read_curve_csv(path)
    assert np.array_equal(back.strain, c.strain) and np.array_equal(back.stress, c.stress)


def test_curve_csv_format(tmp_path):
    write_curve_csv(tmp_path / "c.csv", StressStrainCurve([0.1, 0.2], [1.5, 3.0]))
    raw = (tmp_path / "c.csv").read_bytes()
    assert raw == f"{CSV_HEADER}\n0.1,1.5\n0.2,3.0\n".encode()
    assert b"\r" not in raw


def test_bad_csv_is_rejected(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("eps,sig\n0.1,2\n")
    with pytest.raises(DataFormatError):
        read_curve_csv(p)
    p.write_text(f"{CSV_HEADER}\n0.1,abc\n")
    with pytest.raises(DataFormatError):
        read_curve_csv(p)


def test_manifest_roundtrip(tmp_path, nylon_samples):
    entries = []
    (tmp_path / "curves").mkdir()
    for s in nylon_samples[:3]:
        rel = f"curves/{s.id}.csv"
        write_curve_csv(tmp_path / rel, s.curve)
        entries.append(sample_to_entry(s, rel))
    path = write_manifest(tmp_path / "manifest.json", Dataset.NYLON, entries, {"seed": 0})
    man = load_manifest(tmp_path)
    assert man.dataset is Dataset.NYLON and man.generator == {"seed": 0}
    for a, b in zip(man.samples, nylon_samples[:3]):
        assert a == b
    doc = json.loads(path.read_text())
    doc["samples"][0].pop("params")
    path.write_text(json.dumps(doc))
    with pytest.raises(DataFormatError):
        load_manifest(path)


def test_missing_manifest(tmp_path):
    with pytest.raises(DataFormatError):
        load_manifest(tmp_path / "nope.json")


def test_report_roundtrip(tmp_path):
    rep = {"config": {"mode": "ridge", "seed": 1}, "aggregates": {"whole_mape": {"mean": 0.1 + 0.2}},
           "per_fold": [{"fold": 1, "samples": [{"id": "x", "predicted_stress": [1e-300, 3.14159]}]}]}
    write_report(tmp_path / "r.json", rep)
    assert read_report(tmp_path / "r.json") == rep
    assert json.loads(dumps_report(rep)) == rep
