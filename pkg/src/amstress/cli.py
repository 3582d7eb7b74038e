"""Command-line entry point: ``amstress <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 data/validation error, 3 numerical
failure.  Every subcommand echoes its fully resolved configuration first so a
run can be reproduced from its own output.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .constitutive import fit_constitutive_params
from .domain import Dataset, ModelConfig, ProcessParameters, StressStrainCurve, validate_sample
from .gradcheck import objective_gradient_errors
from .io import (default_output_dir, load_manifest, read_report, write_curve_csv,
                 write_report)
from .metrics import mape
from .objectives import ArchitectureMode
from .pipeline import TrainedFold, predict_sample, run_cross_validation, train_fold
from .synth import TruthMap, generate_dataset

log = logging.getLogger("amstress")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
GRADCHECK_TOL = 1e-4


class UsageError(Exception):
    def __init__(self, message: str, usage: Optional[str] = None):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage; route it through our codes instead
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}", self.format_usage())


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("model configuration (defaults depend on the material)")
    for f in fields(ModelConfig):
        flag = "--" + f.name.replace("_", "-")
        g.add_argument(flag, dest=f"cfg_{f.name}", type=type(f.default), default=None)


def _resolve_config(args, dataset: Dataset) -> ModelConfig:
    overrides = {f.name: getattr(args, f"cfg_{f.name}") for f in fields(ModelConfig)
                 if getattr(args, f"cfg_{f.name}", None) is not None}
    return ModelConfig.for_dataset(dataset, **overrides)


def _parse_choice(fn, value):
    try:
        return fn(value)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _echo_config(block: dict) -> None:
    print("# effective config")
    for k, v in block.items():
        print(f"#   {k} = {json.dumps(v)}")


def _load_samples(path):
    if path is None:
        raise UsageError("--data is required")
    manifest = load_manifest(path)
    problems = [f"{s.id}: {msg}" for s in manifest.samples for msg in validate_sample(s)]
    if problems:
        raise ValueError("invalid samples:\n  " + "\n  ".join(problems))
    return manifest


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="amstress", description="Physics-informed stress-strain curve prediction.")
    p.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("synth", help="generate a synthetic dataset (manifest + curve CSVs)")
    s.add_argument("--material", required=True)
    s.add_argument("--out", type=Path, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--noise", type=float, default=0.0, help="multiplicative noise std")
    s.add_argument("--constant", action="store_true", help="no process-parameter sensitivity")

    s = sub.add_parser("fit-constitutive", help="fit constitutive laws to every curve")
    s.add_argument("--data", type=Path)
    s.add_argument("--out", type=Path, default=None)
    s.add_argument("--max-iterations", type=int, default=200)

    s = sub.add_parser("train", help="train one model on every sample of a dataset")
    s.add_argument("--data", type=Path)
    s.add_argument("--mode", default="loss-piml")
    s.add_argument("--out", type=Path, default=None)
    _add_config_flags(s)

    s = sub.add_parser("predict", help="predict curves with a trained model")
    s.add_argument("--model", type=Path, required=True)
    s.add_argument("--data", type=Path, help="manifest whose process parameters and grids are used")
    s.add_argument("--params", help="name=value,name=value (instead of --data)")
    s.add_argument("--max-strain", type=float, default=None)
    s.add_argument("--points", type=int, default=100)
    s.add_argument("--out", type=Path, default=None)

    s = sub.add_parser("cv", help="k-fold cross-validation (one fold trains, the rest test)")
    s.add_argument("--data", type=Path)
    s.add_argument("--mode", default="loss-piml", help=", ".join(m.value for m in ArchitectureMode))
    s.add_argument("--folds", type=int, default=5)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out", type=Path, default=None)
    _add_config_flags(s)

    s = sub.add_parser("gradcheck", help="finite-difference check of every objective")
    s.add_argument("--seed", type=int, action="append", help="repeatable; default 1 2 3")
    s.add_argument("--hidden", type=int, default=4)
    s.add_argument("--seq-len", type=int, default=3)
    s.add_argument("--step", type=float, default=1e-5)

    s = sub.add_parser("report", help="render a cv report as a table and plot data")
    s.add_argument("report", type=Path)
    s.add_argument("--csv", type=Path, help="per-sample predicted-vs-actual CSV")
    s.add_argument("--traces", type=Path, help="per-epoch loss trace CSV")
    s.add_argument("--data", type=Path, help="manifest with the actual curves (needed for --csv)")
    return p


# --- subcommands -----------------------------------------------------------------------------

def cmd_synth(args) -> int:
    ds = _parse_choice(Dataset.parse, args.material)
    out = args.out or default_output_dir() / ds.value
    tmap = TruthMap.default(ds, constant=args.constant)
    _echo_config({"command": "synth", "material": ds.value, "out": str(out), "seed": args.seed,
                  "noise": args.noise, "truth_map": tmap.as_dict()})
    path = generate_dataset(ds, tmap, args.noise, args.seed, out)
    n = len(load_manifest(path).samples)
    print(f"wrote {n} curves and {path}")
    return EXIT_OK


def cmd_fit_constitutive(args) -> int:
    manifest = _load_samples(args.data)
    out = args.out or default_output_dir() / f"fits-{manifest.dataset.value}.json"
    _echo_config({"command": "fit-constitutive", "data": str(args.data), "out": str(out),
                  "max_iterations": args.max_iterations})
    rows = []
    for s in manifest.samples:
        fit = fit_constitutive_params(s.curve, s.material, args.max_iterations)
        rows.append({"id": s.id, **fit.params.as_dict(), "residual_rms": fit.residual_rms,
                     "iterations": fit.iterations, "converged": fit.converged})
    keys = list(rows[0].keys())
    print(_table(keys, [[r[k] for k in keys] for r in rows]))
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report(out, {"material": manifest.dataset.value, "fits": rows})
    print(f"wrote {out}")
    return EXIT_OK


def cmd_train(args) -> int:
    manifest = _load_samples(args.data)
    mode = _parse_choice(ArchitectureMode.parse, args.mode)
    config = _resolve_config(args, manifest.dataset)
    out = args.out or default_output_dir() / f"model-{manifest.dataset.value}-{mode.value}.json"
    _echo_config({"command": "train", "data": str(args.data), "mode": mode.value,
                  "out": str(out), **config.as_dict()})
    trained = train_fold(manifest.samples, manifest.material, mode, config)
    doc = {"dataset": manifest.dataset.value, "config": config.as_dict(), "model": trained.as_dict()}
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report(out, doc)
    for region, lam in trained.lambdas().items():
        print(f"lambda[{region}] = {lam:.6f}")
    print(f"wrote {out}")
    return EXIT_OK


def _parse_params(text: str, dataset: Dataset) -> ProcessParameters:
    pairs = [kv.split("=", 1) for kv in text.split(",") if kv.strip()]
    if any(len(kv) != 2 for kv in pairs):
        raise UsageError("--params expects name=value,name=value")
    names = tuple(k.strip() for k, _ in pairs)
    if names != dataset.param_names:
        raise UsageError(f"--params names must be {','.join(dataset.param_names)}")
    return ProcessParameters(names, tuple(float(v) for _, v in pairs))


def cmd_predict(args) -> int:
    doc = read_report(args.model)
    dataset = Dataset.parse(doc["dataset"])
    trained = TrainedFold.from_dict(doc["model"])
    out = args.out or default_output_dir() / "predictions"
    grid_max = args.max_strain or TruthMap.default(dataset).grid.max_strain
    _echo_config({"command": "predict", "model": str(args.model), "data": str(args.data),
                  "params": args.params, "max_strain": grid_max, "points": args.points,
                  "out": str(out)})
    if (args.data is None) == (args.params is None):
        raise UsageError("give exactly one of --data or --params")
    out.mkdir(parents=True, exist_ok=True)
    if args.params:
        params = _parse_params(args.params, dataset)
        strain = np.linspace(grid_max / args.points, grid_max, args.points)
        pred = predict_sample(trained, params, strain)
        write_curve_csv(out / "prediction.csv", pred.curve)
        print(f"predicted yield eps={pred.yield_point.eps_y:.6g} sigma={pred.yield_point.sigma_y:.6g}")
        print(f"wrote {out / 'prediction.csv'}")
        return EXIT_OK
    manifest = _load_samples(args.data)
    rows = []
    for s in manifest.samples:
        pred = predict_sample(trained, s.params, s.curve.strain)
        write_curve_csv(out / f"{s.id}.csv", pred.curve)
        rows.append([s.id, pred.yield_point.eps_y, pred.yield_point.sigma_y,
                     mape(s.curve.stress, pred.curve.stress)])
    print(_table(["id", "pred_eps_y", "pred_sigma_y", "whole_mape"], rows))
    print(f"wrote {len(rows)} predictions to {out}")
    return EXIT_OK


def cmd_cv(args) -> int:
    if args.data is None:
        raise UsageError("cv: --data is required")
    if args.jobs < 1:
        raise UsageError("--jobs must be >= 1")
    mode = _parse_choice(ArchitectureMode.parse, args.mode)
    manifest = _load_samples(args.data)
    config = _resolve_config(args, manifest.dataset)
    out = args.out or default_output_dir() / f"cv-{manifest.dataset.value}-{mode.value}.json"
    _echo_config({"command": "cv", "data": str(args.data), "mode": mode.value, "folds": args.folds,
                  "jobs": args.jobs, "out": str(out), **config.as_dict()})
    report = run_cross_validation(manifest.samples, manifest.material, mode, config,
                                  k=args.folds, jobs=args.jobs, dataset=manifest.dataset.value)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_report(out, report)
    print(render_report(report))
    print(f"wrote {out}")
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    seeds = tuple(args.seed) if args.seed else (1, 2, 3)
    _echo_config({"command": "gradcheck", "seeds": list(seeds), "hidden": args.hidden,
                  "seq_len": args.seq_len, "step": args.step, "tolerance": GRADCHECK_TOL})
    errors = objective_gradient_errors(seeds, args.hidden, args.seq_len, args.step)
    ok = True
    for name, err in errors.items():
        flag = "ok" if err < GRADCHECK_TOL else "FAIL"
        ok &= err < GRADCHECK_TOL
        print(f"{name:<22s} max_rel_error={err:.3e}  {flag}")
    return EXIT_OK if ok else EXIT_NUMERIC


def cmd_report(args) -> int:
    try:
        report = read_report(args.report)
    except (OSError, json.JSONDecodeError) as exc:
        raise ValueError(f"cannot read report {args.report}: {exc}") from None
    _echo_config({"command": "report", "report": str(args.report), "csv": str(args.csv),
                  "traces": str(args.traces), "data": str(args.data)})
    print(render_report(report))
    if args.csv:
        if args.data is None:
            raise UsageError("--csv needs --data for the actual curves")
        curves = {s.id: s.curve for s in _load_samples(args.data).samples}
        write_prediction_csv(args.csv, report, curves)
        print(f"wrote {args.csv}")
    if args.traces:
        write_trace_csv(args.traces, report)
        print(f"wrote {args.traces}")
    return EXIT_OK


# --- rendering -------------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _table(header: Sequence[str], rows) -> str:
    cells = [list(map(str, header))] + [[_fmt(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def render_report(report: dict) -> str:
    cfg = report.get("config", {})
    head = f"material={cfg.get('material')} mode={cfg.get('mode')} k={cfg.get('k')} seed={cfg.get('seed')}"
    rows = [[k, a["mean"], a["std"], a["ci_half_width"], a["n"]]
            for k, a in report.get("aggregates", {}).items()]
    parts = [head, _table(["metric", "mean", "std", "ci95_half", "n"], rows)]
    lam_rows = [[f["fold"], f["lambda_avg"], *(f["lambda"].get(r) for r in ("elastic", "plastic"))]
                for f in report.get("per_fold", []) if "lambda_avg" in f]
    if lam_rows:
        parts.append(_table(["fold", "lambda_avg", "lambda_elastic", "lambda_plastic"], lam_rows))
    return "\n\n".join(parts)


def write_prediction_csv(path, report: dict, curves: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fold", "id", "strain", "actual_stress_mpa", "predicted_stress_mpa"])
        for f in report["per_fold"]:
            for rec in f["samples"]:
                curve: Optional[StressStrainCurve] = curves.get(rec["id"])
                if curve is None:
                    raise ValueError(f"sample {rec['id']} missing from --data")
                for e, a, p in zip(curve.strain, curve.stress, rec["predicted_stress"]):
                    w.writerow([f["fold"], rec["id"], repr(float(e)), repr(float(a)), repr(float(p))])


def write_trace_csv(path, report: dict) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["fold", "region", "epoch", "data", "physics", "aux", "lambda", "total"])
        for entry in report.get("loss_traces", []):
            for region, tr in entry.items():
                if region == "fold":
                    continue
                lam = tr.get("lambda", [])
                for i, total in enumerate(tr["total"]):
                    # lambda trace starts with the initial value
                    w.writerow([entry["fold"], region, i + 1, tr["data"][i], tr["physics"][i],
                                tr["aux"][i], lam[i + 1] if i + 1 < len(lam) else "", total])


COMMANDS = {"synth": cmd_synth, "fit-constitutive": cmd_fit_constitutive, "train": cmd_train,
            "predict": cmd_predict, "cv": cmd_cv, "gradcheck": cmd_gradcheck, "report": cmd_report}


def dispatch(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
        logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                            format="%(levelname)s %(name)s: %(message)s")
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(exc.usage or parser.format_usage())
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except (np.linalg.LinAlgError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(dispatch())
