"""Three-step prediction pipeline and k-fold cross-validation.

Step 1 predicts the yield point from process parameters (ridge), step 2
splits curves at the yield strain, step 3 predicts each region with its own
LSTM and concatenates the two.  Baselines (mean constitutive law, pointwise
ridge) and the two ablations (single unsegmented LSTM, segmented LSTM with
pure data loss) share the same fold protocol.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import autodiff as ad
from .constitutive import (HOLLOMON_DELTA, extract_yield_point, fit_constitutive_params,
                           mean_constitutive_model, piecewise_stress)
from .domain import (ConstitutiveParams, MaterialClass, ModelConfig, ProcessParameters, Sample,
                     SegmentedCurve, StressStrainCurve, YieldPoint)
from .lstm import (GraphParams, NormalizationStats, ParamLayout, Window, build_windows,
                   dense_head, feature_rows, init_params, lstm_forward, lstm_shapes,
                   weights_to_arrays)
from .metrics import mape, r_squared, relative_error_pct, ultimate_tensile_strength, youngs_modulus, aggregate
from .objectives import (ELASTIC, HOLLOMON, VOCE, ArchitectureMode, LossGraph,
                         breakdown_from_values, constrain_physics_vars, head_outputs, law_stress,
                         region_law, total_loss_activation_based, total_loss_loss_based,
                         total_loss_plain)
from .optim import OptimizerState, adam_step
from .ridge import RidgeModel, fit_curve_ridge, fit_yield_models, predict_curve_ridge, predict_yield

log = logging.getLogger(__name__)


class TrainingDivergedError(FloatingPointError):
    pass


class SegmentationError(ValueError):
    pass


# --- folds ---------------------------------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignments: dict  # sample id -> fold index

    def training_ids(self, fold: int) -> list[str]:
        return [sid for sid, f in self.assignments.items() if f == fold]

    def test_ids(self, fold: int) -> list[str]:
        return [sid for sid, f in self.assignments.items() if f != fold]


def make_folds(ids: Sequence[str], k: int = 5, seed: int = 0) -> FoldPlan:
    """Seeded shuffle then round-robin; fold f is the *training* set of run f."""
    ids = list(ids)
    if k < 2:
        raise ValueError("k must be >= 2")
    if len(ids) < k:
        raise ValueError(f"need at least k={k} samples, got {len(ids)}")
    if len(set(ids)) != len(ids):
        raise ValueError("sample ids must be unique")
    order = np.random.default_rng(seed).permutation(len(ids))
    assignments = {ids[j]: pos % k for pos, j in enumerate(order)}
    return FoldPlan(k, {sid: assignments[sid] for sid in ids})


# --- segmentation ----------------------------------------------------------------------------

def segment_curve(curve: StressStrainCurve, eps_py: float) -> SegmentedCurve:
    s = curve.strain
    if not (s[0] < eps_py < s[-1]):
        raise SegmentationError(f"yield strain {eps_py} outside the open strain range ({s[0]}, {s[-1]})")
    idx = int(np.searchsorted(s, eps_py, side="left"))
    return SegmentedCurve(curve.slice(0, idx), curve.slice(idx), idx)


def actual_yield(sample: Sample) -> YieldPoint:
    return sample.truth_yield if sample.truth_yield is not None else extract_yield_point(sample.curve)


# --- region models -------------------------------------------------------------------------

def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) & 0xFFFFFFFFFFFFFFFF for p in parts]).generate_state(1)[0])


@dataclass
class RegionModel:
    """One LSTM + head for one region (or the whole curve for the ablation)."""

    region: str
    law: str
    mode: ArchitectureMode
    hidden: int
    seq_len: int
    flat: np.ndarray
    outputs: int
    has_lambda: bool

    @classmethod
    def create(cls, region: str, law: str, mode: ArchitectureMode, hidden: int,
               seq_len: int, seed: int) -> "RegionModel":
        m = head_outputs(mode, law)
        lstm_w, head_w = init_params(hidden, m, seed)
        arrays = weights_to_arrays(lstm_w, head_w)
        has_lambda = mode is ArchitectureMode.LOSS_BASED
        if has_lambda:
            arrays["lambda"] = np.array(1.0)
        model = cls(region, law, mode, hidden, seq_len, np.zeros(0), m, has_lambda)
        model.flat = model.layout().flatten(arrays)
        return model

    def layout(self) -> ParamLayout:
        shapes = lstm_shapes(self.hidden, self.outputs)
        if self.has_lambda:
            shapes["lambda"] = ()
        return ParamLayout(shapes)

    def bindings(self) -> dict:
        return self.layout().views(self.flat)

    @property
    def lambda_physics(self) -> float:
        return float(self.bindings()["lambda"]) if self.has_lambda else float("nan")

    def as_dict(self) -> dict:
        return {"region": self.region, "law": self.law, "mode": self.mode.value,
                "hidden": self.hidden, "seq_len": self.seq_len, "outputs": self.outputs,
                "has_lambda": self.has_lambda, "params": self.flat.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "RegionModel":
        return cls(d["region"], d["law"], ArchitectureMode(d["mode"]), int(d["hidden"]),
                   int(d["seq_len"]), np.asarray(d["params"], dtype=float), int(d["outputs"]),
                   bool(d["has_lambda"]))


@dataclass(frozen=True)
class TrainingItem:
    sample_id: str
    window: Window
    yield_point: Optional[YieldPoint]


def build_step_loss(model: RegionModel, gp: GraphParams, item: TrainingItem,
                    norm: NormalizationStats, alpha: float, lam: Optional[ad.Expr] = None):
    """Scalar loss graph for one window; returns (total, LossGraph or None)."""
    w = item.window
    scale, mod = norm.stress_scale, norm.modulus_scale
    raw = dense_head(gp, lstm_forward(gp, w.inputs))
    if model.mode is ArchitectureMode.LOSS_BASED:
        g = total_loss_loss_based(raw, [w.target_strain], [w.target_stress], item.yield_point,
                                  model.law, lam, alpha, scale, mod)
        return g.total, g
    if model.mode is ArchitectureMode.ACTIVATION_BASED:
        pv = constrain_physics_vars(raw, model.law, scale, mod)
        stress = law_stress(pv, [w.target_strain], item.yield_point)
        return total_loss_activation_based(stress, [w.target_stress], scale), None
    return total_loss_plain(raw, [w.target_stress], scale), None


@dataclass
class LossTrace:
    data: list = field(default_factory=list)
    physics: list = field(default_factory=list)
    aux: list = field(default_factory=list)
    lam: list = field(default_factory=list)
    total: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {"data": self.data, "physics": self.physics, "aux": self.aux,
                "lambda": self.lam, "total": self.total}


def train_region(model: RegionModel, items: Sequence[TrainingItem], config: ModelConfig,
                 norm: NormalizationStats, seed: int) -> LossTrace:
    """Adam, batch size 1, epoch-seeded shuffling over all (sample, window) pairs.

    Per-epoch trace entries are means over that epoch's steps.  The lambda
    trace (loss-based mode only) holds the initial value followed by the value
    at the end of each epoch.  For the activation mode the whole objective is
    the physics-law MSE and is recorded as ``physics``.
    """
    trace = LossTrace()
    if model.has_lambda:
        trace.lam.append(model.lambda_physics)
    if not items:
        log.warning("%s model has no training windows", model.region)
        for _ in range(config.epochs):
            for lst in (trace.data, trace.physics, trace.aux, trace.total):
                lst.append(0.0)
            if model.has_lambda:
                trace.lam.append(model.lambda_physics)
        return trace

    layout = model.layout()
    gp = GraphParams.create(model.hidden)
    lam = ad.param("lambda") if model.has_lambda else None
    state = OptimizerState.zeros(layout.size, learning_rate=config.learning_rate)
    flat = model.flat
    for epoch in range(config.epochs):
        order = np.random.default_rng(_derived_seed(seed, epoch)).permutation(len(items))
        sums = np.zeros(4)
        for idx in order:
            item = items[idx]
            total, lg = build_step_loss(model, gp, item, norm, config.alpha_aux, lam)
            value, grads = ad.evaluate_with_gradients(total, layout.views(flat))
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"non-finite loss in {model.region} model, epoch {epoch + 1}, sample {item.sample_id}")
            if lg is not None:
                b = breakdown_from_values(lg)
                sums += (b.data_loss, b.physics_loss, b.aux_loss, b.total)
            elif model.mode is ArchitectureMode.ACTIVATION_BASED:
                sums += (0.0, value, 0.0, value)
            else:
                sums += (value, 0.0, 0.0, value)
            flat, state = adam_step(flat, layout.flatten(grads), state)
        sums /= len(items)
        trace.data.append(float(sums[0]))
        trace.physics.append(float(sums[1]))
        trace.aux.append(float(sums[2]))
        trace.total.append(float(sums[3]))
        model.flat = flat
        if model.has_lambda:
            trace.lam.append(model.lambda_physics)
    model.flat = flat
    return trace


@dataclass(frozen=True)
class RegionPrediction:
    stress: np.ndarray
    violations: int = 0


def predict_region(model: RegionModel, strain: np.ndarray, params: ProcessParameters,
                   norm: NormalizationStats, yield_point: YieldPoint) -> RegionPrediction:
    """Predict stresses on a region's strain grid (strain is exogenous).

    Point k >= 1 comes from the window ending at k-1.  Point 0 reuses the
    first window (n copies of row 0): the activation mode evaluates its law
    there; other modes anchor it at 0 / the origin line (elastic) or at the
    predicted yield stress (plastic).
    """
    strain = np.asarray(strain, dtype=float)
    L = len(strain)
    if L == 0:
        return RegionPrediction(np.zeros(0))
    rows = norm.apply(feature_rows(strain, params))
    n = model.seq_len
    padded = np.vstack([np.repeat(rows[:1], n - 1, axis=0), rows])
    starts = np.maximum(np.arange(L) - 1, 0)
    batch = np.stack([padded[s:s + n] for s in starts], axis=-1)  # (n, 3, L)

    gp = GraphParams.create(model.hidden)
    raw = dense_head(gp, lstm_forward(gp, batch))
    bind = model.bindings()
    scale = norm.stress_scale

    if model.mode is ArchitectureMode.ACTIVATION_BASED:
        pv = constrain_physics_vars(raw, model.law, scale, norm.modulus_scale)
        stress_e = law_stress(pv, strain, yield_point if model.law != ELASTIC else None)
        stress = np.reshape(ad.evaluate(stress_e, bind), -1).copy()
        violations = 0
        if model.law == VOCE:
            violations = int(np.sum(stress < yield_point.sigma_y))
        elif model.law == HOLLOMON:
            K = np.reshape(pv.values[0].value, -1)
            nn = np.reshape(pv.values[1].value, -1)
            violations = int(np.sum(stress < yield_point.sigma_y + K * HOLLOMON_DELTA**nn))
        return RegionPrediction(stress, violations)

    out = np.reshape(ad.evaluate(raw, bind)[0], -1) * scale
    stress = out.copy()
    if model.region == "plastic":
        stress[0] = yield_point.sigma_y
    else:
        stress[0] = _elastic_anchor(strain, stress, yield_point)
    return RegionPrediction(stress)


def _elastic_anchor(strain: np.ndarray, stress: np.ndarray, yield_point: YieldPoint) -> float:
    if strain[0] == 0.0:
        return 0.0
    if len(strain) >= 2:
        return float(stress[1] * strain[0] / strain[1])
    return float(yield_point.sigma_y * strain[0] / yield_point.eps_y)


# --- folds: training and prediction ----------------------------------------------------------

@dataclass
class TrainedFold:
    material: MaterialClass
    mode: ArchitectureMode
    train_ids: tuple
    yield_models: tuple
    norms: dict = field(default_factory=dict)  # keyed by region name
    elastic: Optional[RegionModel] = None
    plastic: Optional[RegionModel] = None
    whole: Optional[RegionModel] = None
    traces: dict = field(default_factory=dict)
    mean_params: Optional[ConstitutiveParams] = None
    curve_ridge: Optional[RidgeModel] = None

    def lambdas(self) -> dict:
        out = {}
        for name in ("elastic", "plastic"):
            m = getattr(self, name)
            if m is not None and m.has_lambda:
                out[name] = m.lambda_physics
        return out

    def as_dict(self) -> dict:
        d = {"material": self.material.value, "mode": self.mode.value,
             "train_ids": list(self.train_ids),
             "yield_models": [m.as_dict() for m in self.yield_models]}
        if self.norms:
            d["norms"] = {k: v.as_dict() for k, v in self.norms.items()}
        for name in ("elastic", "plastic", "whole"):
            m = getattr(self, name)
            if m is not None:
                d[name] = m.as_dict()
        if self.mean_params is not None:
            d["mean_params"] = self.mean_params.as_dict()
        if self.curve_ridge is not None:
            d["curve_ridge"] = self.curve_ridge.as_dict()
        d["traces"] = {k: v.as_dict() for k, v in self.traces.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedFold":
        get = lambda k, f: f(d[k]) if k in d else None
        traces = {k: LossTrace(v["data"], v["physics"], v["aux"], v["lambda"], v["total"])
                  for k, v in d.get("traces", {}).items()}
        norms = {k: NormalizationStats.from_dict(v) for k, v in d.get("norms", {}).items()}
        return cls(MaterialClass(d["material"]), ArchitectureMode(d["mode"]), tuple(d["train_ids"]),
                   tuple(RidgeModel.from_dict(m) for m in d["yield_models"]),
                   norms, get("elastic", RegionModel.from_dict),
                   get("plastic", RegionModel.from_dict), get("whole", RegionModel.from_dict),
                   traces, get("mean_params", ConstitutiveParams.from_dict),
                   get("curve_ridge", RidgeModel.from_dict))


def _region_items(samples, yields_actual, yields_pred, norm, n, region) -> list[TrainingItem]:
    items = []
    for s, ya, yp in zip(samples, yields_actual, yields_pred):
        seg = segment_curve(s.curve, ya.eps_y)
        part = seg.elastic if region == "elastic" else seg.plastic
        for w in build_windows(part, s.params, n, norm, region):
            items.append(TrainingItem(s.id, w, yp))
    return items


def train_fold(train: Sequence[Sample], material: MaterialClass, mode: ArchitectureMode,
               config: ModelConfig, fold_seed: int = 0) -> TrainedFold:
    """Fit step-1 yield models and the mode's predictors on training samples only."""
    train = list(train)
    if len(train) < 2:
        raise ValueError("train_fold needs at least two training samples")
    yields = [actual_yield(s) for s in train]
    ymodels = fit_yield_models([s.params for s in train], yields,
                               config.ridge_degree, config.ridge_penalty)
    fold = TrainedFold(material, mode, tuple(s.id for s in train), ymodels)

    if mode is ArchitectureMode.CONSTITUTIVE:
        fits = [fit_constitutive_params(s.curve, material).params for s in train]
        fold.mean_params = mean_constitutive_model(fits)
        return fold
    if mode is ArchitectureMode.RIDGE:
        fold.curve_ridge = fit_curve_ridge(train, config.curve_ridge_degree, config.ridge_penalty)
        return fold

    eps_y = [y.eps_y for y in yields]
    base_seed = _derived_seed(config.seed, fold_seed)

    if mode is ArchitectureMode.NON_SEGMENTAL:
        norm = fold.norms["whole"] = NormalizationStats.from_samples(train, eps_y)
        model = RegionModel.create("whole", ELASTIC, mode, config.hidden_units,
                                   config.seq_len_plastic, _derived_seed(base_seed, 0))
        items = [TrainingItem(s.id, w, None) for s in train
                 for w in build_windows(s.curve, s.params, model.seq_len, norm, "whole")]
        fold.traces["whole"] = train_region(model, items, config, norm, _derived_seed(base_seed, 10))
        fold.whole = model
        return fold

    pred_yields = [predict_yield(ymodels, s.params) for s in train]
    for k, region in enumerate(("elastic", "plastic")):
        n = config.seq_len_elastic if region == "elastic" else config.seq_len_plastic
        law = region_law(region, material)
        model = RegionModel.create(region, law, mode, config.hidden_units, n,
                                   _derived_seed(base_seed, k + 1))
        # each region gets its own input and stress scaling, from training curves only
        parts = [(getattr(segment_curve(s.curve, y.eps_y), region), s.params)
                 for s, y in zip(train, yields)]
        norm = fold.norms[region] = NormalizationStats.from_curves(parts, eps_y)
        items = _region_items(train, yields, pred_yields, norm, n, region)
        fold.traces[region] = train_region(model, items, config, norm, _derived_seed(base_seed, 10 + k))
        setattr(fold, region, model)
    return fold


@dataclass(frozen=True)
class Prediction:
    curve: StressStrainCurve
    yield_point: YieldPoint
    violations: int = 0


def predict_sample(trained: TrainedFold, params: ProcessParameters, strain) -> Prediction:
    strain = np.asarray(strain, dtype=float)
    yp = predict_yield(trained.yield_models, params)
    mode = trained.mode
    if mode is ArchitectureMode.CONSTITUTIVE:
        stress = piecewise_stress(trained.mean_params, trained.material, strain)
        return Prediction(StressStrainCurve(strain, stress), trained.mean_params.yield_point)
    if mode is ArchitectureMode.RIDGE:
        return Prediction(predict_curve_ridge(trained.curve_ridge, params, strain), yp)
    if mode is ArchitectureMode.NON_SEGMENTAL:
        pred = predict_region(trained.whole, strain, params, trained.norms["whole"], yp)
        return Prediction(StressStrainCurve(strain, pred.stress), yp)

    if not (strain[0] < yp.eps_y < strain[-1]):
        log.warning("predicted yield strain %.6g outside the grid; using the elastic model throughout", yp.eps_y)
        pred = predict_region(trained.elastic, strain, params, trained.norms["elastic"], yp)
        return Prediction(StressStrainCurve(strain, pred.stress), yp, pred.violations)
    idx = int(np.searchsorted(strain, yp.eps_y, side="left"))
    el = predict_region(trained.elastic, strain[:idx], params, trained.norms["elastic"], yp)
    pl = predict_region(trained.plastic, strain[idx:], params, trained.norms["plastic"], yp)
    stress = np.concatenate([el.stress, pl.stress])
    return Prediction(StressStrainCurve(strain, stress), yp, el.violations + pl.violations)


# --- evaluation -------------------------------------------------------------------------------

METRIC_KEYS = ("whole_mape", "whole_r2", "elastic_mape", "plastic_mape", "elastic_r2",
               "plastic_r2", "youngs_modulus_error", "uts_error")


def _safe(fn, *args):
    try:
        return float(fn(*args))
    except (ValueError, ArithmeticError):
        return None


def sample_metrics(sample: Sample, pred: Prediction) -> dict:
    act = sample.curve
    ya = actual_yield(sample)
    el = act.strain < ya.eps_y
    out = {
        "whole_mape": _safe(mape, act.stress, pred.curve.stress),
        "whole_r2": _safe(r_squared, act.stress, pred.curve.stress),
        "elastic_mape": _safe(mape, act.stress[el], pred.curve.stress[el]) if el.any() else None,
        "plastic_mape": _safe(mape, act.stress[~el], pred.curve.stress[~el]) if (~el).any() else None,
        "elastic_r2": _safe(r_squared, act.stress[el], pred.curve.stress[el]),
        "plastic_r2": _safe(r_squared, act.stress[~el], pred.curve.stress[~el]),
    }
    E_act = _safe(youngs_modulus, act, ya.eps_y)
    E_pred = _safe(youngs_modulus, pred.curve, ya.eps_y)
    out["youngs_modulus_error"] = (relative_error_pct(E_act, E_pred)
                                   if E_act is not None and E_pred is not None else None)
    out["uts_error"] = relative_error_pct(ultimate_tensile_strength(act),
                                          ultimate_tensile_strength(pred.curve))
    return out


def _run_fold(args) -> dict:
    fold, samples, train_ids, material, mode, config = args
    by_id = {s.id: s for s in samples}
    train = [by_id[i] for i in train_ids]
    tested = [s for s in samples if s.id not in set(train_ids)]
    trained = train_fold(train, material, mode, config, fold_seed=fold)
    records = []
    for s in tested:
        pred = predict_sample(trained, s.params, s.curve.strain)
        if not np.all(np.isfinite(pred.curve.stress)):
            raise TrainingDivergedError(f"non-finite prediction for sample {s.id} in fold {fold + 1}")
        rec = {"id": s.id, "fold": fold + 1}
        rec.update(sample_metrics(s, pred))
        rec["predicted_yield"] = {"eps_y": pred.yield_point.eps_y, "sigma_y": pred.yield_point.sigma_y}
        rec["physics_violations"] = pred.violations
        rec["predicted_stress"] = pred.curve.stress.tolist()
        records.append(rec)
    entry = {"fold": fold + 1, "train_ids": list(train_ids)}
    lams = trained.lambdas()
    if lams:
        entry["lambda"] = lams
        entry["lambda_avg"] = float(np.mean(list(lams.values())))
    entry["samples"] = records
    traces = {k: v.as_dict() for k, v in trained.traces.items()}
    return {"fold": entry, "traces": traces}


def run_cross_validation(samples: Sequence[Sample], material: MaterialClass,
                         mode: ArchitectureMode, config: ModelConfig, k: int = 5,
                         jobs: int = 1, dataset: str = "") -> dict:
    """k-fold CV with the inverted protocol: each fold trains, the rest test."""
    samples = list(samples)
    plan = make_folds([s.id for s in samples], k, config.seed)
    tasks = [(f, samples, plan.training_ids(f), material, mode, config) for f in range(k)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_fold, tasks))
    else:
        results = [_run_fold(t) for t in tasks]

    per_fold = [r["fold"] for r in results]
    records = [rec for f in per_fold for rec in f["samples"]]
    aggregates = {key: aggregate([r[key] for r in records]).as_dict() for key in METRIC_KEYS}
    report = {
        "config": {"material": dataset or material.value, "mode": mode.value, "k": k,
                   **config.as_dict()},
        "per_fold": per_fold,
        "aggregates": aggregates,
        "loss_traces": [{"fold": r["fold"]["fold"], **r["traces"]} for r in results],
    }
    lam_vals = [f["lambda_avg"] for f in per_fold if "lambda_avg" in f]
    if lam_vals:
        report["lambda_avg"] = {
            region: float(np.mean([f["lambda"][region] for f in per_fold if region in f.get("lambda", {})]))
            for region in ("elastic", "plastic")}
    return report
