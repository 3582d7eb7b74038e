"""Hooke / Voce / Hollomon laws, yield extraction and per-sample NLS fits."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .domain import (ConstitutiveParams, HollomonPlastic, MaterialClass,
                     StressStrainCurve, VocePlastic, YieldPoint)

log = logging.getLogger(__name__)

# plastic-strain floor for Hollomon: keeps p**n and its derivatives finite at the boundary
HOLLOMON_DELTA = 1e-12


class ConstitutiveDomainError(ValueError):
    pass


class YieldExtractionError(ValueError):
    pass


@dataclass(frozen=True)
class YieldExtraction:
    """Thresholds for the deviation-from-linearity yield detector."""

    window_fraction: float = 0.2
    deviation: float = 0.02
    offset_strain: float = 0.002
    min_points: int = 8


DEFAULT_YIELD_EXTRACTION = YieldExtraction()


@dataclass(frozen=True)
class FitResult:
    params: ConstitutiveParams
    residual_rms: float
    iterations: int
    converged: bool


# --- laws ------------------------------------------------------------------------

def hooke_stress(E, eps):
    return np.multiply(E, eps)


def voce_stress(yield_point: YieldPoint, a, b, eps):
    eps = np.asarray(eps, dtype=float)
    if not (a > 0 and b > 0):
        raise ConstitutiveDomainError(f"Voce requires a > 0 and b > 0, got a={a}, b={b}")
    if np.any(eps < yield_point.eps_y):
        raise ConstitutiveDomainError("Voce law evaluated below the yield strain")
    p = eps - yield_point.eps_y
    out = yield_point.sigma_y + a * -np.expm1(-b * p)
    return float(out) if out.ndim == 0 else out


def hollomon_stress(yield_point: YieldPoint, K, n, eps):
    eps = np.asarray(eps, dtype=float)
    if not (K > 0 and 0 < n <= 1):
        raise ConstitutiveDomainError(f"Hollomon requires K > 0 and 0 < n <= 1, got K={K}, n={n}")
    if np.any(eps < yield_point.eps_y):
        raise ConstitutiveDomainError("Hollomon law evaluated below the yield strain")
    p = np.maximum(eps - yield_point.eps_y, HOLLOMON_DELTA)
    out = yield_point.sigma_y + K * p**n
    return float(out) if out.ndim == 0 else out


def plastic_stress(yield_point: YieldPoint, plastic, eps):
    if isinstance(plastic, VocePlastic):
        return voce_stress(yield_point, plastic.a, plastic.b, eps)
    return hollomon_stress(yield_point, plastic.K, plastic.n, eps)


def piecewise_stress(params: ConstitutiveParams, material: MaterialClass, eps):
    """Hooke below the yield strain, the material's hardening law at or above it."""
    eps = np.asarray(eps, dtype=float)
    expected = VocePlastic if material is MaterialClass.POLYMER else HollomonPlastic
    if not isinstance(params.plastic, expected):
        raise ConstitutiveDomainError(f"{material.value} requires {expected.__name__} parameters")
    if np.any(eps < 0):
        raise ConstitutiveDomainError("negative strain")
    scalar = eps.ndim == 0
    eps = np.atleast_1d(eps)
    out = np.empty_like(eps)
    elastic = eps < params.eps_y
    out[elastic] = hooke_stress(params.E, eps[elastic])
    if np.any(~elastic):
        out[~elastic] = plastic_stress(params.yield_point, params.plastic, eps[~elastic])
    return float(out[0]) if scalar else out


# --- yield extraction -----------------------------------------------------------------

def _slope_through_origin(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.dot(x, y) / np.dot(x, x))


def extract_yield_point(curve: StressStrainCurve,
                        cfg: YieldExtraction = DEFAULT_YIELD_EXTRACTION) -> YieldPoint:
    """First point leaving the initial linear trend by more than ``cfg.deviation``.

    The initial modulus is a through-origin least-squares slope over the first
    ``cfg.window_fraction`` of points.  If no point deviates, the 0.2 %-offset
    line intersection is tried before giving up.
    """
    eps, sig = curve.strain, curve.stress
    if len(eps) < cfg.min_points:
        raise YieldExtractionError(f"need at least {cfg.min_points} points, got {len(eps)}")
    k = max(2, int(round(cfg.window_fraction * len(eps))))
    E0 = _slope_through_origin(eps[:k], sig[:k])
    if not E0 > 0:
        raise YieldExtractionError("initial modulus is not positive")

    line = E0 * eps
    dev = np.abs(sig - line) > cfg.deviation * np.abs(line)
    dev[0] = False
    hits = np.flatnonzero(dev)
    if hits.size:
        i = int(hits[0])
        return YieldPoint(float(eps[i]), float(sig[i]))

    below = sig < E0 * (eps - cfg.offset_strain)
    hits = np.flatnonzero(below)
    if hits.size:
        i = int(hits[0])
        return YieldPoint(float(eps[i]), float(sig[i]))
    raise YieldExtractionError("curve appears fully elastic")


# --- Levenberg-Marquardt -----------------------------------------------------------------

@dataclass(frozen=True)
class LMResult:
    x: np.ndarray
    cost: float
    iterations: int
    converged: bool


def levenberg_marquardt(residual: Callable[[np.ndarray], np.ndarray],
                        jacobian: Callable[[np.ndarray], np.ndarray],
                        x0: Sequence[float], max_iterations: int = 200,
                        damping: float = 1e-3, factor: float = 10.0,
                        xtol: float = 1e-10, ftol: float = 1e-12) -> LMResult:
    """Minimise 0.5*||r(x)||^2 with Marquardt-scaled damping."""
    x = np.asarray(x0, dtype=float).copy()
    r = residual(x)
    cost = 0.5 * float(r @ r)
    lam = damping
    it = 0
    while it < max_iterations:
        it += 1
        J = jacobian(x)
        A = J.T @ J
        g = J.T @ r
        diag = np.maximum(np.diag(A), 1e-300)
        accepted = False
        while lam < 1e20:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                lam *= factor
                continue
            x_new = x + step
            r_new = residual(x_new)
            cost_new = 0.5 * float(r_new @ r_new) if np.all(np.isfinite(r_new)) else np.inf
            if cost_new < cost:
                accepted = True
                break
            lam *= factor
        if not accepted:
            # no descent direction left: numerically at a minimum
            return LMResult(x, cost, it, True)
        rel = (cost - cost_new) / max(cost, 1e-300)
        x, r, cost = x_new, r_new, cost_new
        lam = max(lam / factor, 1e-12)
        if np.linalg.norm(step) < xtol or rel < ftol or cost == 0.0:
            return LMResult(x, cost, it, True)
    return LMResult(x, cost, it, False)


# --- fitting -------------------------------------------------------------------------------

def _logit(p: float) -> float:
    return float(np.log(p / (1.0 - p)))


def _sigmoid(u):
    return 0.5 * (1.0 + np.tanh(0.5 * u))


def _plastic_terms(material: MaterialClass, theta: np.ndarray, p: np.ndarray):
    """Hardening increment and its Jacobian w.r.t. the transformed parameters.

    Returns (value, d/dtheta columns, d/dp).
    """
    if material is MaterialClass.POLYMER:
        a, b = np.exp(theta)
        e = np.exp(-b * p)
        val = a * (1.0 - e)
        cols = np.column_stack([val, a * b * p * e])
        return val, cols, a * b * e
    K = float(np.exp(theta[0]))
    n = float(_sigmoid(theta[1]))
    pc = np.maximum(p, HOLLOMON_DELTA)
    pn = pc**n
    val = K * pn
    cols = np.column_stack([val, val * np.log(pc) * n * (1.0 - n)])
    dp = np.where(p > HOLLOMON_DELTA, K * n * pc ** (n - 1.0), 0.0)
    return val, cols, dp


def _plastic_from_theta(material: MaterialClass, theta: np.ndarray):
    if material is MaterialClass.POLYMER:
        a, b = np.exp(theta)
        return VocePlastic(float(a), float(b))
    return HollomonPlastic(float(np.exp(theta[0])), float(_sigmoid(theta[1])))


def _initial_theta(material: MaterialClass, yp: YieldPoint, eps: np.ndarray, sig: np.ndarray):
    if material is MaterialClass.POLYMER:
        a0 = max(float(sig.max()) - yp.sigma_y, 1e-6 * max(yp.sigma_y, 1.0))
        span = max(float(eps.max()) - yp.eps_y, 1e-12)
        b0 = 10.0 / span
        return np.log([a0, b0])
    p = eps - yp.eps_y
    d = sig - yp.sigma_y
    ok = (p > 0) & (d > 0)
    if ok.sum() >= 2:
        slope, icpt = np.polyfit(np.log(p[ok]), np.log(d[ok]), 1)
        n0 = float(np.clip(slope, 0.02, 0.98))
        K0 = float(np.exp(icpt))
    else:
        n0, K0 = 0.5, max(float(sig.max()) - yp.sigma_y, 1.0)
    return np.array([np.log(K0), _logit(n0)])


def fit_constitutive_params(curve: StressStrainCurve, material: MaterialClass,
                            max_iterations: int = 200,
                            yield_cfg: YieldExtraction = DEFAULT_YIELD_EXTRACTION) -> FitResult:
    """Fit (E, eps_y, sigma_y, hardening params) to one curve.

    Staged: extract the yield point, take E as the through-origin slope of the
    elastic segment, and fit the hardening law on the plastic segment with the
    yield held fixed (Levenberg-Marquardt in log space).  The staged estimate
    then seeds a joint fit of (E, eps_y, hardening params) under the continuity
    constraint sigma_y = E * eps_y, which removes the grid-resolution bias of the
    extracted yield point.  Both stages share the ``max_iterations`` budget.
    """
    eps, sig = curve.strain, curve.stress
    yp = extract_yield_point(curve, yield_cfg)

    elastic = eps < yp.eps_y
    if elastic.sum() < 1:
        raise YieldExtractionError("no elastic points before the extracted yield point")
    E = _slope_through_origin(eps[elastic], sig[elastic])
    pe, ps = eps[~elastic], sig[~elastic]

    def r_plastic(theta):
        val, _, _ = _plastic_terms(material, theta, pe - yp.eps_y)
        return yp.sigma_y + val - ps

    def j_plastic(theta):
        _, cols, _ = _plastic_terms(material, theta, pe - yp.eps_y)
        return cols

    stage1 = levenberg_marquardt(r_plastic, j_plastic,
                                 _initial_theta(material, yp, pe, ps), max_iterations)

    def model(x):
        E_, ey = np.exp(x[0]), np.exp(x[1])
        theta = x[2:]
        out = E_ * eps
        jac = np.zeros((len(eps), len(x)))
        jac[:, 0] = out
        pl = eps >= ey
        p = eps[pl] - ey
        val, cols, dp = _plastic_terms(material, theta, p)
        out = out.copy()
        out[pl] = E_ * ey + val
        jac[pl, 0] = E_ * ey
        jac[pl, 1] = ey * (E_ - dp)
        jac[pl, 2:] = cols
        return out, jac

    x0 = np.concatenate([[np.log(E), np.log(yp.eps_y)], stage1.x])
    budget = max(max_iterations - stage1.iterations, 1)
    stage2 = levenberg_marquardt(lambda x: model(x)[0] - sig, lambda x: model(x)[1],
                                 x0, budget)

    # the joint fit is kept only if it improves the staged (discontinuous) estimate
    staged_pred = np.where(elastic, E * eps, 0.0)
    staged_pred[~elastic] = yp.sigma_y + _plastic_terms(material, stage1.x, pe - yp.eps_y)[0]
    staged_cost = 0.5 * float(np.sum((staged_pred - sig) ** 2))

    if stage2.cost <= staged_cost:
        E_f, ey_f = float(np.exp(stage2.x[0])), float(np.exp(stage2.x[1]))
        params = ConstitutiveParams(E_f, ey_f, E_f * ey_f,
                                    _plastic_from_theta(material, stage2.x[2:]))
        cost, conv = stage2.cost, stage2.converged
    else:
        params = ConstitutiveParams(E, yp.eps_y, yp.sigma_y,
                                    _plastic_from_theta(material, stage1.x))
        cost, conv = staged_cost, stage1.converged
    iterations = stage1.iterations + stage2.iterations
    if not conv:
        log.warning("constitutive fit did not converge within %d iterations", max_iterations)
    rms = float(np.sqrt(2.0 * cost / len(eps)))
    return FitResult(params, rms, iterations, conv and iterations <= max_iterations)


def mean_constitutive_model(fits: Sequence[ConstitutiveParams]) -> ConstitutiveParams:
    """Parameter-wise arithmetic mean over per-sample fits."""
    fits = list(fits)
    if not fits:
        raise ValueError("cannot average an empty list of fits")
    kinds = {type(f.plastic) for f in fits}
    if len(kinds) != 1:
        raise ValueError("fits mix polymer and metal hardening laws")
    keys = list(fits[0].as_dict())
    means = {k: float(np.mean([f.as_dict()[k] for f in fits])) for k in keys}
    return ConstitutiveParams.from_dict(means)
