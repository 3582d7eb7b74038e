"""Ridge polynomial regression: yield-point models and the pointwise curve baseline."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np

from .domain import ProcessParameters, Sample, StressStrainCurve, YieldPoint


class SingularSystemError(np.linalg.LinAlgError):
    pass


def monomial_exponents(d: int, degree: int) -> list[tuple[int, ...]]:
    """Index tuples of every monomial with total degree <= ``degree``.

    Ordered by total degree, then lexicographically: for d=2, degree=2 this is
    1, x1, x2, x1^2, x1*x2, x2^2.
    """
    if degree < 1:
        raise ValueError("degree must be >= 1")
    out: list[tuple[int, ...]] = [()]
    for k in range(1, degree + 1):
        out.extend(combinations_with_replacement(range(d), k))
    return out


def polynomial_features(x, degree: int) -> np.ndarray:
    """Polynomial expansion of one input vector (1-D) or of each row of a matrix."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = np.atleast_2d(x)
    cols = [np.prod(X[:, list(idx)], axis=1) if idx else np.ones(len(X))
            for idx in monomial_exponents(X.shape[1], degree)]
    F = np.column_stack(cols)
    return F[0] if single else F


@dataclass(frozen=True)
class RidgeModel:
    degree: int
    penalty: float
    feature_mean: np.ndarray
    feature_std: np.ndarray
    weights: np.ndarray
    target_name: str = "y"
    target_min: float = float("nan")

    def design(self, X) -> np.ndarray:
        F = polynomial_features(np.atleast_2d(np.asarray(X, dtype=float)), self.degree)
        F[:, 1:] = (F[:, 1:] - self.feature_mean) / self.feature_std
        return F

    def predict(self, X) -> np.ndarray:
        return self.design(X) @ self.weights

    def as_dict(self) -> dict:
        return {"degree": self.degree, "penalty": self.penalty,
                "feature_mean": self.feature_mean.tolist(), "feature_std": self.feature_std.tolist(),
                "weights": self.weights.tolist(), "target_name": self.target_name,
                "target_min": self.target_min}

    @classmethod
    def from_dict(cls, d: dict) -> "RidgeModel":
        return cls(int(d["degree"]), float(d["penalty"]), np.asarray(d["feature_mean"]),
                   np.asarray(d["feature_std"]), np.asarray(d["weights"]),
                   d.get("target_name", "y"), float(d.get("target_min", float("nan"))))


def ridge_fit(X, y, penalty: float, degree: int = 1, target_name: str = "y") -> RidgeModel:
    """Fit ridge regression on polynomial features of the raw inputs ``X``.

    Non-constant features are standardized with the training statistics; the
    intercept is neither standardized nor penalized.  Solves
    (F'F + penalty*I0) w = F'y directly.
    """
    if penalty < 0:
        raise ValueError("penalty must be >= 0")
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(X) < 1 or len(X) != len(y):
        raise ValueError("X and y need matching, non-zero row counts")
    F = polynomial_features(X, degree)
    mean = F[:, 1:].mean(axis=0)
    std = F[:, 1:].std(axis=0)
    std = np.where(std > 0, std, 1.0)
    F[:, 1:] = (F[:, 1:] - mean) / std
    p = F.shape[1]
    reg = np.full(p, float(penalty))
    reg[0] = 0.0
    A = F.T @ F + np.diag(reg)
    if np.linalg.matrix_rank(A) < p:
        raise SingularSystemError("normal equations are singular; use penalty > 0")
    w = np.linalg.solve(A, F.T @ y)
    return RidgeModel(degree, float(penalty), mean, std, w, target_name, float(y.min()))


def fit_yield_models(params: Sequence[ProcessParameters], yields: Sequence[YieldPoint],
                     degree: int = 2, penalty: float = 1.0) -> tuple[RidgeModel, RidgeModel]:
    X = np.array([p.values for p in params])
    eps = ridge_fit(X, [y.eps_y for y in yields], penalty, degree, "eps_y")
    sig = ridge_fit(X, [y.sigma_y for y in yields], penalty, degree, "sigma_y")
    return eps, sig


def predict_yield(models: tuple[RidgeModel, RidgeModel], params: ProcessParameters) -> YieldPoint:
    """Predicted (eps_py, sigma_py), floored at 10 % of each training minimum."""
    out = []
    for m in models:
        v = float(m.predict(params.as_array())[0])
        out.append(max(v, 0.1 * m.target_min))
    return YieldPoint(*out)


def _curve_rows(strain, params: ProcessParameters) -> np.ndarray:
    strain = np.asarray(strain, dtype=float)
    return np.column_stack([strain, np.tile(params.as_array(), (len(strain), 1))])


def fit_curve_ridge(train: Sequence[Sample], degree: int = 3, penalty: float = 1.0) -> RidgeModel:
    X = np.vstack([_curve_rows(s.curve.strain, s.params) for s in train])
    y = np.concatenate([s.curve.stress for s in train])
    return ridge_fit(X, y, penalty, degree, "stress")


def predict_curve_ridge(model: RidgeModel, params: ProcessParameters, strain) -> StressStrainCurve:
    strain = np.asarray(strain, dtype=float)
    return StressStrainCurve(strain, model.predict(_curve_rows(strain, params)))


def ridge_curve_baseline(train: Sequence[Sample], params: ProcessParameters, strain,
                         degree: int = 3, penalty: float = 1.0) -> StressStrainCurve:
    """Pointwise (strain, p1, p2) -> stress ridge model pooled over training curves."""
    return predict_curve_ridge(fit_curve_ridge(train, degree, penalty), params, strain)
