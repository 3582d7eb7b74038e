import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import least_squares

from amstress.constitutive import (HOLLOMON_DELTA, ConstitutiveDomainError, YieldExtraction,
                                   YieldExtractionError, extract_yield_point,
                                   fit_constitutive_params, hollomon_stress, hooke_stress,
                                   levenberg_marquardt, mean_constitutive_model, piecewise_stress,
                                   voce_stress)
from amstress.domain import (ConstitutiveParams, Dataset, HollomonPlastic, MaterialClass,
                             StressStrainCurve, VocePlastic, YieldPoint)
from amstress.synth import GridSpec, TruthMap, doe_table, make_samples, synthesize_curve, truth_params

POLY = MaterialClass.POLYMER
METAL = MaterialClass.METAL


def test_hooke_examples():
    assert hooke_stress(1000, 0) == 0
    assert hooke_stress(1000, 0.01) == pytest.approx(10.0, abs=1e-12)
    assert hooke_stress(70000, 0.002) == pytest.approx(140.0, abs=1e-9)


def test_voce_examples():
    yp = YieldPoint(0.02, 30.0)
    assert voce_stress(yp, 10.0, 100.0, 0.02) == 30.0
    assert voce_stress(yp, 10.0, 100.0, 0.03) == pytest.approx(30 + 10 * (1 - math.exp(-1)), abs=1e-12)
    assert voce_stress(yp, 10.0, 100.0, 0.03) == pytest.approx(36.3212, abs=1e-4)
    # b*(eps - eps_y) = 50: within 1e-9*a of the asymptote
    assert abs(voce_stress(yp, 10.0, 100.0, 0.02 + 0.5) - 40.0) <= 1e-9 * 10.0


def test_hollomon_examples():
    yp = YieldPoint(0.004, 200.0)
    assert hollomon_stress(yp, 500.0, 0.5, 0.008) == pytest.approx(200 + 500 * math.sqrt(0.004), abs=1e-12)
    assert hollomon_stress(yp, 500.0, 0.5, 0.008) == pytest.approx(231.62, abs=5e-3)
    assert hollomon_stress(yp, 500.0, 0.5, 0.004) == pytest.approx(200.0 + 500 * HOLLOMON_DELTA**0.5)
    assert hollomon_stress(yp, 500.0, 1.0, 0.014) == pytest.approx(205.0, abs=1e-12)


@pytest.mark.parametrize("fn,args", [
    (voce_stress, (0.0, 1.0, 0.03)), (voce_stress, (1.0, -1.0, 0.03)), (voce_stress, (1.0, 1.0, 0.01)),
    (hollomon_stress, (1.0, 1.5, 0.03)), (hollomon_stress, (-1.0, 0.5, 0.03)),
    (hollomon_stress, (1.0, 0.5, 0.01)),
])
def test_law_domain_errors(fn, args):
    with pytest.raises(ConstitutiveDomainError):
        fn(YieldPoint(0.02, 30.0), *args)


@given(st.floats(1.0, 100.0), st.floats(1.0, 500.0), st.floats(0.0, 0.5), st.floats(1e-6, 0.1))
def test_voce_monotone_and_bounded(a, b, p, dp):
    yp = YieldPoint(0.02, 30.0)
    s1 = voce_stress(yp, a, b, 0.02 + p)
    s2 = voce_stress(yp, a, b, 0.02 + p + dp)
    assert s2 >= s1
    assert 30.0 <= s1 <= 30.0 + a


@given(st.floats(10.0, 1000.0), st.floats(0.05, 1.0), st.floats(1e-6, 0.1), st.floats(1e-4, 0.1))
def test_hollomon_strictly_increasing(K, n, p, dp):
    yp = YieldPoint(0.004, 200.0)
    assert hollomon_stress(yp, K, n, 0.004 + p + dp) > hollomon_stress(yp, K, n, 0.004 + p)


def test_voce_initial_slope_is_ab():
    yp = YieldPoint(0.02, 30.0)
    a, b, h = 12.0, 60.0, 1e-9
    # one-sided domain: central difference centred just inside the plastic range
    x = 0.02 + h
    num = (voce_stress(yp, a, b, x + h) - voce_stress(yp, a, b, x - h)) / (2 * h)
    assert num == pytest.approx(a * b, rel=1e-6)


def test_piecewise_branches_match_pointwise():
    p = ConstitutiveParams(1200.0, 0.025, 30.0, VocePlastic(12.0, 60.0))
    assert piecewise_stress(p, POLY, 0.0) == 0.0
    e = 0.025 - 1e-12
    assert piecewise_stress(p, POLY, e) == 1200.0 * e
    eps = GridSpec(0.08, 160).grid()
    full = piecewise_stress(p, POLY, eps)
    pointwise = [1200.0 * x if x < 0.025 else 30.0 + 12.0 * (1 - math.exp(-60.0 * (x - 0.025)))
                 for x in eps]
    np.testing.assert_allclose(full, pointwise, rtol=1e-14, atol=1e-12)


def test_piecewise_rejects_wrong_law():
    p = ConstitutiveParams(1200.0, 0.025, 30.0, VocePlastic(12.0, 60.0))
    with pytest.raises(ConstitutiveDomainError):
        piecewise_stress(p, METAL, 0.01)


@pytest.mark.parametrize("ds", list(Dataset))
def test_continuity_at_yield_on_generated_data(ds):
    """Hooke side meets the hardening law at the yield strain.

    For Voce the right limit is sigma_y exactly.  For Hollomon the clamped
    plastic strain adds K*delta**n (about 0.1 MPa for n near 0.3), so the
    tolerance there is that offset plus 1e-9.
    """
    for s in make_samples(TruthMap.default(ds), seed=0):
        p = s.truth_params
        assert abs(p.E * p.eps_y - p.sigma_y) <= 1e-9
        right = piecewise_stress(p, ds.material, p.eps_y)
        if ds.material is POLY:
            assert abs(right - p.sigma_y) <= 1e-9
        else:
            assert abs(right - p.sigma_y) <= p.plastic.K * HOLLOMON_DELTA**p.plastic.n + 1e-9


def test_yield_extraction_noiseless_within_one_step():
    # shallow hardening (a*b well below E) so the 2 % rule trips on the first plastic point
    tmap = TruthMap.default(Dataset.NYLON)
    truth = ConstitutiveParams(1200.0, 0.02, 24.0, VocePlastic(10.0, 20.0))
    s = synthesize_curve(truth, POLY, tmap.grid, 0.0, 0)
    yp = extract_yield_point(s.curve)
    step = tmap.grid.max_strain / tmap.grid.points
    assert abs(yp.eps_y - 0.02) <= step + 1e-12


@pytest.mark.parametrize("ds", list(Dataset))
def test_yield_extraction_lag_on_default_curves(ds):
    """The detector never fires before yield and lags by a few grid steps at most.

    The lag is the plastic strain at which the law falls 2 % below the elastic
    line; for the default Voce curves (a*b about 0.6 E) that is 2-4 steps.
    """
    tmap = TruthMap.default(ds)
    step = tmap.grid.max_strain / tmap.grid.points
    for s in make_samples(tmap, seed=0):
        lag = (extract_yield_point(s.curve).eps_y - s.truth_params.eps_y) / step
        assert 0 <= lag <= 4


def test_yield_extraction_lag_matches_threshold_crossing():
    # independent oracle: scan the closed-form relative deviation on a fine grid
    E, ey, a, b = 1200.0, 0.025, 12.0, 60.0
    p = np.linspace(0, 0.01, 200001)
    rel = (E * p - a * (1 - np.exp(-b * p))) / (E * (ey + p))
    crossing = p[np.argmax(rel > 0.02)]
    truth = ConstitutiveParams(E, ey, E * ey, VocePlastic(a, b))
    grid = GridSpec(0.08, 160)
    got = extract_yield_point(synthesize_curve(truth, POLY, grid, 0.0, 0).curve).eps_y - ey
    assert crossing <= got + 1e-12 <= crossing + grid.max_strain / grid.points


def test_yield_extraction_linear_curve_errors():
    eps = np.linspace(0.001, 0.02, 50)
    with pytest.raises(YieldExtractionError, match="fully elastic"):
        extract_yield_point(StressStrainCurve(eps, 1000 * eps))


def test_yield_extraction_noisy_monte_carlo():
    # noise well below the 2 % deviation threshold; at 5 % noise a pointwise
    # 2 % rule fires inside the elastic region on nearly every curve
    truth = ConstitutiveParams(70000.0, 0.004, 280.0, HollomonPlastic(450.0, 0.35))
    grid = GridSpec(0.02, 100)
    step = grid.max_strain / grid.points
    for seed in range(100):
        s = synthesize_curve(truth, METAL, grid, 0.005, seed)
        assert abs(extract_yield_point(s.curve).eps_y - 0.004) <= 3 * step + 1e-12


def test_yield_extraction_thresholds_overridable():
    truth = ConstitutiveParams(1200.0, 0.02, 24.0, VocePlastic(12.0, 60.0))
    s = synthesize_curve(truth, POLY, GridSpec(0.08, 160), 0.0, 0)
    loose = extract_yield_point(s.curve, YieldExtraction(deviation=0.2))
    assert loose.eps_y > extract_yield_point(s.curve).eps_y


def _scipy_fit(fun, jac, x0):
    return least_squares(fun, x0, jac=jac, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15).x


def test_levenberg_marquardt_matches_scipy(rng):
    x = np.linspace(0, 1, 40)
    y = 2.5 * np.exp(-1.3 * x) + rng.normal(0, 0.01, x.size)
    fun = lambda t: t[0] * np.exp(-t[1] * x) - y
    jac = lambda t: np.column_stack([np.exp(-t[1] * x), -t[0] * x * np.exp(-t[1] * x)])
    res = levenberg_marquardt(fun, jac, [1.0, 0.5])
    assert res.converged and res.iterations <= 200
    np.testing.assert_allclose(res.x, _scipy_fit(fun, jac, [1.0, 0.5]), rtol=1e-6)


def test_levenberg_marquardt_reports_non_convergence():
    x = np.linspace(0, 1, 40)
    fun = lambda t: t[0] * np.exp(-t[1] * x) - 2.5 * np.exp(-1.3 * x)
    jac = lambda t: np.column_stack([np.exp(-t[1] * x), -t[0] * x * np.exp(-t[1] * x)])
    res = levenberg_marquardt(fun, jac, [0.1, 5.0], max_iterations=2)
    assert not res.converged and res.iterations == 2


def test_fit_metal_recovers_truth():
    truth = ConstitutiveParams(70000.0, 0.004, 280.0, HollomonPlastic(500.0, 0.3))
    s = synthesize_curve(truth, METAL, GridSpec(0.02, 100), 0.0, 0)
    fit = fit_constitutive_params(s.curve, METAL)
    assert abs(fit.params.plastic.K - 500) / 500 < 1e-3
    assert abs(fit.params.plastic.n - 0.3) < 1e-3
    assert fit.residual_rms >= 0 and fit.iterations <= 200


def test_fit_polymer_recovers_truth():
    truth = ConstitutiveParams(1200.0, 0.025, 30.0, VocePlastic(10.0, 80.0))
    s = synthesize_curve(truth, POLY, GridSpec(0.08, 160), 0.0, 0)
    fit = fit_constitutive_params(s.curve, POLY)
    assert abs(fit.params.plastic.a - 10) / 10 < 1e-3
    assert abs(fit.params.plastic.b - 80) / 80 < 1e-3
    assert abs(fit.params.E - 1200) / 1200 < 1e-3


def test_fit_elastic_only_propagates_error():
    eps = np.linspace(0.001, 0.02, 50)
    with pytest.raises(YieldExtractionError):
        fit_constitutive_params(StressStrainCurve(eps, 1000 * eps), POLY)


@pytest.mark.parametrize("ds", list(Dataset))
def test_fit_recovers_doe_center_truth(ds):
    tmap = TruthMap.default(ds)
    center = doe_table(ds)[0].__class__(ds.param_names, tuple(tmap.bounds().mean(axis=1)))
    truth = truth_params(center, tmap)
    s = synthesize_curve(truth, ds.material, tmap.grid, 0.0, 0)
    got = fit_constitutive_params(s.curve, ds.material).params.as_dict()
    for k in ("E", "a", "b", "K", "n"):
        if k in got:
            want = truth.as_dict()[k]
            assert abs(got[k] - want) / want < 1e-3, k


def test_mean_constitutive_model():
    p1 = ConstitutiveParams(60000.0, 0.004, 240.0, HollomonPlastic(400.0, 0.3))
    p2 = ConstitutiveParams(80000.0, 0.002, 160.0, HollomonPlastic(500.0, 0.4))
    assert mean_constitutive_model([p1]) == p1
    m = mean_constitutive_model([p1, p2])
    assert m.E == 70000.0
    assert m.plastic.K == 450.0
    with pytest.raises(ValueError):
        mean_constitutive_model([])
    with pytest.raises(ValueError):
        mean_constitutive_model([p1, ConstitutiveParams(1.0, 0.1, 0.1, VocePlastic(1.0, 1.0))])


def test_mean_of_five_fits_matches_column_means(nylon_samples):
    fits = [fit_constitutive_params(s.curve, POLY).params for s in nylon_samples[:5]]
    table = np.array([[f.E, f.eps_y, f.sigma_y, f.plastic.a, f.plastic.b] for f in fits])
    m = mean_constitutive_model(fits)
    np.testing.assert_allclose([m.E, m.eps_y, m.sigma_y, m.plastic.a, m.plastic.b],
                               table.sum(axis=0) / 5, rtol=1e-14)
