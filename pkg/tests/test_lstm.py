import numpy as np
import pytest
from hypothesis import given, strategies as st

from amstress import autodiff as ad
from amstress.domain import ProcessParameters, StressStrainCurve
from amstress.lstm import (GraphParams, NormalizationStats, ParamLayout, build_windows, dense_head,
                           init_params, lstm_forward, lstm_shapes, parameter_count, stack_windows,
                           weights_to_arrays)

PARAMS = ProcessParameters(("t", "v"), (230.0, 20.0))


def _identity_norm():
    return NormalizationStats(np.zeros(3), np.ones(3), 1.0)


def _curve(n):
    eps = np.linspace(0.001, 0.001 * n, n)
    return StressStrainCurve(eps, 1000.0 * eps)


def _enumerate_windows(rows, n):
    # brute force: for each target k >= 1, the n rows ending at k-1, clamping negative indices to 0
    return [np.array([rows[max(j, 0)] for j in range(k - n, k)]) for k in range(1, len(rows))]


@pytest.mark.parametrize("L,n", [(12, 10), (2, 2), (7, 3), (5, 1)])
def test_window_counts_and_padding(L, n):
    curve = _curve(L)
    ws = build_windows(curve, PARAMS, n, _identity_norm())
    assert len(ws) == L - 1
    rows = np.column_stack([curve.strain, np.tile([230.0, 20.0], (L, 1))])
    for w, ref in zip(ws, _enumerate_windows(rows, n)):
        np.testing.assert_array_equal(w.inputs, ref)
    assert ws[0].target_index == 1
    assert ws[0].target_stress == curve.stress[1]
    assert np.array_equal(ws[0].inputs, np.repeat(rows[:1], n, axis=0))


def test_single_point_region_has_no_windows():
    assert build_windows(_curve(1), PARAMS, 3, _identity_norm()) == []


def test_stack_windows_shape():
    ws = build_windows(_curve(6), PARAMS, 4, _identity_norm())
    assert stack_windows(ws).shape == (4, 3, 5)


def _bind(hidden, outputs, seed=0, **override):
    lstm, head = init_params(hidden, outputs, seed)
    arrays = weights_to_arrays(lstm, head)
    arrays.update(override)
    return GraphParams.create(hidden), arrays


def test_zero_weights_give_zero_hidden_state(rng):
    H = 5
    shapes = lstm_shapes(H, 1)
    zeros = {k: np.zeros(s) for k, s in shapes.items()}
    gp = GraphParams.create(H)
    h = ad.evaluate(lstm_forward(gp, rng.normal(size=(4, 3))), zeros)
    assert h.shape == (H, 1) and not np.any(h)


def _sig(z):
    return 1.0 / (1.0 + np.exp(-z))


def test_single_unit_matches_hand_unroll():
    x = np.array([[0.3, -1.2, 0.5], [0.9, 0.1, -0.4]])
    W = np.array([[0.2, -0.1, 0.4], [0.5, 0.3, -0.2], [-0.3, 0.8, 0.1], [0.6, -0.5, 0.7]])
    U = np.array([[0.3], [-0.4], [0.9], [0.2]])
    b = np.array([[1.0], [0.1], [-0.2], [0.05]])
    gp = GraphParams.create(1)
    got = ad.evaluate(lstm_forward(gp, x), {"lstm.W": W, "lstm.U": U, "lstm.b": b,
                                             "head.V": np.zeros((1, 1)), "head.c": np.zeros((1, 1))})
    h = c = 0.0
    for t in range(2):
        z = W @ x[t] + U[:, 0] * h + b[:, 0]
        f, i, g, o = _sig(z[0]), _sig(z[1]), np.tanh(z[2]), _sig(z[3])
        c = f * c + i * g
        h = o * np.tanh(c)
    assert abs(float(got[0, 0]) - h) <= 1e-12


@given(st.integers(0, 2**31), st.floats(0.1, 20.0))
def test_hidden_state_is_bounded(seed, mag):
    r = np.random.default_rng(seed)
    H = 3
    arrays = {k: mag * r.normal(size=s) for k, s in lstm_shapes(H, 1).items()}
    h = ad.evaluate(lstm_forward(GraphParams.create(H), r.normal(size=(5, 3), scale=mag)), arrays)
    assert np.all(np.abs(h) < 1.0)


def test_init_is_deterministic_and_seed_dependent():
    a = weights_to_arrays(*init_params(32, 1, 7))
    b = weights_to_arrays(*init_params(32, 1, 7))
    c = weights_to_arrays(*init_params(32, 1, 8))
    assert all(np.array_equal(a[k], b[k]) for k in a)
    assert not np.array_equal(a["lstm.W"], c["lstm.W"])
    # forget-gate bias starts at 1
    assert np.all(a["lstm.b"][:32] == 1.0) and not np.any(a["lstm.b"][32:])


@pytest.mark.parametrize("outputs", [1, 2, 3])
def test_parameter_count(outputs):
    H = 32
    assert parameter_count(H, outputs) == 4 * (H * 3 + H * H + H) + outputs * H + outputs


def test_param_layout_roundtrip(rng):
    shapes = lstm_shapes(4, 2)
    layout = ParamLayout(shapes)
    arrays = {k: rng.normal(size=s) for k, s in shapes.items()}
    back = layout.views(layout.flatten(arrays))
    assert all(np.array_equal(arrays[k], back[k]) for k in shapes)


def test_head_affine_cases(rng):
    gp = GraphParams.create(3)
    hidden = ad.inp(rng.normal(size=(3, 4)))
    out = ad.evaluate(dense_head(gp, hidden), {"head.V": np.zeros((1, 3)), "head.c": np.array([[2.5]])})
    assert np.all(out == 2.5)
    gp1 = GraphParams.create(1)
    hv = np.array([[0.37]])
    out = ad.evaluate(dense_head(gp1, ad.inp(hv)), {"head.V": np.ones((1, 1)), "head.c": np.zeros((1, 1))})
    assert float(out[0, 0]) == 0.37


def test_head_matches_matrix_vector_products(rng):
    gp = GraphParams.create(6)
    hv = rng.normal(size=(6, 5))
    V, c = rng.normal(size=(3, 6)), rng.normal(size=(3, 1))
    out = ad.evaluate(dense_head(gp, ad.inp(hv)), {"head.V": V, "head.c": c})
    for j in range(5):
        for i in range(3):
            ref = sum(V[i, k] * hv[k, j] for k in range(6)) + c[i, 0]
            assert abs(out[i, j] - ref) <= 1e-12


def test_normalization_stats(nylon_samples):
    norm = NormalizationStats.from_samples(nylon_samples, [0.025] * len(nylon_samples))
    assert norm.stress_scale == max(s.curve.stress.max() for s in nylon_samples)
    assert norm.modulus_scale == pytest.approx(norm.stress_scale / 0.025)
    rows = np.vstack([np.column_stack([s.curve.strain, np.tile(s.params.as_array(), (len(s.curve), 1))])
                      for s in nylon_samples])
    z = norm.apply(rows)
    np.testing.assert_allclose(z.mean(axis=0), 0.0, atol=1e-9)
    np.testing.assert_allclose(z.std(axis=0), 1.0, atol=1e-9)
    assert NormalizationStats.from_dict(norm.as_dict()).as_dict() == norm.as_dict()
