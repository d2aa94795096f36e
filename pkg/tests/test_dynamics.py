import warnings

import numpy as np
import pytest

from glds.dynamics import (GldsModel, RankWarning, fit_glds, fit_lds, observability, pinv,
                           simulate_lds, spectral_radius, stabilize, subspace_from_observability,
                           tensor_matrix_product)
from glds.grassmann import chordal_distance
from glds.synthetic import random_stable_model
from glds.tensor import vec


def true_subspace(model, m, d):
    # eigendecomposition of O O^T as an independent route to the column space
    o = observability(model, m)
    w, v = np.linalg.eigh(o @ o.T)
    return v[:, np.argsort(w)[::-1][:d]]


def test_tensor_matrix_product_vec_identity():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((3, 4, 2))
    c = rng.standard_normal((24, 24))
    y = tensor_matrix_product(c, x)
    assert y.shape == x.shape
    np.testing.assert_allclose(vec(y), c @ vec(x), atol=1e-12)


def test_tensor_matrix_product_shapes():
    x = np.arange(6.0).reshape(2, 3)
    np.testing.assert_array_equal(tensor_matrix_product(np.eye(6), x), x)
    c = np.ones((4, 6))
    assert tensor_matrix_product(c, x).shape == (4,)
    assert tensor_matrix_product(c, x, out_shape=(2, 2)).shape == (2, 2)
    with pytest.raises(ValueError):
        tensor_matrix_product(np.ones((4, 5)), x)


def test_model_shape_checks():
    with pytest.raises(ValueError):
        GldsModel(A=np.eye(2), C=np.ones((3, 3)), state_shape=(2,), obs_shape=(3,), d=2)


def test_fit_lds_constant_sequence():
    y = np.ones((1, 10))
    model = fit_lds(y, 1, margin=None)
    np.testing.assert_allclose(model.A, [[1.0]], atol=1e-12)
    np.testing.assert_allclose(np.abs(model.C), [[1.0]])
    assert spectral_radius(fit_lds(y, 1).A) == pytest.approx(0.99)


def test_fit_lds_recovers_noiseless_model():
    rng = np.random.default_rng(1)
    model = random_stable_model(rng, 3, (12,))
    y = simulate_lds(model, rng.standard_normal(3), 60)
    fitted = fit_lds(y, 3)
    np.testing.assert_allclose(np.sort_complex(np.linalg.eigvals(fitted.A)),
                               np.sort_complex(np.linalg.eigvals(model.A)), atol=1e-6)
    dist = chordal_distance(subspace_from_observability(observability(fitted, 3), 3),
                            true_subspace(model, 3, 3))
    assert dist < 1e-6


def test_fit_lds_rejects_zero_and_short():
    with pytest.raises(ValueError, match="rank zero"):
        fit_lds(np.zeros((4, 5)), 2)
    with pytest.raises(ValueError):
        fit_lds(np.ones((4, 1)), 1)
    with pytest.raises(ValueError):
        fit_lds(np.ones((4, 5)), 5)


def test_fit_lds_pads_when_d_exceeds_frames():
    y = np.random.default_rng(2).standard_normal((8, 3))
    with pytest.warns(RankWarning):
        model = fit_lds(y, 5)
    assert model.A.shape == (5, 5)
    np.testing.assert_allclose(model.C.T @ model.C, np.eye(5), atol=1e-10)


def test_stabilize_examples():
    np.testing.assert_allclose(stabilize(np.array([[1.2]])), [[0.99]])
    a = np.array([[0.5, 0.0], [0.0, 0.3]])
    assert stabilize(a) is a or np.array_equal(stabilize(a), a)
    rot = 1.5 * np.array([[0.0, -1.0], [1.0, 0.0]])
    assert spectral_radius(stabilize(rot)) == pytest.approx(0.99, abs=1e-12)
    with pytest.raises(ValueError):
        stabilize(np.eye(2), margin=0.0)


def test_stabilize_idempotent():
    rng = np.random.default_rng(3)
    for _ in range(20):
        a = 2.0 * rng.standard_normal((4, 4))
        once = stabilize(a)
        np.testing.assert_array_equal(stabilize(once), once)
        assert spectral_radius(once) <= 0.99 + 1e-12


def test_observability_examples():
    model = GldsModel(A=np.array([[0.5]]), C=np.array([[2.0]]), state_shape=(1,),
                      obs_shape=(1,), d=1)
    np.testing.assert_allclose(observability(model, 3), [[2.0], [1.0], [0.5], [0.25]])
    rot = GldsModel(A=np.array([[0.0, -1.0], [1.0, 0.0]]), C=np.eye(2), state_shape=(2,),
                    obs_shape=(2,), d=2)
    o = observability(rot, 1)
    np.testing.assert_allclose(o, [[1, 0], [0, 1], [0, -1], [1, 0]])
    assert observability(rot, 0).shape == (2, 2)


def test_subspace_matches_eigendecomposition():
    rng = np.random.default_rng(4)
    model = random_stable_model(rng, 4, (7,))
    point = subspace_from_observability(observability(model, 4), 4)
    assert point.basis.shape == (35, 4)
    assert chordal_distance(point, true_subspace(model, 4, 4)) < 1e-10


def test_subspace_rank_warning():
    o = np.zeros((6, 3))
    o[0, 0] = 1.0
    with pytest.warns(RankWarning):
        point = subspace_from_observability(o, 2)
    np.testing.assert_allclose(point.basis.T @ point.basis, np.eye(2), atol=1e-12)


def test_pinv_drops_tiny_singular_values():
    a = np.diag([1.0, 1e-12])
    np.testing.assert_allclose(pinv(a), np.diag([1.0, 0.0]))


def test_simulate_deterministic():
    rng = np.random.default_rng(5)
    model = random_stable_model(rng, 3, (4, 3))
    y1 = simulate_lds(model, np.ones(3), 20, noise_scale=0.1, seed=7)
    y2 = simulate_lds(model, np.ones(3), 20, noise_scale=0.1, seed=7)
    assert y1.shape == (4, 3, 20)
    np.testing.assert_array_equal(y1, y2)
    clean = simulate_lds(model, np.ones(3), 20)
    np.testing.assert_allclose(clean[..., 1].ravel(order="F"), model.C @ model.A @ np.ones(3))


def test_fit_glds_recovers_tensor_model():
    rng = np.random.default_rng(6)
    model = random_stable_model(rng, 4, (10, 6))
    series = simulate_lds(model, rng.standard_normal(4), 100)
    fitted, point = fit_glds(series, d=4, m=4)
    assert fitted.C.shape == (60, 60)
    assert point.basis.shape == (300, 4)
    assert chordal_distance(point, true_subspace(model, 4, 4)) < 1e-4


def test_fit_glds_reduced_ranks():
    rng = np.random.default_rng(7)
    series = rng.standard_normal((6, 5, 30))
    model, point = fit_glds(series, ranks=(3, 2), d=4, m=2)
    assert model.state_dim == 6
    assert model.C.shape == (30, 6)
    np.testing.assert_allclose(model.C.T @ model.C, np.eye(6), atol=1e-10)
    assert point.basis.shape == (90, 4)


def test_fit_glds_input_errors():
    with pytest.raises(ValueError):
        fit_glds(np.ones(5))
    with pytest.raises(ValueError):
        fit_glds(np.ones((3, 2, 1)), d=1)
    with pytest.raises(ValueError):
        fit_glds(np.ones((3, 4)), d=4)
    with pytest.raises(ValueError):
        fit_glds(np.ones((3, 2, 6)), ranks=(3,), d=1)


def test_lds_glds_agree_on_matrix_series():
    rng = np.random.default_rng(8)
    y = rng.standard_normal((9, 25))
    lds = fit_lds(y, 4)
    with warnings.catch_warnings():
        warnings.simplefilter("error", RankWarning)
        _, point = fit_glds(y, d=4, m=3)
    ref = subspace_from_observability(observability(lds, 3), 4)
    assert chordal_distance(point, ref) < 1e-8


def test_rank_one_observability():
    u = np.array([0.6, 0.8, 0.0])
    point = subspace_from_observability(np.column_stack([u, 2 * u]), 1)
    assert chordal_distance(point, u[:, None]) < 1e-12


@pytest.mark.parametrize("seed", range(6))
def test_fit_glds_basis_matches_dense_svd(seed):
    rng = np.random.default_rng(100 + seed)
    series = rng.standard_normal((5, 3, 4, 18))
    d, m = 3, 3
    model, point = fit_glds(series, d=d, m=m)
    o = observability(model, m)
    s = np.linalg.svd(o, compute_uv=False)
    assert s[d - 1] - s[d] > 1e-6
    assert chordal_distance(point, subspace_from_observability(o, d)) < 1e-10


def test_fit_glds_completes_short_state_rank():
    series = np.random.default_rng(9).standard_normal((6, 4, 3))
    model, point = fit_glds(series, d=5, m=2, temporal_rank=2)
    assert point.basis.shape == (72, 5)
    np.testing.assert_allclose(point.basis.T @ point.basis, np.eye(5), atol=1e-10)
    # the completion directions are singular directions of the dense matrix too
    o = observability(model, 2)
    np.testing.assert_allclose(np.linalg.norm(o.T @ point.basis, axis=0)[2:], 1.0, atol=1e-10)
