import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from glds.grassmann import (GrassmannDictionary, GrassmannPoint, chordal_distance,
                            class_residuals, classify_src, coding_objective, embedding_inner,
                            load_dictionary, nearest_neighbor, project, save_dictionary,
                            sparse_code)


def random_basis(rng, p, d):
    q, _ = np.linalg.qr(rng.standard_normal((p, d)))
    return q


def random_rotation(rng, d):
    q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return q


def dense_objective(y, query, atoms, lam):
    target = query @ query.T
    approx = sum(c * a @ a.T for c, a in zip(y, atoms))
    return np.sum((target - approx) ** 2) + lam * np.sum(np.abs(y))


def test_point_validation():
    with pytest.raises(ValueError):
        GrassmannPoint(np.ones((3, 2)))
    with pytest.raises(ValueError):
        GrassmannPoint(np.eye(3)[:2])
    pt = GrassmannPoint.from_matrix(np.arange(6.0).reshape(3, 2) + np.eye(3, 2))
    assert (pt.ambient_dim, pt.dim) == (3, 2)


def test_projector_is_symmetric_idempotent_rank_d():
    b = random_basis(np.random.default_rng(0), 8, 3)
    p = project(b)
    np.testing.assert_array_equal(p, p.T)
    np.testing.assert_allclose(p @ p, p, atol=1e-12)
    w = np.linalg.eigvalsh(p)
    np.testing.assert_allclose(np.sort(w), [0] * 5 + [1] * 3, atol=1e-12)


def test_chordal_known_values():
    e = np.eye(3)
    assert chordal_distance(e[:, :1], e[:, 1:2]) == pytest.approx(np.sqrt(2))
    assert chordal_distance(e[:, :2], e[:, [1, 0]]) == 0.0
    theta = 0.3
    tilted = np.array([[np.cos(theta)], [np.sin(theta)], [0.0]])
    assert chordal_distance(e[:, :1], tilted) == pytest.approx(np.sqrt(2) * np.sin(theta))


def test_chordal_matches_dense_projectors():
    rng = np.random.default_rng(1)
    for _ in range(20):
        x, y = random_basis(rng, 10, 3), random_basis(rng, 10, 3)
        dense = np.linalg.norm(project(x) - project(y))
        assert chordal_distance(x, y) == pytest.approx(dense, abs=1e-12)
        assert embedding_inner(x, y) == pytest.approx(np.sum(project(x) * project(y)), abs=1e-12)


def test_chordal_resolves_tiny_angles():
    rng = np.random.default_rng(2)
    x = random_basis(rng, 12, 4)
    perturbed, _ = np.linalg.qr(x + 1e-10 * rng.standard_normal(x.shape))
    dist = chordal_distance(x, perturbed)
    dense = np.linalg.norm(project(x) - project(perturbed))
    assert 0 < dist < 1e-8
    assert dist == pytest.approx(dense, rel=1e-3, abs=1e-15)


def test_chordal_shape_mismatch():
    with pytest.raises(ValueError):
        chordal_distance(np.eye(4)[:, :2], np.eye(4)[:, :3])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_rotation_invariance(seed, d):
    rng = np.random.default_rng(seed)
    x, y = random_basis(rng, 7, d), random_basis(rng, 7, d)
    r = random_rotation(rng, d)
    np.testing.assert_allclose(project(x @ r), project(x), atol=1e-12)
    assert chordal_distance(x @ r, y) == pytest.approx(chordal_distance(x, y), abs=1e-10)


def test_gram_matches_pairwise_inner():
    rng = np.random.default_rng(3)
    atoms = [random_basis(rng, 9, 2) for _ in range(5)]
    dic = GrassmannDictionary.from_points(atoms, [0, 0, 1, 1, 2])
    for i in range(5):
        for j in range(5):
            assert dic.gram[i, j] == pytest.approx(embedding_inner(atoms[i], atoms[j]), abs=1e-12)
    np.testing.assert_allclose(np.diag(dic.gram), 2.0)
    query = random_basis(rng, 9, 2)
    np.testing.assert_allclose(dic.kernel(query), [embedding_inner(query, a) for a in atoms])


def test_dictionary_validation():
    with pytest.raises(ValueError):
        GrassmannDictionary.from_points([], [])
    with pytest.raises(ValueError):
        GrassmannDictionary.from_points([np.eye(3)[:, :1]], [0, 1])
    with pytest.raises(ValueError):
        GrassmannDictionary.from_points([np.eye(3)[:, :1], np.eye(3)[:, :2]], [0, 1])


def test_classes_sorted():
    atoms = [np.eye(3)[:, [k]] for k in range(3)]
    assert GrassmannDictionary.from_points(atoms, [3, 1, 2]).classes == (1, 2, 3)
    assert GrassmannDictionary.from_points(atoms, ["b", "a", "b"]).classes == ("a", "b")


def _problem(seed, n_atoms=6, p=8, d=2):
    rng = np.random.default_rng(seed)
    atoms = [random_basis(rng, p, d) for _ in range(n_atoms)]
    dic = GrassmannDictionary.from_points(atoms, list(range(n_atoms)))
    return rng, dic, random_basis(rng, p, d)


@pytest.mark.parametrize("lam", [0.001, 0.02, 0.2])
def test_sparse_code_kkt(lam):
    _, dic, query = _problem(4)
    y = sparse_code(query, dic, lam=lam, tol=1e-12, max_iter=5000)
    grad = 2.0 * (dic.gram @ y - dic.kernel(query))
    active = y != 0
    np.testing.assert_allclose(grad[active] + lam * np.sign(y[active]), 0.0, atol=1e-8)
    assert np.all(np.abs(grad[~active]) <= lam + 1e-8)


def test_sparse_code_objective_matches_dense():
    _, dic, query = _problem(5)
    y = sparse_code(query, dic, lam=0.05)
    obj = coding_objective(y, dic.kernel(query), dic.gram, 0.05, embedding_inner(query, query))
    assert obj == pytest.approx(dense_objective(y, query, dic.atoms, 0.05), abs=1e-10)


def test_sparse_code_monotone_per_sweep():
    _, dic, query = _problem(6, n_atoms=10)
    k, s = dic.kernel(query), embedding_inner(query, query)
    history = []
    sparse_code(query, dic, lam=0.01, tol=1e-14, max_iter=200,
                callback=lambda y: history.append(coding_objective(y, k, dic.gram, 0.01, s)))
    assert len(history) > 1
    assert all(b <= a + 1e-12 for a, b in zip(history, history[1:]))
    assert history[0] <= s


def test_kill_threshold_exact():
    _, dic, query = _problem(7)
    k = dic.kernel(query)
    lam_max = 2.0 * np.max(k)
    assert np.all(sparse_code(query, dic, lam=lam_max) == 0.0)
    assert np.any(sparse_code(query, dic, lam=0.999 * lam_max) != 0.0)


def test_zero_lambda_matches_linear_solve():
    rng = np.random.default_rng(8)
    atoms = [random_basis(rng, 6, 2) for _ in range(2)]
    dic = GrassmannDictionary.from_points(atoms, [0, 1])
    query = random_basis(rng, 6, 2)
    y = sparse_code(query, dic, lam=0.0, tol=1e-14, max_iter=10000)
    np.testing.assert_allclose(y, np.linalg.solve(dic.gram, dic.kernel(query)), atol=1e-8)


def test_two_atom_grid_search():
    for seed in range(5):
        _, dic, query = _problem(20 + seed, n_atoms=2)
        lam = 0.05
        y = sparse_code(query, dic, lam=lam, tol=1e-12)
        k, s = dic.kernel(query), embedding_inner(query, query)
        grid = np.linspace(-1.5, 1.5, 601)
        a, b = np.meshgrid(grid, grid, indexing="ij")
        values = (s - 2 * (k[0] * a + k[1] * b) + dic.gram[0, 0] * a * a
                  + 2 * dic.gram[0, 1] * a * b + dic.gram[1, 1] * b * b
                  + lam * (np.abs(a) + np.abs(b)))
        best = values.min()
        assert coding_objective(y, k, dic.gram, lam, s) <= best + 1e-4


def test_affine_coefficients_sum_to_one():
    _, dic, query = _problem(9)
    y = sparse_code(query, dic, lam=0.01, affine=True, tol=1e-10, max_iter=20000)
    assert np.sum(y) == pytest.approx(1.0, abs=1e-6)


def test_coding_rotation_invariant():
    rng, dic, query = _problem(10)
    rotated = GrassmannDictionary.from_points(
        [a @ random_rotation(rng, 2) for a in dic.atoms], dic.labels)
    y1 = sparse_code(query, dic, lam=0.02, tol=1e-12)
    y2 = sparse_code(query @ random_rotation(rng, 2), rotated, lam=0.02, tol=1e-12)
    np.testing.assert_allclose(y1, y2, atol=1e-8)


def test_src_picks_own_class():
    rng = np.random.default_rng(11)
    centers = [random_basis(rng, 10, 2) for _ in range(3)]
    atoms, labels = [], []
    for c, center in enumerate(centers):
        for _ in range(3):
            q, _ = np.linalg.qr(center + 0.05 * rng.standard_normal(center.shape))
            atoms.append(q)
            labels.append(c)
    dic = GrassmannDictionary.from_points(atoms, labels)
    for c, center in enumerate(centers):
        label, residuals = classify_src(center, dic, lam=0.01)
        assert label == c
        assert set(residuals) == {0, 1, 2}
        assert nearest_neighbor(center, dic) == c


def test_src_tie_goes_to_lowest_class():
    e = np.eye(4)
    dic = GrassmannDictionary.from_points([e[:, [0]], e[:, [1]]], ["b", "a"])
    label, residuals = classify_src(e[:, [2]], dic, lam=0.01)
    assert residuals["a"] == residuals["b"]
    assert label == "a"


def test_nn_tie_goes_to_lower_index():
    e = np.eye(4)
    dic = GrassmannDictionary.from_points([e[:, [0]], e[:, [1]]], [5, 3])
    assert nearest_neighbor(e[:, [2]], dic) == 5


def test_class_residuals_dense():
    rng, dic, query = _problem(12)
    y = rng.standard_normal(dic.n_atoms)
    res = class_residuals(query, dic, y)
    for c in dic.classes:
        mask = np.array([lab == c for lab in dic.labels])
        assert res[c] == pytest.approx(dense_objective(np.where(mask, y, 0), query, dic.atoms, 0),
                                       abs=1e-10)


def test_dictionary_json_roundtrip(tmp_path):
    _, dic, _ = _problem(13)
    dic = GrassmannDictionary.from_points(list(dic.atoms), ["x", "y", "x", "z", 1, 2])
    path = tmp_path / "dict.json"
    save_dictionary(dic, path)
    back = load_dictionary(path)
    np.testing.assert_array_equal(back.atoms, dic.atoms)
    assert back.labels == dic.labels
    np.testing.assert_array_equal(back.gram, dic.gram)
