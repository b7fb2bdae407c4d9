import numpy as np
import pytest

from proxcd.objective import DiagonalQuadratic, ProxProblem, SoftMaxObjective
from proxcd.sparse import from_triplets, identity


def random_objective(seed, m=6, n=4, gamma=0.7, density=0.5):
    rng = np.random.default_rng(seed)
    rows, cols = np.nonzero(rng.random((m, n)) < density)
    A = from_triplets(m, n, (rows.astype(np.int64), cols.astype(np.int64), rng.standard_normal(rows.size)))
    return SoftMaxObjective(
        A,
        b=0.3 * rng.standard_normal(n),
        r=0.2 * rng.standard_normal(m),
        c=float(rng.standard_normal()),
        gamma=gamma,
    ), rng


def dense_value(obj, x):
    # straightforward dense log-sum-exp oracle
    z = obj.A.to_dense() @ x + obj.r
    return obj.gamma * np.log(np.exp(z / obj.gamma).sum()) + obj.b @ x + obj.c


def test_value_uniform_exponents():
    A = from_triplets(3, 2, [(0, 0, 0.0)]) if False else from_triplets(3, 2, [(1, 0, 2.0)])
    obj = SoftMaxObjective(A, gamma=0.9)
    assert obj.value(np.zeros(2)) == pytest.approx(0.9 * np.log(3), rel=1e-14)


def test_value_zero_matrix():
    A = from_triplets(4, 3, [])
    b = np.array([1.0, -2.0, 0.5])
    obj = SoftMaxObjective(A, b=b, c=1.5, gamma=0.3)
    x = np.array([0.2, 0.1, -0.4])
    assert obj.value(x) == pytest.approx(0.3 * np.log(4) + b @ x + 1.5, rel=1e-14)


def test_value_matches_dense_oracle():
    obj, rng = random_objective(1)
    for _ in range(10):
        x = rng.standard_normal(obj.n)
        assert obj.value(x) == pytest.approx(dense_value(obj, x), rel=1e-12)


def test_value_never_overflows():
    A = identity(3)
    obj = SoftMaxObjective(A, gamma=0.01)
    x = np.array([1e4, -1e4, 0.0])
    v = obj.value(x)
    assert np.isfinite(v)
    assert v == pytest.approx(1e4, rel=1e-10)  # dominated by the max exponent


def test_value_rejects_nonfinite():
    obj, _ = random_objective(2)
    with pytest.raises(ValueError):
        obj.value(np.array([np.nan, 0, 0, 0]))


def test_gamma_must_be_positive():
    with pytest.raises(ValueError):
        SoftMaxObjective(identity(2), gamma=0.0)
    with pytest.raises(ValueError):
        SoftMaxObjective(identity(2), gamma=-1.0)


def test_full_grad_zero_matrix_is_b():
    A = from_triplets(3, 2, [])
    b = np.array([0.7, -0.1])
    obj = SoftMaxObjective(A, b=b, gamma=0.4)
    np.testing.assert_allclose(obj.full_grad(np.array([1.0, 2.0])), b, rtol=1e-14)


def test_full_grad_uniform_weights_closed_form():
    obj, _ = random_objective(3)
    obj.r[:] = 0.0
    g = obj.full_grad(np.zeros(obj.n))
    colsums = obj.A.to_dense().sum(axis=0)
    np.testing.assert_allclose(g, colsums / obj.m + obj.b, rtol=1e-12, atol=1e-13)


def central_difference_grad(obj, x):
    g = np.empty(obj.n)
    for i in range(obj.n):
        h = 1e-6 * (1.0 + abs(x[i]))
        e = np.zeros(obj.n)
        e[i] = h
        g[i] = (obj.value(x + e) - obj.value(x - e)) / (2 * h)
    return g


def test_full_grad_matches_finite_differences():
    for seed in range(8):
        obj, rng = random_objective(seed)
        x = rng.standard_normal(obj.n)
        g = obj.full_grad(x)
        fd = central_difference_grad(obj, x)
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-8)


def test_coord_grad_empty_column():
    A = from_triplets(3, 2, [(0, 0, 1.0)])  # column 1 empty
    b = np.array([0.0, 0.25])
    obj = SoftMaxObjective(A, b=b, gamma=0.5)
    cache = obj.make_cache(np.zeros(2))
    assert obj.coord_grad(cache, 1) == pytest.approx(0.25, abs=1e-15)


def test_coord_grad_cross_check_full_grad_at_zero():
    obj, _ = random_objective(4)
    obj.r[:] = 0.0
    cache = obj.make_cache(np.zeros(obj.n))
    g = obj.full_grad(np.zeros(obj.n))
    for i in range(obj.n):
        assert obj.coord_grad(cache, i) == pytest.approx(g[i], rel=1e-12, abs=1e-13)


def test_coord_grad_after_many_steps_matches_full_grad():
    obj, rng = random_objective(5)
    cache = obj.make_cache(rng.standard_normal(obj.n))
    for _ in range(1000):
        i = int(rng.integers(obj.n))
        obj.apply_coord_step(cache, i, float(rng.standard_normal() * 0.05))
    g = obj.full_grad(cache.x)
    for i in range(obj.n):
        assert obj.coord_grad(cache, i) == pytest.approx(g[i], rel=1e-9, abs=1e-12)


def test_coord_step_zero_delta_bitwise():
    obj, rng = random_objective(6)
    cache = obj.make_cache(rng.standard_normal(obj.n))
    x_before = cache.x.copy()
    z_before = cache.z.copy()
    obj.apply_coord_step(cache, 1, 0.0)
    assert np.array_equal(cache.x, x_before)
    assert np.array_equal(cache.z, z_before)


def test_coord_step_then_refresh_matches_fresh_cache():
    obj, rng = random_objective(7)
    cache = obj.make_cache(rng.standard_normal(obj.n))
    obj.apply_coord_step(cache, 2, 0.3)
    obj.refresh_cache(cache)
    fresh = obj.make_cache(cache.x)
    np.testing.assert_allclose(cache.z, fresh.z, rtol=1e-12, atol=1e-15)
    np.testing.assert_allclose(cache.w, fresh.w, rtol=1e-12)
    assert cache.S == pytest.approx(fresh.S, rel=1e-12)
    assert cache.M == fresh.M


def test_cache_drift_stays_tiny_over_many_steps():
    obj, rng = random_objective(8, m=25, n=12)
    cache = obj.make_cache(np.zeros(obj.n))
    for _ in range(20000):
        i = int(rng.integers(obj.n))
        obj.apply_coord_step(cache, i, float(rng.standard_normal() * 0.02))
    fresh = obj.make_cache(cache.x)
    np.testing.assert_allclose(cache.w, fresh.w, rtol=1e-9)
    assert cache.S == pytest.approx(fresh.S, rel=1e-9)
    np.testing.assert_allclose(cache.z, fresh.z, rtol=1e-9, atol=1e-12)


def test_refresh_cadence_bounded_by_m():
    obj, rng = random_objective(9, m=5, n=3)
    cache = obj.make_cache(np.zeros(obj.n))
    for k in range(20):
        obj.apply_coord_step(cache, int(rng.integers(obj.n)), 0.01)
        assert cache.steps_since_refresh <= obj.m


def test_smoothness_identity():
    obj = SoftMaxObjective(identity(4), gamma=1.0)
    L, L_vec = obj.smoothness()
    assert L == 1.0
    np.testing.assert_array_equal(L_vec, np.ones(4))


def test_smoothness_binary_bounded_by_inv_gamma():
    rng = np.random.default_rng(10)
    mask = rng.random((10, 8)) < 0.4
    rows, cols = np.nonzero(mask)
    A = from_triplets(10, 8, (rows.astype(np.int64), cols.astype(np.int64), np.ones(rows.size)))
    sigma = 0.05
    obj = SoftMaxObjective(A, gamma=sigma)
    _, L_vec = obj.smoothness()
    assert np.all(L_vec <= 1.0 / sigma + 1e-12)
    assert L_vec.mean() <= 1.0 / sigma + 1e-12


def test_sampled_coordinate_lipschitz_bound():
    obj, rng = random_objective(11)
    _, L_vec = obj.smoothness()
    for _ in range(100):
        x = rng.standard_normal(obj.n)
        i = int(rng.integers(obj.n))
        t = float(rng.standard_normal())
        e = np.zeros(obj.n)
        e[i] = t
        diff = abs(obj.full_grad(x + e)[i] - obj.full_grad(x)[i])
        assert diff <= L_vec[i] * abs(t) * (1 + 1e-9) + 1e-12


def test_shift_invariance_of_cache_quantities():
    # coord gradients use w/S which cancels any exp-normalize shift
    obj, rng = random_objective(12)
    x = rng.standard_normal(obj.n)
    cache = obj.make_cache(x)
    g0 = np.array([obj.coord_grad(cache, i) for i in range(obj.n)])
    v0 = obj.value_from_cache(cache)
    for shift in (-3.0, 1.7):
        shifted = obj.make_cache(x)
        shifted.M = shifted.M + shift
        shifted.w = np.exp((shifted.z - shifted.M) / obj.gamma)
        shifted.S = float(shifted.w.sum())
        g1 = np.array([obj.coord_grad(shifted, i) for i in range(obj.n)])
        np.testing.assert_allclose(g1, g0, rtol=1e-12, atol=1e-14)
        assert obj.value_from_cache(shifted) == pytest.approx(v0, rel=1e-12)


def test_convexity_along_random_pairs():
    obj, rng = random_objective(13)
    for _ in range(100):
        x = rng.standard_normal(obj.n)
        y = rng.standard_normal(obj.n)
        t = float(rng.uniform(0.05, 0.95))
        lhs = obj.value(t * x + (1 - t) * y)
        rhs = t * obj.value(x) + (1 - t) * obj.value(y)
        assert lhs <= rhs + 1e-10


def test_lse_envelope_bounds():
    rng = np.random.default_rng(14)
    gamma = 0.35
    for _ in range(50):
        z = rng.standard_normal(9) * 3
        lse = gamma * np.log(np.exp((z - z.max()) / gamma).sum()) + z.max()
        assert z.max() <= lse + 1e-12
        assert lse <= z.max() + gamma * np.log(9) + 1e-12


# -- prox wrapper ------------------------------------------------------------


def test_prox_value_at_center():
    obj, rng = random_objective(15)
    center = rng.standard_normal(obj.n)
    P = ProxProblem(obj, center, H=2.0)
    assert P.value(center) == pytest.approx(obj.value(center), rel=1e-14)


def test_prox_requires_positive_H():
    obj, _ = random_objective(16)
    with pytest.raises(ValueError):
        ProxProblem(obj, np.zeros(obj.n), H=0.0)


def test_prox_coord_grad_difference_is_quadratic_term():
    obj, rng = random_objective(17)
    center = rng.standard_normal(obj.n)
    H = 1.3
    P = ProxProblem(obj, center, H)
    y = rng.standard_normal(obj.n)
    cache = obj.make_cache(y)
    for i in range(obj.n):
        diff = P.coord_grad(cache, i) - obj.coord_grad(cache, i)
        assert diff == pytest.approx(H * (y[i] - center[i]), rel=1e-12, abs=1e-13)


def test_prox_full_grad_and_component_constants():
    obj, rng = random_objective(18)
    center = rng.standard_normal(obj.n)
    H = 0.9
    P = ProxProblem(obj, center, H)
    y = rng.standard_normal(obj.n)
    np.testing.assert_allclose(
        P.full_grad(y), obj.full_grad(y) + H * (y - center), rtol=1e-13, atol=1e-14
    )
    _, L_vec = obj.smoothness()
    np.testing.assert_allclose(P.component_constants(), H + L_vec, rtol=1e-14)


def test_prox_gradient_small_at_long_run_minimizer():
    from proxcd.solvers import cdm_solve

    obj, rng = random_objective(19)
    center = rng.standard_normal(obj.n)
    P = ProxProblem(obj, center, H=1.0)
    y, _ = cdm_solve(P, center, 20000, seed=0)
    assert np.linalg.norm(P.full_grad(y)) <= 1e-6


def test_prox_strong_convexity_along_segments():
    obj, rng = random_objective(20)
    P = ProxProblem(obj, rng.standard_normal(obj.n), H=1.1)
    # F(y) - (H/2)||y||^2 must stay convex along segments
    def g(y):
        return P.value(y) - 0.5 * P.H * float(y @ y)

    for _ in range(50):
        x = rng.standard_normal(obj.n)
        y = rng.standard_normal(obj.n)
        t = float(rng.uniform(0.1, 0.9))
        assert g(t * x + (1 - t) * y) <= t * g(x) + (1 - t) * g(y) + 1e-9


# -- quadratic helper ---------------------------------------------------------


def test_diagonal_quadratic_surface():
    d = np.array([1.0, 4.0, 0.5])
    t = np.array([0.0, 1.0, -2.0])
    q = DiagonalQuadratic(d, t)
    x = np.array([1.0, 1.0, 0.0])
    assert q.value(x) == pytest.approx(0.5 * (1.0 + 0.0 + 0.5 * 4.0))
    np.testing.assert_allclose(q.full_grad(x), d * (x - t))
    L, L_vec = q.smoothness()
    assert L == 4.0
    np.testing.assert_array_equal(L_vec, d)
    cache = q.make_cache(x)
    assert q.coord_grad(cache, 1) == pytest.approx(0.0)
    q.apply_coord_step(cache, 0, -1.0)
    assert cache.x[0] == 0.0
