import math

import mpmath
import numpy as np
import pytest

from hyperembed.geometry import (
    SingularGradientError,
    euclidean_score,
    euclidean_score_grad,
    poincare_distance,
    poincare_distance_grad,
    poincare_pair_grads,
    project_to_ball,
    riemannian_rescale,
    translational_score,
    translational_score_grad,
)


def mp_ball_distance(u, v):
    """50-digit reference distance, independent of the float64 kernel."""
    with mpmath.workdps(50):
        u = [mpmath.mpf(float(c)) for c in u]
        v = [mpmath.mpf(float(c)) for c in v]
        du = sum((a - b) ** 2 for a, b in zip(u, v))
        nu = sum(a * a for a in u)
        nv = sum(b * b for b in v)
        return float(mpmath.acosh(1 + 2 * du / ((1 - nu) * (1 - nv))))


def central_diff_grad(f, x, h=1e-6):
    """Central finite differences of a scalar function of a vector."""
    g = np.zeros_like(x)
    for j in range(x.size):
        xp = x.copy()
        xm = x.copy()
        xp[j] += h
        xm[j] -= h
        g[j] = (f(xp) - f(xm)) / (2 * h)
    return g


def random_ball_points(rng, n, d, max_norm):
    pts = rng.standard_normal((n, d))
    pts /= np.linalg.norm(pts, axis=1, keepdims=True)
    radii = max_norm * rng.uniform(0, 1, size=n) ** (1 / d)
    return pts * radii[:, None]


class TestPoincareDistance:
    def test_identity_at_origin(self):
        z = np.zeros(3)
        assert poincare_distance(z, z) == 0.0

    def test_closed_form_example(self):
        # d(0, v) = 2 artanh(||v||); for ||v|| = 0.5 this is ln 3.
        u = np.zeros(2)
        v = np.array([0.5, 0.0])
        d = poincare_distance(u, v)
        assert abs(d - math.log(3)) < 1e-14
        assert abs(d - mp_ball_distance(u, v)) < 1e-14

    def test_matches_high_precision_oracle(self):
        rng = np.random.default_rng(7)
        u = random_ball_points(rng, 50, 4, 0.95)
        v = random_ball_points(rng, 50, 4, 0.95)
        for a, b in zip(u, v):
            assert abs(poincare_distance(a, b) - mp_ball_distance(a, b)) < 1e-12

    def test_symmetry(self):
        rng = np.random.default_rng(11)
        u = random_ball_points(rng, 1000, 5, 0.9)
        v = random_ball_points(rng, 1000, 5, 0.9)
        np.testing.assert_allclose(
            poincare_distance(u, v), poincare_distance(v, u), rtol=0, atol=1e-12
        )

    def test_closed_form_from_origin(self):
        rng = np.random.default_rng(13)
        v = random_ball_points(rng, 500, 3, 0.99)
        d = poincare_distance(np.zeros(3), v)
        expected = 2 * np.arctanh(np.linalg.norm(v, axis=1))
        np.testing.assert_allclose(d, expected, rtol=0, atol=1e-9)

    def test_metric_axioms_on_random_triples(self):
        rng = np.random.default_rng(17)
        n = 10_000
        u = random_ball_points(rng, n, 4, 0.95)
        v = random_ball_points(rng, n, 4, 0.95)
        w = random_ball_points(rng, n, 4, 0.95)
        duv = poincare_distance(u, v)
        dvw = poincare_distance(v, w)
        duw = poincare_distance(u, w)
        assert np.all(duv >= 0)
        assert np.all(duw <= duv + dvw + 1e-9)
        # zero iff coincident
        assert np.all(duv[np.any(u != v, axis=1)] > 0)
        np.testing.assert_array_equal(poincare_distance(u, u), np.zeros(n))

    def test_growth_toward_boundary(self):
        # For fixed u, distance increases strictly as v moves out along a ray.
        u = np.full(2, 0.9 / math.sqrt(2))
        ray = np.array([-0.6, 0.8])
        radii = np.linspace(0.1, 0.999, 60)
        d = poincare_distance(u, radii[:, None] * ray)
        assert np.all(np.diff(d) > 0)

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError, match="non-finite"):
            poincare_distance(np.array([np.nan, 0.0]), np.zeros(2))


class TestPoincareDistanceGrad:
    def test_matches_finite_differences_single(self):
        theta = np.array([0.3, 0.0])
        x = np.array([-0.2, 0.1])
        g = poincare_distance_grad(theta, x)
        fd = central_diff_grad(lambda t: poincare_distance(t, x), theta)
        assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-6

    @pytest.mark.parametrize("d", [2, 5, 50])
    def test_matches_finite_differences_random(self, d):
        rng = np.random.default_rng(100 + d)
        theta = random_ball_points(rng, 1000, d, 0.9)
        x = random_ball_points(rng, 1000, d, 0.9)
        grads = poincare_distance_grad(theta, x)
        worst = 0.0
        for i in range(0, 1000, 7):
            fd = central_diff_grad(lambda t: poincare_distance(t, x[i]), theta[i])
            worst = max(worst, np.linalg.norm(grads[i] - fd) / np.linalg.norm(fd))
        assert worst < 1e-6

    def test_radial_direction_from_origin(self):
        # Distance to the origin grows with the norm, so the gradient of
        # d(theta, 0) points along +theta.
        theta = np.array([0.5, 0.0])
        g = poincare_distance_grad(theta, np.zeros(2))
        assert g[0] > 0
        assert abs(g[1]) < 1e-15

    def test_second_argument_by_symmetry(self):
        rng = np.random.default_rng(3)
        theta = random_ball_points(rng, 1, 3, 0.8)[0]
        x = random_ball_points(rng, 1, 3, 0.8)[0]
        fd = central_diff_grad(lambda y: poincare_distance(theta, y), x)
        g = poincare_distance_grad(x, theta)
        assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-6

    def test_coincident_points_raise(self):
        p = np.array([0.1, 0.2])
        with pytest.raises(SingularGradientError):
            poincare_distance_grad(p, p.copy())

    def test_pair_grads_mask_and_agreement(self):
        rng = np.random.default_rng(5)
        u = random_ball_points(rng, 8, 3, 0.8)
        x = random_ball_points(rng, 8, 3, 0.8)
        x[3] = u[3]
        gu, gx, ok = poincare_pair_grads(u, x)
        assert not ok[3]
        np.testing.assert_array_equal(gu[3], np.zeros(3))
        np.testing.assert_array_equal(gx[3], np.zeros(3))
        sel = ok.nonzero()[0]
        np.testing.assert_array_equal(gu[sel], poincare_distance_grad(u[sel], x[sel]))
        np.testing.assert_array_equal(gx[sel], poincare_distance_grad(x[sel], u[sel]))


class TestRiemannianRescale:
    def test_origin_quarters_the_gradient(self):
        g = np.array([1.0, -2.0, 3.0])
        np.testing.assert_array_equal(riemannian_rescale(g, np.zeros(3)), g / 4)

    def test_half_squared_norm(self):
        theta = np.array([math.sqrt(0.5), 0.0])
        g = np.array([2.0, 4.0])
        np.testing.assert_allclose(riemannian_rescale(g, theta), g / 16, rtol=1e-12)

    def test_factor_decreases_toward_boundary(self):
        g = np.ones(2)
        radii = np.linspace(0, 0.999, 40)
        factors = [riemannian_rescale(g, np.array([r, 0.0]))[0] for r in radii]
        assert np.all(np.diff(factors) < 0)
        assert factors[-1] > 0


class TestProjectToBall:
    def test_interior_unchanged(self):
        theta = np.array([0.3, 0.4])
        np.testing.assert_array_equal(project_to_ball(theta, 1e-5), theta)

    def test_exterior_rescaled_to_margin(self):
        out = project_to_ball(np.array([3.0, 4.0]), 1e-5)
        np.testing.assert_allclose(
            out, np.array([0.6, 0.8]) * (1 - 1e-5), rtol=1e-15
        )

    def test_idempotent_exactly(self):
        rng = np.random.default_rng(23)
        for _ in range(200):
            theta = rng.standard_normal(4) * rng.uniform(0.5, 3.0)
            once = project_to_ball(theta, 1e-5)
            twice = project_to_ball(once, 1e-5)
            np.testing.assert_array_equal(once, twice)

    def test_norm_bound_holds(self):
        rng = np.random.default_rng(29)
        pts = rng.standard_normal((500, 3)) * 2
        out = project_to_ball(pts, 1e-5)
        norms = np.linalg.norm(out, axis=1)
        assert np.all(norms <= (1 - 1e-5) * (1 + 4 * np.finfo(float).eps))

    def test_rowwise_matches_single(self):
        rng = np.random.default_rng(31)
        pts = rng.standard_normal((50, 3))
        rows = project_to_ball(pts, 1e-5)
        singles = np.stack([project_to_ball(p, 1e-5) for p in pts])
        np.testing.assert_array_equal(rows, singles)

    def test_rejects_bad_epsilon(self):
        with pytest.raises(ValueError):
            project_to_ball(np.ones(2), 0.0)


class TestFlatScores:
    def test_euclidean_basics(self):
        assert euclidean_score(np.ones(3), np.ones(3)) == 0.0
        assert euclidean_score(np.array([1.0, 0.0]), np.zeros(2)) == 1.0

    def test_euclidean_grad_matches_fd(self):
        rng = np.random.default_rng(37)
        u = rng.standard_normal(4)
        v = rng.standard_normal(4)
        g = euclidean_score_grad(u, v)
        fd = central_diff_grad(lambda t: euclidean_score(t, v), u, h=1e-5)
        assert np.linalg.norm(g - fd) / np.linalg.norm(fd) < 1e-8

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension"):
            euclidean_score(np.ones(3), np.ones(4))

    def test_translational_reduces_to_euclidean_at_zero_offset(self):
        rng = np.random.default_rng(41)
        u = rng.standard_normal(3)
        v = rng.standard_normal(3)
        assert translational_score(u, v, np.zeros(3)) == euclidean_score(u, v)

    def test_translational_cancellation(self):
        u = np.zeros(2)
        v = np.array([1.0, 0.0])
        r = np.array([1.0, 0.0])
        assert translational_score(u, v, r) == 0.0

    def test_translational_asymmetry(self):
        rng = np.random.default_rng(43)
        u = rng.standard_normal(3)
        v = rng.standard_normal(3)
        r = rng.standard_normal(3)
        assert translational_score(u, v, r) != translational_score(v, u, r)

    def test_translational_grads(self):
        rng = np.random.default_rng(47)
        u, v, r = rng.standard_normal((3, 4))
        g = translational_score_grad(u, v, r)
        fd_u = central_diff_grad(lambda t: translational_score(t, v, r), u, h=1e-5)
        fd_v = central_diff_grad(lambda t: translational_score(u, t, r), v, h=1e-5)
        fd_r = central_diff_grad(lambda t: translational_score(u, v, t), r, h=1e-5)
        np.testing.assert_allclose(g, fd_u, atol=1e-7)
        np.testing.assert_allclose(-g, fd_v, atol=1e-7)
        np.testing.assert_allclose(g, fd_r, atol=1e-7)
