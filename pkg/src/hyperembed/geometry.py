"""Distance kernels on the open unit ball and the two flat baselines.

All functions are pure, operate on float64 numpy arrays with the vector
dimension last, and broadcast over leading axes. Points passed to the
hyperbolic kernels must lie strictly inside the unit ball; callers enforce
the margin via :func:`project_to_ball`.
"""

import numpy as np

POINCARE = "poincare"
EUCLIDEAN = "euclidean"
TRANSLATIONAL = "translational"
SCORE_KINDS = (POINCARE, EUCLIDEAN, TRANSLATIONAL)

BALL_EPSILON = 1e-5


class SingularGradientError(ValueError):
    """Raised when a distance gradient is requested at coincident points."""


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise ValueError("non-finite coordinates")


def _sq_norm(x):
    return np.einsum("...i,...i->...", x, x)


def _check_dims(*arrays):
    dims = {a.shape[-1] for a in arrays}
    if len(dims) > 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")


def poincare_distance(u, v):
    """Hyperbolic distance between ball points.

    d(u, v) = arcosh(1 + 2 ||u - v||^2 / ((1 - ||u||^2)(1 - ||v||^2)))

    The arcosh argument is clamped to >= 1 to absorb rounding near
    coincident points.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_finite(u, v)
    cu = 1.0 - _sq_norm(u)
    cv = 1.0 - _sq_norm(v)
    sep = _sq_norm(u - v)
    arg = 1.0 + 2.0 * sep / (cu * cv)
    return np.arccosh(np.maximum(arg, 1.0))


def _poincare_grad_parts(u, x):
    """Shared intermediates for the distance gradient, broadcast over pairs.

    Returns (grad_u, grad_x, ok) where ok flags pairs with a well-defined
    gradient; rows of singular pairs (coincident points) are zeroed.
    """
    cu = 1.0 - _sq_norm(u)
    cx = 1.0 - _sq_norm(x)
    sep = _sq_norm(u - x)
    arg = 1.0 + 2.0 * sep / (cu * cx)
    arg_sq_m1 = arg * arg - 1.0
    ok = arg_sq_m1 > 0.0
    root = np.sqrt(np.where(ok, arg_sq_m1, 1.0))
    inv_root = np.where(ok, 1.0 / root, 0.0)

    dot = np.einsum("...i,...i->...", u, x)
    u_sq = 1.0 - cu
    x_sq = 1.0 - cx
    coef_u = 4.0 / cx * inv_root
    grad_u = coef_u[..., None] * (
        ((x_sq - 2.0 * dot + 1.0) / cu**2)[..., None] * u - x / cu[..., None]
    )
    coef_x = 4.0 / cu * inv_root
    grad_x = coef_x[..., None] * (
        ((u_sq - 2.0 * dot + 1.0) / cx**2)[..., None] * x - u / cx[..., None]
    )
    return grad_u, grad_x, ok


def poincare_distance_grad(theta, x):
    """Partial derivative of the ball distance with respect to its first
    argument:

    dd(theta, x)/dtheta
        = 4 / (b sqrt(g^2 - 1)) * ((||x||^2 - 2<theta, x> + 1) / a^2 * theta - x / a)

    with a = 1 - ||theta||^2, b = 1 - ||x||^2 and g the arcosh argument of
    :func:`poincare_distance`. The derivative with respect to ``x`` is
    ``poincare_distance_grad(x, theta)``.

    Raises :class:`SingularGradientError` at coincident points, where the
    distance is not differentiable.
    """
    theta = np.asarray(theta, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_finite(theta, x)
    grad, _, ok = _poincare_grad_parts(theta, x)
    if not np.all(ok):
        raise SingularGradientError("distance gradient is singular at coincident points")
    return grad


def poincare_pair_grads(u, x):
    """Gradients of d(u, x) with respect to both arguments.

    Unlike :func:`poincare_distance_grad` this never raises on coincident
    pairs: their gradient rows are zero and flagged False in the returned
    mask, matching the convention that a self-pair contributes a constant
    to any loss.
    """
    u = np.asarray(u, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    _check_finite(u, x)
    return _poincare_grad_parts(u, x)


def riemannian_rescale(grad_e, theta):
    """Convert a Euclidean gradient at ``theta`` into the Riemannian one.

    The ball metric is conformal, so the conversion is the scalar factor
    (1 - ||theta||^2)^2 / 4 applied row-wise.
    """
    grad_e = np.asarray(grad_e, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    _check_finite(grad_e, theta)
    factor = (1.0 - _sq_norm(theta)) ** 2 / 4.0
    return factor[..., None] * grad_e


def project_to_ball(theta, epsilon=BALL_EPSILON):
    """Pull points with norm >= 1 - epsilon back to norm 1 - epsilon.

    Interior points are returned unchanged. The rescale repeats until the
    recomputed norm settles, which makes the projection exactly idempotent
    in floating point. Handles single vectors and row matrices.
    """
    theta = np.asarray(theta, dtype=np.float64)
    _check_finite(theta)
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    limit = 1.0 - epsilon
    norms = np.sqrt(_sq_norm(theta))
    if not np.any(norms >= limit):
        return theta
    out = np.array(theta, copy=True)
    while True:
        over = norms >= limit
        factors = np.where(over, limit / np.where(over, norms, 1.0), 1.0)
        if np.all(factors == 1.0):
            break
        rescaled = out * factors[..., None]
        if np.array_equal(rescaled, out):
            break
        out = rescaled
        norms = np.sqrt(_sq_norm(out))
    return out


def euclidean_score(u, v):
    """Squared Euclidean distance ||u - v||^2."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_finite(u, v)
    _check_dims(u, v)
    return _sq_norm(u - v)


def euclidean_score_grad(u, v):
    """Gradient of the squared distance with respect to ``u``: 2(u - v).

    The gradient with respect to ``v`` is the negation.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _check_finite(u, v)
    _check_dims(u, v)
    return 2.0 * (u - v)


def translational_score(u, v, r):
    """Asymmetric score ||u - v + r||^2 with a global offset vector."""
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    _check_finite(u, v, r)
    _check_dims(u, v, r)
    return _sq_norm(u - v + r)


def translational_score_grad(u, v, r):
    """Gradient of the translational score with respect to ``u``: 2(u - v + r).

    The gradient with respect to ``v`` is the negation; the gradient with
    respect to ``r`` equals the gradient with respect to ``u``.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    _check_finite(u, v, r)
    _check_dims(u, v, r)
    return 2.0 * (u - v + r)


def score_between(kind, u, v, translation=None):
    """Dissimilarity between ``u`` and each of ``v`` under a score kind."""
    if kind == POINCARE:
        return poincare_distance(u, v)
    if kind == EUCLIDEAN:
        return euclidean_score(u, v)
    if kind == TRANSLATIONAL:
        if translation is None:
            raise ValueError("translational score requires a translation vector")
        return translational_score(u, v, translation)
    raise ValueError(f"unknown score kind: {kind!r}")


def score_pair_grads(kind, u, v, translation=None):
    """Per-pair gradients (d_score/du, d_score/dv, valid mask).

    For the translational kind the gradient with respect to the offset
    vector equals the returned du, pair by pair.
    """
    if kind == POINCARE:
        return poincare_pair_grads(u, v)
    if kind == EUCLIDEAN:
        g = euclidean_score_grad(u, v)
        return g, -g, np.ones(g.shape[:-1], dtype=bool)
    if kind == TRANSLATIONAL:
        if translation is None:
            raise ValueError("translational score requires a translation vector")
        g = translational_score_grad(u, v, translation)
        return g, -g, np.ones(g.shape[:-1], dtype=bool)
    raise ValueError(f"unknown score kind: {kind!r}")
