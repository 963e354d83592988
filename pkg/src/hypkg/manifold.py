"""Poincare-ball operations with absolute curvature ``c > 0``.

Every function works on the last axis of its array arguments and broadcasts
over leading axes. ``c`` may be a scalar or an array matching the leading
axes (one curvature per vector). All arithmetic is float64.
"""

import numpy as np

from hypkg.errors import DomainError

EPS_BALL = 1e-5
EPS_TANH = 1e-15
EPS_NORM = 1e-15


def _as_points(x):
    x = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(x)):
        raise DomainError("non-finite coordinates")
    return x


def _curv(c, x):
    """Return ``c`` shaped to broadcast against ``x`` along the last axis."""
    c = np.asarray(c, dtype=np.float64)
    if np.any(c <= 0) or not np.all(np.isfinite(c)):
        raise DomainError(f"curvature must be positive and finite, got {c}")
    return c[..., None] if c.ndim else c


def _norm(x):
    return np.linalg.norm(x, axis=-1, keepdims=True)


def max_norm(c):
    """Largest norm a projected point may have in the ball of curvature ``c``."""
    return (1.0 - EPS_BALL) / np.sqrt(c)


def project_to_ball(x, c):
    """Pull points whose norm exceeds the boundary margin back onto it."""
    x = _as_points(x)
    c = _curv(c, x)
    n = _norm(x)
    m = max_norm(c)
    scale = np.where(n > m, m / np.maximum(n, EPS_NORM), 1.0)
    out = x * scale
    # rounding can leave the rescaled norm an ulp above m; shrink until it is
    # not, so that projecting twice changes nothing
    for _ in range(4):
        over = _norm(out) > m
        if not over.any():
            break
        out = np.where(over, out * (1.0 - 2.0**-52), out)
    return out


def expmap0(v, c):
    """Exponential map at the origin, tangent vector -> ball point."""
    v = _as_points(v)
    c = _curv(c, v)
    sc = np.sqrt(c)
    n = _norm(v)
    u = sc * n
    safe = np.maximum(u, EPS_NORM)
    factor = np.where(n < EPS_NORM, 0.0, np.tanh(safe) / safe)
    return project_to_ball(factor * v, c[..., 0] if np.ndim(c) else c)


def logmap0(y, c):
    """Logarithmic map at the origin, ball point -> tangent vector."""
    y = _as_points(y)
    c = _curv(c, y)
    sc = np.sqrt(c)
    n = _norm(y)
    if np.any(n * n * c > 1.0 + 1e-12):
        raise DomainError("point lies outside the closed ball")
    u = sc * n
    safe = np.maximum(u, EPS_NORM)
    factor = np.where(n < EPS_NORM, 0.0, np.arctanh(np.minimum(safe, 1.0 - EPS_TANH)) / safe)
    return factor * y


def _check_pair(x, y):
    x = _as_points(x)
    y = _as_points(y)
    if x.shape[-1] != y.shape[-1]:
        raise DomainError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]}")
    return x, y


def mobius_add(x, y, c):
    """Mobius addition ``x (+) y``, projected back into the ball."""
    x, y = _check_pair(x, y)
    cc = _curv(c, x if x.ndim >= y.ndim else y)
    x2 = np.sum(x * x, axis=-1, keepdims=True)
    y2 = np.sum(y * y, axis=-1, keepdims=True)
    xy = np.sum(x * y, axis=-1, keepdims=True)
    num = (1.0 + 2.0 * cc * xy + cc * y2) * x + (1.0 - cc * x2) * y
    den = 1.0 + 2.0 * cc * xy + cc * cc * x2 * y2
    out = num / den
    return project_to_ball(out, cc[..., 0] if np.ndim(cc) else cc)


def hyp_distance(x, y, c):
    """Geodesic distance between ball points."""
    x, y = _check_pair(x, y)
    w = mobius_add(-x, y, c)
    sc = np.sqrt(np.asarray(c, dtype=np.float64))
    z = np.minimum(sc * np.linalg.norm(w, axis=-1), 1.0 - EPS_TANH)
    d = 2.0 / sc * np.arctanh(z)
    return np.where(np.linalg.norm(x - y, axis=-1) < EPS_NORM, 0.0, d)


def hyp_distance_pairwise(x, ys, c):
    """Distances from each row of ``x`` (n, d) to each row of ``ys`` (m, d).

    Uses the closed form of ``||(-x) (+) y||`` in terms of ``x.y``, ``|x|^2``
    and ``|y|^2`` so no (n, m, d) intermediate is built. ``c`` is a scalar or
    one curvature per row of ``x``.
    """
    x, ys = _check_pair(x, ys)
    c = np.asarray(c, dtype=np.float64)
    cc = c[:, None] if c.ndim else c
    x2 = np.sum(x * x, axis=-1)[:, None]
    y2 = np.sum(ys * ys, axis=-1)[None, :]
    xy = x @ ys.T
    a = 1.0 - 2.0 * cc * xy + cc * y2
    b = 1.0 - cc * x2
    num2 = a * a * x2 - 2.0 * a * b * xy + b * b * y2
    den = 1.0 - 2.0 * cc * xy + cc * cc * x2 * y2
    n = np.sqrt(np.maximum(num2, 0.0)) / den
    sc = np.sqrt(cc)
    n = np.minimum(n, max_norm(cc))
    z = np.minimum(sc * n, 1.0 - EPS_TANH)
    return 2.0 / sc * np.arctanh(z)
