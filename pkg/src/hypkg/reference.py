"""Arbitrary-precision batch loss, written scalar by scalar with mpmath.

Used by the finite-difference check to re-difference gradient components
whose extended-precision check is dominated by roundoff. It follows the
vectorized forward pass branch for branch (including the projections and
arctanh clamps) but shares no code with it.
"""

import mpmath

from hypkg.manifold import EPS_BALL, EPS_TANH

DIGITS = 40


def _dot(a, b):
    return mpmath.fsum(x * y for x, y in zip(a, b))


def _norm(a):
    return mpmath.sqrt(_dot(a, a))


def _scale(k, a):
    return [k * x for x in a]


def _add(a, b):
    return [x + y for x, y in zip(a, b)]


class _Geometry:
    def __init__(self, c):
        self.c = c
        self.s = mpmath.sqrt(c) if c else None
        self.m = (1 - mpmath.mpf(EPS_BALL)) / self.s if c else None
        self.lim = 1 - mpmath.mpf(EPS_TANH)

    def project(self, x):
        n = _norm(x)
        return _scale(self.m / n, x) if n > self.m else x

    def exp(self, v):
        if not self.c:
            return v
        n = _norm(v)
        if n == 0:
            return [mpmath.mpf(0)] * len(v)
        u = self.s * n
        if mpmath.tanh(u) / self.s > self.m:
            return _scale(self.m / n, v)
        return _scale(mpmath.tanh(u) / u, v)

    def log(self, y):
        if not self.c:
            return y
        n = _norm(y)
        if n == 0:
            return [mpmath.mpf(0)] * len(y)
        u = self.s * n
        if u > self.lim:
            return _scale(mpmath.atanh(self.lim) / self.s / n, y)
        return _scale(mpmath.atanh(u) / u, y)

    def add(self, x, y):
        if not self.c:
            return _add(x, y)
        c = self.c
        x2, y2, xy = _dot(x, x), _dot(y, y), _dot(x, y)
        a = 1 + 2 * c * xy + c * y2
        b = 1 - c * x2
        den = 1 + 2 * c * xy + c * c * x2 * y2
        return self.project([(a * p + b * q) / den for p, q in zip(x, y)])

    def dist(self, q, e):
        if not self.c:
            return 2 * _norm([b - a for a, b in zip(q, e)])
        w = self.add([-a for a in q], e)
        z = min(self.s * _norm(w), self.lim)
        return 2 / self.s * mpmath.atanh(z)


def _rotate(angles, x):
    out = []
    for k, t in enumerate(angles):
        c, s = mpmath.cos(t), mpmath.sin(t)
        out += [c * x[2 * k] - s * x[2 * k + 1], s * x[2 * k] + c * x[2 * k + 1]]
    return out


def _reflect(angles, x):
    out = []
    for k, t in enumerate(angles):
        c, s = mpmath.cos(t), mpmath.sin(t)
        out += [c * x[2 * k] + s * x[2 * k + 1], s * x[2 * k] - c * x[2 * k + 1]]
    return out


def batch_loss(params, batch, negatives, perturb=None, digits=DIGITS):
    """Sum of ``log(1 + exp(y * s))`` over the batch, evaluated at ``digits`` digits.

    Parameters are read as exact float64 values. ``perturb=(name, index,
    delta)`` adds ``delta`` to one scalar in full precision, so a central
    difference sees exactly +-step.
    """
    name_p, index_p, delta = perturb if perturb is not None else (None, None, 0)

    def value(name, index):
        x = mpmath.mpf(float(getattr(params, name)[index]))
        return x + mpmath.mpf(delta) if name == name_p and tuple(index) == tuple(index_p) else x

    def _row(arr_name, i):
        return [value(arr_name, (i, j)) for j in range(getattr(params, arr_name).shape[1])]

    with mpmath.workdps(digits):
        total = mpmath.mpf(0)
        for (h, r, t), negs in zip(batch, negatives):
            if not params.hyperbolic:
                c = 0
            elif params.fixed_curvature is not None:
                c = mpmath.mpf(float(params.fixed_curvature))
            else:
                c = mpmath.log1p(mpmath.exp(value("curvature_raw", (r,))))
            geo = _Geometry(c)
            eh = geo.exp(_row("entity", h))
            if params.transform == "rot":
                q = _rotate(_row("theta", r), eh)
            elif params.transform == "ref":
                q = _reflect(_row("phi", r), eh)
            else:
                xe = geo.log(_rotate(_row("theta", r), eh))
                ye = geo.log(_reflect(_row("phi", r), eh))
                a = _row("attention", r)
                lx, ly = _dot(a, xe), _dot(a, ye)
                wx = 1 / (1 + mpmath.exp(ly - lx))
                q = geo.exp(_add(_scale(wx, xe), _scale(1 - wx, ye)))
            big_q = geo.add(q, geo.exp(_row("relation", r)))
            bh = value("bias", (h,))
            for k, u in enumerate([t, *negs]):
                d = geo.dist(big_q, geo.exp(_row("entity", u)))
                s = -d * d + bh + value("bias", (u,))
                y = -1 if k == 0 or u == t else 1
                total += mpmath.log1p(mpmath.exp(y * s))
        return total
