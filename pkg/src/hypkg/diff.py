"""Exact gradients of the batch loss, by hand-written reverse accumulation.

The scoring graph is fixed per model kind, so each primitive (exp/log at
the origin, Givens blocks, Mobius addition, distance, attention) gets a
forward pass that keeps what its vector-Jacobian product needs, and the
graph is walked backwards once per batch. Projections and arctanh clamps
contribute the gradient of the branch that was taken; the clamped constant
has zero derivative with respect to its input.

Curvature arrays ``ck`` always carry a trailing singleton axis so they
broadcast against vectors.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit

from hypkg import reference
from hypkg.errors import DomainError, NumericError
from hypkg.isometry import reflect, rotate
from hypkg.manifold import EPS_BALL, EPS_NORM, EPS_TANH
from hypkg.model import ENTITY_FIELDS, init_params

_SERIES_CUTOFF = 0.05
REFINE_ABOVE = 1e-5


def _dot(a, b):
    return np.einsum("...d,...d->...", a, b)[..., None]


def _norm(x):
    return np.sqrt(_dot(x, x))


def _tanh_ratio(u):
    """tanh(u)/u and (d/du [tanh(u)/u]) / u."""
    small = u < _SERIES_CUTOFF
    us = np.where(small, 1.0, u)
    u2 = u * u
    with np.errstate(over="ignore"):
        sech2 = 1.0 / np.cosh(us) ** 2
    f = np.where(small, 1 - u2 / 3 + 2 * u2**2 / 15 - 17 * u2**3 / 315, np.tanh(us) / us)
    fpu = np.where(
        small,
        -2 / 3 + 8 * u2 / 15 - 34 * u2**2 / 105 + 496 * u2**3 / 2835 - 2764 * u2**4 / 31185,
        (us * sech2 - np.tanh(us)) / us**3,
    )
    return f, fpu


def _artanh_ratio(u):
    """artanh(u)/u and (d/du [artanh(u)/u]) / u, for 0 <= u < 1."""
    small = u < _SERIES_CUTOFF
    us = np.where(small, 0.5, u)
    u2 = u * u
    g = np.where(small, 1 + u2 / 3 + u2**2 / 5 + u2**3 / 7 + u2**4 / 9, np.arctanh(us) / us)
    gpu = np.where(
        small,
        2 / 3 + 4 * u2 / 5 + 6 * u2**2 / 7 + 8 * u2**3 / 9 + 10 * u2**4 / 11,
        (us / (1 - us * us) - np.arctanh(us)) / us**3,
    )
    return g, gpu


def _margin(value, bound):
    return float(np.min(np.abs(value - bound))) if np.size(value) else np.inf


class _Tape:
    """Records the closest approach of any clamp/projection to its switch point."""

    def __init__(self, enabled=False):
        self.enabled = enabled
        self.margin = np.inf

    def note(self, value, bound):
        if self.enabled:
            self.margin = min(self.margin, _margin(value, bound))


# --- hyperbolic primitives ------------------------------------------------


def _radial_clamped_vjp(g, v, n, m, ck):
    """VJP of v -> m(c) * v / |v| where dm/dc = -m / (2c)."""
    gv_ = _dot(g, v)
    nn = np.maximum(n, EPS_NORM)
    gv = m * (g / nn - gv_ * v / nn**3)
    gc = gv_ / nn * (-m / (2 * ck))
    return gv, gc


def _project_fwd(x, ck, tape):
    n = _norm(x)
    m = (1.0 - EPS_BALL) / np.sqrt(ck)
    active = n > m
    tape.note(n, m)
    out = np.where(active, x * (m / np.maximum(n, EPS_NORM)), x)
    return out, (x, n, m, active, ck)


def _project_vjp(cache, g):
    x, n, m, active, ck = cache
    if not active.any():
        return g, 0.0
    gp, gcp = _radial_clamped_vjp(g, x, n, m, ck)
    return np.where(active, gp, g), np.where(active, gcp, 0.0)


def _expmap0_fwd(v, ck, tape):
    s = np.sqrt(ck)
    n = _norm(v)
    u = s * n
    f, fpu = _tanh_ratio(u)
    pre = f * v
    m = (1.0 - EPS_BALL) / s
    pre_norm = f * n
    active = pre_norm > m
    tape.note(pre_norm, m)
    out = np.where(active, v * (m / np.maximum(n, EPS_NORM)), pre)
    return out, (v, n, f, fpu, s, m, active, ck)


def _expmap0_vjp(cache, g):
    v, n, f, fpu, s, m, active, ck = cache
    gv_ = _dot(g, v)
    gv = f * g + gv_ * fpu * s * s * v
    gc = gv_ * fpu * n * n / 2
    if not active.any():
        return gv, gc
    gvp, gcp = _radial_clamped_vjp(g, v, n, m, ck)
    return np.where(active, gvp, gv), np.where(active, gcp, gc)


def _logmap0_fwd(y, ck, tape):
    s = np.sqrt(ck)
    n = _norm(y)
    u = s * n
    lim = 1.0 - EPS_TANH
    active = u > lim
    tape.note(u, lim)
    g, gpu = _artanh_ratio(np.minimum(u, lim))
    m = np.arctanh(lim) / s
    out = np.where(active, y * (m / np.maximum(n, EPS_NORM)), g * y)
    return out, (y, n, g, gpu, s, m, active, ck)


def _logmap0_vjp(cache, G):
    y, n, g, gpu, s, m, active, ck = cache
    gy_ = _dot(G, y)
    gy = g * G + gy_ * gpu * s * s * y
    gc = gy_ * gpu * n * n / 2
    if not active.any():
        return gy, gc
    gyp, gcp = _radial_clamped_vjp(G, y, n, m, ck)
    return np.where(active, gyp, gy), np.where(active, gcp, gc)


def _mobius_fwd(x, y, ck, tape):
    x2, y2, xy = _dot(x, x), _dot(y, y), _dot(x, y)
    a = 1 + 2 * ck * xy + ck * y2
    b = 1 - ck * x2
    den = 1 + 2 * ck * xy + ck * ck * x2 * y2
    pre = (a * x + b * y) / den
    out, pcache = _project_fwd(pre, ck, tape)
    return out, (x, y, x2, y2, xy, a, b, den, pre, ck, pcache)


def _mobius_vjp(cache, g, reduce_x=False):
    """VJP of Mobius addition. With ``reduce_x`` the x-gradient is summed
    over axis 1, for x of shape (n, 1, d) broadcast against y of (n, m, d)."""
    x, y, x2, y2, xy, a, b, den, pre, c, pcache = cache
    gp, gc = _project_vjp(pcache, g)
    ga = _dot(gp, x) / den
    gb = _dot(gp, y) / den
    gd = -_dot(gp, pre) / den
    # gx = (a/den) gp + kxy * y + kxx * x, and gy likewise
    kxy = 2 * c * (ga + gd)
    kxx = -2 * c * gb + 2 * c * c * y2 * gd
    kyx = 2 * c * (ga + gd)
    kyy = 2 * c * ga + 2 * c * c * x2 * gd
    gy = (b / den) * gp + kyx * x + kyy * y
    if reduce_x:
        gx = (
            np.einsum("nmk,nmd->nd", a / den, gp)
            + np.einsum("nmk,nmd->nd", kxy, y)
            + np.sum(kxx, axis=1) * x[:, 0, :]
        )
    else:
        gx = (a / den) * gp + kxy * y + kxx * x
    gc = gc + ga * (2 * xy + y2) - gb * x2 + gd * (2 * xy + 2 * c * x2 * y2)
    return gx, gy, gc


class _Hyperbolic:
    @staticmethod
    def exp(v, ck, tape):
        return _expmap0_fwd(v, ck, tape)

    exp_vjp = staticmethod(_expmap0_vjp)

    @staticmethod
    def log(y, ck, tape):
        return _logmap0_fwd(y, ck, tape)

    log_vjp = staticmethod(_logmap0_vjp)

    @staticmethod
    def add(x, y, ck, tape):
        return _mobius_fwd(x, y, ck, tape)

    add_vjp = staticmethod(_mobius_vjp)

    @staticmethod
    def dist(q, e, ck, tape):
        w, mcache = _mobius_fwd(-q, e, ck, tape)
        s = np.sqrt(ck)
        n = _norm(w)
        z = s * n
        lim = 1.0 - EPS_TANH
        tape.note(z, lim)
        active = z > lim
        zc = np.minimum(z, lim)
        d = 2.0 / s * np.arctanh(zc)
        return d[..., 0], (w, n, z, zc, active, s, ck, mcache)

    @staticmethod
    def dist_vjp(cache, g):
        w, n, z, zc, active, s, ck, mcache = cache
        g = g[..., None]
        inv = 1.0 / (1.0 - zc * zc)
        gw = np.where(active, 0.0, g * 2.0 * inv * w / np.maximum(n, EPS_NORM))
        gc = np.where(active, -g * np.arctanh(zc) / (ck * s), g * (-np.arctanh(zc) / (ck * s) + n * inv / ck))
        gmq, ge, gc2 = _mobius_vjp(mcache, gw, reduce_x=True)
        return -gmq, ge, gc + gc2


class _Flat:
    """Zero-curvature limit: exp/log are identities and addition is plain."""

    @staticmethod
    def exp(v, ck, tape):
        return v, None

    @staticmethod
    def exp_vjp(cache, g):
        return g, 0.0

    log = exp
    log_vjp = exp_vjp

    @staticmethod
    def add(x, y, ck, tape):
        return x + y, None

    @staticmethod
    def add_vjp(cache, g):
        return g, g, 0.0

    @staticmethod
    def dist(q, e, ck, tape):
        diff = e - q
        n = _norm(diff)
        return 2.0 * n[..., 0], (diff, n)

    @staticmethod
    def dist_vjp(cache, g):
        diff, n = cache
        ge = g[..., None] * 2.0 * diff / np.maximum(n, EPS_NORM)
        return -ge.sum(axis=1), ge, 0.0


# --- givens and attention -------------------------------------------------


def _givens_vjp(out, g):
    """Gradient of a Givens block output with respect to its angle."""
    return -g[..., 0::2] * out[..., 1::2] + g[..., 1::2] * out[..., 0::2]


def _attention_fwd(xe, ye, a):
    lx, ly = _dot(a, xe), _dot(a, ye)
    top = np.maximum(lx, ly)
    ex, ey = np.exp(lx - top), np.exp(ly - top)
    ax, ay = ex / (ex + ey), ey / (ex + ey)
    return ax * xe + ay * ye, (xe, ye, a, ax, ay)


def _attention_vjp(cache, g):
    xe, ye, a, ax, ay = cache
    gax, gay = _dot(g, xe), _dot(g, ye)
    mean = ax * gax + ay * gay
    glx, gly = ax * (gax - mean), ay * (gay - mean)
    return ax * g + glx * a, ay * g + gly * a, glx * xe + gly * ye


# --- batch loss -----------------------------------------------------------


@dataclass
class GradientBundle:
    """Loss and gradients for the rows a batch touched.

    ``grads['entity']`` and ``grads['bias']`` are indexed like
    ``entity_ids``; the relation arrays like ``relation_ids``. Arrays the
    model kind never reads have no entry.
    """

    loss: float
    entity_ids: np.ndarray
    relation_ids: np.ndarray
    grads: dict = field(default_factory=dict)
    clamp_margin: float = np.inf  # only measured when track_margin=True

    def dense(self, params):
        """Full-size gradient arrays (zeros for untouched rows); for tests."""
        out = {}
        for name, g in self.grads.items():
            full = np.zeros_like(getattr(params, name))
            ids = self.entity_ids if name in ENTITY_FIELDS else self.relation_ids
            full[ids] = g
            out[name] = full
        return out


def tail_signs(t, tails):
    """Label matrix: -1 where the candidate is the true tail, +1 elsewhere."""
    return np.where(tails == t[:, None], -1.0, 1.0)


def _prepare(params, batch, negatives):
    batch = np.asarray(batch, dtype=np.int64).reshape(-1, 3)
    negatives = np.asarray(negatives, dtype=np.int64)
    if negatives.ndim != 2 or negatives.shape[0] != batch.shape[0]:
        raise DomainError("negatives must have one row per batch triple")
    h, r, t = batch.T
    params.check_ids(entities=[h, t, negatives], relations=[r])
    tails = np.concatenate([t[:, None], negatives], axis=1)
    signs = tail_signs(t, tails)
    signs[:, 0] = -1.0
    return h, r, t, tails, signs


def _forward(params, h, r, tails, tape):
    geo = _Hyperbolic if params.hyperbolic else _Flat
    ck = params.curvature(r)[:, None]
    caches = {}
    eh, caches["eh"] = geo.exp(params.entity[h], ck, tape)
    kind = params.transform
    if kind in ("rot", "att"):
        qrot = rotate(params.theta[r], eh)
    if kind in ("ref", "att"):
        qref = reflect(params.phi[r], eh)
    if kind == "rot":
        q = qrot
    elif kind == "ref":
        q = qref
    else:
        xe, caches["xe"] = geo.log(qrot, ck, tape)
        ye, caches["ye"] = geo.log(qref, ck, tape)
        avg, caches["att"] = _attention_fwd(xe, ye, params.attention[r])
        q, caches["q"] = geo.exp(avg, ck, tape)
        caches["qrot"], caches["qref"] = qrot, qref
    if kind == "rot":
        caches["qrot"] = qrot
    if kind == "ref":
        caches["qref"] = qref
    rh, caches["rh"] = geo.exp(params.relation[r], ck, tape)
    big_q, caches["Q"] = geo.add(q, rh, ck, tape)
    et, caches["et"] = geo.exp(params.entity[tails], ck[:, None], tape)
    dist, caches["dist"] = geo.dist(big_q[:, None, :], et, ck[:, None], tape)
    scores = -(dist**2) + params.bias[h][:, None] + params.bias[tails]
    return scores, dist, caches


def batch_scores(params, batch, negatives):
    """Score matrix (n, 1 + k): column 0 is the true tail, the rest negatives."""
    h, r, _, tails, _ = _prepare(params, batch, negatives)
    scores, _, _ = _forward(params, h, r, tails, _Tape())
    return scores


def loss_terms(params, batch, negatives):
    """Per-entry loss contributions ``log(1 + exp(y * s))``, shape (n, 1 + k)."""
    h, r, _, tails, signs = _prepare(params, batch, negatives)
    scores, _, _ = _forward(params, h, r, tails, _Tape())
    return np.logaddexp(0.0, signs * scores)


def _scatter(ids, values):
    """Sum ``values`` rows sharing an id; returns (sorted unique ids, sums)."""
    order = np.argsort(ids, kind="stable")
    sorted_ids = ids[order]
    starts = np.flatnonzero(np.r_[True, sorted_ids[1:] != sorted_ids[:-1]])
    return sorted_ids[starts], np.add.reduceat(values[order], starts, axis=0)


def loss_and_gradients(params, batch, negatives, config=None, track_margin=False):
    """Batch loss and its exact gradient with respect to every touched row.

    ``batch`` is an (n, 3) array of (h, r, t) ids and ``negatives`` an (n, k)
    array of candidate tails. The loss always includes the positive term
    ``log(1 + exp(-s(h, r, t)))`` plus one term per negative, where a
    negative equal to the true tail is labelled as positive.
    """
    h, r, t, tails, signs = _prepare(params, batch, negatives)
    tape = _Tape(track_margin)
    scores, dist, caches = _forward(params, h, r, tails, tape)
    z = signs * scores
    loss = float(np.sum(np.logaddexp(0.0, z)))
    if not np.isfinite(loss):
        bad = np.flatnonzero(~np.all(np.isfinite(z), axis=1))
        i = int(bad[0]) if bad.size else 0
        raise NumericError(f"non-finite loss at triple {(int(h[i]), int(r[i]), int(t[i]))}", triple=(h[i], r[i], t[i]))

    geo = _Hyperbolic if params.hyperbolic else _Flat
    kind = params.transform
    gs = signs * expit(z)
    gdist = -2.0 * dist * gs

    g_mq, g_et, gc_d = geo.dist_vjp(caches["dist"], gdist)
    gc = _sum_c(gc_d, (1,))
    g_q_big = g_mq
    g_ent_tails, gc_et = geo.exp_vjp(caches["et"], g_et)
    gc = gc + _sum_c(gc_et, (1,))

    gq, grh, gc_add = geo.add_vjp(caches["Q"], g_q_big)
    gc = gc + _sum_c(gc_add)
    g_rel, gc_rh = geo.exp_vjp(caches["rh"], grh)
    gc = gc + _sum_c(gc_rh)

    grads = {}
    geh = 0.0
    if kind == "att":
        gavg, gc_q = geo.exp_vjp(caches["q"], gq)
        gc = gc + _sum_c(gc_q)
        gxe, gye, g_att = _attention_vjp(caches["att"], gavg)
        gqrot, gc_x = geo.log_vjp(caches["xe"], gxe)
        gqref, gc_y = geo.log_vjp(caches["ye"], gye)
        gc = gc + _sum_c(gc_x) + _sum_c(gc_y)
    elif kind == "rot":
        gqrot = gq
    else:
        gqref = gq
    if kind in ("rot", "att"):
        geh = geh + rotate(-params.theta[r], gqrot)
        g_theta = _givens_vjp(caches["qrot"], gqrot)
    if kind in ("ref", "att"):
        geh = geh + reflect(params.phi[r], gqref)
        g_phi = _givens_vjp(caches["qref"], gqref)
    g_ent_head, gc_eh = geo.exp_vjp(caches["eh"], geh)
    gc = gc + _sum_c(gc_eh)

    ent_ids = np.concatenate([h, tails.ravel()])
    ent_uniq, g_entity = _scatter(ent_ids, np.concatenate([g_ent_head, g_ent_tails.reshape(-1, params.dim)]))
    gb_vals = np.concatenate([gs.sum(axis=1), gs.ravel()])
    _, g_bias = _scatter(ent_ids, gb_vals)
    grads["entity"] = g_entity
    grads["bias"] = g_bias

    rel_uniq, grads["relation"] = _scatter(r, g_rel)
    if kind in ("rot", "att"):
        grads["theta"] = _scatter(r, g_theta)[1]
    if kind in ("ref", "att"):
        grads["phi"] = _scatter(r, g_phi)[1]
    if kind == "att":
        grads["attention"] = _scatter(r, g_att)[1]
    if params.trainable_curvature:
        graw = gc * expit(params.curvature_raw[r])
        grads["curvature_raw"] = _scatter(r, graw)[1]

    return GradientBundle(loss, ent_uniq, rel_uniq, grads, tape.margin)


def _sum_c(gc, axes=()):
    """Collapse a curvature gradient to one value per batch row."""
    gc = np.asarray(gc, dtype=np.float64)
    if gc.ndim == 0:
        return gc
    gc = gc[..., 0]
    return gc.sum(axis=axes) if axes else gc


def _stacked_copies(params, perturbations, dtype):
    """One ModelParams holding a copy of ``params`` per (name, index, delta)."""
    copies = []
    base = {k: v.astype(dtype) for k, v in params.arrays().items()}
    for name, idx, delta in perturbations:
        arrays = dict(base)
        arr = arrays[name].copy()
        arr[idx] += delta
        arrays[name] = arr
        copies.append(arrays)
    stacked = {k: np.concatenate([c[k] for c in copies]) for k in copies[0]}
    return replace(params, **stacked)


def finite_difference_check(params, batch, negatives, config=None, step=1e-6, dtype=np.longdouble, refine=True):
    """Worst relative error between analytic and central-difference gradients.

    Every scalar of every row the batch reads is perturbed by +-step (rows the
    batch never reads have an exactly zero gradient on both sides). Relative
    error is ``|a - f| / max(|a|, |f|, 1e-8)``. Returns ``nan`` when a
    projection or arctanh clamp is within ``10 * step`` of switching, where
    the one-sided derivatives disagree.

    All perturbed copies are stacked into one parameter set with offset ids,
    so the 2 * n_scalars loss evaluations run as a single vectorized forward.
    The perturbed losses are evaluated in ``dtype`` (extended precision by
    default): in float64 the roundoff of a loss difference at step 1e-6 is
    around 1e-9, which swamps gradient components of order 1e-5. The
    analytic gradients are always float64.

    Extended precision still leaves about 1e-12 of noise in a difference of
    losses near 25, which is 1e-4 of a component near the 1e-8 floor. With
    ``refine`` set, any component whose error exceeds ``REFINE_ABOVE`` is
    differenced again with the arbitrary-precision loss in
    :mod:`hypkg.reference`.
    """
    if step <= 0:
        raise DomainError("step must be positive")
    bundle = loss_and_gradients(params, batch, negatives, config, track_margin=True)
    if bundle.clamp_margin < 10 * step:
        return float("nan")
    analytic, perturbations = [], []
    for name, g in bundle.grads.items():
        ids = bundle.entity_ids if name in ENTITY_FIELDS else bundle.relation_ids
        arr = getattr(params, name)
        for k, row in enumerate(ids):
            for j in np.ndindex(arr.shape[1:]):
                analytic.append(g[(k,) + j])
                perturbations += [(name, (row,) + j, step), (name, (row,) + j, -step)]
    if not perturbations:
        return 0.0
    batch = np.asarray(batch, dtype=np.int64).reshape(-1, 3)
    negatives = np.asarray(negatives, dtype=np.int64)
    n_copies = len(perturbations)
    ent_off = (np.arange(n_copies) * params.n_entities)[:, None]
    rel_off = (np.arange(n_copies) * params.n_relations)[:, None]
    big_batch = np.stack(
        [(batch[:, 0] + ent_off).ravel(), (batch[:, 1] + rel_off).ravel(), (batch[:, 2] + ent_off).ravel()], axis=1
    )
    big_neg = (negatives[None] + ent_off[:, :, None]).reshape(-1, negatives.shape[1])
    terms = loss_terms(_stacked_copies(params, perturbations, dtype), big_batch, big_neg)
    terms = terms.reshape(n_copies // 2, 2, -1)
    fd = (np.sum(terms[:, 0] - terms[:, 1], axis=1) / (2 * step)).astype(np.float64)
    an = np.asarray(analytic)
    err = _relative_error(an, fd)
    if refine:
        for k in np.flatnonzero(err > REFINE_ABOVE):
            name, idx, _ = perturbations[2 * k]
            up = reference.batch_loss(params, batch, negatives, perturb=(name, idx, step))
            down = reference.batch_loss(params, batch, negatives, perturb=(name, idx, -step))
            fd[k] = float((up - down) / (2 * step))
        err = _relative_error(an, fd)
    return float(err.max())


def _relative_error(an, fd):
    return np.abs(an - fd) / np.maximum(np.maximum(np.abs(an), np.abs(fd)), 1e-8)


def random_instance(kind, dim, rng, fixed_curvature=False, n_entities=4, n_relations=2, batch=2, n_neg=2):
    """Random (params, batch, negatives) away from the origin, for gradient checks.

    Tangent coordinates are N(0, 0.25/dim), so vector norms stay near 0.5 and
    points sit well inside the ball at every dimension;
    biases, attention and raw curvatures are N(0, 1). ``fixed_curvature``
    draws one constant c from U(0.5, 2) instead of training it.
    """
    c = float(rng.uniform(0.5, 2.0)) if fixed_curvature else None
    params = init_params(kind, n_entities, n_relations, dim, rng, fixed_curvature=c)
    scale = 0.5 / np.sqrt(dim)
    params.entity = rng.normal(0.0, scale, params.entity.shape)
    params.relation = rng.normal(0.0, scale, params.relation.shape)
    params.bias = rng.normal(0.0, 1.0, params.bias.shape)
    params.attention = rng.normal(0.0, 1.0, params.attention.shape)
    params.curvature_raw = rng.normal(0.0, 1.0, params.curvature_raw.shape)
    triples = np.stack(
        [rng.integers(0, n_entities, batch), rng.integers(0, n_relations, batch), rng.integers(0, n_entities, batch)],
        axis=1,
    )
    negatives = rng.integers(0, n_entities, (batch, n_neg))
    return params, triples, negatives
