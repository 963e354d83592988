"""Scoring functions for the six model variants.

Parameters live in the tangent space at the origin. Hyperbolic variants map
them onto the ball with the curvature of the relation being scored, so an
entity has a different ball position under each relation.
"""

from dataclasses import dataclass, fields, replace

import numpy as np

from hypkg import manifold
from hypkg.errors import DomainError
from hypkg.isometry import reflect, rotate

# kind -> (transform, hyperbolic)
KINDS = {
    "refe": ("ref", False),
    "rote": ("rot", False),
    "atte": ("att", False),
    "refh": ("ref", True),
    "roth": ("rot", True),
    "atth": ("att", True),
}

ARRAY_FIELDS = ("entity", "bias", "relation", "theta", "phi", "attention", "curvature_raw")
ENTITY_FIELDS = ("entity", "bias")
RELATION_FIELDS = ("relation", "theta", "phi", "attention", "curvature_raw")


def normalize_kind(kind):
    k = str(kind).lower()
    if k not in KINDS:
        raise DomainError(f"unknown model kind {kind!r}; expected one of {sorted(KINDS)}")
    return k


def softplus(x):
    return np.logaddexp(0.0, x)


def inverse_softplus(c):
    c = np.asarray(c, dtype=np.float64)
    out = c + np.log(-np.expm1(-c))
    return float(out) if out.ndim == 0 else out


@dataclass
class ModelParams:
    """All trainable arrays plus the static model description.

    ``fixed_curvature`` is ``None`` when curvatures are trainable; otherwise
    every relation uses that constant and ``curvature_raw`` is ignored.
    """

    kind: str
    entity: np.ndarray
    bias: np.ndarray
    relation: np.ndarray
    theta: np.ndarray
    phi: np.ndarray
    attention: np.ndarray
    curvature_raw: np.ndarray
    fixed_curvature: float | None = None

    def __post_init__(self):
        self.kind = normalize_kind(self.kind)
        d = self.entity.shape[1]
        if d % 2 or d < 2:
            raise DomainError(f"dimension must be even and >= 2, got {d}")

    @property
    def dim(self):
        return self.entity.shape[1]

    @property
    def n_entities(self):
        return self.entity.shape[0]

    @property
    def n_relations(self):
        return self.relation.shape[0]

    @property
    def transform(self):
        return KINDS[self.kind][0]

    @property
    def hyperbolic(self):
        return KINDS[self.kind][1]

    @property
    def trainable_curvature(self):
        return self.hyperbolic and self.fixed_curvature is None

    def used_fields(self):
        """Names of the arrays this kind actually reads when scoring."""
        names = ["entity", "bias", "relation"]
        if self.transform in ("rot", "att"):
            names.append("theta")
        if self.transform in ("ref", "att"):
            names.append("phi")
        if self.transform == "att":
            names.append("attention")
        if self.trainable_curvature:
            names.append("curvature_raw")
        return names

    def arrays(self):
        return {name: getattr(self, name) for name in ARRAY_FIELDS}

    def copy(self):
        return replace(self, **{name: getattr(self, name).copy() for name in ARRAY_FIELDS})

    def curvature(self, r):
        """Curvature of relation(s) ``r``; zeros for Euclidean kinds."""
        r = np.asarray(r)
        if not self.hyperbolic:
            return np.zeros(r.shape)
        if self.fixed_curvature is not None:
            return np.full(r.shape, float(self.fixed_curvature))
        return softplus(self.curvature_raw[r])

    def check_ids(self, entities=(), relations=()):
        for e in entities:
            e = np.asarray(e)
            if e.size and (e.min() < 0 or e.max() >= self.n_entities):
                raise DomainError(f"entity id out of range [0, {self.n_entities})")
        for r in relations:
            r = np.asarray(r)
            if r.size and (r.min() < 0 or r.max() >= self.n_relations):
                raise DomainError(f"relation id out of range [0, {self.n_relations})")

    def equal(self, other):
        """Bitwise equality of every array and of the static description."""
        if (self.kind, self.fixed_curvature) != (other.kind, other.fixed_curvature):
            return False
        return all(
            np.array_equal(getattr(self, f.name), getattr(other, f.name)) for f in fields(self) if f.name in ARRAY_FIELDS
        )


def init_params(kind, n_entities, n_relations, dim, rng, fixed_curvature=None, init_scale=1e-3):
    """Embeddings ~ N(0, init_scale^2), angles ~ U(-pi, pi), attention 0, c_r = 1."""
    if dim % 2 or dim < 2:
        raise DomainError(f"dimension must be even and >= 2, got {dim}")
    half = dim // 2
    return ModelParams(
        kind=kind,
        entity=init_scale * rng.standard_normal((n_entities, dim)),
        bias=np.zeros(n_entities),
        relation=init_scale * rng.standard_normal((n_relations, dim)),
        theta=rng.uniform(-np.pi, np.pi, (n_relations, half)),
        phi=rng.uniform(-np.pi, np.pi, (n_relations, half)),
        attention=np.zeros((n_relations, dim)),
        curvature_raw=np.full(n_relations, inverse_softplus(1.0)),
        fixed_curvature=fixed_curvature,
    )


def materialize(params, r, v):
    """Ball coordinates of entity ``v`` under the curvature of relation ``r``."""
    if not params.hyperbolic:
        raise DomainError("materialize applies to hyperbolic kinds only")
    params.check_ids(entities=[v], relations=[r])
    return manifold.expmap0(params.entity[v], params.curvature(r))


def attention_combine(x, y, a, c=None):
    """Softmax-weighted tangent-space average of two points.

    ``c=None`` selects the flat version where log/exp are identities.
    """
    if c is None:
        xe, ye = np.asarray(x, dtype=np.float64), np.asarray(y, dtype=np.float64)
    else:
        xe, ye = manifold.logmap0(x, c), manifold.logmap0(y, c)
    logits = np.stack([np.sum(a * xe, axis=-1), np.sum(a * ye, axis=-1)], axis=-1)
    logits -= logits.max(axis=-1, keepdims=True)
    w = np.exp(logits)
    w /= w.sum(axis=-1, keepdims=True)
    avg = w[..., :1] * xe + w[..., 1:] * ye
    return avg if c is None else manifold.expmap0(avg, c)


def query(params, h, r):
    """Query embedding(s) Q(h, r) and the curvature(s) they live in."""
    h, r = np.asarray(h), np.asarray(r)
    params.check_ids(entities=[h], relations=[r])
    c = params.curvature(r)
    hyp = params.hyperbolic
    eh = manifold.expmap0(params.entity[h], c) if hyp else params.entity[h]
    kind = params.transform
    if kind == "rot":
        q = rotate(params.theta[r], eh)
    elif kind == "ref":
        q = reflect(params.phi[r], eh)
    else:
        q = attention_combine(
            rotate(params.theta[r], eh), reflect(params.phi[r], eh), params.attention[r], c if hyp else None
        )
    if hyp:
        return manifold.mobius_add(q, manifold.expmap0(params.relation[r], c), c), c
    return q + params.relation[r], c


def distance(q, e, c):
    """Hyperbolic distance, or its flat limit ``2 |q - e|`` where ``c == 0``."""
    c = np.asarray(c, dtype=np.float64)
    if np.all(c == 0):
        return 2.0 * np.linalg.norm(q - e, axis=-1)
    return manifold.hyp_distance(q, e, c)


def score(params, h, r, t):
    """s(h, r, t) = -d(Q(h, r), e_t)^2 + b_h + b_t (vectorized over ids)."""
    h, r, t = np.asarray(h), np.asarray(r), np.asarray(t)
    params.check_ids(entities=[t])
    q, c = query(params, h, r)
    et = manifold.expmap0(params.entity[t], c) if params.hyperbolic else params.entity[t]
    d = distance(q, et, c)
    return -(d**2) + params.bias[h] + params.bias[t]


def score_all_tails(params, h, r):
    """Scores of (h, r, t) for every entity t.

    Scalar ids give shape (|V|,); id arrays give (n, |V|). The query is built
    once per (h, r) and the entity table is materialized once per relation.
    """
    scalar = np.ndim(h) == 0
    h, r = np.atleast_1d(h), np.atleast_1d(r)
    q, c = query(params, h, r)
    out = np.empty((len(h), params.n_entities))
    if params.hyperbolic:
        for rel in np.unique(r):
            rows = np.flatnonzero(r == rel)
            crel = float(params.curvature(rel))
            table = manifold.expmap0(params.entity, crel)
            out[rows] = manifold.hyp_distance_pairwise(q[rows], table, crel)
    else:
        e = params.entity
        d2 = np.sum(q * q, axis=1)[:, None] - 2.0 * q @ e.T + np.sum(e * e, axis=1)[None, :]
        out[:] = 2.0 * np.sqrt(np.maximum(d2, 0.0))
    out = -(out**2) + params.bias[h][:, None] + params.bias[None, :]
    return out[0] if scalar else out
