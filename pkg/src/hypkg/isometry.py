"""Block-diagonal Givens rotations and reflections.

Coordinates ``2i`` and ``2i + 1`` form block ``i``. Angles have shape
``(..., d // 2)`` and broadcast against vectors of shape ``(..., d)``.
No d x d matrix is ever built; cost is linear in ``d``.
"""

from dataclasses import dataclass

import numpy as np

from hypkg.errors import DomainError

ROTATION = "rotation"
REFLECTION = "reflection"


@dataclass(frozen=True)
class AngleBlock:
    angles: np.ndarray
    kind: str

    def __post_init__(self):
        if self.kind not in (ROTATION, REFLECTION):
            raise DomainError(f"unknown isometry kind {self.kind!r}")
        a = np.asarray(self.angles, dtype=np.float64)
        if not np.all(np.isfinite(a)):
            raise DomainError("non-finite angle")
        object.__setattr__(self, "angles", a)

    @property
    def dim(self):
        return 2 * self.angles.shape[-1]


def _float(a):
    a = np.asarray(a)
    return a if a.dtype.kind == "f" else a.astype(np.float64)


def _pairs(angles, x):
    angles, x = _float(angles), _float(x)
    if x.shape[-1] % 2:
        raise DomainError(f"dimension must be even, got {x.shape[-1]}")
    if x.shape[-1] != 2 * angles.shape[-1]:
        raise DomainError(f"{angles.shape[-1]} angles cannot act on dimension {x.shape[-1]}")
    return angles, x[..., 0::2], x[..., 1::2]


def _interleave(a, b):
    out = np.empty(a.shape[:-1] + (2 * a.shape[-1],), dtype=np.result_type(a, b))
    out[..., 0::2] = a
    out[..., 1::2] = b
    return out


def rotate(angles, x):
    """Apply ``diag(G+(theta_i))``: each pair is turned counter-clockwise by theta_i."""
    angles, x0, x1 = _pairs(angles, x)
    cos, sin = np.cos(angles), np.sin(angles)
    return _interleave(cos * x0 - sin * x1, sin * x0 + cos * x1)


def reflect(angles, x):
    """Apply ``diag(G-(phi_i))``: each pair is mirrored across the line at angle phi_i / 2."""
    angles, x0, x1 = _pairs(angles, x)
    cos, sin = np.cos(angles), np.sin(angles)
    return _interleave(cos * x0 + sin * x1, sin * x0 - cos * x1)


def apply_rotation(theta, x):
    if theta.kind != ROTATION:
        raise DomainError("expected a rotation angle block")
    return rotate(theta.angles, x)


def apply_reflection(phi, x):
    if phi.kind != REFLECTION:
        raise DomainError("expected a reflection angle block")
    return reflect(phi.angles, x)


def givens_matrix(angles, kind):
    """Dense block-diagonal matrix; only for tests and inspection."""
    angles = np.asarray(angles, dtype=np.float64)
    d = 2 * angles.shape[-1]
    out = np.zeros((d, d))
    sign = 1.0 if kind == ROTATION else -1.0
    for i, t in enumerate(angles):
        c, s = np.cos(t), np.sin(t)
        out[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] = [[c, -sign * s], [s, sign * c]]
    return out
