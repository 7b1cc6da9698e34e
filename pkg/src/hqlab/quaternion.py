"""Geometric quaternions: pairs {alpha, u} of a scalar and a tangent vector.

The product couples the metric through the dot and cross products:

    {a, u} {b, v} = {a b - g(u, v),  a v + b u + u ^ v}

where ^ is the metric cross product. The norm |{a, u}| = sqrt(a^2 + g(u, u))
is multiplicative on squares, |p^2| = |p|^2, and submultiplicative in general.
Any g-orthonormal right-handed frame identifies a fibre with the standard
quaternions: the frame coefficients multiply by the Hamilton rules
i^2 = j^2 = k^2 = -1, ij = k, jk = i, ki = j.

Quaternion fields are arrays shaped (n1, n2, n3, 4), scalar part first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import geometry
from .geometry import GridDomain, MetricField


@dataclass(frozen=True)
class Quaternion:
    """One geometric quaternion attached to a node (for metric lookup)."""

    alpha: float
    u: np.ndarray  # (3,)
    node: tuple[int, int, int]

    def __post_init__(self):
        object.__setattr__(self, "u", np.asarray(self.u, dtype=float).reshape(3))

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.alpha], self.u))


def qmul(p: Quaternion, q: Quaternion, g: MetricField) -> Quaternion:
    """Geometric product at a shared node."""
    if tuple(p.node) != tuple(q.node):
        raise ValueError(f"node mismatch: {p.node} vs {q.node}")
    gn = g.at(p.node)
    dot = float(p.u @ gn @ q.u)
    cross = np.array(
        [
            p.u[1] * q.u[2] - p.u[2] * q.u[1],
            p.u[2] * q.u[0] - p.u[0] * q.u[2],
            p.u[0] * q.u[1] - p.u[1] * q.u[0],
        ]
    )
    sq = np.sqrt(np.linalg.det(gn))
    wedge = sq * (g.inv_at(p.node) @ cross)
    return Quaternion(
        alpha=p.alpha * q.alpha - dot,
        u=p.alpha * q.u + q.alpha * p.u + wedge,
        node=tuple(p.node),
    )


def qnorm(p: Quaternion, g: MetricField) -> float:
    gn = g.at(p.node)
    return float(np.sqrt(p.alpha**2 + p.u @ gn @ p.u))


def to_standard(p: Quaternion, frame: np.ndarray, g: MetricField) -> np.ndarray:
    """Coefficients (a0, a1, a2, a3) of p in a g-orthonormal oriented frame.

    frame rows are the three vectors e1, e2, e3; they must satisfy
    g(e_i, e_j) = delta_ij and e1 ^ e2 = e3 (right-handed), which makes the
    coefficient map an isomorphism onto the standard quaternions.
    """
    frame = np.asarray(frame, dtype=float).reshape(3, 3)
    gn = g.at(p.node)
    gram = frame @ gn @ frame.T
    if np.max(np.abs(gram - np.eye(3))) > 1e-10:
        raise ValueError("frame is not g-orthonormal at the node")
    sq = np.sqrt(np.linalg.det(gn))
    if sq * np.linalg.det(frame) < 0.0:
        raise ValueError("frame is not right-handed under the chosen orientation")
    coeffs = frame @ gn @ p.u
    return np.concatenate(([p.alpha], coeffs))


def hamilton(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Standard quaternion product on 4-vectors (w, x, y, z)."""
    w1, x1, y1, z1 = a
    w2, x2, y2, z2 = b
    return np.array(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 + y1 * w2 + z1 * x2 - x1 * z2,
            w1 * z2 + z1 * w2 + x1 * y2 - y1 * x2,
        ]
    )


# ---------------------------------------------------------------------------
# field level


def qfield(alpha: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Pack scalar and vector parts into a (..., 4) quaternion field."""
    return np.concatenate([alpha[..., None], u], axis=-1)


def parts(P: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return P[..., 0], P[..., 1:4]


def scalar_embed(alpha: np.ndarray) -> np.ndarray:
    """{alpha, 0}: scalars sit inside the quaternion fields as real parts."""
    u = np.zeros(alpha.shape + (3,))
    return qfield(alpha, u)


def field_mul(P: np.ndarray, Q: np.ndarray, g: MetricField) -> np.ndarray:
    """Pointwise geometric product of two quaternion fields."""
    if P.shape != Q.shape:
        raise ValueError(f"field shape mismatch: {P.shape} vs {Q.shape}")
    if P.shape[:-1] != g.dom.shape:
        raise ValueError("field does not live on the metric's domain")
    a, u = parts(P)
    b, v = parts(Q)
    alpha = a * b - geometry.inner(u, v, g)
    vec = a[..., None] * v + b[..., None] * u + geometry.vector_product(u, v, g)
    return qfield(alpha, vec)


def norm_field(P: np.ndarray, g: MetricField) -> np.ndarray:
    a, u = parts(P)
    return np.sqrt(a**2 + geometry.inner(u, u, g))


def sup_norm(P: np.ndarray, g: MetricField) -> float:
    """Max pointwise quaternion norm over interior + boundary nodes."""
    return geometry.sup_over(norm_field(P, g), g.dom.allowed)


def q_residual(P: np.ndarray, g: MetricField) -> tuple[float, float]:
    """Harmonicity defect (sup |grad alpha - rot u|, sup |div u|), measured in
    the g-norm over interior nodes one erosion deep (where the stencils live).
    """
    a, u = parts(P)
    mismatch = geometry.grad(a, g) - geometry.rot(u, g)
    core = geometry.interior_core(g.dom)
    m = np.sqrt(geometry.inner(mismatch, mismatch, g))
    return (
        geometry.sup_over(m, core),
        geometry.sup_over(geometry.div(u, g), core),
    )
