"""Second-order jets of scalar fields and jet-level boundary control.

A 2-jet at a node collects the value, the three first partials, and the six
second partials of a function, ordered

    {f; f_1, f_2, f_3; f_11, f_12, f_13, f_22, f_23, f_33}.

Jets are extracted by a weighted quadratic fit over a lattice ball, which is
exact on polynomials of degree two and independent of the metric. The Laplace
jet is the 10-vector lam with <lam, jet(f)> = (laplacian f) at the node, and
jet_control synthesizes boundary data whose harmonic extension hits a target
jet. The reachable jet space is the orthogonal complement of lam, so targets
with a Laplace component are refused.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from . import control, geometry
from .control import BoundaryControl, HarmonicFamily
from .elliptic import DirichletOperator
from .geometry import GridDomain, MetricField

_TINY = 1e-300

JET_DIM = 10
#: slot order of a 2-jet; squares carry the 1/2 Taylor factor in the fit
#: columns so the fitted coefficients are the bare derivatives.
JET_SLOTS = ("f", "f1", "f2", "f3", "f11", "f12", "f13", "f22", "f23", "f33")

_SECOND_PAIRS = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def ball_offsets() -> tuple[np.ndarray, np.ndarray]:
    """Integer offsets of the fit stencil and their bump weights.

    The stencil is the lattice ball of radius 3; nodes on the bounding sphere
    get bump weight exactly (1 - 1)^3 = 0 and are dropped since a zero row
    cannot move a least-squares fit. What survives has max offset 2 per axis,
    which is why jet extraction only needs two clear layers around the node.
    """
    offs = np.array([m for m in np.ndindex(7, 7, 7)], dtype=int) - 3
    r2 = np.sum((offs / 3.0) ** 2, axis=1)
    keep = r2 <= 1.0 + 1e-12
    offs, r2 = offs[keep], r2[keep]
    w = (1.0 - r2) ** 3
    pos = w > 0.0
    return offs[pos], w[pos]


def _design_matrix(deltas: np.ndarray) -> np.ndarray:
    """Quadratic Taylor columns at physical offsets deltas (M, 3)."""
    m = deltas.shape[0]
    x = np.empty((m, JET_DIM))
    x[:, 0] = 1.0
    x[:, 1:4] = deltas
    col = 4
    for i, j in _SECOND_PAIRS:
        prod = deltas[:, i] * deltas[:, j]
        x[:, col] = 0.5 * prod if i == j else prod
        col += 1
    return x


def _weighted_contraction(deltas: np.ndarray, w: np.ndarray) -> np.ndarray:
    """(10, M) map from stencil samples to jet coefficients, via QR."""
    sw = np.sqrt(w)
    a = sw[:, None] * _design_matrix(deltas)
    q, r = np.linalg.qr(a)
    if np.min(np.abs(np.diag(r))) < 1e-10 * np.max(np.abs(np.diag(r))):
        raise ValueError("insufficient neighbors: fit stencil is rank deficient")
    return solve_triangular(r, q.T * sw[None, :], lower=False)


_CONTRACTION_CACHE: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}


def _shared_contraction(dom: GridDomain) -> tuple[np.ndarray, np.ndarray]:
    """Offsets and contraction for the unclipped stencil; cached per spacing."""
    key = tuple(dom.h)
    hit = _CONTRACTION_CACHE.get(key)
    if hit is None:
        offs, w = ball_offsets()
        hit = (offs, _weighted_contraction(offs * dom.h[None, :], w))
        _CONTRACTION_CACHE[key] = hit
    return hit


def _clipped_jet(dom: GridDomain, field: np.ndarray, a: np.ndarray) -> np.ndarray:
    offs, w = ball_offsets()
    nodes = a[None, :] + offs
    ok = np.all((nodes >= 0) & (nodes < np.array(dom.shape)), axis=1)
    nodes, offs, w = nodes[ok], offs[ok], w[ok]
    ok = dom.allowed[tuple(nodes.T)]
    nodes, offs, w = nodes[ok], offs[ok], w[ok]
    if len(nodes) < JET_DIM:
        raise ValueError(f"insufficient neighbors around node {tuple(a)}")
    c = _weighted_contraction(offs * dom.h[None, :], w)
    return c @ field[tuple(nodes.T)]


def extract_jet(dom: GridDomain, field: np.ndarray, a) -> np.ndarray:
    """2-jet of a scalar field at node a by weighted quadratic fit.

    Exact to rounding on polynomials of degree <= 2. Nodes whose full stencil
    falls inside the domain share one precomputed contraction; near a mask or
    the array edge the stencil is clipped and refit, and the call fails if the
    clipped stencil cannot determine all ten coefficients.
    """
    return extract_jets(dom, field, np.asarray(a, dtype=int)[None, :])[0]


def extract_jets(dom: GridDomain, field: np.ndarray, points) -> np.ndarray:
    """Jets at many nodes, (M, 10); shared fast path, per-point fallback."""
    pts = np.asarray(points, dtype=int).reshape(-1, 3)
    if field.shape != dom.shape:
        raise ValueError(f"field shape {field.shape} does not match domain")
    offs, c = _shared_contraction(dom)
    shape = np.array(dom.shape)
    out = np.empty((len(pts), JET_DIM))

    nodes = pts[:, None, :] + offs[None, :, :]          # (M, S, 3)
    inside = np.all((nodes >= 0) & (nodes < shape), axis=(1, 2))
    fast = inside.copy()
    if fast.any():
        nb = nodes[fast]
        ok = dom.allowed[nb[..., 0], nb[..., 1], nb[..., 2]]
        good = np.all(ok, axis=1)
        idx = np.flatnonzero(fast)
        fast[idx[~good]] = False
    if fast.any():
        nb = nodes[fast]
        out[fast] = field[nb[..., 0], nb[..., 1], nb[..., 2]] @ c.T
    for i in np.flatnonzero(~fast):
        out[i] = _clipped_jet(dom, field, pts[i])
    return out


def laplace_jet(g: MetricField, a) -> np.ndarray:
    """The 10-vector pairing to the laplacian: <lam, jet(f)> = (lap f)(a).

    First slot 0; drift slots are central differences of sqrt(g) g^{ik}
    divided by sqrt(g); second-order slots are the inverse metric with
    off-diagonals doubled, matching the jet's single mixed-derivative slots.
    """
    a = np.asarray(a, dtype=int).reshape(3)
    dom = g.dom
    for i in range(3):
        if a[i] < 1 or a[i] > dom.shape[i] - 2:
            raise ValueError(f"node {tuple(a)} too close to the array edge")
    lam = np.zeros(JET_DIM)
    p = g.sqrt_det[..., None, None] * g.inv
    sg = g.sqrt_det[tuple(a)]
    for i in range(3):
        ap, am = a.copy(), a.copy()
        ap[i] += 1
        am[i] -= 1
        if not (dom.allowed[tuple(ap)] and dom.allowed[tuple(am)]):
            raise ValueError(f"node {tuple(a)} too close to the boundary")
        lam[1:4] += (p[tuple(ap)][i] - p[tuple(am)][i]) / (2.0 * dom.h[i] * sg)
    inv = g.inv_at(a)
    col = 4
    for i, j in _SECOND_PAIRS:
        lam[col] = inv[i, j] if i == j else 2.0 * inv[i, j]
        col += 1
    return lam


def pair(lam: np.ndarray, jet: np.ndarray) -> float:
    """Euclidean pairing of a Laplace jet with a 2-jet."""
    return float(np.dot(np.asarray(lam, float), np.asarray(jet, float)))


# ---------------------------------------------------------------------------
# jet-space span and control


@dataclass(frozen=True)
class JetSpanReport:
    """Spectrum of the stacked jets of a harmonic family at one node."""

    svals: np.ndarray          # (10,) descending
    null_vector: np.ndarray    # right singular vector of the smallest value
    laplace_cosine: float      # |cos| against laplace_jet, sign fixed
    jets: np.ndarray           # (M, 10) rows


def jet_span_report(op: DirichletOperator, a, family: HarmonicFamily) -> JetSpanReport:
    """Stack j_a[w^f] over the family and report the singular structure.

    Harmonic fields pair to zero with the Laplace jet, so the stack should be
    numerically rank 9 with the leftover direction parallel to lam. The near
    null vector's sign is fixed by making its g^{11} slot positive.
    """
    pts = np.asarray(a, dtype=int).reshape(1, 3)
    jets = np.stack([extract_jets(op.dom, f, pts)[0] for f in family.fields])
    _, s, vt = np.linalg.svd(jets, full_matrices=True)
    s = np.concatenate([s, np.zeros(JET_DIM - len(s))]) if len(s) < JET_DIM else s
    null = vt[-1]
    if null[4] < 0:
        null = -null
    lam = laplace_jet(op.g, a)
    cos = abs(float(np.dot(null, lam))) / max(np.linalg.norm(lam), _TINY)
    return JetSpanReport(s, null, cos, jets)


@dataclass(frozen=True)
class JetControlResult:
    control: BoundaryControl
    coefficients: np.ndarray
    achieved: np.ndarray
    target: np.ndarray
    defect: float              # |achieved - target| / max(|target|, tiny)


def jet_control(op: DirichletOperator, a, s: np.ndarray,
                basis: Sequence[BoundaryControl],
                family: Optional[HarmonicFamily] = None,
                jobs: Optional[int] = None) -> JetControlResult:
    """Least-squares boundary data whose harmonic extension has jet s at a.

    The target must be orthogonal to the Laplace jet at a; anything with a
    Laplace component is unreachable by harmonic fields and refused. Passing
    a prepared family for the same basis skips the extension solves. The
    achieved jet is evaluated through the same stacked-jet matrix, which
    equals extracting from the combined field by linearity of both the solve
    and the fit.
    """
    s = np.asarray(s, dtype=float).reshape(JET_DIM)
    if len(basis) < 20:
        raise ValueError(f"basis of {len(basis)} controls is too small, need 20")
    lam = laplace_jet(op.g, a)
    gap = abs(float(np.dot(s, lam)))
    if gap > 1e-8 * max(np.linalg.norm(s) * np.linalg.norm(lam), _TINY):
        raise ValueError(
            f"target jet pairs with the Laplace jet ({gap:.3e}); "
            "only laplacian-free jets are reachable")
    if family is None:
        family = control.solve_family(op, basis, jobs=jobs)
    report = jet_span_report(op, a, family)
    coeff, *_ = np.linalg.lstsq(report.jets.T, s, rcond=None)
    achieved = report.jets.T @ coeff
    defect = float(np.linalg.norm(achieved - s)
                   / max(np.linalg.norm(s), _TINY))
    values = np.einsum("m,mb->b", coeff,
                       np.stack([c.values for c in family.controls]))
    return JetControlResult(BoundaryControl("jet_control", values), coeff,
                            achieved, s, defect)


# ---------------------------------------------------------------------------
# CSV emission


def jets_csv(points, jets: np.ndarray) -> str:
    """Rows {i1, i2, i3, ten jet components}, header included."""
    pts = np.asarray(points, dtype=int).reshape(-1, 3)
    jets = np.asarray(jets, dtype=float).reshape(len(pts), JET_DIM)
    buf = io.StringIO()
    buf.write("i1,i2,i3," + ",".join(JET_SLOTS) + "\n")
    for p, j in zip(pts, jets):
        buf.write(",".join(str(int(v)) for v in p) + ","
                  + ",".join(f"{v:.17g}" for v in j) + "\n")
    return buf.getvalue()


def singular_values_csv(svals: np.ndarray) -> str:
    """Rows {index, sigma}, descending order preserved."""
    buf = io.StringIO()
    buf.write("index,sigma\n")
    for i, v in enumerate(np.asarray(svals, dtype=float)):
        buf.write(f"{i},{v:.17g}\n")
    return buf.getvalue()
