"""Topology and trace diagnostics for harmonic fields.

Four probes that exercise what the rest of the package builds: gradient
fields spanning the Dirichlet space of a cavity domain, the surface identity
tying the normal rotation component to an in-surface divergence, a
restricted-trace certificate that no normalized field in a harmonic span is
small on a plane patch, and loop circulation for sniffing out fields with
nontrivial winding.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from . import control as ctl
from . import elliptic as ell
from . import geometry, quaternion
from .geometry import GridDomain, MetricField

_TINY = 1e-300


def bulk_mask(dom: GridDomain, frac: float = 0.1) -> np.ndarray:
    """Interior nodes a fixed physical distance from every boundary.

    Wide-vs-compact stencil mismatch and staircase corner singularities
    concentrate in a near-boundary layer, so convergence statements are
    measured on this fixed window (margin = frac times the shortest box
    side), where solution derivatives stay bounded as the grid refines.
    """
    margin = frac * float((dom.box[:, 1] - dom.box[:, 0]).min())
    dist = ndimage.distance_transform_edt(
        dom.mask != geometry.BOUNDARY, sampling=dom.h)
    out = dom.interior & (dist >= margin)
    if not out.any():
        raise ValueError("bulk window is empty at this resolution")
    return out


# ---------------------------------------------------------------------------
# Dirichlet fields on cavity domains


@dataclass(frozen=True)
class DirichletFieldBasis:
    """Gradient fields spanning the Dirichlet space, one per cavity.

    Each field is the gradient of a potential that is 1 on one inner
    boundary component and 0 elsewhere. rot residuals vanish identically
    (rot of a central-difference gradient cancels); div residuals are
    measured on the fixed bulk window, since the staircase cavity corners
    carry genuine derivative singularities; the tangential boundary part is
    staircase-limited and reported, not asserted.
    """

    dom: GridDomain
    fields: tuple
    potentials: tuple
    rot_residuals: tuple
    div_residuals: tuple     # sup over the bulk window
    tangential_sup: tuple
    total_flux: tuple        # flux-form total, machine zero per Gauss
    capacity: tuple          # magnitude of the outer-shell flux, positive

    @property
    def size(self) -> int:
        return len(self.fields)


def dirichlet_basis(op: ell.DirichletOperator, **kw) -> DirichletFieldBasis:
    """Basis of the discrete Dirichlet space; empty on a plain box.

    One field per inner boundary component. Fluxes come from the operator's
    own summation-by-parts identity, so the total over the full boundary is
    exactly zero (no net flux) and the outer-shell magnitude is the cavity's
    discrete capacity.
    """
    dom, g = op.dom, op.g
    fields, pots, rots, divs, tangs, tot, caps = [], [], [], [], [], [], []
    core = geometry.interior_core(dom, 1)
    bulk = bulk_mask(dom)
    nu = geometry.metric_normals(dom, g)
    for comp in range(1, dom.n_components):
        f = np.zeros(dom.shape)
        sel = dom.boundary_component == comp
        f[tuple(dom.boundary_nodes[sel].T)] = 1.0
        phi = ell.harmonic_extension(op, f, **kw).values
        d = geometry.grad(phi, g, fill=True)
        r = geometry.rot(d, g)
        rots.append(geometry.sup_over(np.sqrt(geometry.inner(r, r, g)), core))
        divs.append(geometry.sup_over(np.abs(geometry.div(d, g)), bulk))
        db = d[tuple(dom.boundary_nodes.T)]
        gb = g.g[tuple(dom.boundary_nodes.T)]
        dn = np.einsum("nij,ni,nj->n", gb, db, nu)
        tang = db - dn[:, None] * nu
        tangs.append(float(np.sqrt(
            np.einsum("nij,ni,nj->n", gb, tang, tang).max())))
        o = ell.boundary_flux(op, phi)
        tot.append(float(o.sum()))
        caps.append(float(-o[dom.boundary_component == 0].sum()))
        fields.append(d)
        pots.append(phi)
    return DirichletFieldBasis(dom, tuple(fields), tuple(pots), tuple(rots),
                               tuple(divs), tuple(tangs), tuple(tot),
                               tuple(caps))


# ---------------------------------------------------------------------------
# plane patches and the surface identity


@dataclass(frozen=True)
class SurfacePatch:
    """Nodes on a coordinate-plane slab, at least 3 layers interior."""

    dom: GridDomain
    axis: int                # normal direction
    plane: int               # first slab index along the normal
    thickness: int
    nodes: np.ndarray        # (K, 3)

    @property
    def tangent_axes(self) -> tuple[int, int]:
        """Ordered so (b, c, axis) is a positive frame permutation."""
        return ((1, 2), (2, 0), (0, 1))[self.axis]


def plane_patch(dom: GridDomain, axis: int = 2, plane: Optional[int] = None,
                thickness: int = 1, margin: int = 3) -> SurfacePatch:
    if margin < 3:
        raise ValueError("patch nodes must stay at least 3 layers interior")
    if plane is None:
        plane = dom.shape[axis] // 2
    core = geometry.interior_core(dom, margin)
    idx = np.arange(dom.shape[axis])
    sl = [None, None, None]
    sl[axis] = slice(None)
    core = core & ((idx >= plane) & (idx < plane + thickness))[tuple(sl)]
    nodes = np.argwhere(core)
    b, c = ((1, 2), (2, 0), (0, 1))[axis]
    if len(nodes) == 0 or np.ptp(nodes[:, b]) < 4 or np.ptp(nodes[:, c]) < 4:
        raise ValueError("patch too small for in-plane stencils")
    return SurfacePatch(dom, int(axis), int(plane), int(thickness), nodes)


def surface_identity_check(v: np.ndarray, patch: SurfacePatch,
                           g: MetricField) -> np.ndarray:
    """Residual of: normal rot component = in-surface div of v_theta x nu.

    Flat metric only. The left side is the 3d rotation routine's normal
    component; the right side is built independently from 2d central
    differences of the rotated tangential part on the slab. On a flat grid
    the two sides reduce to the same stencil, so the residual sits at
    roundoff rather than the O(h^2) a continuum argument predicts.
    """
    dom = g.dom
    eye = np.zeros((3, 3)) + np.eye(3)
    if not np.allclose(g.g, eye, atol=1e-14):
        raise ValueError("surface identity check requires the flat metric")
    n = patch.axis
    b, c = patch.tangent_axes
    lhs = geometry.rot(v, g)[..., n]
    # v_theta x nu has in-plane components (v_c, -v_b) in the (b, c) frame
    rhs = (geometry._central(v[..., c], b, dom.h[b])
           - geometry._central(v[..., b], c, dom.h[c]))
    at = tuple(patch.nodes.T)
    return np.abs(lhs[at] - rhs[at])


# ---------------------------------------------------------------------------
# restricted-trace uniqueness certificate


_PROBE_HEADER = (
    "finite-dimensional trace certificate: smallest/largest singular value "
    "of the given basis restricted to the patch, at this grid resolution "
    "only; it does not certify the continuum uniqueness statement")


@dataclass(frozen=True)
class UniquenessProbe:
    """Certificate that no normalized span member is small on the patch."""

    header: str
    ratio: float             # sigma_min/sigma_max; 0.0 when duplicates found
    svals: np.ndarray
    field_ids: tuple
    sup_on_patch: np.ndarray
    sup_on_domain: np.ndarray
    duplicates: tuple        # pairs of field ids flagged before restriction
    axis: int
    plane: int
    thickness: int
    n_nodes: int

    def certificate_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["field", "sup_on_patch", "sup_on_domain", "ratio"])
        for i, fid in enumerate(self.field_ids):
            frac = self.sup_on_patch[i] / max(self.sup_on_domain[i], _TINY)
            w.writerow([fid, "%.17g" % self.sup_on_patch[i],
                        "%.17g" % self.sup_on_domain[i], "%.17g" % frac])
        return buf.getvalue()

    def summary_json(self) -> str:
        return json.dumps({
            "header": self.header,
            "ratio": self.ratio,
            "singular_values": [float(s) for s in self.svals],
            "fields": list(self.field_ids),
            "duplicates": [list(p) for p in self.duplicates],
            "patch": {"axis": self.axis, "plane": self.plane,
                      "thickness": self.thickness, "nodes": self.n_nodes},
        }, indent=2, sort_keys=True)


def uniqueness_probe(basis: Sequence[np.ndarray], patch: SurfacePatch,
                     g: MetricField, ids: Optional[Sequence[str]] = None,
                     residual_tol: float = 0.5) -> UniquenessProbe:
    """Restriction-matrix certificate for a basis of harmonic fields.

    Rows are the four components of each field sampled on the patch,
    normalized by the field's domain sup, so the reported ratio is
    invariant under rescaling any basis member. Duplicated fields are
    flagged before restriction and force ratio 0.

    The harmonicity gate compares each field's stencil defect to its sup.
    Discretely harmonic fields carry an inherent near-boundary layer of
    roughly a third of their sup (wide-vs-compact stencil mismatch), so the
    default tolerance rejects grossly non-harmonic inputs, whose defects
    scale like sup/h, rather than that layer.
    """
    if len(basis) == 0:
        raise ValueError("empty basis")
    if len(patch.nodes) < 4 * len(basis):
        raise ValueError(
            f"{len(patch.nodes)} patch nodes for {len(basis)} fields; "
            "need at least 4x oversampling")
    sups = np.array([quaternion.sup_norm(P, g) for P in basis])
    if np.any(sups <= 0):
        raise ValueError("basis contains a zero field")
    if ids is None:
        ids = tuple(f"field{i}" for i in range(len(basis)))
    ids = tuple(ids)
    for i, P in enumerate(basis):
        mis, dv = quaternion.q_residual(P, g)
        if max(mis, dv) > residual_tol * sups[i]:
            raise ValueError(
                f"basis field {ids[i]} fails the harmonicity gate: "
                f"residuals ({mis:.3e}, {dv:.3e}) vs sup {sups[i]:.3e}")
    normalized = [P / s for P, s in zip(basis, sups)]
    dup = []
    for i in range(len(basis)):
        for j in range(i + 1, len(basis)):
            if np.max(np.abs(normalized[i] - normalized[j])) < 1e-12:
                dup.append((ids[i], ids[j]))
    at = tuple(patch.nodes.T)
    rows = np.stack([P[at].ravel() for P in normalized])
    svals = np.linalg.svd(rows, compute_uv=False)
    ratio = 0.0 if dup else float(svals[-1] / max(svals[0], _TINY))
    norms = [quaternion.norm_field(P, g) for P in basis]
    sup_patch = np.array([nf[at].max() for nf in norms])
    return UniquenessProbe(_PROBE_HEADER, ratio, svals, ids, sup_patch,
                           sups, tuple(dup), patch.axis, patch.plane,
                           patch.thickness, len(patch.nodes))


def build_probe_basis(op: ell.DirichletOperator, count: int = 20,
                      seed: int = 2026, jobs: Optional[int] = None
                      ) -> tuple[list, list]:
    """Default probe basis: gradient fields plus four analytic mixed ones.

    `count` harmonic extensions of dictionary controls contribute {0, grad w}
    fields (the constant control is skipped since its gradient vanishes);
    the unit field always joins them. Three mixed coordinate fields are
    exactly harmonic only for the flat metric and are added just in that
    case, so the basis passes the harmonicity gate for any metric.
    """
    dom, g = op.dom, op.g
    controls = [c for c in ctl.default_dictionary(dom, count + 1, seed=seed)
                if c.name != "1"][:count]
    fam = ctl.solve_family(op, controls, jobs=jobs)
    zero = np.zeros(dom.shape)
    fields = [quaternion.qfield(zero, fam.grads[m])
              for m in range(len(controls))]
    ids = [c.name for c in controls]
    z3 = np.zeros(dom.shape + (3,))
    if np.allclose(g.g, np.eye(3), atol=1e-14):
        x = dom.node_coords()
        for alpha, uaxis, ucoord, name in ((0, 2, 1, "mix1"), (1, 0, 2, "mix2"),
                                           (2, 1, 0, "mix3")):
            u = z3.copy()
            u[..., uaxis] = x[..., ucoord]
            fields.append(quaternion.qfield(x[..., alpha], u))
            ids.append(name)
    fields.append(quaternion.qfield(np.ones(dom.shape), z3.copy()))
    ids.append("unit")
    return fields, ids


# ---------------------------------------------------------------------------
# loop circulation


@dataclass(frozen=True)
class RectLoop:
    """Axis-aligned rectangle of grid edges, oriented by the right-hand
    rule about the +axis direction."""

    axis: int                # normal of the loop plane
    plane: int               # index along the normal
    lo: tuple[int, int]      # inclusive corners in the tangent axes
    hi: tuple[int, int]

    def edges(self):
        """Four (tangent_axis_slot, fixed_value, start, stop, direction)."""
        (lb, lc), (hb, hc) = self.lo, self.hi
        return ((0, lc, lb, hb, +1), (1, hb, lc, hc, +1),
                (0, hc, hb, lb, -1), (1, lb, hc, lc, -1))


def circulation(u: np.ndarray, g: MetricField, loop: RectLoop) -> float:
    """Discrete line integral of g(u, t) around the loop, trapezoid rule.

    Gradient fields circulate to O(h^2); a unit winding of the angle field
    about a removed column comes out near 2 pi.
    """
    dom = g.dom
    n = loop.axis
    b, c = ((1, 2), (2, 0), (0, 1))[n]
    (lb, lc), (hb, hc) = loop.lo, loop.hi
    if not (0 <= lb < hb < dom.shape[b] and 0 <= lc < hc < dom.shape[c]
            and 0 <= loop.plane < dom.shape[n]):
        raise ValueError("loop corners out of range or degenerate")
    beta = np.einsum("...tm,...m->...t", g.g, u)
    total = 0.0
    for slot, fixed, start, stop, sgn in loop.edges():
        t = (b, c)[slot]
        other = (c, b)[slot]
        k = np.arange(min(start, stop), max(start, stop) + 1)
        nodes = np.zeros((len(k), 3), dtype=int)
        nodes[:, n] = loop.plane
        nodes[:, t] = k
        nodes[:, other] = fixed
        if not dom.allowed[tuple(nodes.T)].all():
            raise ValueError("loop exits the domain")
        vals = beta[tuple(nodes.T)][:, t]
        w = np.ones(len(k))
        w[[0, -1]] = 0.5
        total += sgn * dom.h[t] * float(np.sum(w * vals))
    return total
