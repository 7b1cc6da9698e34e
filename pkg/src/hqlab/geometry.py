"""Voxel domains, Riemannian metrics, and first-order vector calculus.

The grid is a collocated lattice of nodes on an axis-aligned box. A node is
exterior (carved away), interior, or boundary; fields are defined on
interior + boundary nodes and hold 0.0 at exterior slots by convention.
Differential operators use second order central differences in coordinates:

    grad:  (grad a)^i = g^{ik} a_{x^k}
    div:   div u      = g^{-1/2} (g^{1/2} u^i)_{x^i}
    rot:   (rot u)^m  = g^{-1/2} eps_{mab} (g_{bl} u^l)_{x^a}
    lap:   div(grad a)

with g the metric tensor field, g^{ik} its inverse, g^{1/2} = sqrt(det g),
and eps the permutation symbol under the right-handed orientation
(volume form of (e1,e2,e3) is +sqrt(det g)).

The cross product is metric: (u ^ v)^k = sqrt(det g) eps_{ijm} u^i v^j g^{mk},
which reduces to the classical cross product for the identity metric.

Boundaries are staircase: the outer shell of the lattice plus, for carved
domains, every retained node with an exterior axis neighbor. Surface
quadrature is face based; each boundary face carries an axis-aligned normal
and a coordinate area coefficient, and metric area factors are applied per
metric when integrating.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

EXTERIOR, INTERIOR, BOUNDARY = 0, 1, 2

# 6-neighbourhood structuring element (axis neighbours only).
_CROSS = ndimage.generate_binary_structure(3, 1)
# 26-neighbourhood, used for boundary component labelling.
_FULL = np.ones((3, 3, 3), dtype=bool)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class GridDomain:
    """Immutable voxel domain: box, lattice, mask, and boundary structure."""

    box: np.ndarray            # (3, 2) coordinate intervals
    shape: tuple[int, int, int]
    h: np.ndarray              # (3,) node spacing per axis
    mask_spec: str
    inner_box: Optional[np.ndarray]
    mask: np.ndarray           # (n1, n2, n3) int8, EXTERIOR/INTERIOR/BOUNDARY
    boundary_nodes: np.ndarray     # (Nb, 3) int indices
    boundary_lookup: np.ndarray    # (n1, n2, n3) int32 row in boundary_nodes or -1
    boundary_component: np.ndarray  # (Nb,) int labels, 0 = outer shell
    face_node: np.ndarray      # (F,) rows into boundary_nodes
    face_axis: np.ndarray      # (F,) int8 axis of the outward normal
    face_orient: np.ndarray    # (F,) int8 +-1, outward along +-axis
    face_coeff: np.ndarray     # (F,) coordinate area coefficient
    normals: np.ndarray        # (Nb, 3) outward unit normals (flat metric)
    surface_weights: np.ndarray  # (Nb,) flat per-node surface weights

    @property
    def n_components(self) -> int:
        return int(self.boundary_component.max()) + 1 if self.boundary_component.size else 0

    @property
    def interior(self) -> np.ndarray:
        return self.mask == INTERIOR

    @property
    def allowed(self) -> np.ndarray:
        """Nodes where fields are defined (interior + boundary)."""
        return self.mask != EXTERIOR

    def key(self) -> tuple:
        inner = None if self.inner_box is None else tuple(map(tuple, self.inner_box))
        return (tuple(map(tuple, self.box)), self.shape, self.mask_spec, inner)

    def compatible(self, other: "GridDomain") -> bool:
        return self is other or self.key() == other.key()

    def axis_coords(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(
            self.box[a, 0] + self.h[a] * np.arange(self.shape[a]) for a in range(3)
        )

    def node_coords(self) -> np.ndarray:
        """(n1, n2, n3, 3) array of node coordinates."""
        x1, x2, x3 = self.axis_coords()
        out = np.empty(self.shape + (3,))
        out[..., 0] = x1[:, None, None]
        out[..., 1] = x2[None, :, None]
        out[..., 2] = x3[None, None, :]
        return out


def build_domain(box, resolution, mask_spec: str = "box", inner_box=None) -> GridDomain:
    """Build a voxel domain on `box` with `resolution` nodes per axis.

    mask_spec "box" keeps every node; "box_minus_box" carves the open
    `inner_box` out, producing a second (cavity) boundary component;
    "box_minus_column" removes a column spanning the full third axis
    (inner_box gives the first two intervals), leaving a solid with a
    through-hole and a single boundary surface.
    """
    box = np.asarray(box, dtype=float).reshape(3, 2)
    resolution = tuple(int(r) for r in np.atleast_1d(resolution).ravel() * np.ones(3, int))
    if any(r < 5 for r in resolution):
        raise ValueError(f"resolution below 5 nodes per axis: {resolution}")
    if np.any(box[:, 1] <= box[:, 0]):
        raise ValueError("degenerate box: upper edge must exceed lower edge")
    h = (box[:, 1] - box[:, 0]) / (np.array(resolution) - 1)

    mask = np.full(resolution, INTERIOR, dtype=np.int8)
    shell = np.zeros(resolution, dtype=bool)
    for a in range(3):
        sl = [slice(None)] * 3
        for edge in (0, -1):
            sl[a] = edge
            shell[tuple(sl)] = True
    mask[shell] = BOUNDARY

    if mask_spec == "box":
        if inner_box is not None:
            raise ValueError("inner_box given but mask_spec is 'box'")
        inner = None
    elif mask_spec == "box_minus_box":
        if inner_box is None:
            raise ValueError("mask_spec 'box_minus_box' needs inner_box")
        inner = np.asarray(inner_box, dtype=float).reshape(3, 2)
        coords = [box[a, 0] + h[a] * np.arange(resolution[a]) for a in range(3)]
        inside = np.ones(resolution, dtype=bool)
        for a in range(3):
            ax = (coords[a] > inner[a, 0] + 1e-12) & (coords[a] < inner[a, 1] - 1e-12)
            sl = [None, None, None]
            sl[a] = slice(None)
            inside &= ax[tuple(sl)]
        if not inside.any():
            raise ValueError("inner box contains no lattice nodes")
        # keep two clean layers between the cavity and the outer shell
        idx = np.argwhere(inside)
        if (idx.min(axis=0) < 3).any() or (idx.max(axis=0) > np.array(resolution) - 4).any():
            raise ValueError("inner box too large (no interior left between boundaries)")
        mask[inside] = EXTERIOR
        near_ext = ndimage.binary_dilation(inside, structure=_CROSS) & ~inside
        mask[near_ext & (mask == INTERIOR)] = BOUNDARY
    elif mask_spec == "box_minus_column":
        if inner_box is None:
            raise ValueError("mask_spec 'box_minus_column' needs inner_box")
        given = np.asarray(inner_box, dtype=float).reshape(-1, 2)
        if given.shape[0] not in (2, 3):
            raise ValueError("inner_box must give two (or three) intervals")
        inner = np.vstack([given[:2], box[2]])
        coords = [box[a, 0] + h[a] * np.arange(resolution[a]) for a in range(3)]
        inside = np.ones(resolution, dtype=bool)
        for a in range(2):
            ax = (coords[a] > inner[a, 0] + 1e-12) & (coords[a] < inner[a, 1] - 1e-12)
            sl = [None, None, None]
            sl[a] = slice(None)
            inside &= ax[tuple(sl)]
        if not inside.any():
            raise ValueError("column contains no lattice nodes")
        idx = np.argwhere(inside)
        if (idx.min(axis=0)[:2] < 3).any() or (
            idx.max(axis=0)[:2] > np.array(resolution[:2]) - 4
        ).any():
            raise ValueError("column too wide (no interior left around it)")
        mask[inside] = EXTERIOR
        near_ext = ndimage.binary_dilation(inside, structure=_CROSS) & ~inside
        mask[near_ext & (mask != EXTERIOR)] = BOUNDARY
    else:
        raise ValueError(f"unknown mask_spec {mask_spec!r}")

    if not (mask == INTERIOR).any():
        raise ValueError("no interior nodes left")

    # interior nodes must never have exterior axis neighbours
    ext = mask == EXTERIOR
    bad = ndimage.binary_dilation(ext, structure=_CROSS) & (mask == INTERIOR)
    if bad.any():
        raise AssertionError("mask construction broke the interior neighbour invariant")

    bnd = mask == BOUNDARY
    boundary_nodes = np.argwhere(bnd)
    lookup = np.full(resolution, -1, dtype=np.int32)
    lookup[tuple(boundary_nodes.T)] = np.arange(len(boundary_nodes), dtype=np.int32)

    labels, n_lab = ndimage.label(bnd, structure=_FULL)
    comp_raw = labels[tuple(boundary_nodes.T)] - 1
    outer_label = comp_raw[int(lookup[0, 0, 0])]
    comp = comp_raw.copy()
    comp[comp_raw == outer_label] = 0
    if outer_label != 0:
        comp[comp_raw == 0] = outer_label

    # faces of the outer shell: six box sides with trapezoid weights
    fn, fa, fo, fc = [], [], [], []
    n1, n2, n3 = resolution
    for a in range(3):
        b, c = [x for x in range(3) if x != a]
        wb = np.ones(resolution[b]); wb[[0, -1]] = 0.5
        wc = np.ones(resolution[c]); wc[[0, -1]] = 0.5
        area = h[b] * h[c]
        for side, orient in ((0, -1), (resolution[a] - 1, +1)):
            grid_b, grid_c = np.meshgrid(
                np.arange(resolution[b]), np.arange(resolution[c]), indexing="ij"
            )
            node = np.zeros((grid_b.size, 3), dtype=int)
            node[:, a] = side
            node[:, b] = grid_b.ravel()
            node[:, c] = grid_c.ravel()
            rows = lookup[tuple(node.T)]
            coeff = (wb[grid_b] * wc[grid_c]).ravel() * area
            keep = rows >= 0  # a through-column may pierce this side
            rows, coeff = rows[keep], coeff[keep]
            fn.append(rows)
            fa.append(np.full(rows.shape, a, dtype=np.int8))
            fo.append(np.full(rows.shape, orient, dtype=np.int8))
            fc.append(coeff)

    # cavity faces: one full face per (boundary node, exterior axis neighbour)
    if ext.any():
        for a in range(3):
            b, c = [x for x in range(3) if x != a]
            area = h[b] * h[c]
            for orient in (-1, +1):
                shifted = np.roll(ext, -orient, axis=a)
                # roll wraps; the shell blocks wrap artefacts since ext never touches it
                here = bnd & shifted
                nodes = np.argwhere(here)
                if len(nodes) == 0:
                    continue
                rows = lookup[tuple(nodes.T)]
                fn.append(rows)
                fa.append(np.full(rows.shape, a, dtype=np.int8))
                fo.append(np.full(rows.shape, orient, dtype=np.int8))
                fc.append(np.full(rows.shape, area, dtype=float))

    face_node = np.concatenate(fn)
    face_axis = np.concatenate(fa)
    face_orient = np.concatenate(fo)
    face_coeff = np.concatenate(fc)

    normals_raw = np.zeros((len(boundary_nodes), 3))
    np.add.at(normals_raw, (face_node, face_axis), face_orient.astype(float))
    norms = np.linalg.norm(normals_raw, axis=1)
    if (norms == 0).any():
        raise AssertionError("boundary node without any outward face")
    normals = normals_raw / norms[:, None]

    weights = np.zeros(len(boundary_nodes))
    np.add.at(weights, face_node, face_coeff)

    return GridDomain(
        box=_freeze(box),
        shape=resolution,
        h=_freeze(h),
        mask_spec=mask_spec,
        inner_box=None if inner is None else _freeze(inner),
        mask=_freeze(mask),
        boundary_nodes=_freeze(boundary_nodes),
        boundary_lookup=_freeze(lookup),
        boundary_component=_freeze(comp),
        face_node=_freeze(face_node),
        face_axis=_freeze(face_axis),
        face_orient=_freeze(face_orient),
        face_coeff=_freeze(face_coeff),
        normals=_freeze(normals),
        surface_weights=_freeze(weights),
    )


def interior_core(dom: GridDomain, depth: int = 1) -> np.ndarray:
    """Interior nodes at least `depth` axis steps away from any non-interior node.

    depth=1 is exactly the set where composed central stencils
    (rot grad, div rot, div grad) are defined.
    """
    core = dom.interior
    for _ in range(depth):
        core = ndimage.binary_erosion(core, structure=_CROSS)
    return core


# ---------------------------------------------------------------------------
# metric fields


@dataclass(frozen=True)
class MetricField:
    """Node-wise SPD metric tensor with cached inverse and volume factor."""

    dom: GridDomain
    g: np.ndarray          # (n1, n2, n3, 3, 3)
    inv: np.ndarray        # (n1, n2, n3, 3, 3)
    sqrt_det: np.ndarray   # (n1, n2, n3)
    is_diagonal: bool
    inverse_defect: float  # max |g g^{-1} - I|, construction diagnostic

    def at(self, node) -> np.ndarray:
        return self.g[tuple(node)]

    def inv_at(self, node) -> np.ndarray:
        return self.inv[tuple(node)]


def make_metric(dom: GridDomain, g) -> MetricField:
    """Validate SPD-ness per node and precompute inverse and sqrt(det)."""
    g = np.asarray(g, dtype=float)
    if g.shape == (3, 3):
        g = np.broadcast_to(g, dom.shape + (3, 3)).copy()
    if g.shape != dom.shape + (3, 3):
        raise ValueError(f"metric shape {g.shape} does not match domain {dom.shape}")
    if np.max(np.abs(g - np.swapaxes(g, -1, -2))) > 1e-12 * max(1.0, np.max(np.abs(g))):
        raise ValueError("metric tensor not symmetric")
    g = 0.5 * (g + np.swapaxes(g, -1, -2))

    m1 = g[..., 0, 0]
    m2 = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    m3 = np.linalg.det(g)
    allowed = dom.allowed
    for name, minor in (("g11", m1), ("2x2", m2), ("det", m3)):
        bad = (minor <= 0) & allowed
        if bad.any():
            node = tuple(np.argwhere(bad)[0])
            raise ValueError(f"metric not SPD at node {node} (leading minor {name} <= 0)")

    inv = np.linalg.inv(g)
    eye = np.eye(3)
    defect = float(np.max(np.abs(np.einsum("...ij,...jk->...ik", g, inv) - eye)))
    if defect > 1e-8:
        raise ValueError(f"metric too ill-conditioned: g g^-1 deviates from I by {defect:.3e}")
    off = np.abs(g - g * eye)
    return MetricField(
        dom=dom,
        g=_freeze(g),
        inv=_freeze(inv),
        sqrt_det=_freeze(np.sqrt(m3)),
        is_diagonal=bool(np.max(off) == 0.0),
        inverse_defect=defect,
    )


def metric_flat(dom: GridDomain) -> MetricField:
    return make_metric(dom, np.eye(3))


def metric_diag(dom: GridDomain, diag) -> MetricField:
    return make_metric(dom, np.diag(np.asarray(diag, dtype=float)))


def metric_conformal_sine(dom: GridDomain, amplitude: float = 0.3) -> MetricField:
    """(1 + amplitude sin(pi x1) sin(pi x2)) times the identity."""
    x = dom.node_coords()
    c = 1.0 + amplitude * np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])
    g = c[..., None, None] * np.eye(3)
    return make_metric(dom, g)


def metric_unimodular_sine(dom: GridDomain, amplitude: float = 0.3) -> MetricField:
    """diag(c, 1/c, 1) with c = 1 + amplitude sin(pi x1) sin(pi x2); det = 1."""
    x = dom.node_coords()
    c = 1.0 + amplitude * np.sin(np.pi * x[..., 0]) * np.sin(np.pi * x[..., 1])
    g = np.zeros(dom.shape + (3, 3))
    g[..., 0, 0] = c
    g[..., 1, 1] = 1.0 / c
    g[..., 2, 2] = 1.0
    return make_metric(dom, g)


def metric_generic_smooth(dom: GridDomain, amplitude: float = 0.3, shear: float = 0.05) -> MetricField:
    """(1 + amplitude * smooth) diag(1.3, 1.0, 0.8) plus small off-diagonals."""
    x = dom.node_coords()
    s = np.sin(np.pi * x[..., 0]) * np.sin(2 * np.pi * x[..., 1]) * np.cos(np.pi * x[..., 2])
    base = (1.0 + amplitude * s)[..., None, None] * np.diag([1.3, 1.0, 0.8])
    g12 = shear * np.sin(np.pi * x[..., 0]) * np.cos(np.pi * x[..., 1])
    g23 = shear * np.cos(np.pi * x[..., 1]) * np.sin(np.pi * x[..., 2])
    g = base.copy()
    g[..., 0, 1] += g12; g[..., 1, 0] += g12
    g[..., 1, 2] += g23; g[..., 2, 1] += g23
    return make_metric(dom, g)


METRIC_PRESETS = {
    "flat": lambda dom, **kw: metric_flat(dom),
    "diag": lambda dom, **kw: metric_diag(dom, kw.get("diag", (1.0, 1.0, 1.0))),
    "conformal-sine": lambda dom, **kw: metric_conformal_sine(dom, kw.get("amplitude", 0.3)),
    "unimodular-sine": lambda dom, **kw: metric_unimodular_sine(dom, kw.get("amplitude", 0.3)),
    "generic-smooth": lambda dom, **kw: metric_generic_smooth(
        dom, kw.get("amplitude", 0.3), kw.get("shear", 0.05)
    ),
}


# ---------------------------------------------------------------------------
# pointwise algebra


def inner(u: np.ndarray, v: np.ndarray, g: MetricField) -> np.ndarray:
    """g(u, v) per node."""
    return np.einsum("...ij,...i,...j->...", g.g, u, v)


def vector_product(u: np.ndarray, v: np.ndarray, g: MetricField) -> np.ndarray:
    """Metric cross product, (u ^ v)^k = sqrt(det g) eps_{ijm} u^i v^j g^{mk}."""
    cross = np.stack(
        [
            u[..., 1] * v[..., 2] - u[..., 2] * v[..., 1],
            u[..., 2] * v[..., 0] - u[..., 0] * v[..., 2],
            u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0],
        ],
        axis=-1,
    )
    return g.sqrt_det[..., None] * np.einsum("...mk,...m->...k", g.inv, cross)


# ---------------------------------------------------------------------------
# difference operators


def _central(values: np.ndarray, axis: int, h: float) -> np.ndarray:
    """Second order central difference along `axis`; zero on the lattice edge."""
    out = np.zeros_like(values)
    lo = [slice(None)] * values.ndim
    hi = [slice(None)] * values.ndim
    mid = [slice(None)] * values.ndim
    lo[axis], hi[axis], mid[axis] = slice(0, -2), slice(2, None), slice(1, -1)
    out[tuple(mid)] = (values[tuple(hi)] - values[tuple(lo)]) / (2.0 * h)
    return out


def _partials(alpha: np.ndarray, dom: GridDomain, fill: bool = False) -> np.ndarray:
    """All three coordinate partials; optional one-sided fill at non-central nodes.

    With fill=True, nodes where a central stencil would read an exterior or
    off-lattice value get a second order one-sided difference taken away from
    the hole; values remain 0 where not even two one-sided neighbours exist.
    """
    out = np.empty(dom.shape + (3,))
    for a in range(3):
        out[..., a] = _central(alpha, a, dom.h[a])
    if not fill:
        return out

    ok = dom.allowed
    for a in range(3):
        h = dom.h[a]
        prev_ok = np.zeros_like(ok); next_ok = np.zeros_like(ok)
        sl_prev = [slice(None)] * 3; sl_prev[a] = slice(0, -1)
        sl_next = [slice(None)] * 3; sl_next[a] = slice(1, None)
        prev_ok[tuple(sl_next)] = ok[tuple(sl_prev)]
        next_ok[tuple(sl_prev)] = ok[tuple(sl_next)]
        central_ok = prev_ok & next_ok

        def shift(arr, k):
            res = np.zeros_like(arr)
            src = [slice(None)] * 3; dst = [slice(None)] * 3
            if k > 0:
                src[a] = slice(k, None); dst[a] = slice(0, -k)
            else:
                src[a] = slice(0, k); dst[a] = slice(-k, None)
            res[tuple(dst)] = arr[tuple(src)]
            return res

        ok1p, ok2p = next_ok, shift(ok, 2) > 0
        fwd = ok & ~central_ok & ok1p & ok2p
        out[..., a][fwd] = (
            -3.0 * alpha[fwd] + 4.0 * shift(alpha, 1)[fwd] - shift(alpha, 2)[fwd]
        ) / (2.0 * h)
        ok1m, ok2m = prev_ok, shift(ok, -2) > 0
        bwd = ok & ~central_ok & ~fwd & ok1m & ok2m
        out[..., a][bwd] = (
            3.0 * alpha[bwd] - 4.0 * shift(alpha, -1)[bwd] + shift(alpha, -2)[bwd]
        ) / (2.0 * h)
    return out


def grad(alpha: np.ndarray, g: MetricField, fill: bool = False) -> np.ndarray:
    """(grad a)^i = g^{ik} a_{x^k}; interior nodes (plus one-sided fill on request)."""
    d = _partials(alpha, g.dom, fill=fill)
    out = np.einsum("...ik,...k->...i", g.inv, d)
    keep = g.dom.allowed if fill else g.dom.interior
    out[~keep] = 0.0
    return out


def div(u: np.ndarray, g: MetricField) -> np.ndarray:
    """div u = g^{-1/2} (g^{1/2} u^i)_{x^i} at interior nodes."""
    dom = g.dom
    acc = np.zeros(dom.shape)
    for a in range(3):
        acc += _central(g.sqrt_det * u[..., a], a, dom.h[a])
    out = acc / g.sqrt_det
    out[~dom.interior] = 0.0
    return out


def rot(u: np.ndarray, g: MetricField) -> np.ndarray:
    """(rot u)^m = g^{-1/2} eps_{mab} (g_{bl} u^l)_{x^a} at interior nodes."""
    dom = g.dom
    beta = np.einsum("...bl,...l->...b", g.g, u)
    d = np.empty(dom.shape + (3, 3))  # d[..., a, b] = D_a beta_b
    for a in range(3):
        for b in range(3):
            d[..., a, b] = _central(beta[..., b], a, dom.h[a])
    out = np.stack(
        [
            d[..., 1, 2] - d[..., 2, 1],
            d[..., 2, 0] - d[..., 0, 2],
            d[..., 0, 1] - d[..., 1, 0],
        ],
        axis=-1,
    ) / g.sqrt_det[..., None]
    out[~dom.interior] = 0.0
    return out


def laplacian(alpha: np.ndarray, g: MetricField) -> np.ndarray:
    """div(grad alpha); composed stencil, defined on interior_core(dom)."""
    out = div(grad(alpha, g), g)
    out[~interior_core(g.dom)] = 0.0
    return out


def vector_laplacian(u: np.ndarray, g: MetricField) -> np.ndarray:
    """grad(div u) - rot(rot u); composed stencils need two interior layers,
    so values live on interior_core(dom, 2) and are zero elsewhere."""
    out = grad(div(u, g), g) - rot(rot(u, g), g)
    out[~interior_core(g.dom, 2)] = 0.0
    return out


def sup_over(values: np.ndarray, where: np.ndarray) -> float:
    sel = values[where]
    return float(np.max(np.abs(sel))) if sel.size else 0.0


# ---------------------------------------------------------------------------
# surface quadrature


def metric_normals(dom: GridDomain, g: MetricField) -> np.ndarray:
    """Outward normals with unit g-norm at every boundary node."""
    n = dom.normals
    gb = g.g[tuple(dom.boundary_nodes.T)]
    norm2 = np.einsum("nij,ni,nj->n", gb, n, n)
    return n / np.sqrt(norm2)[:, None]


def surface_measure(dom: GridDomain, g: MetricField) -> np.ndarray:
    """Per-face surface weights: coordinate coefficient times the metric area
    factor sqrt(det of g restricted to the face plane) at the face node."""
    nodes = dom.boundary_nodes[dom.face_node]
    gn = g.g[tuple(nodes.T)]
    out = np.empty(len(dom.face_node))
    for a in range(3):
        b, c = [x for x in range(3) if x != a]
        sel = dom.face_axis == a
        gb = gn[sel]
        area = np.sqrt(gb[:, b, b] * gb[:, c, c] - gb[:, b, c] ** 2)
        out[sel] = area
    return out * dom.face_coeff


def node_surface_weights(dom: GridDomain, g: MetricField) -> np.ndarray:
    """Per boundary node surface weights under g (faces summed per node)."""
    w = np.zeros(len(dom.boundary_nodes))
    np.add.at(w, dom.face_node, surface_measure(dom, g))
    return w


def surface_integral(dom: GridDomain, g: MetricField, boundary_values: np.ndarray,
                     component: Optional[int] = None) -> float:
    """Integral of a scalar over the boundary (or one labelled component)."""
    w = surface_measure(dom, g)
    vals = boundary_values[dom.face_node]
    if component is not None:
        sel = dom.boundary_component[dom.face_node] == component
        w, vals = w[sel], vals[sel]
    return float(np.sum(w * vals))


def flux_integral(dom: GridDomain, g: MetricField, v: np.ndarray,
                  component: Optional[int] = None,
                  scalar: Optional[np.ndarray] = None) -> float:
    """Integral of g(v, nu) over the boundary with nu the outward unit normal.

    Face-wise: nu = +-e_a / sqrt(g_aa), so the integrand is
    orient * g_{am} v^m / sqrt(g_aa) per face. An optional scalar boundary
    weight (per boundary node) multiplies the integrand, giving
    int scalar * g(v, nu) dsigma.
    """
    nodes = dom.boundary_nodes[dom.face_node]
    gn = g.g[tuple(nodes.T)]
    vn = v[tuple(nodes.T)]
    a = dom.face_axis.astype(int)
    rows = np.arange(len(a))
    gav = np.einsum("nm,nm->n", gn[rows, a, :], vn)
    gaa = gn[rows, a, a]
    integrand = dom.face_orient * gav / np.sqrt(gaa)
    if scalar is not None:
        integrand = integrand * np.asarray(scalar, dtype=float)[dom.face_node]
    w = surface_measure(dom, g)
    if component is not None:
        sel = dom.boundary_component[dom.face_node] == component
        return float(np.sum(w[sel] * integrand[sel]))
    return float(np.sum(w * integrand))


def boundary_values(dom: GridDomain, values: np.ndarray) -> np.ndarray:
    """Gather a field's values at boundary nodes, ordered like boundary_nodes."""
    return values[tuple(dom.boundary_nodes.T)]


def with_boundary(dom: GridDomain, interior_values: np.ndarray, bvals: np.ndarray) -> np.ndarray:
    out = interior_values.copy()
    out[tuple(dom.boundary_nodes.T)] = bvals
    return out


# ---------------------------------------------------------------------------
# seeded random fields for property tests


def random_scalar_field(dom: GridDomain, rng: np.random.Generator) -> np.ndarray:
    """Componentwise uniform [-1, 1] on interior + boundary, 0 on exterior."""
    out = rng.uniform(-1.0, 1.0, size=dom.shape)
    out[~dom.allowed] = 0.0
    return out


def random_vector_field(dom: GridDomain, rng: np.random.Generator) -> np.ndarray:
    out = rng.uniform(-1.0, 1.0, size=dom.shape + (3,))
    out[~dom.allowed] = 0.0
    return out


# ---------------------------------------------------------------------------
# field files: raw little-endian float64, x-fastest node order, one block per
# component, with a JSON sidecar describing the lattice


def _sidecar_path(path) -> str:
    return str(path) + ".json"


def write_field(path, dom: GridDomain, field: np.ndarray) -> None:
    """Write a scalar (shape), vector (shape+(3,)), quaternion (shape+(4,)),
    or symmetric-matrix (shape+(6,), upper triangle row by row) field to
    `path` as raw little-endian float64, x-fastest within each component
    block, plus a JSON sidecar at path + ".json"."""
    import json

    field = np.asarray(field, dtype=float)
    if field.shape == dom.shape:
        comps = 1
        blocks = field[None]
    elif field.shape[:-1] == dom.shape and field.shape[-1] in (3, 4, 6):
        comps = field.shape[-1]
        blocks = np.moveaxis(field, -1, 0)
    else:
        raise ValueError(f"field shape {field.shape} does not match domain {dom.shape}")
    flat = np.concatenate([b.ravel(order="F") for b in blocks])
    flat.astype("<f8").tofile(str(path))
    meta = {
        "dims": [int(n) for n in dom.shape],
        "spacing": [float(x) for x in dom.h],
        "box": [[float(a), float(b)] for a, b in dom.box],
        "components": comps,
        "mask_spec": dom.mask_spec,
        "inner_box": None if dom.inner_box is None
        else [[float(a), float(b)] for a, b in dom.inner_box],
    }
    with open(_sidecar_path(path), "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_field(path) -> tuple[np.ndarray, dict]:
    """Read a field file written by write_field; returns (array, sidecar dict).
    Scalar fields come back with shape dims, multi-component with dims+(C,)."""
    import json

    with open(_sidecar_path(path)) as fh:
        meta = json.load(fh)
    dims = tuple(int(n) for n in meta["dims"])
    comps = int(meta["components"])
    raw = np.fromfile(str(path), dtype="<f8")
    expect = int(np.prod(dims)) * comps
    if raw.size != expect:
        raise ValueError(f"field file holds {raw.size} values, sidecar implies {expect}")
    blocks = raw.reshape(comps, -1)
    arrs = [b.reshape(dims, order="F") for b in blocks]
    if comps == 1:
        return arrs[0].astype(float), meta
    return np.stack(arrs, axis=-1).astype(float), meta


def domain_from_sidecar(meta: dict) -> GridDomain:
    """Rebuild the GridDomain a sidecar describes."""
    box = np.array(meta["box"], dtype=float)
    inner = meta.get("inner_box")
    return build_domain(
        box, [int(n) for n in meta["dims"]], mask_spec=meta.get("mask_spec", "box"),
        inner_box=None if inner is None else np.array(inner, dtype=float),
    )
