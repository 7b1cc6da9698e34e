"""Dirichlet problems for the metric Laplacian on voxel domains.

The operator is assembled in conservative (flux) form,

    sqrt(g) lap a = sum_a D_a^-( c_a D_a^+ a ) + cross terms,
    c_a = sqrt(g) g^{aa} averaged arithmetically at cell midpoints,

with the mixed-derivative terms D_a(c D_b) + D_b(c D_a), c = sqrt(g) g^{ab},
discretized by nested central differences. The sqrt(g)-scaled matrix is
symmetric entrywise by construction and negative definite, so -sqrt(g) lap
is solved by preconditioned conjugate gradients (Jacobi preconditioner).

Green columns solve lap G = delta_y with the discrete delta normalized by
1/(h1 h2 h3 sqrt(g)(y)), so that the volume quadrature of delta is one and
lap v = h is reproduced by G-weighted quadrature of h. Boundary kernels are
one-sided normal derivatives of Green columns weighted by surface measure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.integrate import cumulative_trapezoid

from . import geometry
from .geometry import GridDomain, MetricField

_TINY = 1e-300


@dataclass(frozen=True)
class DirichletOperator:
    """Assembled sqrt(g)-symmetrized Laplacian with Dirichlet elimination."""

    dom: GridDomain
    g: MetricField
    int_index: np.ndarray     # (n1,n2,n3) int32, interior row or -1
    interior_nodes: np.ndarray  # (Ni, 3)
    neg_sym: sparse.csr_matrix  # A = -sqrt(g) lap, interior x interior, SPD
    bnd_block: sparse.csr_matrix  # S_ib = sqrt(g) lap, interior x boundary
    sg_int: np.ndarray        # sqrt(det g) at interior nodes
    symmetry_defect: float    # max |A - A^T| over assembled entries

    @property
    def n_interior(self) -> int:
        return len(self.interior_nodes)

    def full_field(self, v_int: np.ndarray, f_bnd: np.ndarray) -> np.ndarray:
        out = np.zeros(self.dom.shape)
        out[tuple(self.interior_nodes.T)] = v_int
        out[tuple(self.dom.boundary_nodes.T)] = f_bnd
        return out

    def laplacian_of(self, field: np.ndarray) -> np.ndarray:
        """Apply the assembled compact stencil: lap(field) at interior nodes,
        zero elsewhere. This is the stencil the solver inverts, so Green
        quadrature against it reproduces point values exactly; it differs
        from the composed wide-stencil laplacian by O(h^2)."""
        v_int = field[tuple(self.interior_nodes.T)]
        f_bnd = field[tuple(self.dom.boundary_nodes.T)]
        lap_int = (self.bnd_block @ f_bnd - self.neg_sym @ v_int) / self.sg_int
        out = np.zeros(self.dom.shape)
        out[tuple(self.interior_nodes.T)] = lap_int
        return out


def _shift_index(idx: np.ndarray, offset: np.ndarray, shape) -> np.ndarray:
    out = idx + offset
    ok = np.all((out >= 0) & (out < np.array(shape)), axis=1)
    if not ok.all():
        raise ValueError("stencil leaves the lattice (domain too thin for cross terms)")
    return out


def assemble(g: MetricField, dom: Optional[GridDomain] = None) -> DirichletOperator:
    """Assemble the Dirichlet operator for the metric Laplacian under g."""
    if dom is not None and dom is not g.dom and not dom.compatible(g.dom):
        raise ValueError("metric was built on a different domain")
    dom = g.dom
    shape = dom.shape
    mask = dom.mask
    interior_nodes = np.argwhere(dom.interior)
    ni = len(interior_nodes)
    if ni == 0:
        raise ValueError("domain has no interior nodes")
    int_index = np.full(shape, -1, dtype=np.int32)
    int_index[tuple(interior_nodes.T)] = np.arange(ni, dtype=np.int32)
    bnd_index = dom.boundary_lookup

    rows_ii, cols_ii, vals_ii = [], [], []
    rows_ib, cols_ib, vals_ib = [], [], []
    diag_acc = np.zeros(ni)

    def couple(rows: np.ndarray, targets: np.ndarray, vals: np.ndarray):
        """Route couplings to the interior or boundary block; exterior refused."""
        t_mask = mask[tuple(targets.T)]
        if (t_mask == geometry.EXTERIOR).any():
            raise ValueError(
                "stencil touches an exterior node; cross-metric terms need a "
                "cavity-free domain or a diagonal metric"
            )
        isin = t_mask == geometry.INTERIOR
        rows_ii.append(rows[isin])
        cols_ii.append(int_index[tuple(targets[isin].T)])
        vals_ii.append(vals[isin])
        rows_ib.append(rows[~isin])
        cols_ib.append(bnd_index[tuple(targets[~isin].T)])
        vals_ib.append(vals[~isin])
        np.add.at(diag_acc, rows, -vals)

    rows_all = np.arange(ni)
    sg = g.sqrt_det

    # diagonal (flux) terms
    for a in range(3):
        c = sg * g.inv[..., a, a]
        h2 = dom.h[a] ** 2
        e = np.zeros(3, dtype=int); e[a] = 1
        up = _shift_index(interior_nodes, e, shape)
        dn = _shift_index(interior_nodes, -e, shape)
        c0 = c[tuple(interior_nodes.T)]
        cp = 0.5 * (c0 + c[tuple(up.T)]) / h2
        cm = 0.5 * (c0 + c[tuple(dn.T)]) / h2
        couple(rows_all, up, cp)
        couple(rows_all, dn, cm)

    # mixed terms, only when the metric has off-diagonal entries
    if not g.is_diagonal:
        for a in range(3):
            for b in range(a + 1, 3):
                c = sg * g.inv[..., a, b]
                if np.max(np.abs(c)) == 0.0:
                    continue
                denom = 4.0 * dom.h[a] * dom.h[b]
                ea = np.zeros(3, dtype=int); ea[a] = 1
                eb = np.zeros(3, dtype=int); eb[b] = 1
                ca_p = c[tuple(_shift_index(interior_nodes, ea, shape).T)]
                ca_m = c[tuple(_shift_index(interior_nodes, -ea, shape).T)]
                cb_p = c[tuple(_shift_index(interior_nodes, eb, shape).T)]
                cb_m = c[tuple(_shift_index(interior_nodes, -eb, shape).T)]
                for sa, sb, val in (
                    (+1, +1, (ca_p + cb_p) / denom),
                    (-1, -1, (ca_m + cb_m) / denom),
                    (+1, -1, -(ca_p + cb_m) / denom),
                    (-1, +1, -(ca_m + cb_p) / denom),
                ):
                    tgt = _shift_index(interior_nodes, sa * ea + sb * eb, shape)
                    couple(rows_all, tgt, val)

    rows_ii.append(rows_all)
    cols_ii.append(rows_all)
    vals_ii.append(diag_acc)

    s_ii = sparse.csr_matrix(
        (np.concatenate(vals_ii), (np.concatenate(rows_ii), np.concatenate(cols_ii))),
        shape=(ni, ni),
    )
    s_ib = sparse.csr_matrix(
        (np.concatenate(vals_ib), (np.concatenate(rows_ib), np.concatenate(cols_ib))),
        shape=(ni, len(dom.boundary_nodes)),
    )
    neg = (-s_ii).tocsr()
    defect = float(np.max(np.abs((neg - neg.T).data))) if (neg - neg.T).nnz else 0.0
    return DirichletOperator(
        dom=dom,
        g=g,
        int_index=int_index,
        interior_nodes=interior_nodes,
        neg_sym=neg,
        bnd_block=s_ib,
        sg_int=sg[tuple(interior_nodes.T)],
        symmetry_defect=defect,
    )


# ---------------------------------------------------------------------------
# conjugate gradients


def _pcg(A: sparse.csr_matrix, b: np.ndarray, x0: np.ndarray,
         rtol: float, maxiter: int) -> tuple[np.ndarray, int, float]:
    """Jacobi-preconditioned CG with a stagnation guard; deterministic."""
    minv = 1.0 / A.diagonal()
    bnorm = float(np.linalg.norm(b))
    target = rtol * bnorm
    x = x0.copy()
    r = b - A @ x
    rnorm = float(np.linalg.norm(r))
    if rnorm <= target or bnorm == 0.0:
        return x, 0, rnorm / max(bnorm, _TINY)
    z = minv * r
    p = z.copy()
    rz = float(r @ z)
    best, since_best = rnorm, 0
    for it in range(1, maxiter + 1):
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rnorm = float(np.linalg.norm(r))
        if rnorm <= target:
            return x, it, rnorm / max(bnorm, _TINY)
        if rnorm < 0.999 * best:
            best, since_best = rnorm, 0
        else:
            since_best += 1
            if since_best >= 200:  # rounding floor reached
                return x, it, rnorm / max(bnorm, _TINY)
        z = minv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, maxiter, rnorm / max(bnorm, _TINY)


@dataclass(frozen=True)
class SolveResult:
    values: np.ndarray          # full field, boundary data exact, exterior 0
    iterations: int
    cg_relres: float
    residual: float             # scaled interior residual, see solve_dirichlet

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


def solve_dirichlet(op: DirichletOperator, h: Optional[np.ndarray] = None,
                    f: Optional[np.ndarray] = None, rtol: float = 1e-13,
                    check: bool = True) -> SolveResult:
    """Solve lap v = h in the interior with v = f on the boundary.

    f may be a (Nb,) boundary array or a full-shape field (boundary values are
    gathered); h is a full-shape right-hand side or None. The returned field
    equals f on boundary nodes exactly. The reported residual is
    ||lap v - h||_inf scaled by hbar^2 and divided by
    max(||h||_inf hbar^2, ||f||_inf, tiny), which makes it a dimensionless
    relative defect; solves failing 1e-10 raise unless check=False.
    """
    dom = op.dom
    nb = len(dom.boundary_nodes)
    if f is None:
        f_b = np.zeros(nb)
    else:
        f = np.asarray(f, dtype=float)
        f_b = geometry.boundary_values(dom, f) if f.shape == dom.shape else f.reshape(nb)
    if h is None:
        h_int = np.zeros(op.n_interior)
        h_sup = 0.0
    else:
        h = np.asarray(h, dtype=float)
        if h.shape != dom.shape:
            raise ValueError(f"rhs shape {h.shape} does not match domain {dom.shape}")
        h_int = h[tuple(op.interior_nodes.T)]
        h_sup = float(np.max(np.abs(h_int))) if h_int.size else 0.0

    b = op.bnd_block @ f_b - op.sg_int * h_int
    x0 = np.full(op.n_interior, float(np.mean(f_b)) if nb else 0.0)
    cap = int(20.0 * op.n_interior ** (1.0 / 3.0) * 1000)
    v_int, iters, relres = _pcg(op.neg_sym, b, x0, rtol, cap)

    r = b - op.neg_sym @ v_int
    hbar2 = float(np.prod(dom.h)) ** (2.0 / 3.0)
    denom = max(h_sup * hbar2, float(np.max(np.abs(f_b))) if nb else 0.0, _TINY)
    residual = float(np.max(np.abs(r / op.sg_int))) * hbar2 / denom if op.n_interior else 0.0
    if check and residual > 1e-10:
        raise RuntimeError(
            f"Dirichlet solve failed: scaled residual {residual:.3e} > 1e-10 "
            f"after {iters} iterations (cg relres {relres:.3e})"
        )
    return SolveResult(op.full_field(v_int, f_b), iters, relres, residual)


def harmonic_extension(op: DirichletOperator, f: np.ndarray, **kw) -> SolveResult:
    """Solve lap w = 0 with w = f on the boundary."""
    return solve_dirichlet(op, h=None, f=f, **kw)


def boundary_flux(op: DirichletOperator, field: np.ndarray) -> np.ndarray:
    """Per-boundary-node outward flux of grad(field), flux-form exact.

    Summation by parts of the assembled stencil: the row sums of the full
    operator vanish and the interior block is symmetric, so these values
    add up to exactly the volume quadrature of the compact laplacian. For a
    discretely harmonic field the total is machine zero (Gauss identity),
    which a staircase surface quadrature of the gradient cannot deliver.
    """
    v = field[tuple(op.interior_nodes.T)]
    f = field[tuple(op.dom.boundary_nodes.T)]
    vol = float(np.prod(op.dom.h))
    colsum = np.asarray(op.bnd_block.sum(axis=0)).ravel()
    return vol * (colsum * f - op.bnd_block.T @ v)


# ---------------------------------------------------------------------------
# Green columns and boundary kernels


def green_column(op: DirichletOperator, y, **kw) -> SolveResult:
    """Column G(., y): lap G = delta_y, zero boundary trace (exact zeros).

    delta_y is 1/(h1 h2 h3 sqrt(g)(y)) at the node, so its volume quadrature
    is one and quadrature against columns inverts lap.
    """
    dom = op.dom
    y = tuple(int(i) for i in y)
    if dom.mask[y] != geometry.INTERIOR:
        raise ValueError(f"source {y} must be an interior node")
    h = np.zeros(dom.shape)
    h[y] = 1.0 / (float(np.prod(dom.h)) * op.g.sqrt_det[y])
    return solve_dirichlet(op, h=h, f=None, **kw)


@dataclass(frozen=True)
class PoissonKernel:
    """Boundary quadrature weights reproducing w(x) or a derivative of w at x.

    weights are per boundary face entry and already include the surface
    measure, so apply() is a plain weighted sum of boundary data.
    """

    dom: GridDomain
    x: tuple[int, int, int]
    kind: str
    direction: Optional[np.ndarray]
    face_weights: np.ndarray  # (F,)

    def apply(self, f) -> float:
        f = np.asarray(f, dtype=float)
        f_b = geometry.boundary_values(self.dom, f) if f.shape == self.dom.shape else f
        return float(np.sum(self.face_weights * f_b[self.dom.face_node]))

    @property
    def row_sum(self) -> float:
        return float(np.sum(self.face_weights))

    def node_weights(self) -> np.ndarray:
        out = np.zeros(len(self.dom.boundary_nodes))
        np.add.at(out, self.dom.face_node, self.face_weights)
        return out


def _normal_derivative_weights(op: DirichletOperator, column: np.ndarray) -> np.ndarray:
    """Outward normal derivative of a field at boundary nodes, one per face:
    second order one-sided stencil along the face axis, in g-unit normal scale."""
    dom = op.dom
    nodes = dom.boundary_nodes[dom.face_node]
    axes = dom.face_axis.astype(int)
    orients = dom.face_orient.astype(int)
    step = np.zeros_like(nodes)
    step[np.arange(len(axes)), axes] = orients
    n0 = nodes
    n1 = nodes - step
    n2 = nodes - 2 * step
    for n in (n1, n2):
        if (n < 0).any() or (n >= np.array(dom.shape)).any():
            raise ValueError("one-sided stencil leaves the lattice")
        if (dom.mask[tuple(n.T)] == geometry.EXTERIOR).any():
            raise ValueError("one-sided stencil hits an exterior node")
    d = (3.0 * column[tuple(n0.T)] - 4.0 * column[tuple(n1.T)] + column[tuple(n2.T)])
    d /= 2.0 * dom.h[axes]
    gaa = op.g.g[tuple(n0.T)][np.arange(len(axes)), axes, axes]
    return d / np.sqrt(gaa)


def poisson_kernel(op: DirichletOperator, x, kind: str = "value",
                   direction=None, **kw) -> PoissonKernel:
    """Boundary kernel at interior node x.

    kind "value": weights dnu G(x, .) dsigma; applying to boundary data f
    approximates the harmonic extension value w^f(x).
    kind "gradient": central x-difference of value kernels along `direction`
    (coordinate components); applying approximates the directional derivative
    e^i d_i w^f(x). Needs x at least two nodes inside.
    """
    dom = op.dom
    x = tuple(int(i) for i in x)
    if dom.mask[x] != geometry.INTERIOR:
        raise ValueError(f"kernel point {x} must be an interior node")
    dsigma = geometry.surface_measure(dom, op.g)
    if kind == "value":
        col = green_column(op, x, **kw).values
        w = _normal_derivative_weights(op, col) * dsigma
        return PoissonKernel(dom, x, "value", None, w)
    if kind == "gradient":
        if direction is None:
            raise ValueError("gradient kernel needs a direction")
        e = np.asarray(direction, dtype=float).reshape(3)
        total = np.zeros(len(dom.face_node))
        for a in range(3):
            if e[a] == 0.0:
                continue
            xp = np.array(x); xp[a] += 1
            xm = np.array(x); xm[a] -= 1
            for p in (xp, xm):
                if dom.mask[tuple(p)] != geometry.INTERIOR:
                    raise ValueError("gradient kernel needs x two nodes inside")
            kp = poisson_kernel(op, xp, "value", **kw)
            km = poisson_kernel(op, xm, "value", **kw)
            total += e[a] * (kp.face_weights - km.face_weights) / (2.0 * dom.h[a])
        return PoissonKernel(dom, x, "gradient", e, total)
    raise ValueError(f"unknown kernel kind {kind!r}")


# ---------------------------------------------------------------------------
# vector potentials: solve rot u = v with small div u


@dataclass(frozen=True)
class DivCurlResult:
    u: np.ndarray
    rot_residual: float      # sup_core |rot u - v|_g
    div_residual: float      # sup_core |div u|
    rot_relative: float
    input_div: float         # sup_core |div v|, the data's own defect
    psi_iterations: int


def divcurl_solve(op: DirichletOperator, v: np.ndarray, **kw) -> DivCurlResult:
    """Find u with rot u = v and small div u, for nearly divergence-free v.

    Requires a plain box and a diagonal metric. The covector potential beta
    with flat-curl(beta) = sqrt(g) v is built by cumulative trapezoid line
    integration (Poincare homotopy from the low corner), u = g^{-1} beta, and
    one scalar Dirichlet solve for psi cancels the divergence:
    u <- u + grad psi with lap psi = -div u. Accepted on residuals, not on a
    uniqueness claim; u is gauge-dependent.

    div_residual should be read against input_div: the output cannot be more
    compatible than the data, and in practice it lands well below it. The
    corrected divergence keeps a thin near-edge layer whose amplitude tracks
    the edge regularity of v rather than the grid spacing, which is why the
    result carries the input defect alongside the output defect.
    """
    dom = op.dom
    g = op.g
    if dom.mask_spec != "box":
        raise ValueError("divcurl_solve needs a plain box domain")
    if not g.is_diagonal:
        raise ValueError("divcurl_solve needs a diagonal metric")
    if v.shape != dom.shape + (3,):
        raise ValueError(f"vector field shape {v.shape} does not match domain")

    vt = g.sqrt_det[..., None] * v  # flat-curl target, covector convention

    def cum3(F):
        return cumulative_trapezoid(F, dx=dom.h[2], axis=2, initial=0.0)

    beta = np.zeros(dom.shape + (3,))
    beta[..., 0] = cum3(vt[..., 1])
    t2 = cumulative_trapezoid(vt[:, :, 0, 2], dx=dom.h[1], axis=1, initial=0.0)
    beta[..., 0] -= t2[:, :, None]
    beta[..., 1] = -cum3(vt[..., 0])

    u = np.einsum("...lb,...b->...l", g.inv, beta)

    d = geometry.div(u, g)
    psi = solve_dirichlet(op, h=-d, f=None, **kw)
    u = u + geometry.grad(psi.values, g, fill=True)

    core = geometry.interior_core(dom)
    mis = geometry.rot(u, g) - v
    mn = np.sqrt(geometry.inner(mis, mis, g))
    rr = geometry.sup_over(mn, core)
    vn = np.sqrt(geometry.inner(v, v, g))
    sup_v = geometry.sup_over(vn, dom.allowed)
    dd = geometry.sup_over(geometry.div(u, g), core)
    dv = geometry.sup_over(geometry.div(v, g), core)
    return DivCurlResult(u, rr, dd, rr / max(sup_v, _TINY), dv, psi.iterations)
