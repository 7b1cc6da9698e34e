"""Boundary control of harmonic functions.

A boundary control is Dirichlet data f on the boundary nodes; w^f denotes its
harmonic extension. The sampling map takes f to the stacked values and
gradients {w^f(a_i), grad w^f(a_i)} over a point set, and control synthesis
inverts it in the least-squares sense over a finite dictionary of controls.
The separation constructor combines a scalar synthesis, a vector potential
solve, and a gradient synthesis into a harmonic quaternion field hitting
prescribed quaternion values at two points.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import elliptic, geometry, quaternion
from .elliptic import DirichletOperator
from .geometry import GridDomain, MetricField

_TINY = 1e-300


@dataclass(frozen=True)
class BoundaryControl:
    """Dirichlet datum: one real value per boundary node."""

    name: str
    values: np.ndarray  # (Nb,)

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float).reshape(-1))


def _normalized_coords(dom: GridDomain) -> list[np.ndarray]:
    """Per-axis coordinates rescaled to [-1, 1] over the box."""
    out = []
    for a, c in enumerate(dom.axis_coords()):
        lo, hi = dom.box[a]
        out.append((2.0 * c - (lo + hi)) / (hi - lo))
    return out


def _eval_on_boundary(dom: GridDomain, fn) -> np.ndarray:
    xi = _normalized_coords(dom)
    b = dom.boundary_nodes
    return fn(xi[0][b[:, 0]], xi[1][b[:, 1]], xi[2][b[:, 2]])


# 16 harmonic polynomials through degree 3 in the box-normalized coordinates;
# each satisfies lap p = 0 identically, so the flat compact stencil (exact on
# cubics) extends their traces to themselves.
_HARMONIC_POLYS = [
    ("1", lambda x, y, z: np.ones_like(x)),
    ("x1", lambda x, y, z: x),
    ("x2", lambda x, y, z: y),
    ("x3", lambda x, y, z: z),
    ("x1*x2", lambda x, y, z: x * y),
    ("x1*x3", lambda x, y, z: x * z),
    ("x2*x3", lambda x, y, z: y * z),
    ("x1^2-x2^2", lambda x, y, z: x * x - y * y),
    ("x2^2-x3^2", lambda x, y, z: y * y - z * z),
    ("x3*(2x3^2-3x1^2-3x2^2)", lambda x, y, z: z * (2 * z * z - 3 * x * x - 3 * y * y)),
    ("x1*(4x3^2-x1^2-x2^2)", lambda x, y, z: x * (4 * z * z - x * x - y * y)),
    ("x2*(4x3^2-x1^2-x2^2)", lambda x, y, z: y * (4 * z * z - x * x - y * y)),
    ("x3*(x1^2-x2^2)", lambda x, y, z: z * (x * x - y * y)),
    ("x1*x2*x3", lambda x, y, z: x * y * z),
    ("x1*(x1^2-3x2^2)", lambda x, y, z: x * (x * x - 3 * y * y)),
    ("x2*(3x1^2-x2^2)", lambda x, y, z: y * (3 * x * x - y * y)),
]


def harmonic_polynomial_controls(dom: GridDomain) -> list[BoundaryControl]:
    """Boundary traces of the 16 harmonic polynomials of degree <= 3."""
    return [BoundaryControl(name, _eval_on_boundary(dom, fn))
            for name, fn in _HARMONIC_POLYS]


def random_bandlimited_controls(dom: GridDomain, count: int, seed: int,
                                kmax: int = 2, modes: int = 12) -> list[BoundaryControl]:
    """Seeded smooth random boundary data built from Laplace-balanced modes.

    Each control is a sum of terms cos(pi ka x_a/L_a + phase) *
    cos(pi kb x_b/L_b + phase) * exp(s lam (x_e - mid)) with
    lam = hypot(pi ka/L_a, pi kb/L_b), so every term is an exactly harmonic
    function of the coordinates. Traces of globally smooth harmonic functions
    stay regular at the box edges; generic rough boundary data does not, and
    its harmonic extension picks up edge derivative singularities that stall
    gradient-based convergence. Amplitudes are damped by 1/(1+ka^2+kb^2) and
    each control is normalized to unit sup on the boundary.
    """
    if count < 0:
        raise ValueError("count must be nonnegative")
    rng = np.random.default_rng(seed)
    b = dom.boundary_nodes
    coords = dom.axis_coords()
    bx = [coords[a][b[:, a]] for a in range(3)]
    out = []
    for m in range(count):
        f = np.zeros(len(b))
        for _ in range(modes):
            e = int(rng.integers(0, 3))
            a, c = [i for i in range(3) if i != e]
            ka = kb = 0
            while ka == 0 and kb == 0:
                ka = int(rng.integers(0, kmax + 1))
                kb = int(rng.integers(0, kmax + 1))
            la = dom.box[a, 1] - dom.box[a, 0]
            lb = dom.box[c, 1] - dom.box[c, 0]
            kpa, kpb = np.pi * ka / la, np.pi * kb / lb
            lam = np.hypot(kpa, kpb)
            pa, pb = rng.uniform(0.0, 2.0 * np.pi, 2)
            s = float(rng.choice([-1.0, 1.0]))
            amp = rng.standard_normal() / (1.0 + ka * ka + kb * kb)
            mid = 0.5 * (dom.box[e, 0] + dom.box[e, 1])
            f += (amp * np.cos(kpa * bx[a] + pa) * np.cos(kpb * bx[c] + pb)
                  * np.exp(s * lam * (bx[e] - mid)))
        sup = np.max(np.abs(f))
        if sup > 0:
            f /= sup
        out.append(BoundaryControl(f"rnd{seed}_{m}", f))
    return out


def default_dictionary(dom: GridDomain, size: int = 40, seed: int = 2026,
                       kmax: int = 2) -> list[BoundaryControl]:
    """16 harmonic-polynomial traces padded with seeded band-limited controls."""
    polys = harmonic_polynomial_controls(dom)
    if size <= len(polys):
        return polys[:size]
    return polys + random_bandlimited_controls(dom, size - len(polys), seed, kmax)


# ---------------------------------------------------------------------------
# cached harmonic extensions of a control dictionary


@dataclass(frozen=True)
class HarmonicFamily:
    """Harmonic extensions w^f of a control list, with filled gradients."""

    op: DirichletOperator
    controls: tuple[BoundaryControl, ...]
    fields: np.ndarray  # (M,) + shape
    grads: np.ndarray   # (M,) + shape + (3,)

    def __len__(self) -> int:
        return len(self.controls)

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.controls]


def solve_family(op: DirichletOperator, controls: Sequence[BoundaryControl],
                 jobs: Optional[int] = None) -> HarmonicFamily:
    """Solve the harmonic extension of every control; order-preserving and
    deterministic regardless of jobs."""
    controls = tuple(controls)

    def one(c: BoundaryControl) -> np.ndarray:
        return elliptic.harmonic_extension(op, c.values).values

    if jobs is not None and jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            fields = list(ex.map(one, controls))
    else:
        fields = [one(c) for c in controls]
    grads = [geometry.grad(w, op.g, fill=True) for w in fields]
    return HarmonicFamily(op, controls, np.stack(fields), np.stack(grads))


def _as_family(op: DirichletOperator, basis) -> HarmonicFamily:
    if isinstance(basis, HarmonicFamily):
        if basis.op is not op:
            raise ValueError("family was solved under a different operator")
        return basis
    return solve_family(op, basis)


# ---------------------------------------------------------------------------
# the sampling matrix and its synthesis inverse

_PARTS_ROWS = {"both": 4, "scalar": 1, "grad": 3}


@dataclass(frozen=True)
class ControlMatrix:
    """Sampled {w^f(a_i), grad w^f(a_i)} blocks: one block-row per point,
    one column per control; singular values cached."""

    family: HarmonicFamily
    points: np.ndarray   # (N, 3) int
    parts: str           # both | scalar | grad
    matrix: np.ndarray   # (rows, M)
    svals: np.ndarray

    @property
    def rows_per_point(self) -> int:
        return _PARTS_ROWS[self.parts]

    def rank(self, ratio: float = 1e-3) -> int:
        if self.svals.size == 0 or self.svals[0] == 0.0:
            return 0
        return int(np.sum(self.svals > ratio * self.svals[0]))


def ma_matrix(op: DirichletOperator, points, basis, parts: str = "both") -> ControlMatrix:
    """Assemble the sampling matrix over interior points >= 2 layers inside."""
    if parts not in _PARTS_ROWS:
        raise ValueError(f"parts must be one of {sorted(_PARTS_ROWS)}")
    family = _as_family(op, basis)
    pts = np.atleast_2d(np.asarray(points, dtype=int))
    if pts.shape[1] != 3:
        raise ValueError("points must be (N, 3) node indices")
    if len(np.unique(pts, axis=0)) != len(pts):
        raise ValueError("duplicate sample points")
    deep = geometry.interior_core(op.dom, 2)
    for p in pts:
        if not deep[tuple(p)]:
            raise ValueError(f"point {tuple(p)} is not two layers inside the domain")
    rows = []
    idx = tuple(pts.T)
    if parts in ("both", "scalar"):
        vals = family.fields[(slice(None),) + idx]        # (M, N)
        rows.append(vals.T[:, None, :])                   # (N, 1, M)
    if parts in ("both", "grad"):
        gr = family.grads[(slice(None),) + idx + (slice(None),)]  # (M, N, 3)
        rows.append(np.moveaxis(gr, 0, -1))               # (N, 3, M)
    block = np.concatenate(rows, axis=1)                  # (N, r, M)
    mat = block.reshape(len(pts) * _PARTS_ROWS[parts], len(family))
    svals = np.linalg.svd(mat, compute_uv=False)
    return ControlMatrix(family, pts, parts, mat, svals)


@dataclass(frozen=True)
class ControlSolution:
    control: BoundaryControl
    coefficients: np.ndarray
    achieved: np.ndarray
    target: np.ndarray
    defect: float          # |achieved - target| / max(|target|, tiny)
    rank: int
    status: str            # success | high_defect | rank_deficient
    control_norm: float    # L2 surface norm of the synthesized control

    @property
    def success(self) -> bool:
        return self.status == "success"


def _stack_targets(m: ControlMatrix, targets) -> np.ndarray:
    n = len(m.points)
    r = m.rows_per_point
    t = np.zeros(n * r)
    if len(targets) != n:
        raise ValueError(f"{len(targets)} targets for {n} points")
    for i, item in enumerate(targets):
        if m.parts == "scalar":
            t[i] = float(item)
        elif m.parts == "grad":
            t[3 * i:3 * i + 3] = np.asarray(item, dtype=float).reshape(3)
        else:
            if isinstance(item, quaternion.Quaternion):
                alpha, u = item.alpha, item.u
            else:
                alpha, u = item
            t[4 * i] = float(alpha)
            t[4 * i + 1:4 * i + 4] = np.asarray(u, dtype=float).reshape(3)
    return t


def solve_control(m: ControlMatrix, targets, cut: float = 1e-8) -> ControlSolution:
    """Minimum-norm least-squares synthesis via truncated SVD (cut 1e-8 s1).

    Unreachable targets are reported through status, never raised: the rank
    and relative defect tell the caller what happened.
    """
    t = _stack_targets(m, targets)
    u, s, vt = np.linalg.svd(m.matrix, full_matrices=False)
    keep = s > cut * (s[0] if s.size else 0.0)
    rank = int(np.sum(keep))
    coeff = vt[keep].T @ ((u[:, keep].T @ t) / s[keep]) if rank else np.zeros(m.matrix.shape[1])
    achieved = m.matrix @ coeff
    defect = float(np.linalg.norm(achieved - t) / max(np.linalg.norm(t), _TINY))
    values = np.einsum("m,mb->b", coeff, np.stack([c.values for c in m.family.controls]))
    f = BoundaryControl("synthesized", values)
    dom, g = m.family.op.dom, m.family.op.g
    norm = float(np.sqrt(max(geometry.surface_integral(dom, g, values ** 2), 0.0)))
    if rank < len(t):
        status = "success" if defect < 1e-2 else "rank_deficient"
    else:
        status = "success" if defect < 1e-2 else "high_defect"
    return ControlSolution(f, coeff, achieved, t, defect, rank, status, norm)


# ---------------------------------------------------------------------------
# strong separation: hit quaternion targets at two points


@dataclass(frozen=True)
class Separation:
    q: np.ndarray                    # (..., 4) quaternion field
    points: tuple[tuple, tuple]
    targets: tuple[np.ndarray, np.ndarray]   # as 4-vectors, scalar first
    achieved: tuple[np.ndarray, np.ndarray]
    endpoint_errors: tuple[float, float]
    rot_residual: float
    div_residual: float
    scalar_defect: float
    gradient_defect: float
    control_f: BoundaryControl
    control_h: BoundaryControl
    note: str


def _as_target(h) -> np.ndarray:
    if isinstance(h, quaternion.Quaternion):
        return np.concatenate([[h.alpha], np.asarray(h.u, dtype=float)])
    alpha, u = h
    return np.concatenate([[float(alpha)], np.asarray(u, dtype=float).reshape(3)])


def separate(op: DirichletOperator, a, b, h_a, h_b,
             basis=None, seed: int = 2026, size: int = 40) -> Separation:
    """Construct q = {w^f, u0 + grad w^h} with q(a) ~ h_a and q(b) ~ h_b.

    Three steps: scalar synthesis for w^f values, a vector potential u0 with
    rot u0 = grad w^f (making {w^f, u0} a harmonic quaternion field), then
    gradient synthesis of w^h toward the remaining vector targets. Cavity
    domains are refused: there the boundary data must additionally be
    orthogonal to the Dirichlet fields, which this constructor does not
    arrange (project manually via compatibility_check).
    """
    dom = op.dom
    if dom.n_components > 1:
        raise ValueError(
            "separate needs a single boundary component; on cavity domains "
            "controls must be compatible with the Dirichlet space"
        )
    a = tuple(int(i) for i in a)
    b = tuple(int(i) for i in b)
    if a == b:
        raise ValueError("separation points must be distinct")
    ta, tb = _as_target(h_a), _as_target(h_b)
    if basis is None:
        basis = default_dictionary(dom, size=size, seed=seed)
    family = _as_family(op, basis)

    m_s = ma_matrix(op, [a, b], family, parts="scalar")
    sol_f = solve_control(m_s, [ta[0], tb[0]])
    w_f = np.einsum("m,m...->...", sol_f.coefficients, family.fields)
    grad_wf = np.einsum("m,m...->...", sol_f.coefficients, family.grads)

    dc = elliptic.divcurl_solve(op, grad_wf)
    u0 = dc.u

    m_g = ma_matrix(op, [a, b], family, parts="grad")
    sol_h = solve_control(m_g, [ta[1:] - u0[a], tb[1:] - u0[b]])
    grad_wh = np.einsum("m,m...->...", sol_h.coefficients, family.grads)

    q = quaternion.qfield(w_f, u0 + grad_wh)
    r1, r2 = quaternion.q_residual(q, op.g)
    got_a, got_b = q[a], q[b]

    def point_err(got, t, p) -> float:
        du = got[1:] - t[1:]
        return float(np.sqrt((got[0] - t[0]) ** 2 + du @ op.g.at(p) @ du))

    err = (point_err(got_a, ta, a), point_err(got_b, tb, b))
    note = ("plain box: Dirichlet space D = {0}, boundary-flux compatibility "
            "constraint is vacuous")
    return Separation(
        q=q, points=(a, b), targets=(ta, tb), achieved=(got_a, got_b),
        endpoint_errors=err, rot_residual=r1, div_residual=r2,
        scalar_defect=sol_f.defect, gradient_defect=sol_h.defect,
        control_f=sol_f.control, control_h=sol_h.control, note=note,
    )


def compatibility_check(op: DirichletOperator, f, d_basis) -> list[float]:
    """Surface integrals int f (d . nu) dsigma, one per Dirichlet-basis field.

    On plain boxes the basis is empty and the list is too; on cavity domains
    a control is admissible for gradient representation when these vanish.
    """
    values = f.values if isinstance(f, BoundaryControl) else np.asarray(f, dtype=float)
    return [
        geometry.flux_integral(op.dom, op.g, d, scalar=values)
        for d in d_basis
    ]
