"""Point separation, frame covers, and algebra approximation.

The squared gradient lengths |grad w^f|^2 of a control dictionary separate
interior points and have no common zero; that is checked directly here. A
frame cover picks ball centers greedily, synthesizes three controls per
center whose harmonic gradients form a basis at the center, and builds a
partition of unity from bump profiles. represent writes a quaternion field
in the cover's frame with pointwise 3x3 solves and no PDE error beyond the
cached gradients. approximate_in_algebra then replaces every scalar
coefficient with a polynomial in the squared-gradient features, so the whole
approximation becomes a formal sum of products of generator fields that can
be evaluated back exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import control, geometry, quaternion
from .control import BoundaryControl, HarmonicFamily
from .elliptic import DirichletOperator
from .geometry import GridDomain

_TINY = 1e-300


# ---------------------------------------------------------------------------
# scalar separation


@dataclass(frozen=True)
class SeparationReport:
    pairs: tuple
    margins: np.ndarray          # max_f | s_f(a) - s_f(b) | per pair
    degenerate: np.ndarray       # bool, a == b
    vanish_floor: float          # min over nodes of max_f s_f
    margin_threshold: float
    vanish_threshold: float

    @property
    def separated(self) -> np.ndarray:
        return self.margins > self.margin_threshold

    @property
    def passed(self) -> bool:
        ok = self.separated | self.degenerate
        return bool(np.all(ok)) and self.vanish_floor > self.vanish_threshold


def gradient_features(family: HarmonicFamily) -> np.ndarray:
    """Squared metric lengths of the family gradients, (M,) + shape."""
    g = family.op.g
    return np.stack([geometry.inner(gr, gr, g) for gr in family.grads])


def scalar_separation_check(op: DirichletOperator, pairs,
                            dictionary: Sequence[BoundaryControl],
                            family: Optional[HarmonicFamily] = None,
                            margin_threshold: float = 1e-4,
                            vanish_threshold: float = 1e-6,
                            jobs: Optional[int] = None) -> SeparationReport:
    """Check that squared gradient lengths separate the given node pairs.

    Degenerate pairs (a equal to b) are flagged rather than failed; the
    report also carries the worst common-zero margin over all usable nodes,
    since the separation argument needs the features to have no joint zero.
    """
    if len(dictionary) < 10:
        raise ValueError(f"dictionary of {len(dictionary)} controls is too small, need 10")
    if family is None:
        family = control.solve_family(op, dictionary, jobs=jobs)
    feats = gradient_features(family)
    margins = np.empty(len(pairs))
    degenerate = np.zeros(len(pairs), dtype=bool)
    for i, (a, b) in enumerate(pairs):
        a, b = tuple(int(j) for j in a), tuple(int(j) for j in b)
        if a == b:
            degenerate[i] = True
            margins[i] = 0.0
            continue
        margins[i] = float(np.max(np.abs(feats[(slice(None),) + a]
                                         - feats[(slice(None),) + b])))
    floor = float(np.min(np.max(feats, axis=0)[op.dom.allowed]))
    return SeparationReport(tuple(pairs), margins, degenerate, floor,
                            margin_threshold, vanish_threshold)


# ---------------------------------------------------------------------------
# frame cover


@dataclass(frozen=True)
class FrameBall:
    center: tuple
    radius: float
    controls: tuple          # three BoundaryControls
    grads: np.ndarray        # (3,) + shape + (3,), cached frame gradients
    bump: np.ndarray         # unnormalized profile, exact 0 outside the ball
    worst_condition: float


@dataclass(frozen=True)
class FrameCover:
    op: DirichletOperator
    balls: tuple
    etas: np.ndarray         # (N,) + shape, partition of unity over allowed

    def __len__(self) -> int:
        return len(self.balls)

    def partition_sum(self) -> np.ndarray:
        return np.sum(self.etas, axis=0)


def _ball_mask(dom: GridDomain, center, radius: float) -> tuple[np.ndarray, np.ndarray]:
    x = dom.node_coords()
    x0 = x[tuple(center)]
    rho2 = np.sum((x - x0) ** 2, axis=-1) / radius ** 2
    inside = (rho2 < 1.0) & dom.allowed
    bump = np.where(inside, np.maximum(1.0 - rho2, 0.0) ** 3, 0.0)
    return inside, bump


def _frame_at(op: DirichletOperator, family: HarmonicFamily, center) -> tuple:
    m = control.ma_matrix(op, [tuple(center)], family, parts="grad")
    ctrls, grads = [], []
    for k in range(3):
        target = [np.eye(3)[k]]
        sol = control.solve_control(m, target)
        if not sol.success:
            raise ValueError(
                f"frame control at center {tuple(center)} failed: {sol.status}")
        ctrls.append(BoundaryControl(f"frame{k}", sol.control.values))
        grads.append(np.einsum("m,m...->...", sol.coefficients, family.grads))
    return tuple(ctrls), np.stack(grads)


def build_frame_cover(op: DirichletOperator,
                      dictionary: Optional[Sequence[BoundaryControl]] = None,
                      family: Optional[HarmonicFamily] = None,
                      stride: int = 4, cond_bound: float = 1e4,
                      shrink: float = 0.8, min_radius: Optional[float] = None,
                      jobs: Optional[int] = None) -> FrameCover:
    """Greedy ball cover with per-ball gradient frames and a bump partition.

    Candidate centers sit on a stride sublattice of the 2-deep interior
    core. Each accepted ball takes the largest radius (shrinking by a fixed
    factor from half the box diagonal) at which the 3x3 frame-gradient
    matrix stays well conditioned on every allowed node it reaches; balls
    are accepted greedily by uncovered-node count until the whole allowed
    set is covered. Partition functions are the bump profiles normalized by
    their sum, so they add to one exactly wherever anything is covered.
    """
    dom = op.dom
    if family is None:
        if dictionary is None:
            dictionary = control.default_dictionary(dom)
        family = control.solve_family(op, dictionary, jobs=jobs)
    if min_radius is None:
        min_radius = 2.5 * float(np.mean(dom.h))
    sides = dom.box[:, 1] - dom.box[:, 0]
    r_start = 0.75 * float(np.max(sides))

    core = geometry.interior_core(dom, 2)
    if not core.any():
        raise ValueError("domain has no 2-deep interior core")
    # anchor the stride lattice to the core's extreme indices so balls can
    # reach the corners, whose nearest admissible centers sit at the rim
    idx = np.argwhere(core)
    axes = []
    for a in range(3):
        lo, hi = int(idx[:, a].min()), int(idx[:, a].max())
        axes.append(sorted(set(list(range(lo, hi + 1, stride)) + [hi])))
    candidates = [c for c in
                  (tuple(p) for p in np.stack(np.meshgrid(*axes, indexing="ij"),
                                              axis=-1).reshape(-1, 3))
                  if core[c]]
    if not candidates:
        raise ValueError("no candidate centers: grid too small for the stride")

    cache: dict[tuple, tuple] = {}
    balls: list[FrameBall] = []
    uncovered = dom.allowed.copy()
    while uncovered.any():
        best = None
        for c in candidates:
            if c not in cache:
                ctrls, grads = _frame_at(op, family, c)
                r = r_start
                chosen = None
                while r >= min_radius:
                    inside, bump = _ball_mask(dom, c, r)
                    mats = np.stack([grads[k][inside] for k in range(3)], axis=-1)
                    cond = float(np.max(np.linalg.cond(mats))) if inside.any() else np.inf
                    if cond < cond_bound:
                        chosen = (r, inside, bump, cond)
                        break
                    r *= shrink
                if chosen is None:
                    raise ValueError(f"no admissible radius at center {c}")
                cache[c] = (ctrls, grads) + chosen
            gain = int(np.sum(uncovered & cache[c][3]))
            if best is None or gain > best[0]:
                best = (gain, c)
        gain, c = best
        if gain == 0:
            left = np.argwhere(uncovered)[0]
            raise ValueError(
                f"greedy cover stalled with node {tuple(left)} uncovered")
        ctrls, grads, r, inside, bump, cond = cache[c]
        balls.append(FrameBall(tuple(c), r, ctrls, grads, bump, cond))
        uncovered &= ~inside

    bumps = np.stack([b.bump for b in balls])
    total = np.sum(bumps, axis=0)
    etas = np.where((total > 0.0)[None], bumps / np.where(total > 0.0, total, 1.0)[None], 0.0)
    return FrameCover(op, tuple(balls), etas)


# ---------------------------------------------------------------------------
# frame representation


@dataclass(frozen=True)
class Representation:
    cover: FrameCover
    scalars: np.ndarray      # (N,) + shape, eta_n * alpha
    kappas: np.ndarray       # (N,) + shape + (3,)
    reconstruction: np.ndarray
    error: float             # sup |reconstruction - p| over allowed
    relative: float


def represent(p: np.ndarray, cover: FrameCover) -> Representation:
    """Write p = sum {eta_n alpha, 0} + sum_k {kappa_k^n, 0}{0, grad w^k}.

    Per ball the vector part is matched by a batched 3x3 solve against the
    cached frame gradients on the ball's support; outside its support every
    coefficient of the ball is exactly zero. Pure linear algebra.
    """
    dom = cover.op.dom
    if p.shape != dom.shape + (4,):
        raise ValueError(f"quaternion field shape {p.shape} does not match domain")
    alpha, u = quaternion.parts(p)
    n = len(cover.balls)
    scalars = cover.etas * alpha[None]
    kappas = np.zeros((n,) + dom.shape + (3,))
    for i, ball in enumerate(cover.balls):
        sup = cover.etas[i] > 0.0
        if not sup.any():
            continue
        mats = np.stack([ball.grads[k][sup] for k in range(3)], axis=-1)
        rhs = u[sup] * cover.etas[i][sup][:, None]
        kappas[i][sup] = np.linalg.solve(mats, rhs[..., None])[..., 0]
    rec_u = np.zeros(dom.shape + (3,))
    for i, ball in enumerate(cover.balls):
        for k in range(3):
            rec_u += kappas[i][..., k, None] * ball.grads[k]
    rec = quaternion.qfield(np.sum(scalars, axis=0), rec_u)
    diff = quaternion.sup_norm(rec - p, cover.op.g)
    scale = quaternion.sup_norm(p, cover.op.g)
    return Representation(cover, scalars, kappas, rec, diff,
                          diff / max(scale, _TINY))


# ---------------------------------------------------------------------------
# algebra elements


@dataclass(frozen=True)
class Generator:
    """One factor field: the unit {1,0} or a gradient field {0, grad w^f}."""

    kind: str                    # "unit" | "grad"
    name: str
    field: np.ndarray            # (...,4) quaternion field

    def ref(self) -> dict:
        return {"kind": self.kind, "control": self.name}


@dataclass(frozen=True)
class AlgebraElement:
    """Formal sum of scaled products of generators.

    Each term is (coefficient, factor index tuple); factors multiply left to
    right. Squared-gradient features enter as doubled gradient factors via
    {0,u}{0,u} = {-g(u,u), 0}, so the whole element lives in the algebra
    generated by harmonic quaternion fields and the unit.
    """

    generators: tuple
    terms: tuple                 # ((coef, (i0, i1, ...)), ...)

    @property
    def product_depth(self) -> int:
        return max((len(f) for _, f in self.terms), default=0)

    def to_json(self) -> str:
        return json.dumps({
            "terms": [{"coef": float(c), "factors": list(map(int, f))}
                      for c, f in self.terms],
            "generators": [g.ref() for g in self.generators],
            "product_depth": self.product_depth,
        }, indent=1)


def evaluate(elem: AlgebraElement, g) -> np.ndarray:
    """Evaluate by grouping doubled gradient factors into scalar features.

    Exact pointwise identities {0,u}{0,u} = {-g(u,u),0} and
    {c,0}{0,v} = {0,cv} reduce every term to a scalar prefactor times at
    most one gradient field, so no quaternion product is formed at all.
    evaluate_slow is the literal product chain; the two agree to rounding.
    """
    shape = g.dom.shape
    out = np.zeros(shape + (4,))
    for coef, factors in elem.terms:
        scal = np.full(shape, float(coef))
        pend = None
        for idx in factors:
            gen = elem.generators[idx]
            if gen.kind == "unit":
                continue
            v = gen.field[..., 1:4]
            if pend is None:
                pend = v
            else:
                scal = scal * (-geometry.inner(pend, v, g))
                pend = None
        if pend is None:
            out[..., 0] += scal
        else:
            out[..., 1:4] += scal[..., None] * pend
    return out


def evaluate_slow(elem: AlgebraElement, g) -> np.ndarray:
    """Literal left-to-right quaternion products; cross-check for evaluate."""
    shape = g.dom.shape
    out = np.zeros(shape + (4,))
    for coef, factors in elem.terms:
        acc = quaternion.scalar_embed(np.full(shape, float(coef)))
        for idx in factors:
            acc = quaternion.field_mul(acc, elem.generators[idx].field, g)
        out += acc
    return out


def _monomials(n_feat: int, degree: int, max_distinct: int = 2) -> list[tuple]:
    """Exponent maps {feature: power}, total degree <= degree, nested.

    Listing every multivariate monomial explodes combinatorially past a few
    features, so products mix at most max_distinct distinct features. The
    family is nested in degree and in feature count, which is what the
    monotone-error property needs.
    """
    out = [()]
    for j in range(n_feat):
        for p in range(1, degree + 1):
            out.append(((j, p),))
    if max_distinct >= 2:
        for j in range(n_feat):
            for k in range(j + 1, n_feat):
                for p in range(1, degree):
                    for q in range(1, degree - p + 1):
                        out.append(((j, p), (k, q)))
    return out


@dataclass(frozen=True)
class AlgebraFit:
    element: AlgebraElement
    sup_error: float             # sup |evaluate - p| over allowed, metric norm
    relative: float
    ls_objective: float          # total squared residual of the scalar fits
    degree: int
    n_features: int
    n_terms: int


def approximate_in_algebra(p: np.ndarray, cover: FrameCover,
                           scalar_family: HarmonicFamily, degree: int,
                           max_distinct: int = 2) -> AlgebraFit:
    """Fit every frame coefficient by a polynomial in gradient features.

    Features are the squared gradient lengths of scalar_family; the fit is
    plain least squares over all usable nodes, one shared design matrix for
    every coefficient field. The assembled element realizes each feature
    power as doubled gradient factors and each vector term as a fitted
    scalar times a frame gradient generator, with the constant slot carried
    by the unit generator. The least-squares objective is monotone
    nonincreasing under nesting (more degree, more features); the sup norm
    error is evaluated from the assembled element and reported as is.
    """
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    op = cover.op
    dom, g = op.dom, op.g
    rep = represent(p, cover)
    feats = gradient_features(scalar_family)
    mask = dom.allowed
    mons = _monomials(len(feats), degree, max_distinct)

    cols = [np.ones(int(mask.sum()))]
    for mono in mons[1:]:
        c = np.ones(int(mask.sum()))
        for j, pw in mono:
            c = c * feats[j][mask] ** pw
        cols.append(c)
    design = np.stack(cols, axis=-1)

    rhs = [rep.scalars[i][mask] for i in range(len(cover.balls))]
    for i in range(len(cover.balls)):
        for k in range(3):
            rhs.append(rep.kappas[i][..., k][mask])
    b = np.stack(rhs, axis=-1)
    coef, *_ = np.linalg.lstsq(design, b, rcond=None)
    resid = design @ coef - b
    objective = float(np.sum(resid ** 2))

    gens = [Generator("unit", "1", quaternion.scalar_embed(np.ones(dom.shape)))]
    feat_gen = {}
    for j, ctl in enumerate(scalar_family.controls):
        feat_gen[j] = len(gens)
        gens.append(Generator("grad", ctl.name,
                              quaternion.qfield(np.zeros(dom.shape),
                                                scalar_family.grads[j])))
    frame_gen = {}
    for i, ball in enumerate(cover.balls):
        for k in range(3):
            frame_gen[(i, k)] = len(gens)
            gens.append(Generator("grad", f"ball{i}_frame{k}",
                                  quaternion.qfield(np.zeros(dom.shape),
                                                    ball.grads[k])))

    def factors_of(mono) -> tuple[tuple, float]:
        f, sign = [], 1.0
        for j, pw in mono:
            f.extend([feat_gen[j]] * (2 * pw))
            sign *= (-1.0) ** pw
        return tuple(f) if f else (0,), sign

    terms = []
    scal_coef = coef[:, :len(cover.balls)].sum(axis=1)
    for m, mono in enumerate(mons):
        c = scal_coef[m]
        if c != 0.0:
            f, sign = factors_of(mono)
            terms.append((c * sign, f))
    col = len(cover.balls)
    for i in range(len(cover.balls)):
        for k in range(3):
            for m, mono in enumerate(mons):
                c = coef[m, col]
                if c != 0.0:
                    f, sign = factors_of(mono)
                    f = f + (frame_gen[(i, k)],) if f != (0,) else (frame_gen[(i, k)],)
                    terms.append((c * sign, f))
            col += 1

    elem = AlgebraElement(tuple(gens), tuple(terms))
    approx = evaluate(elem, g)
    err = quaternion.sup_norm(approx - p, g)
    scale = quaternion.sup_norm(p, g)
    return AlgebraFit(elem, err, err / max(scale, _TINY), objective,
                      degree, len(feats), len(terms))
