"""Boundary control dictionary, sampling matrix, synthesis, separation."""

import numpy as np
import pytest

import hqlab.control as ctl
import hqlab.elliptic as elliptic
import hqlab.geometry as geometry
from conftest import UNIT_BOX


def test_dictionary_structure(dom17):
    d = ctl.default_dictionary(dom17, size=40, seed=2026)
    assert len(d) == 40
    assert d[0].name == "1"
    assert d[1].name == "x1"
    names = [c.name for c in d]
    assert len(set(names)) == 40
    # the seeded tail is reproducible
    d2 = ctl.default_dictionary(dom17, size=40, seed=2026)
    assert all(np.array_equal(a.values, b.values) for a, b in zip(d, d2))


@pytest.mark.parametrize("which", ["flat", "conf"])
def test_rank_four_one_point(request, which, fam_flat17):
    op = request.getfixturevalue(f"op_{which}17")
    fam = fam_flat17 if which == "flat" else ctl.solve_family(
        op, ctl.default_dictionary(op.dom, size=24, seed=2026))
    m = ctl.ma_matrix(op, [(8, 8, 8)], fam)
    assert m.rank() == 4


def test_rank_eight_two_points(op_flat17, fam_flat17):
    m = ctl.ma_matrix(op_flat17, [(5, 6, 7), (11, 10, 9)], fam_flat17)
    assert m.rank() == 8


def test_matrix_parts_shapes(op_flat17, fam_flat17):
    pts = [(5, 6, 7), (11, 10, 9)]
    assert ctl.ma_matrix(op_flat17, pts, fam_flat17, parts="scalar").matrix.shape \
        == (2, 24)
    assert ctl.ma_matrix(op_flat17, pts, fam_flat17, parts="grad").matrix.shape \
        == (6, 24)
    assert ctl.ma_matrix(op_flat17, pts, fam_flat17, parts="both").matrix.shape \
        == (8, 24)


def test_closed_loop_synthesis(op_flat17, fam_flat17, flat17):
    pts = [(5, 6, 7), (11, 10, 9)]
    m = ctl.ma_matrix(op_flat17, pts, fam_flat17)
    rng = np.random.default_rng(3)
    targets = [(float(rng.standard_normal()), rng.standard_normal(3))
               for _ in pts]
    sol = ctl.solve_control(m, targets)
    assert sol.success
    # re-extend the synthesized control from scratch and re-sample
    w = elliptic.harmonic_extension(op_flat17, sol.control.values).values
    gr = geometry.grad(w, flat17, fill=True)
    got = np.concatenate([[w[p], *gr[p]] for p in pts])
    want = np.concatenate([[t[0], *t[1]] for t in targets])
    assert np.max(np.abs(got - want)) < 1e-2 * max(np.max(np.abs(want)), 1.0)


def test_polynomial_target_hit_exactly(op_flat17, fam_flat17):
    # x1*x2 is in the dictionary, so its samples are reachable with tiny defect
    dom = op_flat17.dom
    x = dom.node_coords()
    p = x[..., 0] * x[..., 1]
    pts = [(4, 5, 6), (12, 11, 10)]
    gr = np.stack([x[..., 1], x[..., 0], np.zeros(dom.shape)], axis=-1)
    m = ctl.ma_matrix(op_flat17, pts, fam_flat17)
    sol = ctl.solve_control(m, [(p[q], gr[q]) for q in pts])
    assert sol.defect < 1e-10


def test_target_count_mismatch(op_flat17, fam_flat17):
    m = ctl.ma_matrix(op_flat17, [(8, 8, 8)], fam_flat17)
    with pytest.raises(ValueError, match="targets for"):
        ctl.solve_control(m, [(1.0, [0, 0, 0]), (2.0, [0, 0, 0])])


def test_family_operator_guard(op_flat17, op_conf17, fam_flat17):
    with pytest.raises(ValueError, match="different operator"):
        ctl.ma_matrix(op_conf17, [(8, 8, 8)], fam_flat17)


def test_separation_endpoints(op_flat17, flat17):
    a, b = (5, 5, 5), (11, 11, 11)
    ta = (1.0, [0.2, -0.1, 0.3])
    tb = (-0.5, [0.1, 0.4, -0.2])
    sep = ctl.separate(op_flat17, a, b, ta, tb, seed=2026, size=40)
    scale = max(np.linalg.norm(np.concatenate([[t[0]], t[1]]))
                for t in (ta, tb))
    assert max(sep.endpoint_errors) < 1e-2 * scale
    assert sep.scalar_defect < 1e-8
    assert sep.gradient_defect < 1e-8


def test_separation_rejects_equal_points(op_flat17):
    with pytest.raises(ValueError, match="distinct"):
        ctl.separate(op_flat17, (5, 5, 5), (5, 5, 5), (1, [0, 0, 0]),
                     (0, [1, 0, 0]))


def test_separation_refuses_cavity():
    dom = geometry.build_domain(UNIT_BOX, 17, mask_spec="box_minus_box",
                                inner_box=[[0.4, 0.6]] * 3)
    g = geometry.METRIC_PRESETS["flat"](dom)
    op = elliptic.assemble(g, dom)
    with pytest.raises(ValueError, match="single boundary component"):
        ctl.separate(op, (2, 2, 2), (14, 14, 14), (1, [0, 0, 0]),
                     (0, [1, 0, 0]))


def test_compatibility_check_on_cavity():
    dom = geometry.build_domain(UNIT_BOX, 17, mask_spec="box_minus_box",
                                inner_box=[[0.4, 0.6]] * 3)
    g = geometry.METRIC_PRESETS["flat"](dom)
    op = elliptic.assemble(g, dom)
    import hqlab.analysis as analysis
    basis = analysis.dirichlet_basis(op)
    f = np.ones(len(dom.boundary_nodes))
    vals = ctl.compatibility_check(op, f, basis.fields)
    assert len(vals) == basis.size
