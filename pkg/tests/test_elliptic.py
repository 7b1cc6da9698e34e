"""Dirichlet solver, Green columns, Poisson kernels, flux, div-curl."""

import numpy as np
import pytest

import hqlab.control as ctl
import hqlab.elliptic as elliptic
import hqlab.geometry as geometry
from conftest import UNIT_BOX


def test_operator_is_symmetric(op_conf17):
    d = op_conf17.symmetry_defect
    assert d < 1e-12


@pytest.mark.parametrize("which", ["flat", "conf"])
def test_unit_extension_is_one(request, which):
    op = request.getfixturevalue(f"op_{which}17")
    f = np.ones(len(op.dom.boundary_nodes))
    w = elliptic.harmonic_extension(op, f).values
    assert np.max(np.abs(w[op.dom.allowed] - 1.0)) < 1e-12


def test_harmonic_cubic_reproduced_flat(op_flat17, flat17):
    dom = op_flat17.dom
    x = dom.node_coords()
    p = x[..., 0] * x[..., 1] * x[..., 2]
    w = elliptic.harmonic_extension(op_flat17, geometry.boundary_values(dom, p))
    assert np.max(np.abs(w.values[dom.allowed] - p[dom.allowed])) < 1e-11


def test_maximum_principle_20_random(op_flat17):
    dom = op_flat17.dom
    rng = np.random.default_rng(2026)
    for _ in range(20):
        f = rng.standard_normal(len(dom.boundary_nodes))
        w = elliptic.harmonic_extension(op_flat17, f).values
        lo, hi = float(np.min(f)), float(np.max(f))
        assert np.min(w[dom.allowed]) >= lo - 1e-11
        assert np.max(w[dom.allowed]) <= hi + 1e-11


def test_manufactured_convergence():
    sups = []
    for n in (17, 33):
        dom = geometry.build_domain(UNIT_BOX, n)
        g = geometry.METRIC_PRESETS["flat"](dom)
        op = elliptic.assemble(g, dom)
        x = dom.node_coords()
        alpha = np.sin(2 * x[..., 0]) * np.cos(x[..., 1]) * np.exp(0.5 * x[..., 2])
        sol = elliptic.solve_dirichlet(op, h=-4.75 * alpha, f=alpha)
        sups.append(float(np.max(np.abs((sol.values - alpha)[dom.allowed]))))
    assert sups[0] / sups[1] >= 3.5


def test_solve_reports_residual(op_flat17):
    dom = op_flat17.dom
    rng = np.random.default_rng(8)
    f = rng.standard_normal(len(dom.boundary_nodes))
    sol = elliptic.solve_dirichlet(op_flat17, f=f)
    assert sol.residual < 1e-10
    assert sol.iterations > 0
    # returned boundary data is exact, not approximated
    assert np.array_equal(geometry.boundary_values(dom, sol.values), f)


def test_green_column_vanishes_on_boundary(op_conf17):
    dom = op_conf17.dom
    col = elliptic.green_column(op_conf17, (8, 8, 8)).values
    b = geometry.boundary_values(dom, col)
    assert np.array_equal(b, np.zeros_like(b))


def test_green_symmetry_five_pairs(op_conf17):
    dom = op_conf17.dom
    rng = np.random.default_rng(7)
    core = np.argwhere(geometry.interior_core(dom, 2))
    worst = 0.0
    for _ in range(5):
        i, j = rng.choice(len(core), 2, replace=False)
        y, z = tuple(core[i]), tuple(core[j])
        gy = elliptic.green_column(op_conf17, y).values
        gz = elliptic.green_column(op_conf17, z).values
        worst = max(worst, abs(gy[z] - gz[y]))
    assert worst < 1e-9


def test_poisson_kernel_reproduces_extension(op_flat17, fam_flat17):
    k = elliptic.poisson_kernel(op_flat17, (8, 8, 8))
    c = fam_flat17.controls[6]
    direct = fam_flat17.fields[6][8, 8, 8]
    assert abs(k.apply(c.values) - direct) < 1e-12


def test_poisson_row_sum_improves():
    defects = []
    for n in (17, 33):
        dom = geometry.build_domain(UNIT_BOX, n)
        g = geometry.METRIC_PRESETS["flat"](dom)
        op = elliptic.assemble(g, dom)
        x = tuple(int(round(0.5 * (n - 1))) for _ in range(3))
        defects.append(abs(elliptic.poisson_kernel(op, x).row_sum - 1.0))
    assert defects[1] < 2e-2
    assert defects[1] < defects[0]


def test_boundary_flux_total_is_machine_zero(op_conf17, fam_conf33, op_conf33):
    # harmonic fields have exactly zero total outflux under the assembled
    # operator's summation-by-parts identity, at any resolution
    for op in (op_conf17, op_conf33):
        dom = op.dom
        x = dom.node_coords()
        f = geometry.boundary_values(dom, x[..., 0] * x[..., 1])
        w = elliptic.harmonic_extension(op, f).values
        o = elliptic.boundary_flux(op, w)
        assert abs(float(o.sum())) < 1e-10


def test_boundary_flux_matches_source_integral(op_flat17, flat17):
    # with a source, total outflux equals the volume integral of the source
    dom = op_flat17.dom
    rng = np.random.default_rng(12)
    h = rng.standard_normal(dom.shape)
    sol = elliptic.solve_dirichlet(op_flat17, h=h)
    o = elliptic.boundary_flux(op_flat17, sol.values)
    vol = float(np.prod(dom.h))
    want = vol * float(np.sum(h[dom.interior] * flat17.sqrt_det[dom.interior]))
    assert abs(float(o.sum()) - want) < 1e-9 * max(abs(want), 1.0)


def test_divcurl_produces_compatible_potential(op_flat17, fam_flat17):
    gr = fam_flat17.grads[5]
    dc = elliptic.divcurl_solve(op_flat17, gr)
    sup = float(np.max(np.linalg.norm(gr, axis=-1)))
    assert dc.rot_residual < 0.05 * sup
    assert dc.div_residual < 1.0


def test_divcurl_refuses_cavity():
    dom = geometry.build_domain(UNIT_BOX, 17, mask_spec="box_minus_box",
                                inner_box=[[0.4, 0.6]] * 3)
    g = geometry.METRIC_PRESETS["flat"](dom)
    op = elliptic.assemble(g, dom)
    with pytest.raises(ValueError, match="plain box"):
        elliptic.divcurl_solve(op, np.zeros(dom.shape + (3,)))
