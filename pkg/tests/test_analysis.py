"""Cavity basis, surface patches, uniqueness probe, loop circulation."""

import numpy as np
import pytest

import hqlab.analysis as analysis
import hqlab.control as ctl
import hqlab.elliptic as elliptic
import hqlab.geometry as geometry
import hqlab.quaternion as qt
from conftest import UNIT_BOX


@pytest.fixture(scope="module")
def cavity_op():
    dom = geometry.build_domain(UNIT_BOX, 21, mask_spec="box_minus_box",
                                inner_box=[[0.4, 0.6]] * 3)
    g = geometry.METRIC_PRESETS["flat"](dom)
    return elliptic.assemble(g, dom)


@pytest.fixture(scope="module")
def probe17(op_flat17, fam_flat17, flat17):
    fields, ids = analysis.build_probe_basis(op_flat17, count=20, seed=2026)
    patch = analysis.plane_patch(op_flat17.dom, axis=2, thickness=2)
    return analysis.uniqueness_probe(fields, patch, flat17, ids=ids), fields, ids, patch


# ---------------------------------------------------------------------------
# bulk window and cavity basis

def test_bulk_mask_respects_margin(dom17):
    m = analysis.bulk_mask(dom17, frac=0.1)
    x = dom17.node_coords()
    inside = (x[..., 0] > 0.1) & (x[..., 0] < 0.9)
    assert m.any()
    assert not m[~inside].any()


def test_bulk_mask_empty_refused(dom17):
    with pytest.raises(ValueError):
        analysis.bulk_mask(dom17, frac=0.6)


def test_plain_box_has_empty_basis(op_flat17):
    basis = analysis.dirichlet_basis(op_flat17)
    assert basis.size == 0


def test_cavity_basis_flux_laws(cavity_op):
    basis = analysis.dirichlet_basis(cavity_op)
    assert basis.size == 1
    assert abs(basis.total_flux[0]) < 1e-10
    assert basis.capacity[0] > 0
    assert basis.rot_residuals[0] < 1e-10


# ---------------------------------------------------------------------------
# patches and the flat surface identity

def test_plane_patch_defaults(dom17):
    p = analysis.plane_patch(dom17)
    assert p.axis == 2 and p.plane == 8
    assert len(p.nodes) > 0


def test_plane_patch_margin_guard(dom17):
    with pytest.raises(ValueError):
        analysis.plane_patch(dom17, margin=2)
    with pytest.raises(ValueError, match="patch too small"):
        analysis.plane_patch(dom17, plane=8, margin=8)


def test_surface_identity_machine_zero(dom17, flat17):
    rng = np.random.default_rng(6)
    x = dom17.node_coords()
    v = np.stack([np.sin(2 * x[..., (a + 1) % 3] + a) for a in range(3)],
                 axis=-1)
    patch = analysis.plane_patch(dom17, axis=1, thickness=1)
    res = analysis.surface_identity_check(v, patch, flat17)
    assert float(np.max(res)) == 0.0


def test_surface_identity_needs_flat(dom17, conf17):
    patch = analysis.plane_patch(dom17)
    with pytest.raises(ValueError):
        analysis.surface_identity_check(np.zeros(dom17.shape + (3,)),
                                        patch, conf17)


# ---------------------------------------------------------------------------
# uniqueness probe laws

def test_probe_ratio_positive_and_certified(probe17):
    probe, fields, ids, patch = probe17
    assert probe.ratio > 1e-3
    txt = probe.certificate_csv()
    assert txt.splitlines()[0] == "field,sup_on_patch,sup_on_domain,ratio"
    assert len(txt.strip().splitlines()) == len(ids) + 1
    assert "resolution" in probe.header


def test_probe_rescale_invariance(op_flat17, fam_flat17, flat17, probe17):
    probe, fields, ids, patch = probe17
    scaled = [f.copy() for f in fields]
    scaled[3] = scaled[3] * 1e6
    again = analysis.uniqueness_probe(scaled, patch, flat17, ids=ids)
    assert abs(again.ratio - probe.ratio) < 1e-12 * probe.ratio + 1e-15


def test_probe_detects_duplicates(probe17, flat17):
    probe, fields, ids, patch = probe17
    dup = list(fields) + [fields[0].copy()]
    dup_ids = list(ids) + ["copy"]
    again = analysis.uniqueness_probe(dup, patch, flat17, ids=dup_ids)
    assert again.ratio == 0.0
    assert again.duplicates


def test_probe_rejects_nonharmonic(dom17, flat17, probe17):
    probe, fields, ids, patch = probe17
    rng = np.random.default_rng(2)
    junk = qt.qfield(rng.standard_normal(dom17.shape),
                     rng.standard_normal(dom17.shape + (3,)))
    junk[~dom17.allowed] = 0.0
    with pytest.raises(ValueError, match="harmonicity gate"):
        analysis.uniqueness_probe(list(fields) + [junk], patch, flat17,
                                  ids=list(ids) + ["junk"])


def test_probe_rejects_undersampled_patch(op_flat17, flat17, probe17):
    probe, fields, ids, patch = probe17
    thin = analysis.plane_patch(op_flat17.dom, axis=2, thickness=1)
    # 121 single-plane nodes cannot oversample 34 fields four-fold
    many = list(fields) + [f.copy() for f in fields[:10]]
    many_ids = list(ids) + [f"b{i}" for i in range(10)]
    with pytest.raises(ValueError, match="oversampling"):
        analysis.uniqueness_probe(many, thin, flat17, ids=many_ids)


def test_probe_summary_json(probe17):
    import json
    probe = probe17[0]
    doc = json.loads(probe.summary_json())
    assert doc["ratio"] == probe.ratio
    assert doc["patch"]["nodes"] == probe.n_nodes


# ---------------------------------------------------------------------------
# circulation

def test_circulation_exact_for_rigid_rotation(dom33, flat33):
    # u = (-y, x, 0) has curl 2 e_z; the trapezoid edge sums are exact on
    # linear integrands, so the loop integral equals 2 x area exactly
    x = dom33.node_coords()
    u = np.stack([-x[..., 1], x[..., 0], np.zeros(dom33.shape)], axis=-1)
    loop = analysis.RectLoop(2, 16, (8, 8), (24, 24))
    circ = analysis.circulation(u, flat33, loop)
    area = (0.5 ** 2)
    assert abs(circ - 2 * area) < 1e-13


def test_circulation_gradient_loop_shrinks():
    # an analytic gradient u = g^{-1} grad(phi) circulates to zero; the
    # trapezoid quadrature defect is O(h^2) once the loop corners sit at
    # fixed physical fractions (discrete gradients of solved fields would
    # telescope to roundoff instead and show no rate at all)
    sups = []
    for n in (17, 33):
        dom = geometry.build_domain(UNIT_BOX, n)
        g = geometry.METRIC_PRESETS["conformal-sine"](dom, amplitude=0.3)
        x = dom.node_coords()
        dphi = np.stack([
            np.cos(x[..., 0] + 2 * x[..., 1]) * np.cos(x[..., 2]),
            2 * np.cos(x[..., 0] + 2 * x[..., 1]) * np.cos(x[..., 2]),
            -np.sin(x[..., 0] + 2 * x[..., 1]) * np.sin(x[..., 2]),
        ], axis=-1)
        u = np.einsum("...mk,...k->...m", np.linalg.inv(g.g), dphi)
        q = (n - 1) // 4
        loop = analysis.RectLoop(2, 2 * q, (q, q), (3 * q, 3 * q))
        sups.append(abs(analysis.circulation(u, g, loop)))
    assert sups[0] / sups[1] >= 3.5


def test_circulation_winding_on_torus():
    dom = geometry.build_domain(UNIT_BOX, 25, mask_spec="box_minus_column",
                                inner_box=[[0.42, 0.58], [0.42, 0.58]])
    g = geometry.METRIC_PRESETS["flat"](dom)
    x = dom.node_coords()
    dx, dy = x[..., 0] - 0.5, x[..., 1] - 0.5
    r2 = np.maximum(dx ** 2 + dy ** 2, 1e-30)
    u = np.zeros(dom.shape + (3,))
    u[..., 0] = -dy / r2
    u[..., 1] = dx / r2
    u[~dom.allowed] = 0.0
    loop = analysis.RectLoop(2, 12, (6, 6), (18, 18))
    circ = analysis.circulation(u, g, loop)
    assert abs(circ - 2 * np.pi) < 0.05 * 2 * np.pi


def test_circulation_refuses_loop_through_hole():
    dom = geometry.build_domain(UNIT_BOX, 25, mask_spec="box_minus_column",
                                inner_box=[[0.42, 0.58], [0.42, 0.58]])
    g = geometry.METRIC_PRESETS["flat"](dom)
    loop = analysis.RectLoop(2, 12, (14, 14), (18, 26))
    with pytest.raises(ValueError):
        analysis.circulation(np.zeros(dom.shape + (3,)), g, loop)


def test_circulation_corner_order_checked(dom17, flat17):
    with pytest.raises(ValueError):
        analysis.circulation(np.zeros(dom17.shape + (3,)), flat17,
                             analysis.RectLoop(2, 8, (10, 4), (4, 12)))
