"""Pointwise metric recovery and the conformal change-of-metric identity."""

import numpy as np
import pytest

import hqlab.control as ctl
import hqlab.elliptic as elliptic
import hqlab.geometry as geometry
import hqlab.jets as jets
import hqlab.recovery as recovery
from conftest import UNIT_BOX, window_mask


def test_jets_to_metric_inverts_flat():
    lam = np.zeros(10)
    lam[4], lam[7], lam[9] = 1.0, 1.0, 1.0
    ghat = recovery.jets_to_metric(lam)
    assert np.max(np.abs(ghat - np.eye(3))) < 1e-12


def test_jets_to_metric_known_conformal():
    # principal part c * delta_ij: det-normalized inverse is the identity
    c = 2.5
    lam = np.zeros(10)
    lam[4], lam[7], lam[9] = c, c, c
    ghat = recovery.jets_to_metric(lam)
    assert np.max(np.abs(ghat - np.eye(3))) < 1e-12
    assert abs(np.linalg.det(ghat) - 1.0) < 1e-12


def test_jets_to_metric_rejects_indefinite():
    lam = np.zeros(10)
    lam[4], lam[7], lam[9] = 1.0, -1.0, 1.0
    with pytest.raises(ValueError):
        recovery.jets_to_metric(lam)


def test_estimator_matches_analytic_jet(dom17, op_conf17, conf17):
    d = [c for c in ctl.default_dictionary(dom17, 25, seed=2026)
         if c.name != "1"]
    fam = ctl.solve_family(op_conf17, d)
    a = (8, 8, 8)
    lam, res = recovery.recover_laplace_jet(dom17, fam.fields, a)
    truth = jets.laplace_jet(conf17, a)
    cos = abs(np.dot(lam, truth)) / (np.linalg.norm(lam) * np.linalg.norm(truth))
    assert cos > 0.999
    assert res < 0.1


def test_estimator_needs_fifteen_samples(dom17, fam_flat17):
    with pytest.raises(ValueError, match="15"):
        recovery.recover_laplace_jet(dom17, fam_flat17.fields[:10], (8, 8, 8))


def test_degenerate_sample_set_refused(dom17, fam_flat17):
    same = np.repeat(fam_flat17.fields[3][None], 16, axis=0)
    with pytest.raises(ValueError, match="degenerate sample set"):
        recovery.recover_laplace_jet(dom17, same, (8, 8, 8))


@pytest.fixture(scope="module")
def recovery33():
    dom = geometry.build_domain(UNIT_BOX, 33)
    g = geometry.METRIC_PRESETS["unimodular-sine"](dom, amplitude=0.3)
    op = elliptic.assemble(g, dom)
    d = [c for c in ctl.default_dictionary(dom, 41, seed=2026)
         if c.name != "1"]
    fam = ctl.solve_family(op, d)
    rec = recovery.recover_metric_field(dom, fam.fields)
    return dom, g, rec


def test_end_to_end_recovery_two_percent(recovery33):
    dom, g, rec = recovery33
    anchor = (16, 16, 16)
    res = recovery.calibrate(rec, anchor, g.at(anchor), truth=g)
    err = res.frobenius_errors(g)
    assert float(np.max(err)) < 2e-2
    assert res.scale_spread < 1e-2
    assert not res.flagged


def test_negative_control_is_flagged(recovery33, dom33, flat33):
    dom, g, rec = recovery33
    # claim a different truth than the one that generated the samples
    wrong = geometry.METRIC_PRESETS["conformal-sine"](dom, amplitude=0.3)
    anchor = (16, 16, 16)
    res = recovery.calibrate(rec, anchor, wrong.at(anchor), truth=wrong)
    assert res.flagged
    assert res.scale_spread > 1e-2


def test_recovery_names_worst_node(dom17, fam_flat17):
    # over-tight residual limit points at the offending node
    with pytest.raises(ValueError, match=r"\(\d+, \d+, \d+\)"):
        recovery.recover_metric_field(dom17, fam_flat17.fields[8:],
                                      residual_limit=1e-9)


def test_conformal_identity_exact_for_unit_factor(dom17, flat17):
    x = dom17.node_coords()
    y = np.sin(x[..., 0] + 2 * x[..., 1]) * np.cos(x[..., 2])
    res = recovery.conformal_identity_check(np.ones(dom17.shape), flat17, y)
    assert float(np.max(np.abs(res))) == 0.0


def test_conformal_identity_constant_factor(dom17, flat17):
    x = dom17.node_coords()
    y = np.sin(x[..., 0] + 2 * x[..., 1]) * np.cos(x[..., 2])
    c = np.full(dom17.shape, 2.7)
    res = recovery.conformal_identity_check(c, flat17, y)
    assert float(np.max(np.abs(res))) < 1e-12


def test_conformal_identity_rejects_nonpositive(dom17, flat17):
    c = np.ones(dom17.shape)
    c[8, 8, 8] = -0.5
    with pytest.raises(ValueError):
        recovery.conformal_identity_check(c, flat17, np.zeros(dom17.shape))


def test_conformal_identity_second_order():
    sups = []
    for n in (17, 33):
        dom = geometry.build_domain(UNIT_BOX, n)
        g = geometry.METRIC_PRESETS["flat"](dom)
        x = dom.node_coords()
        c = np.exp(x[..., 0])
        y = x[..., 0] ** 2 + np.sin(2 * x[..., 1])
        res = recovery.conformal_identity_check(c, g, y)
        sups.append(float(np.max(np.abs(res[window_mask(dom)]))))
    assert sups[0] / sups[1] >= 3.9
