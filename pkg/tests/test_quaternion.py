"""Pointwise algebra and field-level norm laws."""

import numpy as np
import pytest

import hqlab.geometry as geometry
import hqlab.quaternion as qt


def _basis(node):
    e = np.eye(3)
    return [qt.Quaternion(0.0, e[k], node) for k in range(3)]


def test_multiplication_table_flat_exact(dom17, flat17):
    node = (8, 8, 8)
    i, j, k = _basis(node)
    minus_one = np.array([-1.0, 0.0, 0.0, 0.0])
    for a in (i, j, k):
        sq = qt.qmul(a, a, flat17)
        assert np.array_equal(sq.as_array(), minus_one)
    assert np.array_equal(qt.qmul(i, j, flat17).as_array(), k.as_array())
    assert np.array_equal(qt.qmul(j, k, flat17).as_array(), i.as_array())
    assert np.array_equal(qt.qmul(k, i, flat17).as_array(), j.as_array())
    # anticommutativity comes with the table
    assert np.array_equal(qt.qmul(j, i, flat17).as_array(), -k.as_array())


def _orthonormal_frame(g, node):
    gn = g.at(node)
    # Gram-Schmidt in the g inner product, then fix handedness
    frame = []
    for v in np.eye(3):
        for w in frame:
            v = v - (v @ gn @ w) * w
        frame.append(v / np.sqrt(v @ gn @ v))
    frame = np.stack(frame)
    if np.sqrt(np.linalg.det(gn)) * np.linalg.det(frame) < 0:
        frame[2] = -frame[2]
    return frame


def test_table_curved_through_frame(dom17, conf17):
    node = (5, 9, 7)
    frame = _orthonormal_frame(conf17, node)
    i, j, k = [qt.Quaternion(0.0, frame[m], node) for m in range(3)]
    tbl = [(i, j, k), (j, k, i), (k, i, j)]
    for a, b, c in tbl:
        got = qt.to_standard(qt.qmul(a, b, conf17), frame, conf17)
        want = qt.to_standard(c, frame, conf17)
        assert np.max(np.abs(got - want)) < 1e-12
    for a in (i, j, k):
        got = qt.to_standard(qt.qmul(a, a, conf17), frame, conf17)
        assert np.max(np.abs(got - [-1, 0, 0, 0])) < 1e-12


def test_frame_isomorphism_against_hamilton(dom17, conf17):
    rng = np.random.default_rng(11)
    node = (6, 6, 10)
    frame = _orthonormal_frame(conf17, node)
    for _ in range(50):
        p = qt.Quaternion(rng.standard_normal(), rng.standard_normal(3), node)
        q = qt.Quaternion(rng.standard_normal(), rng.standard_normal(3), node)
        lhs = qt.to_standard(qt.qmul(p, q, conf17), frame, conf17)
        rhs = qt.hamilton(qt.to_standard(p, frame, conf17),
                          qt.to_standard(q, frame, conf17))
        assert np.max(np.abs(lhs - rhs)) < 1e-12


def test_square_norm_identity_100_seeded(dom17, conf17, flat17):
    rng = np.random.default_rng(2026)
    for trial in range(100):
        g = conf17 if trial % 2 else flat17
        node = tuple(rng.integers(1, 16, size=3))
        p = qt.Quaternion(rng.standard_normal(), rng.standard_normal(3), node)
        sq = qt.qmul(p, p, g)
        n1 = qt.qnorm(sq, g)
        n2 = qt.qnorm(p, g) ** 2
        assert abs(n1 - n2) <= 1e-12 * max(n2, 1.0)


def test_associativity_seeded(dom17, conf17):
    rng = np.random.default_rng(7)
    node = (9, 4, 12)
    for _ in range(100):
        p, q, r = (qt.Quaternion(rng.standard_normal(),
                                 rng.standard_normal(3), node)
                   for _ in range(3))
        lhs = qt.qmul(qt.qmul(p, q, conf17), r, conf17).as_array()
        rhs = qt.qmul(p, qt.qmul(q, r, conf17), conf17).as_array()
        scale = max(np.max(np.abs(lhs)), 1.0)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


def test_node_mismatch_refused(flat17):
    p = qt.Quaternion(1.0, [0, 0, 0], (2, 2, 2))
    q = qt.Quaternion(1.0, [0, 0, 0], (3, 2, 2))
    with pytest.raises(ValueError, match="node mismatch"):
        qt.qmul(p, q, flat17)


def test_bad_frame_refused(conf17):
    p = qt.Quaternion(1.0, [1, 0, 0], (8, 8, 8))
    with pytest.raises(ValueError, match="not g-orthonormal"):
        qt.to_standard(p, np.eye(3) * 2.0, conf17)


def test_field_pack_unpack_roundtrip(dom17):
    rng = np.random.default_rng(3)
    alpha = rng.standard_normal(dom17.shape)
    u = rng.standard_normal(dom17.shape + (3,))
    P = qt.qfield(alpha, u)
    a2, u2 = qt.parts(P)
    assert np.array_equal(a2, alpha) and np.array_equal(u2, u)
    E = qt.scalar_embed(alpha)
    assert np.array_equal(E[..., 0], alpha) and not E[..., 1:].any()


def test_field_mul_matches_pointwise(dom17, conf17):
    rng = np.random.default_rng(5)
    P = rng.standard_normal(dom17.shape + (4,))
    Q = rng.standard_normal(dom17.shape + (4,))
    R = qt.field_mul(P, Q, conf17)
    for node in [(3, 4, 5), (10, 2, 14), (8, 8, 8)]:
        p = qt.Quaternion(P[node][0], P[node][1:], node)
        q = qt.Quaternion(Q[node][0], Q[node][1:], node)
        want = qt.qmul(p, q, conf17).as_array()
        assert np.max(np.abs(R[node] - want)) < 1e-13


def test_field_norm_square_identity(dom17, conf17):
    rng = np.random.default_rng(9)
    P = rng.standard_normal(dom17.shape + (4,))
    sq = qt.field_mul(P, P, conf17)
    n1 = qt.norm_field(sq, conf17)
    n2 = qt.norm_field(P, conf17) ** 2
    assert np.max(np.abs(n1 - n2)) <= 1e-12 * max(float(np.max(n2)), 1.0)
    assert abs(qt.sup_norm(sq, conf17) - qt.sup_norm(P, conf17) ** 2) \
        <= 1e-10 * qt.sup_norm(P, conf17) ** 2


def test_q_residual_separates_harmonic_from_broken(op_flat17, fam_flat17, flat17):
    dom = op_flat17.dom
    w = fam_flat17.fields[4]          # a genuinely harmonic extension
    gr = fam_flat17.grads[4]
    import hqlab.elliptic as elliptic
    dc = elliptic.divcurl_solve(op_flat17, gr)
    good = qt.qfield(w, dc.u)
    mis_good, div_good = qt.q_residual(good, flat17)

    rng = np.random.default_rng(1)
    bad = qt.qfield(w, rng.standard_normal(dom.shape + (3,)))
    mis_bad, div_bad = qt.q_residual(bad, flat17)
    sup = qt.sup_norm(good, flat17)
    # harmonic constructs sit at the discretization level, random vector
    # parts defect like 1/h
    assert max(mis_good, div_good) < 1.0 * sup
    assert max(mis_bad, div_bad) > 10.0 * sup
