import numpy as np
import pytest

from proxsplit import operators as ops
from proxsplit.engine import (
    RelaxationSchedule,
    StoppingRule,
    check_firm_nonexpansive,
    check_graph_monotone,
    check_reduced_firm_nonexpansive,
    check_woodbury,
    evaluate_T,
    evaluate_Ttilde,
    fixed_point_iterate,
    monitor_fejer,
    ppp_iterate,
    rppp_iterate,
)
from proxsplit.errors import InvalidSchedule
from proxsplit.schemes import build_cp, build_drs
from proxsplit.spaces import factor_psd

Z = ops.zero_operator()


def test_evaluate_T_drs_zero_operators():
    sc = build_drs(Z, Z, 1.0, 2)
    x, y = np.array([1.0, 2.0]), np.array([0.5, -1.0])
    tu = evaluate_T(sc.block, np.concatenate([x, y]))
    np.testing.assert_allclose(tu, np.concatenate([x - y, [0, 0]]), atol=1e-15)


def test_evaluate_T_constant_resolvent():
    a = np.array([3.0, -4.0])
    sc = build_drs(ops.point_indicator(a), Z, 1.0, 2)
    for u in np.random.default_rng(0).standard_normal((5, 4)):
        np.testing.assert_allclose(evaluate_T(sc.block, u)[:2], a)


def test_evaluate_T_cp_identity_zero():
    sc = build_cp(Z, Z, np.eye(2), 1.0, 1.0)
    x, y = np.array([1.0, 2.0]), np.array([0.5, -1.0])
    np.testing.assert_allclose(evaluate_T(sc.block, np.concatenate([x, y])), np.concatenate([x - y, [0, 0]]), atol=1e-15)


def test_ppp_drs_halving():
    A = ops.scaled_identity(1.0)
    sc = build_drs(A, Z, 1.0, 1)
    tr = ppp_iterate(sc.block, [1.0, 0.0], RelaxationSchedule.constant(1.0),
                     StoppingRule(tol=0.0, max_iter=6), store_iterates=True)
    # one step maps (1, 0) to (1/2, 0); afterwards the x-block halves
    xs = [u[0] for u in tr.iterates[1:]]
    np.testing.assert_allclose(xs, [0.5 ** k for k in range(1, 7)])


def test_zero_relaxation_keeps_iterate():
    sc = build_drs(ops.scaled_identity(1.0), ops.l1_shifted([1.0]), 1.0, 1)
    tr = ppp_iterate(sc.block, [2.0, 1.0], RelaxationSchedule.constant(0.0),
                     StoppingRule(tol=0.0, max_iter=5), store_iterates=True)
    for u in tr.iterates:
        np.testing.assert_array_equal(u, [2.0, 1.0])


def test_fixed_point_start_gives_constant_trace():
    sc = build_drs(ops.scaled_identity(1.0), Z, 1.0, 1)
    tr = ppp_iterate(sc.block, [0.0, 0.0], RelaxationSchedule.constant(1.0), StoppingRule())
    assert tr.converged and tr.n_iter == 0 and tr.residual == [0.0]


def test_reduced_drs_formula(rng):
    A = ops.l1_shifted(rng.standard_normal(3))
    B = ops.scaled_identity(2.0, rng.standard_normal(3))
    s = 0.7
    sc = build_drs(A, B, s, 3)
    for _ in range(20):
        w = rng.standard_normal(3)
        ja = A.resolvent(s, w)
        expected = w + B.resolvent(s, 2 * ja - w) - ja
        np.testing.assert_allclose(evaluate_Ttilde(sc.block, sc.factor, w), expected, atol=1e-13)
        np.testing.assert_allclose(sc.direct_step(w), expected, atol=1e-13)


def test_ttilde_zero_operators_identity(rng):
    sc = build_drs(Z, Z, 1.0, 3)
    w = rng.standard_normal(3)
    np.testing.assert_allclose(evaluate_Ttilde(sc.block, sc.factor, w), w, atol=1e-14)


def test_rppp_point_indicator_one_step(rng):
    a = np.array([1.0, 2.0])
    sc = build_drs(ops.point_indicator(a), Z, 1.0, 2)
    tr = rppp_iterate(sc.block, sc.factor, rng.standard_normal(2), RelaxationSchedule.constant(1.0),
                      StoppingRule(tol=0.0, max_iter=1), store_iterates=True)
    np.testing.assert_allclose(tr.iterates[1], a, atol=1e-14)


def test_rppp_matches_ppp(rng):
    K = rng.standard_normal((4, 4))
    A = ops.linear_operator(np.eye(4) + K - K.T)
    sc = build_drs(A, ops.l1_shifted(rng.standard_normal(4)), 1.3, 4)
    u0 = rng.standard_normal(8)
    stop = StoppingRule(tol=0.0, max_iter=200)
    sched = RelaxationSchedule.constant(1.5)
    full = ppp_iterate(sc.block, u0, sched, stop, store_iterates=True)
    red = rppp_iterate(sc.block, sc.factor, sc.factor.c_matrix.T @ u0, sched, stop, store_iterates=True)
    gap = max(np.linalg.norm(w - sc.factor.c_matrix.T @ u) for w, u in zip(red.iterates, full.iterates))
    assert gap <= 1e-10 * (1 + np.linalg.norm(u0))


def test_rank_zero_reduced_space():
    F = factor_psd(np.zeros((2, 2)))
    tr = fixed_point_iterate(lambda w: w, np.zeros(F.rank), RelaxationSchedule.constant(1.0))
    assert tr.converged and tr.k == []


def test_schedule_validation():
    with pytest.raises(InvalidSchedule):
        RelaxationSchedule.constant(2.5)
    with pytest.raises(InvalidSchedule):
        RelaxationSchedule.sequence([1.0, -0.1])
    s = RelaxationSchedule.sequence([0.5, 1.0])
    assert s(0) == 0.5 and s(10) == 1.0
    assert not s.certifies_convergence
    assert RelaxationSchedule.constant(1.0).certifies_convergence
    assert not RelaxationSchedule.constant(2.0).certifies_convergence


def test_default_stopping_rule():
    stop = StoppingRule()
    assert stop.tol == 1e-8 and stop.max_iter == 100_000
    assert stop.satisfied(1e-8 * 3, 2.0)
    assert not stop.satisfied(1e-7, 2.0)


def test_trace_serialization(rng, tmp_path):
    sc = build_drs(ops.scaled_identity(1.0), ops.l1_shifted([0.5]), 1.0, 1)
    tr = ppp_iterate(sc.block, [3.0, 0.0], RelaxationSchedule.constant(1.0),
                     distance=lambda u, tu: abs(tu[0]))
    text = tr.to_csv(tmp_path / "t.csv")
    lines = text.strip().splitlines()
    assert lines[0] == "k,residual,m_residual,dist_ref,time_s"
    assert len(lines) == len(tr.k) + 1
    assert all(r >= 0 for r in tr.residual + tr.m_residual)
    assert tr.to_csv(timing=False) == tr.to_csv(timing=False)
    import json

    doc = json.loads(tr.to_json())
    assert doc["iterations"] == tr.n_iter


def test_monitors_on_drs(rng):
    A = ops.scaled_identity(1.0, rng.standard_normal(3))
    B = ops.l1_shifted(rng.standard_normal(3))
    sc = build_drs(A, B, 1.0, 3)
    assert check_firm_nonexpansive(sc.block, 300, rng=1).ok
    assert check_graph_monotone(sc.block, 300, rng=2).ok
    assert check_reduced_firm_nonexpansive(sc.block, sc.factor, 300, rng=3).ok
    ref = ppp_iterate(sc.block, np.zeros(6), RelaxationSchedule.constant(1.0), StoppingRule(tol=1e-14, relative=False))
    u_star = ref.final_image
    tr = ppp_iterate(sc.block, 5 * rng.standard_normal(6), RelaxationSchedule.constant(1.0),
                     StoppingRule(tol=1e-12), store_iterates=True)
    rep = monitor_fejer(tr, sc.block.m, u_star, residual_tol=1e-6)
    assert rep.ok, rep


def test_woodbury_examples(rng):
    assert check_woodbury(np.eye(1), np.eye(1)) <= 1e-15
    C = np.array([[1.0], [-1.0]])
    assert check_woodbury(np.eye(2), C) <= 1e-15
    lhs = np.linalg.inv(np.eye(1) + C.T @ C)
    assert lhs[0, 0] == pytest.approx(1 / 3)
    G = rng.standard_normal((4, 4))
    assert check_woodbury(G @ G.T + np.eye(4), rng.standard_normal((4, 2))) <= 1e-9
