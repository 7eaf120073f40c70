import json

import numpy as np
import pytest
from scipy.optimize import minimize

from proxsplit import portfolio as P
from proxsplit.errors import InsufficientData, ParseError
from proxsplit.schemes import ParameterWarning


@pytest.fixture(scope="module")
def problem():
    return P.problem_from_data(P.synthetic_data())


# -- data -----------------------------------------------------------------------

def test_load_minimal_file(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("a\n0.1\n-0.1\n")
    d = P.load_returns(p)
    assert (d.n_days, d.n_assets) == (2, 1)
    assert d.asset_names == ("a",)
    np.testing.assert_array_equal(d.returns[:, 0], [0.1, -0.1])


@pytest.mark.parametrize(
    "text, row, col",
    [
        ("a,b\n0.1,0.2\n0.3,\n", 2, 2),
        ("a,b\n0.1,x\n0.3,0.4\n", 1, 2),
        ("a,b\n0.1,0.2\n0.3\n", 2, None),
        ("a,b\nnan,0.2\n0.3,0.4\n", 1, 1),
    ],
)
def test_load_errors_carry_location(tmp_path, text, row, col):
    p = tmp_path / "bad.csv"
    p.write_text(text)
    with pytest.raises(ParseError) as ei:
        P.load_returns(p)
    assert ei.value.row == row
    assert ei.value.col == col


def test_load_empty_file(tmp_path):
    p = tmp_path / "e.csv"
    p.write_text("")
    with pytest.raises(ParseError):
        P.load_returns(p)


def test_round_trip_is_bit_exact(tmp_path):
    d = P.synthetic_data(seed=7, n=53, T=200)
    p = tmp_path / "syn.csv"
    P.save_returns(d, p)
    back = P.load_returns(p)
    assert back.returns.shape == (200, 53)
    assert np.array_equal(back.returns, d.returns)
    assert back.returns.tobytes() == d.returns.tobytes()


def test_synthetic_is_deterministic():
    a, b = P.synthetic_data(seed=3), P.synthetic_data(seed=3)
    assert np.array_equal(a.returns, b.returns)
    assert not np.array_equal(a.returns, P.synthetic_data(seed=4).returns)


def test_estimate_two_days():
    r, S = P.estimate(P.ReturnsData(np.array([[0.0], [2.0]])))
    assert r[0] == pytest.approx(1.0)
    assert S[0, 0] == pytest.approx(2.0)


def test_estimate_constant_returns():
    R = np.tile([0.5, -1.0, 2.0], (10, 1))
    r, S = P.estimate(P.ReturnsData(R))
    np.testing.assert_allclose(r, [0.5, -1.0, 2.0])
    np.testing.assert_allclose(S, 0.0, atol=1e-15)


def test_estimate_psd_and_matches_numpy(rng):
    R = rng.standard_normal((30, 40))  # T < n: rank deficient
    r, S = P.estimate(P.ReturnsData(R))
    assert np.linalg.eigvalsh(S)[0] >= -1e-10
    np.testing.assert_allclose(S, np.cov(R, rowvar=False), atol=1e-12)
    np.testing.assert_array_equal(S, S.T)


def test_estimate_needs_two_days():
    with pytest.raises(InsufficientData):
        P.estimate(P.ReturnsData(np.array([[1.0, 2.0]])))


# -- variants -------------------------------------------------------------------

def test_variant_gamma_examples():
    assert P.variant_gamma("SeqFDRv3", 1.0, 1.0) == pytest.approx(1.0)
    assert P.variant_gamma("SeqFDRv1", 2.0, 0.5) == pytest.approx(0.5)
    assert P.variant_gamma("SeqFDRv2", 3.0, 1.0) == pytest.approx(0.25)
    with pytest.raises(ValueError):
        P.variant_gamma("nope", 1.0, 1.0)


@pytest.mark.filterwarnings("ignore::proxsplit.schemes.ParameterWarning")
@pytest.mark.parametrize("kind", P.VARIANTS)
def test_configure_variant_shapes(problem, kind):
    spec = P.configure_variant(kind, problem)
    assert spec.theta == 1.0
    sc = spec.build(problem.n)
    expected = 3 if kind in ("GenBF", "ParDR") else 2
    assert sc.reduced_dim == expected * problem.n
    assert spec.gamma == pytest.approx(P.variant_gamma(kind, problem.L1, problem.delta))


def test_genbf_has_four_nonregular_terms(problem):
    spec = P.configure_variant("GenBF", problem)
    assert spec.A0 is None and len(spec.As) == 3
    assert spec.build(problem.n).reduced_dim == 3 * problem.n


def test_pardr_warns_without_forward_term(problem):
    with pytest.warns(ParameterWarning):
        P.configure_variant("ParDR", problem)


def test_lipschitz_conventions():
    d = P.synthetic_data()
    r, S = P.estimate(d)
    lam = np.linalg.eigvalsh(S)[-1]
    assert P.build_problem(r, S).L1 == pytest.approx(2 * lam)
    assert P.build_problem(r, S, convention="spectral").L1 == pytest.approx(lam)


def test_v2_v3_single_step_agree_to_second_order(problem):
    # same state in both blocks, away from every kink
    n = problem.n
    rng = np.random.default_rng(3)
    w = problem.w0 + 0.01 * rng.uniform(0.5, 1.0, n) * rng.choice([-1.0, 1.0], n)
    w -= (w.sum() - 1.0) / n
    W = np.concatenate([w, w])
    diffs = []
    for gamma in (1e-3, 1e-4):
        outs = []
        for kind in ("SeqFDRv2", "SeqFDRv3"):
            spec = P.configure_variant(kind, problem)
            spec.gamma = gamma
            sc = spec.build(n)
            new = sc.direct_step(W)
            outs.append((sc.parts(W)[-1], new[:n] + new[n:]))
        d = max(np.max(np.abs(a - b)) for a, b in zip(*outs))
        diffs.append(d)
    assert diffs[1] <= 1e-6
    # a tenfold smaller step shrinks the gap about a hundredfold
    assert diffs[1] <= diffs[0] / 50


# -- oracle -----------------------------------------------------------------------

def test_prox_nonsmooth_against_dense_solver(rng):
    n, gamma = 4, 0.7
    for _ in range(5):
        w0 = rng.dirichlet(np.ones(n))
        z = rng.standard_normal(n)
        p = P.prox_nonsmooth(gamma, w0, z)

        def obj(x):
            d = np.abs(x - w0)
            return gamma * (d.sum() + (d**1.5).sum()) + 0.5 * np.sum((x - z) ** 2)

        best = None
        for start in (np.full(n, 1.0 / n), w0, p):
            res = minimize(
                obj, start, method="SLSQP", bounds=[(0, 1)] * n,
                constraints=[{"type": "eq", "fun": lambda x: x.sum() - 1.0}],
                options={"ftol": 1e-14, "maxiter": 1000},
            )
            if best is None or res.fun < best.fun:
                best = res
        assert p.min() >= 0 and abs(p.sum() - 1) < 1e-12
        assert obj(p) <= best.fun + 1e-9
        np.testing.assert_allclose(p, best.x, atol=1e-4)


def test_reference_solution_is_optimal(problem):
    w = P.reference_solution(problem)
    assert w.min() >= -1e-12 and abs(w.sum() - 1.0) < 1e-10
    rng = np.random.default_rng(0)
    f0 = problem.objective(w)
    for _ in range(200):
        v = rng.dirichlet(np.ones(problem.n))
        t = rng.uniform(1e-4, 1e-2)
        assert problem.objective((1 - t) * w + t * v) >= f0 - 1e-12


def test_summary_json(problem):
    runs = {"SeqFDRv1": P.run_variant("SeqFDRv1", problem, max_iter=50)}
    s = json.loads(P.summary_json(runs))
    assert s["SeqFDRv1"]["iterations"] == 50
    assert s["SeqFDRv1"]["final_distance"] is None


def test_rolling_windows_chain_positions():
    data = P.synthetic_data(seed=1, n=5, T=60)
    out = list(P.rolling_windows(data, window=40, shift=10))
    assert [t for t, _, _ in out] == [0, 10, 20]
    for (_, _, w_prev), (_, prob, w) in zip(out, out[1:]):
        np.testing.assert_array_equal(prob.w0, w_prev)
        assert abs(w.sum() - 1.0) < 1e-10 and w.min() >= -1e-12
    with pytest.raises(InsufficientData):
        next(P.rolling_windows(data, window=61, shift=1))


def test_configure_variant_logs_both_constants(problem, caplog):
    with caplog.at_level("DEBUG", logger="proxsplit.portfolio"):
        P.configure_variant("SeqFDRv1", problem)
    assert "gradient L=" in caplog.text and "spectral L=" in caplog.text
