"""Randomized property suite shared by the command line and the tests."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import operators as ops
from .engine import (
    StoppingRule,
    check_firm_nonexpansive,
    check_woodbury,
    evaluate_T,
    monitor_fejer,
    ppp_iterate,
)
from .schemes import (
    build_cp,
    build_drs,
    build_fdr,
    build_parallel_fdr,
    build_relaxed_drs,
    build_sequential_fdr,
    run,
    run_reduced_block,
)


@dataclass
class PropertyResult:
    name: str
    ok: bool
    value: float
    bound: float
    invariant: str

    def line(self):
        status = "PASS" if self.ok else "FAIL"
        return f"{status} {self.name}: {self.value:.3e} (bound {self.bound:.1e}) [{self.invariant}]"


def random_monotone_matrix(rng, n, mu=0.0, skew=1.0):
    """``mu I + P + S`` with ``P`` PSD and ``S`` skew."""
    G = rng.standard_normal((n, n))
    K = rng.standard_normal((n, n))
    return mu * np.eye(n) + G @ G.T / n + skew * (K - K.T) / np.sqrt(n)


def random_cocoercive(rng, n, beta=1.0):
    """Symmetric PSD linear map with largest eigenvalue ``beta``."""
    G = rng.standard_normal((n, n))
    P = G @ G.T
    P *= beta / np.linalg.eigvalsh(P)[-1]
    return ops.linear_operator(0.5 * (P + P.T), offset=rng.standard_normal(n), name="coco")


def sample_schemes(rng, n=10, N=3):
    """One instance of every reduced scheme on random data, keyed by name."""
    A = ops.linear_operator(random_monotone_matrix(rng, n, mu=0.5), offset=rng.standard_normal(n))
    B = ops.l1_shifted(rng.standard_normal(n))
    Cq = random_cocoercive(rng, n)
    strong = ops.scaled_identity(1.0, rng.standard_normal(n))
    gamma = 1.0 / Cq.beta
    extra = [ops.pow32_shifted(rng.standard_normal(n)), ops.simplex_indicator(), A][:N]
    cs = [Cq] + [random_cocoercive(rng, n, 0.5) for _ in range(N - 1)]
    return {
        "DRS": build_drs(A, B, 0.8, n),
        "RelaxedDRS": build_relaxed_drs(strong, A, 1.0, n, theta=1.5),
        "FDR": build_fdr(B, A, Cq, gamma, n),
        "ParallelFDR": build_parallel_fdr(B, extra, cs, gamma, n),
        "SequentialFDR": build_sequential_fdr(B, extra, cs, gamma, n),
    }


def reduction_gap(scheme, w0, iters=200):
    """``max_k |w^k - C^T u^k|`` between the reduced block iteration and the full PPP."""
    stop = StoppingRule(tol=0.0, max_iter=iters)
    red = run_reduced_block(scheme, w0, stop)
    full = ppp_iterate(scheme.block, scheme.lift(w0), scheme.lambda_schedule(), stop, store_iterates=True)
    F = scheme.factor
    return max(
        np.linalg.norm(w - F.c_matrix.T @ u) for w, u in zip(red.iterates, full.iterates)
    )


def fejer_report(scheme, w0, iters=300):
    """Fejer monotonicity of the full iterates against a converged fixed point."""
    ref = run(scheme, w0, stop=StoppingRule(tol=1e-13, max_iter=200_000, relative=False))
    u_star = scheme.lift(ref.direct.final)
    u_star = evaluate_T(scheme.block, u_star)  # a fixed point up to the residual
    tr = ppp_iterate(
        scheme.block, scheme.lift(w0), scheme.lambda_schedule(),
        StoppingRule(tol=0.0, max_iter=iters), store_iterates=True,
    )
    return monitor_fejer(tr, scheme.block.m, u_star, slack=1e-10)


def n1_reduction_gap(rng, n=6, iters=100):
    """Largest per-iteration gap between sequential(N=1), parallel(N=1) and FDR."""
    A0 = ops.l1_shifted(rng.standard_normal(n))
    A1 = ops.linear_operator(random_monotone_matrix(rng, n, 0.2))
    Cq = random_cocoercive(rng, n)
    g = 1.5 / Cq.beta
    f = build_fdr(A0, A1, Cq, g, n)
    p = build_parallel_fdr(A0, [A1], [Cq], g, n)
    s = build_sequential_fdr(A0, [A1], [Cq], g, n)
    w0 = rng.standard_normal(n)
    stop = StoppingRule(tol=0.0, max_iter=iters)
    tf, tp, ts = (run(x, w0, stop=stop, store_iterates=True).direct for x in (f, p, s))
    return max(
        max(np.max(np.abs(a - b)), np.max(np.abs(a - c)))
        for a, b, c in zip(tf.iterates, tp.iterates, ts.iterates)
    )


def fdr_drs_gap(rng, n=6, iters=100):
    A0 = ops.l1_shifted(rng.standard_normal(n))
    A1 = ops.linear_operator(random_monotone_matrix(rng, n, 0.2))
    sigma = 0.9
    f = build_fdr(A0, A1, ops.zero_operator(), sigma, n)
    d = build_drs(A0, A1, sigma, n)
    w0 = rng.standard_normal(n)
    stop = StoppingRule(tol=0.0, max_iter=iters)
    a = run(f, w0, stop=stop, store_iterates=True).direct.iterates
    b = run(d, w0, stop=stop, store_iterates=True).direct.iterates
    return max(np.max(np.abs(x - y)) for x, y in zip(a, b))


def cp_drs_gap(rng, n=6, iters=100):
    """x-iterates of CP with ``L = I``, ``tau = sigma = 1`` against DRS with ``sigma = 1``."""
    A = ops.l1_shifted(rng.standard_normal(n))
    B = ops.linear_operator(random_monotone_matrix(rng, n, 0.2))
    cp = build_cp(A, B, np.eye(n), 1.0, 1.0)
    drs = build_drs(A, B, 1.0, n)
    u0 = rng.standard_normal(2 * n)
    stop = StoppingRule(tol=0.0, max_iter=iters)
    a = run(cp, u0, stop=stop, store_iterates=True).direct.iterates
    b = ppp_iterate(drs.block, u0, drs.lambda_schedule(), stop, store_iterates=True).iterates
    return max(np.max(np.abs(x[:n] - y[:n])) for x, y in zip(a, b))


def run_suite(seed=0, n=10, samples=200):
    """Run every property; returns a list of :class:`PropertyResult`."""
    rng = np.random.default_rng(seed)
    out = []
    schemes = sample_schemes(rng, n)
    for name, sc in schemes.items():
        w0 = rng.standard_normal(sc.reduced_dim)
        gap = reduction_gap(sc, w0)
        bound = 1e-10 * (1.0 + np.linalg.norm(sc.lift(w0)))
        out.append(PropertyResult(f"reduction[{name}]", gap <= bound, gap, bound, "w^k = C^T u^k"))
        rep = check_firm_nonexpansive(sc.block, samples, rng=rng)
        out.append(
            PropertyResult(f"firm_nonexpansive[{name}]", rep.ok, max(rep.worst, 0.0), 1e-9,
                           "T is M-firmly nonexpansive")
        )
        fej = fejer_report(sc, w0)
        out.append(
            PropertyResult(f"fejer[{name}]", fej.ok, max(fej.worst, 0.0), 1e-10,
                           "M-Fejer monotone iterates")
        )
    worst = 0.0
    for _ in range(100):
        d = int(rng.integers(1, 9))
        r = int(rng.integers(1, d + 1))
        G = rng.standard_normal((d, d))
        worst = max(worst, check_woodbury(G @ G.T + 0.1 * np.eye(d), rng.standard_normal((d, r))))
    out.append(PropertyResult("woodbury", worst <= 1e-9, worst, 1e-9, "Woodbury-Moreau identity"))
    for label, fn in (("n1_reduction", n1_reduction_gap), ("fdr_c0_is_drs", fdr_drs_gap),
                      ("cp_identity_is_drs", cp_drs_gap)):
        g = fn(rng)
        out.append(PropertyResult(label, g <= 1e-12, g, 1e-12, "structural reduction"))
    return out
