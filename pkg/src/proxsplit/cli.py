"""Command-line entry point ``proxsplit``.

Exit codes: 0 success, 1 property violation, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace

import numpy as np

from . import operators as ops
from .checks import fejer_report, random_cocoercive, run_suite
from .engine import StoppingRule, check_firm_nonexpansive
from .errors import ParseError, ProxSplitError
from .portfolio import (
    DEFAULT_DELTA,
    VARIANTS,
    configure_variant,
    load_returns,
    problem_from_data,
    reference_solution,
    run_benchmark,
    save_returns,
    summary,
    synthetic_data,
)
from .rates import drs_contraction_factor
from .schemes import (
    KINDS,
    SchemeConfig,
    build_cp,
    build_drs,
    build_fdr,
    build_parallel_fdr,
    build_relaxed_drs,
    build_sequential_fdr,
    run,
    validate_params,
)
EXIT_OK, EXIT_VIOLATION, EXIT_CONFIG, EXIT_IO = 0, 1, 2, 3

log = logging.getLogger("proxsplit")


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


# -- problem construction ------------------------------------------------------------

def _load_config(path):
    if path is None:
        return None
    try:
        with open(path) as fh:
            return SchemeConfig.from_json(fh.read())
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_IO) from exc


def builtin_scheme(cfg: SchemeConfig, seed=0, dim=10):
    """A seeded random instance of ``cfg.kind`` with defaults for missing steps."""
    rng = np.random.default_rng(seed)
    a, b = rng.standard_normal(dim), rng.standard_normal(dim)
    theta = cfg.theta
    if cfg.kind == "DRS":
        sigma = cfg.sigma or 1.0
        return build_drs(ops.scaled_identity(1.0, a), ops.l1_shifted(b), sigma, dim, theta), replace(cfg, sigma=sigma)
    if cfg.kind == "CP":
        L = rng.standard_normal((dim, dim))
        L /= np.linalg.norm(L, 2)
        tau = cfg.tau or 1.0
        sigma = cfg.sigma or 1.0 / (tau * np.linalg.norm(L, 2) ** 2)
        sc = build_cp(ops.scaled_identity(1.0, a), ops.l1_shifted(np.zeros(dim)), L, tau, sigma, theta)
        return sc, replace(cfg, tau=tau, sigma=sigma)
    if cfg.kind == "RelaxedDRS":
        gamma = cfg.gamma or 1.0
        A0 = ops.scaled_identity(1.0, a)
        K = rng.standard_normal((dim, dim))
        A1 = ops.linear_operator(np.eye(dim) + (K - K.T) / np.sqrt(dim), offset=b)
        mu0 = cfg.mu0 if cfg.mu0 else 1.0
        mu1 = cfg.mu1 if cfg.mu1 else 1.0
        sc = build_relaxed_drs(A0, A1, gamma, dim, theta, mu0, mu1)
        return sc, replace(cfg, gamma=gamma, mu0=mu0, mu1=mu1)
    C = random_cocoercive(rng, dim)
    gamma = cfg.gamma or 1.0 / C.beta
    if cfg.kind == "FDR":
        sc = build_fdr(ops.l1_shifted(a), ops.simplex_indicator(), C, gamma, dim, theta)
        return sc, replace(cfg, gamma=gamma, beta=C.beta)
    N = max(int(cfg.n_terms), 1) if cfg.n_terms else 2
    As = [ops.pow32_shifted(b) if i % 2 == 0 else ops.simplex_indicator() for i in range(N)]
    Cs = [C] + [random_cocoercive(rng, dim, 0.5) for _ in range(N - 1)]
    builder = build_parallel_fdr if cfg.kind == "ParallelFDR" else build_sequential_fdr
    sc = builder(ops.l1_shifted(a), As, Cs, gamma, dim, theta)
    return sc, replace(cfg, gamma=gamma, beta=C.beta, n_terms=N)


def _portfolio_problem(args):
    if args.data:
        try:
            data = load_returns(args.data)
        except OSError as exc:
            raise CliError(f"cannot read {args.data}: {exc}", EXIT_IO) from exc
    else:
        data = synthetic_data(args.seed, args.n, args.T)
    return problem_from_data(data, delta=args.delta, convention=args.lipschitz)


def _write(path, text):
    try:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc


def _ensure_out(path):
    try:
        os.makedirs(path, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create {path}: {exc}", EXIT_IO) from exc


# -- commands -------------------------------------------------------------------

def cmd_run(args) -> int:
    stop = StoppingRule(tol=args.tol, max_iter=args.max_iter)
    cfg = _load_config(args.config)
    name = args.scheme or (cfg.kind if cfg else None)
    if name is None:
        raise CliError("give --scheme or a --config with a 'kind'", EXIT_CONFIG)
    if name in VARIANTS:
        problem = _portfolio_problem(args)
        spec = configure_variant(name, problem)
        scheme = spec.build(problem.n)
        info = {"scheme": name, "gamma": spec.gamma, "n": problem.n}
    elif name in KINDS:
        cfg = replace(cfg, kind=name) if cfg else SchemeConfig(name)
        scheme, cfg = builtin_scheme(cfg, args.seed, args.dim)
        info = {"scheme": name, "config": cfg.to_dict()}
    else:
        raise CliError(f"unknown scheme {name!r}; choose from {KINDS + VARIANTS}", EXIT_CONFIG)

    result = run(scheme, mode=args.mode, stop=stop)
    _ensure_out(args.out)
    for mode, tr in (("direct", result.direct), ("block", result.block)):
        if tr is None:
            continue
        stem = os.path.join(args.out, f"{name}_{mode}")
        _write(stem + ".csv", tr.to_csv(timing=args.timing))
        _write(stem + ".json", tr.to_json(timing=args.timing))
        info[f"{mode}_iterations"] = tr.n_iter
        info[f"{mode}_residual"] = tr.final_residual
        info[f"{mode}_converged"] = tr.converged
    if result.max_deviation is not None:
        info["max_deviation"] = result.max_deviation
    code = EXIT_OK
    if args.monitor:
        reports = [check_firm_nonexpansive(scheme.block, 200, rng=args.seed)]
        if not scheme.full_direct:
            reports.append(fejer_report(scheme, np.zeros(scheme.reduced_dim)))
        info["monitors"] = [r.to_dict() for r in reports]
        if not all(r.ok for r in reports):
            code = EXIT_VIOLATION
    print(json.dumps(info, indent=2, default=float))
    return code


def cmd_compare(args) -> int:
    problem = _portfolio_problem(args)
    variants = args.variants or list(VARIANTS)
    bad = [v for v in variants if v not in VARIANTS]
    if bad:
        raise CliError(f"unknown variants {bad}; choose from {VARIANTS}", EXIT_CONFIG)
    w_ref = reference_solution(problem)
    runs = run_benchmark(variants, problem, args.max_iter, args.tol, w_ref)
    _ensure_out(args.out)
    for name, r in runs.items():
        _write(os.path.join(args.out, f"{name}.csv"), r.trace.to_csv(timing=args.timing))
    table = summary(runs)
    _write(os.path.join(args.out, "summary.json"), json.dumps(table, indent=2, sort_keys=True))
    print(json.dumps(table, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_rates(args) -> int:
    out = []
    for case in (1, 2, 3):
        try:
            out.append(drs_contraction_factor(case, args.sigma, args.mu, args.beta, args.side).to_dict())
        except ProxSplitError as exc:
            out.append({"case_id": case, "error": str(exc)})
    print(json.dumps(out, indent=2))
    return EXIT_OK if all("error" not in c for c in out if c["case_id"] != 2) else EXIT_CONFIG


def cmd_check(args) -> int:
    results = run_suite(seed=args.seed, n=args.dim, samples=args.samples)
    for r in results:
        print(r.line())
    if args.config:
        rep = validate_params(_load_config(args.config))
        print(json.dumps(rep.to_dict(), indent=2))
        if not rep.ok:
            return EXIT_CONFIG
    return EXIT_OK if all(r.ok for r in results) else EXIT_VIOLATION


def cmd_gendata(args) -> int:
    data = synthetic_data(args.seed, args.n, args.T)
    try:
        save_returns(data, args.out)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO) from exc
    print(args.out)
    return EXIT_OK


# -- parser ---------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="proxsplit", description="Degenerate proximal point splitting toolkit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def data_flags(sp):
        sp.add_argument("--data", help="returns CSV (header row, one column per asset)")
        sp.add_argument("--seed", type=int, default=42)
        sp.add_argument("--n", type=int, default=20, help="assets for synthetic data")
        sp.add_argument("--T", type=int, default=100, help="days for synthetic data")
        sp.add_argument("--delta", type=float, default=DEFAULT_DELTA)
        sp.add_argument("--lipschitz", choices=("gradient", "spectral"), default="gradient",
                        help="L for step sizes: 2 lambda_max(Sigma) or lambda_max(Sigma)")

    def run_flags(sp, tol):
        sp.add_argument("--out", default="out")
        sp.add_argument("--max-iter", type=int, default=100_000)
        sp.add_argument("--tol", type=float, default=tol)
        sp.add_argument("--timing", action="store_true", help="record wall-clock times in traces")

    r = sub.add_parser("run", help="run one scheme or benchmark variant")
    r.add_argument("--scheme", help=f"one of {', '.join(KINDS + VARIANTS)}")
    r.add_argument("--config", help="JSON scheme configuration")
    r.add_argument("--mode", choices=("direct", "block", "both"), default="direct")
    r.add_argument("--dim", type=int, default=10, help="dimension of built-in test problems")
    r.add_argument("--monitor", action="store_true", help="run invariant monitors")
    data_flags(r)
    run_flags(r, 1e-8)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="run benchmark variants against a reference solution")
    c.add_argument("--variants", nargs="*", help=f"subset of {', '.join(VARIANTS)}")
    data_flags(c)
    run_flags(c, 1e-10)
    c.set_defaults(func=cmd_compare)

    q = sub.add_parser("rates", help="print linear-rate certificates")
    q.add_argument("--sigma", type=float, default=1.0)
    q.add_argument("--mu", type=float, default=1.0)
    q.add_argument("--beta", type=float, default=1.0)
    q.add_argument("--side", choices=("a", "b"), default="a")
    q.set_defaults(func=cmd_rates)

    k = sub.add_parser("check", help="run the randomized property suite")
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--dim", type=int, default=10)
    k.add_argument("--samples", type=int, default=200)
    k.add_argument("--config", help="also validate this JSON scheme configuration")
    k.set_defaults(func=cmd_check)

    g = sub.add_parser("gendata", help="write a synthetic returns CSV")
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--n", type=int, default=20)
    g.add_argument("--T", type=int, default=100)
    g.add_argument("--out", default="returns.csv")
    g.set_defaults(func=cmd_gendata)
    return p


def _limit_threads():
    cap = os.environ.get("PROXSPLIT_THREADS")
    if cap:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def main(argv=None) -> int:
    _limit_threads()
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ProxSplitError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
