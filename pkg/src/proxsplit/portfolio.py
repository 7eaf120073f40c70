"""Mean-variance portfolio selection with transaction costs.

Problem::

    min_w  w^T Sigma w - r^T w + (delta/2)|w|^2
           + sum_i |w_i - w0_i| + sum_i |w_i - w0_i|^{3/2}   s.t.  w in simplex

The smooth part is handled by forward steps (or its prox for ParDR), the three
nonsmooth terms by their closed-form proximal maps.
"""

from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .engine import StoppingRule
from .errors import InsufficientData, OracleDisagreement, ParseError
from .operators import (
    OperatorBlock,
    QuadraticFunction,
    l1_shifted,
    pow32_shifted,
    prox_l1_shifted,
    prox_pow32,
    quadratic_lipschitz,
    scaled,
    scaled_identity,
    simplex_indicator,
)
from .schemes import (
    SchemeAssembly,
    build_parallel_fdr,
    build_sequential_fdr,
    run,
    validate_params,
)

VARIANTS = ("SeqFDRv1", "SeqFDRv2", "SeqFDRv3", "ParFDR", "GenBF", "ParDR")
DEFAULT_DELTA = 0.1

log = logging.getLogger(__name__)


# -- data -----------------------------------------------------------------------

@dataclass(frozen=True)
class ReturnsData:
    """Daily returns, one row per day and one column per asset."""

    returns: np.ndarray
    asset_names: Optional[tuple] = None

    def __post_init__(self):
        R = np.array(self.returns, dtype=float)
        if R.ndim != 2 or R.shape[1] < 1:
            raise ValueError(f"returns must be a T x n matrix with n >= 1, got {R.shape}")
        if not np.all(np.isfinite(R)):
            raise ValueError("returns contain non-finite entries")
        R.setflags(write=False)
        object.__setattr__(self, "returns", R)
        if self.asset_names is not None:
            names = tuple(str(a) for a in self.asset_names)
            if len(names) != R.shape[1]:
                raise ValueError(f"{len(names)} names for {R.shape[1]} assets")
            object.__setattr__(self, "asset_names", names)

    @property
    def n_days(self) -> int:
        return self.returns.shape[0]

    @property
    def n_assets(self) -> int:
        return self.returns.shape[1]


def load_returns(path) -> ReturnsData:
    """Read a returns CSV: a header row of asset names, then one row per day."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError("empty file")
    header = [h.strip() for h in rows[0]]
    if not header or any(h == "" for h in header):
        raise ParseError("header has empty column names", row=0)
    data = []
    for i, row in enumerate(rows[1:], start=1):
        if not row:
            continue
        if len(row) != len(header):
            raise ParseError(f"expected {len(header)} cells, found {len(row)}", row=i)
        vals = []
        for j, cell in enumerate(row, start=1):
            cell = cell.strip()
            if cell == "":
                raise ParseError("missing value", row=i, col=j)
            try:
                v = float(cell)
            except ValueError:
                raise ParseError(f"non-numeric cell {cell!r}", row=i, col=j) from None
            if not np.isfinite(v):
                raise ParseError(f"non-finite cell {cell!r}", row=i, col=j)
            vals.append(v)
        data.append(vals)
    if not data:
        raise ParseError("no data rows")
    return ReturnsData(np.array(data), tuple(header))


def save_returns(data: ReturnsData, path) -> None:
    """Write returns so that :func:`load_returns` recovers them bit for bit."""
    names = data.asset_names or tuple(f"asset{j:02d}" for j in range(data.n_assets))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(names)
        for row in data.returns:
            writer.writerow([repr(float(v)) for v in row])


def estimate(data: ReturnsData):
    """Column means and the unbiased sample covariance, clipped to PSD."""
    R = data.returns
    if R.shape[0] < 2:
        raise InsufficientData(f"need at least 2 days of returns, got {R.shape[0]}")
    r = R.mean(axis=0)
    X = R - r
    S = X.T @ X / (R.shape[0] - 1)
    S = 0.5 * (S + S.T)
    ev, V = np.linalg.eigh(S)
    if ev[0] < 0:
        S = (V * np.maximum(ev, 0.0)) @ V.T
        S = 0.5 * (S + S.T)
    return r, S


def synthetic_data(seed=42, n=20, T=100, n_factors=3) -> ReturnsData:
    """Factor-model returns with widely spread means, deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    mu = rng.normal(0.0, 2.0, size=n)
    loadings = rng.normal(0.0, 1.0, size=(n, n_factors))
    factors = rng.normal(0.0, 1.0, size=(T, n_factors))
    noise = rng.normal(0.0, 1.0, size=(T, n))
    R = mu + factors @ loadings.T + noise
    return ReturnsData(R, tuple(f"asset{j:02d}" for j in range(n)))


# -- problem --------------------------------------------------------------------

@dataclass
class PortfolioProblem:
    """Smooth part ``f = f1 + f2`` with ``f1 = w^T Sigma w - r^T w``, ``f2 = (delta/2)|w|^2``."""

    Sigma: np.ndarray
    r: np.ndarray
    delta: float = DEFAULT_DELTA
    w0: Optional[np.ndarray] = None
    convention: str = "gradient"
    _f: Optional[QuadraticFunction] = field(default=None, repr=False)

    def __post_init__(self):
        S = np.asarray(self.Sigma, dtype=float)
        n = S.shape[0]
        if S.shape != (n, n):
            raise ValueError("Sigma must be square")
        if np.abs(S - S.T).max(initial=0.0) > 1e-10 * max(np.abs(S).max(initial=0.0), 1.0):
            raise ValueError("Sigma is not symmetric")
        ev = np.linalg.eigvalsh(S) if n else np.zeros(0)
        if n and ev[0] < -1e-10 * max(ev[-1], 1.0):
            raise ValueError("Sigma is not PSD")
        if not self.delta > 0:
            raise ValueError("delta must be positive")
        self.Sigma = S
        self.r = np.asarray(self.r, dtype=float).reshape(-1)
        if self.r.shape != (n,):
            raise ValueError("r and Sigma sizes differ")
        self.w0 = np.full(n, 1.0 / n) if self.w0 is None else np.asarray(self.w0, dtype=float)
        self._f = QuadraticFunction(self.Sigma, self.r, self.delta)

    @property
    def n(self) -> int:
        return self.r.size

    @property
    def f(self) -> QuadraticFunction:
        return self._f

    @property
    def L1(self) -> float:
        """Step-size constant of ``f1`` under the selected convention."""
        return quadratic_lipschitz(self.Sigma, 0.0, self.convention)

    @property
    def L_f(self) -> float:
        """True Lipschitz constant ``2 lambda_max(Sigma) + delta`` of ``grad f``."""
        return quadratic_lipschitz(self.Sigma, self.delta, "gradient")

    def objective(self, w) -> float:
        w = np.asarray(w, dtype=float)
        d = np.abs(w - self.w0)
        return self.f.value(w) + float(d.sum() + (d**1.5).sum())

    # operator blocks
    def g0(self) -> OperatorBlock:
        return l1_shifted(self.w0)

    def g1(self) -> OperatorBlock:
        return pow32_shifted(self.w0)

    def g2(self) -> OperatorBlock:
        return simplex_indicator()

    def grad_f1(self) -> OperatorBlock:
        return QuadraticFunction(self.Sigma, self.r, 0.0).operator()

    def grad_f2(self) -> OperatorBlock:
        return scaled_identity(self.delta)

    def grad_f(self) -> OperatorBlock:
        return self.f.operator()


def build_problem(r, Sigma, delta=DEFAULT_DELTA, w0=None, convention="gradient") -> PortfolioProblem:
    return PortfolioProblem(Sigma, r, delta, w0, convention)


def problem_from_data(data: ReturnsData, delta=DEFAULT_DELTA, w0=None, convention="gradient"):
    r, S = estimate(data)
    return build_problem(r, S, delta, w0, convention)


# -- variants -------------------------------------------------------------------

def variant_gamma(kind, L, delta):
    """Step size of each variant in terms of ``L`` (for ``f1``) and ``delta``."""
    if kind == "SeqFDRv1":
        return min(1.0 / L, 1.0 / delta)
    if kind in ("SeqFDRv2", "ParFDR", "ParDR"):
        return 1.0 / (L + delta)
    if kind == "SeqFDRv3":
        return 2.0 / (L + delta)
    if kind == "GenBF":
        return 3.0 / (L + delta)
    raise ValueError(f"unknown variant {kind!r}; expected one of {VARIANTS}")


@dataclass
class VariantSpec:
    """Everything needed to build one benchmark variant."""

    name: str
    topology: str
    A0: Optional[OperatorBlock]
    As: list
    Cs: list
    gamma: float
    primal_index: int
    theta: float = 1.0

    def build(self, n) -> SchemeAssembly:
        builder = build_sequential_fdr if self.topology == "sequential" else build_parallel_fdr
        return builder(
            self.A0, self.As, self.Cs, self.gamma, n, theta=self.theta, primal_index=self.primal_index
        )

    @property
    def config(self):
        beta = max((c.beta for c in self.Cs if c is not None), default=0.0)
        from .schemes import SchemeConfig

        kind = "SequentialFDR" if self.topology == "sequential" else "ParallelFDR"
        return SchemeConfig(kind, gamma=self.gamma, theta=self.theta, beta=beta, n_terms=len(self.As))


def configure_variant(kind, problem: PortfolioProblem) -> VariantSpec:
    """Operator roles and step size of a benchmark variant (``theta = 1`` throughout)."""
    L, d = problem.L1, problem.delta
    gamma = variant_gamma(kind, L, d)
    log.debug(
        "%s: gamma=%.6g with L=%.6g (%s); gradient L=%.6g, spectral L=%.6g",
        kind, gamma, L, problem.convention,
        quadratic_lipschitz(problem.Sigma, 0.0, "gradient"),
        quadratic_lipschitz(problem.Sigma, 0.0, "spectral"),
    )
    g0, g1, g2 = problem.g0(), problem.g1(), problem.g2()
    if kind == "SeqFDRv1":
        spec = VariantSpec(kind, "sequential", g0, [g1, g2], [problem.grad_f1(), problem.grad_f2()], gamma, 2)
    elif kind == "SeqFDRv2":
        spec = VariantSpec(kind, "sequential", g0, [g1, g2], [problem.grad_f(), None], gamma, 2)
    elif kind == "SeqFDRv3":
        half = scaled(problem.grad_f(), 0.5)
        spec = VariantSpec(kind, "sequential", g0, [g1, g2], [half, half], gamma, 2)
    elif kind == "ParFDR":
        spec = VariantSpec(kind, "parallel", g0, [g1, g2], [problem.grad_f(), None], gamma, 2)
    elif kind == "GenBF":
        third = scaled(problem.grad_f(), 1.0 / 3.0)
        spec = VariantSpec(kind, "parallel", None, [g0, g1, g2], [third] * 3, gamma, 3)
    else:  # ParDR: f enters through its prox
        spec = VariantSpec(kind, "parallel", g0, [g1, g2, problem.grad_f()], [None] * 3, gamma, 2)
    validate_params(spec.config).raise_first()
    return spec


def rolling_windows(data: ReturnsData, window, shift, delta=DEFAULT_DELTA, w0=None,
                    convention="gradient", solve=None):
    """Re-solve on windows ``[t, t + window)`` every ``shift`` days.

    Each window starts from the previous window's solution as its current
    position ``w0``. ``solve(problem) -> w`` defaults to :func:`reference_solution`.
    Yields ``(start_day, problem, w)``.
    """
    if window < 2 or shift < 1:
        raise InsufficientData(f"need window >= 2 and shift >= 1, got {window}, {shift}")
    if data.n_days < window:
        raise InsufficientData(f"{data.n_days} days cannot fill a window of {window}")
    solve = solve or reference_solution
    for t in range(0, data.n_days - window + 1, shift):
        chunk = ReturnsData(data.returns[t:t + window], data.asset_names)
        problem = problem_from_data(chunk, delta, w0, convention)
        w0 = solve(problem)
        yield t, problem, w0


# -- reference oracle -------------------------------------------------------------

def prox_nonsmooth(gamma, w0, z, iters=200):
    """Prox of ``gamma (sum|p - w0| + sum|p - w0|^{3/2}) + indicator of the simplex``.

    For a multiplier ``lam`` the separable minimizer over ``p >= 0`` is
    ``max(w0 + prox_{pow}(soft(z - lam - w0)), 0)``; ``lam`` is found by bisection
    on ``sum p = 1``.
    """
    w0 = np.asarray(w0, dtype=float)
    z = np.asarray(z, dtype=float)

    def p_of(lam):
        t = prox_l1_shifted(gamma, w0, z - lam)
        return np.maximum(prox_pow32(gamma, w0, t), 0.0)

    lo, hi = np.min(z) - 1.0, np.max(z) + 1.0
    while p_of(lo).sum() < 1.0:
        lo -= 2.0 * (hi - lo)
    while p_of(hi).sum() > 1.0:
        hi += 2.0 * (hi - lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if p_of(mid).sum() > 1.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * max(1.0, abs(mid)):
            break
    return p_of(0.5 * (lo + hi))


def proximal_gradient_solution(problem: PortfolioProblem, tol=1e-10, max_iter=200_000):
    """Proximal gradient on ``f`` with the exact prox of the nonsmooth part.

    Stops once the certified error bound ``|w+ - w| L_f / mu_f`` falls below ``tol``.
    """
    L = problem.L_f
    mu = problem.f.mu
    g = 1.0 / L
    w = np.full(problem.n, 1.0 / problem.n)
    for _ in range(max_iter):
        w_new = prox_nonsmooth(g, problem.w0, w - g * problem.f.gradient(w))
        step = np.linalg.norm(w_new - w)
        w = w_new
        if step * L / mu <= tol:
            break
    return w


def reference_solution(problem: PortfolioProblem, tol=1e-9, residual=1e-11, max_iter=500_000):
    """Minimizer from a conservative parallel FDR run, cross-checked by proximal gradient.

    Raises :class:`OracleDisagreement` when the two solutions differ by more
    than ``10 * tol``.
    """
    spec = configure_variant("ParFDR", problem)
    spec.gamma *= 0.5
    scheme = spec.build(problem.n)
    res = run(scheme, stop=StoppingRule(tol=residual, max_iter=max_iter, relative=False))
    w_fdr = scheme.primal_from_reduced(res.direct.final)
    w_pg = proximal_gradient_solution(problem, tol=tol)
    gap = float(np.linalg.norm(w_fdr - w_pg))
    if gap > 10 * tol:
        raise OracleDisagreement(f"FDR and proximal gradient solutions differ by {gap:.3e}")
    return w_fdr


# -- benchmark ------------------------------------------------------------------

@dataclass
class BenchmarkRun:
    name: str
    trace: object
    w: np.ndarray
    residual: float
    iterations_to_1e6: Optional[int]
    final_distance: Optional[float]
    gamma: float


def _iterations_to(trace, level=1e-6):
    for k, d in zip(trace.k, trace.dist_ref):
        if d is not None and d <= level:
            return int(k)
    return None


def run_variant(kind, problem, w_ref=None, max_iter=100_000, tol=1e-10) -> BenchmarkRun:
    spec = configure_variant(kind, problem)
    scheme = spec.build(problem.n)
    dist = None if w_ref is None else (lambda x: float(np.linalg.norm(x - w_ref)))
    res = run(scheme, stop=StoppingRule(tol=tol, max_iter=max_iter, relative=False), distance=dist)
    tr = res.direct
    tr.label = kind
    w = scheme.primal_from_reduced(tr.final)
    return BenchmarkRun(
        kind,
        tr,
        w,
        tr.final_residual,
        _iterations_to(tr),
        tr.dist_ref[-1],
        spec.gamma,
    )


def _threads():
    try:
        return max(1, int(os.environ.get("PROXSPLIT_THREADS", "1")))
    except ValueError:
        return 1


def run_benchmark(variants: Sequence = VARIANTS, problem=None, max_iter=100_000, tol=1e-10, w_ref=None):
    """Run every variant against a shared reference point; returns ``{name: BenchmarkRun}``."""
    if problem is None:
        problem = problem_from_data(synthetic_data())
    if w_ref is None:
        w_ref = reference_solution(problem)
    jobs = list(variants)
    threads = min(_threads(), len(jobs))
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            out = list(ex.map(lambda k: run_variant(k, problem, w_ref, max_iter, tol), jobs))
    else:
        out = [run_variant(k, problem, w_ref, max_iter, tol) for k in jobs]
    return {r.name: r for r in out}


def summary(runs: dict) -> dict:
    return {
        name: {
            "iterations_to_1e-6": r.iterations_to_1e6,
            "final_distance": r.final_distance,
            "final_residual": r.residual,
            "iterations": r.trace.n_iter,
            "gamma": r.gamma,
        }
        for name, r in runs.items()
    }


def summary_json(runs: dict) -> str:
    return json.dumps(summary(runs), indent=2, sort_keys=True)
