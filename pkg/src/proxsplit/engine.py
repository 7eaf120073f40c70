"""Degenerate proximal point iterations and their reduced counterparts.

The resolvent ``T = (M + A)^{-1} M`` is evaluated by forward substitution over
a block lower-triangular ``M + A``. Each diagonal block has the form
``c I + s A_i`` and is inverted through ``J_{(s/c) A_i}``; each strictly lower
coupling is linear, optionally plus a single-valued forward operator.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, InvalidSchedule
from .operators import OperatorBlock
from .spaces import (
    BlockLayout,
    Factorization,
    Preconditioner,
    apply_c,
    apply_cstar,
    m_seminorm,
)

TRACE_COLUMNS = ("k", "residual", "m_residual", "dist_ref", "time_s")


# -- assembly -----------------------------------------------------------------

@dataclass(frozen=True)
class DiagonalBlock:
    """Diagonal block ``c I + scale * op`` of ``M + A`` (``op=None`` means ``c I``)."""

    c: float
    op: Optional[OperatorBlock] = None
    scale: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError(f"diagonal shift must be positive, got {self.c}")

    def solve(self, z):
        if self.op is None:
            return z / self.c
        return self.op.resolvent(self.scale / self.c, z / self.c)


@dataclass(frozen=True)
class Coupling:
    """Contribution ``coef * u_col + fscale * forward(u_col)`` to block row ``row``.

    ``coef`` is a scalar (times identity) or a dense matrix.
    """

    row: int
    col: int
    coef: object = 0.0
    forward: Optional[OperatorBlock] = None
    fscale: float = 0.0

    def __post_init__(self):
        if self.col >= self.row:
            raise ValueError("couplings must be strictly lower triangular")

    def apply(self, x):
        if np.isscalar(self.coef):
            out = self.coef * x if self.coef != 0 else np.zeros_like(x)
        else:
            out = self.coef @ x
        if self.forward is not None and self.fscale != 0:
            out = out + self.fscale * self.forward.forward(x)
        return out


@dataclass(frozen=True)
class BlockAssembly:
    """Block lower-triangular ``M + A`` together with the preconditioner ``M``."""

    m: Preconditioner
    diag: tuple
    couplings: tuple = ()

    def __post_init__(self):
        layout = self.m.block_layout
        if len(self.diag) != layout.n_blocks:
            raise DimensionMismatch(
                f"{len(self.diag)} diagonal blocks for a layout of {layout.n_blocks}"
            )
        rows = [[] for _ in range(layout.n_blocks)]
        for cp in self.couplings:
            if not (0 <= cp.col < cp.row < layout.n_blocks):
                raise DimensionMismatch(f"coupling ({cp.row}, {cp.col}) outside the layout")
            rows[cp.row].append(cp)
        object.__setattr__(self, "diag", tuple(self.diag))
        object.__setattr__(self, "couplings", tuple(self.couplings))
        object.__setattr__(self, "_rows", rows)

    @property
    def layout(self) -> BlockLayout:
        return self.m.block_layout

    @property
    def dim(self) -> int:
        return self.layout.total_dim

    def solve(self, rhs) -> np.ndarray:
        """Return ``u`` with ``rhs in (M + A) u``."""
        layout = self.layout
        rhs_blocks = layout.split(rhs)
        out = []
        for i, blk in enumerate(self.diag):
            z = rhs_blocks[i]
            for cp in self._rows[i]:
                z = z - cp.apply(out[cp.col])
            out.append(np.asarray(blk.solve(z), dtype=float))
        return layout.join(out)


def _flat(u) -> np.ndarray:
    return np.asarray(u, dtype=float).reshape(-1)


def evaluate_T(asm: BlockAssembly, u) -> np.ndarray:
    """``T u = (M + A)^{-1} M u``."""
    u = _flat(u)
    if u.shape[0] != asm.dim:
        raise DimensionMismatch(f"iterate of length {u.shape[0]}, assembly dimension {asm.dim}")
    return asm.solve(asm.m.matrix @ u)


def evaluate_Ttilde(asm: BlockAssembly, F: Factorization, w) -> np.ndarray:
    """``C^T (M + A)^{-1} C w``."""
    return apply_cstar(F, asm.solve(apply_c(F, w)))


# -- schedules and stopping -----------------------------------------------------

@dataclass(frozen=True)
class RelaxationSchedule:
    """Relaxation parameters ``lambda_k``.

    ``kind='constant'`` uses ``values[0]`` forever; ``kind='sequence'`` walks
    through ``values`` and repeats the last entry. ``upper`` is the admissible
    bound (2 for the plain iteration, larger for rescaled parameters).
    """

    kind: str = "constant"
    values: tuple = (1.0,)
    upper: float = 2.0
    divergence_declared: bool = False

    def __post_init__(self):
        vals = tuple(float(v) for v in np.atleast_1d(self.values))
        object.__setattr__(self, "values", vals)
        if self.kind not in ("constant", "sequence"):
            raise InvalidSchedule(f"unknown schedule kind {self.kind!r}")
        if not vals:
            raise InvalidSchedule("empty schedule")
        bad = [v for v in vals if not (0.0 <= v <= self.upper) or not np.isfinite(v)]
        if bad:
            raise InvalidSchedule(f"relaxation values outside [0, {self.upper}]: {bad[:3]}")

    @classmethod
    def constant(cls, value, upper=2.0):
        return cls("constant", (value,), upper)

    @classmethod
    def sequence(cls, values, upper=2.0, divergence_declared=False):
        return cls("sequence", tuple(values), upper, divergence_declared)

    def __call__(self, k: int) -> float:
        if self.kind == "constant":
            return self.values[0]
        return self.values[min(k, len(self.values) - 1)]

    @property
    def certifies_convergence(self) -> bool:
        if self.kind == "constant":
            # the stored upper bound carries a 1e-12 admission tolerance
            return 0.0 < self.values[0] and self.values[0] * (1.0 + 1e-12) < self.upper
        return self.divergence_declared

    def scaled(self, factor: float, upper: Optional[float] = None) -> "RelaxationSchedule":
        up = self.upper * factor if upper is None else upper
        return RelaxationSchedule(
            self.kind, tuple(factor * v for v in self.values), up, self.divergence_declared
        )


@dataclass(frozen=True)
class StoppingRule:
    """Stop when ``|Tu - u| <= tol * (1 + |u|)`` (``relative``) or after ``max_iter`` steps."""

    tol: float = 1e-8
    max_iter: int = 100_000
    relative: bool = True

    def satisfied(self, residual: float, norm_u: float) -> bool:
        bound = self.tol * (1.0 + norm_u) if self.relative else self.tol
        return residual <= bound


# -- traces -------------------------------------------------------------------

@dataclass
class IterationTrace:
    """Per-iteration residuals of a fixed-point run.

    Row ``k`` describes iterate ``u^k``: ``residual = |T u^k - u^k|``,
    ``m_residual`` the same in the ``M``-seminorm and ``dist_ref`` an optional
    distance to a reference point.
    """

    k: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    m_residual: list = field(default_factory=list)
    dist_ref: list = field(default_factory=list)
    time_s: list = field(default_factory=list)
    final: Optional[np.ndarray] = None
    final_image: Optional[np.ndarray] = None
    iterates: Optional[list] = None
    converged: bool = False
    label: str = ""

    @property
    def n_iter(self) -> int:
        """Number of updates performed."""
        return max(len(self.k) - 1, 0)

    @property
    def final_residual(self) -> float:
        return self.residual[-1] if self.residual else 0.0

    def rows(self, timing=True):
        for i in range(len(self.k)):
            d = self.dist_ref[i]
            yield (
                self.k[i],
                repr(self.residual[i]),
                repr(self.m_residual[i]),
                "" if d is None else repr(d),
                repr(self.time_s[i]) if timing else "",
            )

    def to_csv(self, path=None, timing=True) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        writer.writerows(self.rows(timing))
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def to_dict(self, timing=True) -> dict:
        return {
            "label": self.label,
            "converged": self.converged,
            "iterations": self.n_iter,
            "final_residual": self.final_residual,
            "columns": {
                "k": list(self.k),
                "residual": list(self.residual),
                "m_residual": list(self.m_residual),
                "dist_ref": list(self.dist_ref),
                "time_s": list(self.time_s) if timing else None,
            },
            "final": None if self.final is None else self.final.tolist(),
        }

    def to_json(self, path=None, timing=True) -> str:
        text = json.dumps(self.to_dict(timing), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def fixed_point_iterate(
    T: Callable,
    x0,
    sched: RelaxationSchedule,
    stop: StoppingRule = StoppingRule(),
    metric: Optional[Callable] = None,
    distance: Optional[Callable] = None,
    store_iterates: bool = False,
    label: str = "",
) -> IterationTrace:
    """Krasnoselskii-Mann loop ``x <- x + lambda_k (T x - x)``.

    ``metric(d)`` gives the seminorm of a difference (defaults to the
    Euclidean norm) and ``distance(x, Tx)`` fills the ``dist_ref`` column.
    """
    x = _flat(x0).copy()
    trace = IterationTrace(label=label)
    if store_iterates:
        trace.iterates = []
    t0 = time.perf_counter()
    if x.size == 0:
        trace.final, trace.final_image, trace.converged = x, x, True
        return trace
    k = 0
    while True:
        tx = _flat(T(x))
        d = tx - x
        res = float(np.linalg.norm(d))
        trace.k.append(k)
        trace.residual.append(res)
        trace.m_residual.append(res if metric is None else float(metric(d)))
        trace.dist_ref.append(None if distance is None else float(distance(x, tx)))
        trace.time_s.append(time.perf_counter() - t0)
        if store_iterates:
            trace.iterates.append(x.copy())
        if stop.satisfied(res, float(np.linalg.norm(x))):
            trace.converged = True
            break
        if k >= stop.max_iter:
            break
        x = x + sched(k) * d
        k += 1
    trace.final = x
    trace.final_image = tx
    return trace


def ppp_iterate(asm, u0, sched, stop=StoppingRule(), distance=None, store_iterates=False):
    """Degenerate preconditioned proximal point iteration on the full space."""
    M = asm.m.matrix
    return fixed_point_iterate(
        lambda u: evaluate_T(asm, u),
        u0,
        sched,
        stop,
        metric=lambda d: m_seminorm(M, d),
        distance=distance,
        store_iterates=store_iterates,
        label="ppp",
    )


def rppp_iterate(asm, F, w0, sched, stop=StoppingRule(), distance=None, store_iterates=False):
    """Reduced iteration ``w <- w + lambda_k (T~ w - w)`` in the space of ``C^T``."""
    w0 = _flat(w0)
    if w0.shape[0] != F.rank:
        raise DimensionMismatch(f"reduced start of length {w0.shape[0]}, rank is {F.rank}")
    return fixed_point_iterate(
        lambda w: evaluate_Ttilde(asm, F, w),
        w0,
        sched,
        stop,
        distance=distance,
        store_iterates=store_iterates,
        label="rppp",
    )


# -- monitors -----------------------------------------------------------------

@dataclass
class MonitorReport:
    """Outcome of a sampled invariant check; ``worst`` is the largest violation."""

    name: str
    ok: bool
    worst: float
    samples: int
    violations: int = 0
    detail: str = ""

    def to_dict(self):
        return dict(self.__dict__)


def monitor_fejer(trace: IterationTrace, M, u_ref, slack=1e-10, residual_tol=None):
    """Check ``|u^{k+1} - u_ref|_M <= |u^k - u_ref|_M + slack`` along a stored trace."""
    if trace.iterates is None:
        raise ValueError("trace was recorded without iterates")
    m = M.matrix if isinstance(M, Preconditioner) else np.asarray(M, dtype=float)
    u_ref = _flat(u_ref)
    dists = np.array([m_seminorm(m, u - u_ref) for u in trace.iterates])
    inc = np.diff(dists)
    worst = float(inc.max(initial=-np.inf))
    n_bad = int(np.sum(inc > slack))
    ok = n_bad == 0
    detail = ""
    if residual_tol is not None and trace.m_residual:
        if trace.m_residual[-1] > residual_tol:
            ok = False
            detail = f"final M-residual {trace.m_residual[-1]:.3e} above {residual_tol:.1e}"
    return MonitorReport("fejer", ok, worst, len(inc), n_bad, detail)


def _pairs(rng, dim, samples, scale):
    for _ in range(samples):
        yield scale * rng.standard_normal(dim), scale * rng.standard_normal(dim)


def check_firm_nonexpansive(asm, samples=1000, rng=None, scale=1.0, slack=1e-9):
    """Sampled ``|Tu-Tv|_M^2 + |(I-T)u-(I-T)v|_M^2 <= |u-v|_M^2``."""
    rng = np.random.default_rng(rng)
    M = asm.m.matrix
    worst, bad = -np.inf, 0
    for u, v in _pairs(rng, asm.dim, samples, scale):
        tu, tv = evaluate_T(asm, u), evaluate_T(asm, v)
        lhs = m_seminorm(M, tu - tv) ** 2 + m_seminorm(M, (u - tu) - (v - tv)) ** 2
        gap = lhs - m_seminorm(M, u - v) ** 2
        worst = max(worst, gap)
        bad += gap > slack
    return MonitorReport("firm_nonexpansive", bad == 0, float(worst), samples, int(bad))


def check_reduced_firm_nonexpansive(asm, F, samples=1000, rng=None, scale=1.0, slack=1e-9):
    """Euclidean firm nonexpansiveness of ``T~`` in the reduced space."""
    rng = np.random.default_rng(rng)
    worst, bad = -np.inf, 0
    for w, z in _pairs(rng, F.rank, samples, scale):
        tw, tz = evaluate_Ttilde(asm, F, w), evaluate_Ttilde(asm, F, z)
        gap = (
            np.sum((tw - tz) ** 2) + np.sum(((w - tw) - (z - tz)) ** 2) - np.sum((w - z) ** 2)
        )
        worst = max(worst, gap)
        bad += gap > slack
    return MonitorReport("reduced_firm_nonexpansive", bad == 0, float(worst), samples, int(bad))


def check_graph_monotone(asm, samples=1000, rng=None, scale=1.0, slack=1e-9):
    """Monotonicity of the graph pairs ``(Tu, M(u - Tu))``."""
    rng = np.random.default_rng(rng)
    M = asm.m.matrix
    worst, bad = np.inf, 0
    for u, v in _pairs(rng, asm.dim, samples, scale):
        tu, tv = evaluate_T(asm, u), evaluate_T(asm, v)
        val = float((M @ ((u - tu) - (v - tv))) @ (tu - tv))
        worst = min(worst, val)
        bad += val < -slack
    # report the most negative inner product as a positive violation
    return MonitorReport("graph_monotone", bad == 0, float(-worst), samples, int(bad))


def check_woodbury(A, F, probes=None) -> float:
    """Max entrywise gap of ``(I + C^T A^{-1} C)^{-1} = I - C^T (C C^T + A)^{-1} C``.

    ``F`` is a :class:`Factorization` or the matrix ``C`` itself.
    """
    A = np.asarray(A, dtype=float)
    C = F.c_matrix if isinstance(F, Factorization) else np.asarray(F, dtype=float)
    if C.ndim == 1:
        C = C[:, None]
    if A.shape != (C.shape[0], C.shape[0]):
        raise DimensionMismatch(f"A is {A.shape}, C is {C.shape}")
    r = C.shape[1]
    lhs = np.linalg.inv(np.eye(r) + C.T @ np.linalg.solve(A, C))
    rhs = np.eye(r) - C.T @ np.linalg.solve(C @ C.T + A, C)
    if probes is None:
        return float(np.max(np.abs(lhs - rhs), initial=0.0))
    P = np.asarray(probes, dtype=float).reshape(r, -1)
    return float(np.max(np.abs(lhs @ P - rhs @ P), initial=0.0))


def max_reduction_gap(F: Factorization, full_iterates: Sequence, reduced_iterates: Sequence, scale=1.0):
    """``max_k |scale * w^k - C^T u^k|`` over paired iterates."""
    n = min(len(full_iterates), len(reduced_iterates))
    gaps = [
        np.linalg.norm(scale * _flat(reduced_iterates[k]) - apply_cstar(F, full_iterates[k]))
        for k in range(n)
    ]
    return float(max(gaps, default=0.0))
