"""Concrete splittings as degenerate proximal point assemblies.

Every constructor returns a :class:`SchemeAssembly` carrying

* the block-triangular ``M + A`` used in verification mode,
* a closed-form factor ``C`` with ``M = C C^T`` (numerical for CP),
* the direct reduced update acting on ``w~ = C^T u / (1 + alpha)`` with
  relaxation ``theta = lambda / (1 + alpha)``.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, List, Optional

import numpy as np

from . import errors as E
from .engine import (
    BlockAssembly,
    Coupling,
    DiagonalBlock,
    IterationTrace,
    RelaxationSchedule,
    StoppingRule,
    fixed_point_iterate,
    ppp_iterate,
    rppp_iterate,
)
from .operators import OperatorBlock, inverse_of, resolvent_of_inverse, zero_operator
from .spaces import BlockLayout, Factorization, Preconditioner, apply_cstar, factor_psd

KINDS = ("DRS", "CP", "RelaxedDRS", "FDR", "ParallelFDR", "SequentialFDR")
_FDR_KINDS = ("FDR", "ParallelFDR", "SequentialFDR")
_REL = 1e-12


class ParameterWarning(UserWarning):
    """A parameter sits on the edge of its admissible range."""


# -- closed-form bounds ---------------------------------------------------------

def fdr_alpha(gamma, beta):
    """Shift ``alpha = gamma beta / (4 - gamma beta)``."""
    return gamma * beta / (4.0 - gamma * beta)


def fdr_theta_max(gamma, beta):
    return 2.0 - gamma * beta / 2.0


def relaxed_drs_alpha(gamma, mu0, mu1):
    """``alpha = -gamma mu0 mu1 / (gamma mu0 mu1 + mu0 + mu1)``; 0 without strong monotonicity."""
    p = mu0 * mu1
    if p == 0:
        return 0.0
    return -gamma * p / (gamma * p + mu0 + mu1)


def relaxed_drs_theta_max(gamma, mu0, mu1):
    s = mu0 + mu1
    return 2.0 if s == 0 else 2.0 + 2.0 * gamma * mu0 * mu1 / s


def operator_norm(L, iters=200, tol=1e-10, rng=0):
    """Spectral norm of ``L`` by power iteration on ``L^T L``."""
    L = np.asarray(L, dtype=float)
    if L.size == 0:
        return 0.0
    x = np.random.default_rng(rng).standard_normal(L.shape[1])
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(iters):
        y = L.T @ (L @ x)
        ny = np.linalg.norm(y)
        if ny == 0:
            return 0.0
        new = np.sqrt(ny)
        x = y / ny
        if abs(new - est) <= tol * new:
            est = new
            break
        est = new
    return float(np.linalg.norm(L @ x))


# -- configuration and validation ---------------------------------------------------

@dataclass
class SchemeConfig:
    """Parameters of one splitting run.

    ``theta`` is a number (constant schedule) or a list (sequence). For DRS and
    CP it is the plain relaxation ``lambda``; for the shifted schemes it is the
    rescaled ``theta = lambda / (1 + alpha)``.
    """

    kind: str
    gamma: Optional[float] = None
    sigma: Optional[float] = None
    tau: Optional[float] = None
    theta: object = 1.0
    n_terms: int = 1
    mu0: float = 0.0
    mu1: float = 0.0
    beta: float = 0.0
    l_norm: Optional[float] = None
    divergence_declared: bool = False

    @property
    def alpha(self) -> float:
        if self.kind in _FDR_KINDS:
            return fdr_alpha(self.gamma, self.beta)
        if self.kind == "RelaxedDRS":
            return relaxed_drs_alpha(self.gamma, self.mu0, self.mu1)
        return 0.0

    @property
    def theta_max(self) -> float:
        if self.kind in _FDR_KINDS:
            return fdr_theta_max(self.gamma, self.beta)
        if self.kind == "RelaxedDRS":
            return relaxed_drs_theta_max(self.gamma, self.mu0, self.mu1)
        return 2.0

    @property
    def thetas(self) -> tuple:
        return tuple(float(t) for t in np.atleast_1d(self.theta))

    def schedule(self) -> RelaxationSchedule:
        vals = self.thetas
        upper = self.theta_max * (1.0 + _REL)
        if isinstance(self.theta, (list, tuple)) and len(vals) > 1:
            return RelaxationSchedule.sequence(vals, upper, self.divergence_declared)
        return RelaxationSchedule.constant(vals[0], upper)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "SchemeConfig":
        if not isinstance(doc, dict):
            raise E.ConfigError("scheme config must be a JSON object")
        known = set(cls.__dataclass_fields__)
        extra = sorted(set(doc) - known)
        if extra:
            raise E.ConfigError(f"unknown config fields: {extra}")
        if "kind" not in doc:
            raise E.ConfigError("config needs a 'kind'")
        if doc["kind"] not in KINDS:
            raise E.ConfigError(f"unknown scheme kind {doc['kind']!r}; expected one of {KINDS}")
        return cls(**doc)

    @classmethod
    def from_json(cls, text: str) -> "SchemeConfig":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise E.ConfigError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(doc)


@dataclass(frozen=True)
class Diagnostic:
    severity: str  # "error" | "warning"
    code: str
    message: str
    formula: str = ""


@dataclass
class ValidationReport:
    diagnostics: List[Diagnostic] = field(default_factory=list)

    @property
    def errors(self):
        return [d for d in self.diagnostics if d.severity == "error"]

    @property
    def warnings(self):
        return [d for d in self.diagnostics if d.severity == "warning"]

    @property
    def ok(self) -> bool:
        return not self.errors

    def to_dict(self):
        return {"ok": self.ok, "diagnostics": [asdict(d) for d in self.diagnostics]}

    def raise_first(self):
        """Raise the exception matching the first error, emit warnings otherwise."""
        for d in self.errors:
            raise getattr(E, d.code)(f"{d.message} [{d.formula}]" if d.formula else d.message)
        for d in self.warnings:
            warnings.warn(d.message, ParameterWarning, stacklevel=3)


def _near(a, b):
    return abs(a - b) <= _REL * max(abs(a), abs(b), 1.0)


def _check_theta(rep, cfg, tmax, formula):
    thetas = cfg.thetas
    for t in thetas:
        if not np.isfinite(t) or t < 0 or (t > tmax and not _near(t, tmax)):
            rep.diagnostics.append(
                Diagnostic("error", "ThetaOutOfRange", f"theta={t} outside [0, {tmax:.12g}]", formula)
            )
            return
    if len(thetas) == 1:
        t = thetas[0]
        if _near(t, tmax) or t == 0:
            rep.diagnostics.append(
                Diagnostic(
                    "warning",
                    "ThetaBoundary",
                    f"constant theta={t} sits on the boundary; the divergent-sum condition fails",
                    f"sum theta_k ({tmax:.12g} - theta_k) = inf",
                )
            )
    elif not cfg.divergence_declared:
        rep.diagnostics.append(
            Diagnostic(
                "warning",
                "DivergenceUndeclared",
                "non-constant schedule: the divergent-sum condition must be declared by the caller",
                f"sum theta_k ({tmax:.12g} - theta_k) = inf",
            )
        )


def _positive(rep, name, value):
    if value is None or not np.isfinite(value) or value <= 0:
        rep.diagnostics.append(
            Diagnostic("error", "NonPositiveStep", f"{name} must be positive, got {value}")
        )
        return False
    return True


def validate_params(cfg: SchemeConfig) -> ValidationReport:
    """Collect every violated parameter bound of ``cfg``."""
    rep = ValidationReport()
    kind = cfg.kind
    if kind not in KINDS:
        rep.diagnostics.append(Diagnostic("error", "ConfigError", f"unknown kind {kind!r}"))
        return rep

    if kind == "DRS":
        _positive(rep, "sigma", cfg.sigma)
        _check_theta(rep, cfg, 2.0, "lambda_k in [0, 2]")
        return rep

    if kind == "CP":
        ok = _positive(rep, "tau", cfg.tau) & _positive(rep, "sigma", cfg.sigma)
        if ok and cfg.l_norm is not None:
            prod = cfg.tau * cfg.sigma * cfg.l_norm**2
            if prod > 1.0 + 1e-12:
                rep.diagnostics.append(
                    Diagnostic(
                        "error",
                        "StepBoundViolated",
                        f"tau*sigma*|L|^2 = {prod:.15g} exceeds 1",
                        "tau sigma |L|^2 <= 1",
                    )
                )
        _check_theta(rep, cfg, 2.0, "lambda_k in [0, 2]")
        return rep

    if not _positive(rep, "gamma", cfg.gamma):
        return rep

    if kind == "RelaxedDRS":
        if cfg.mu0 < 0 or cfg.mu1 < 0:
            rep.diagnostics.append(
                Diagnostic("error", "InvalidRegularity", "strong monotonicity moduli must be >= 0")
            )
            return rep
        tmax = cfg.theta_max
        formula = "theta_k in [0, 2 + 2 gamma mu0 mu1 / (mu0 + mu1)]"
        if cfg.mu0 * cfg.mu1 == 0 and any(t >= 2 for t in cfg.thetas):
            rep.diagnostics.append(
                Diagnostic(
                    "error",
                    "PeacemanRachfordRequiresStrongMonotonicity",
                    "theta >= 2 needs both operators strongly monotone (mu0 mu1 > 0)",
                    formula,
                )
            )
            return rep
        _check_theta(rep, cfg, tmax, formula)
        return rep

    # FDR family
    if cfg.beta is None or cfg.beta < 0:
        rep.diagnostics.append(
            Diagnostic("error", "InvalidRegularity", f"cocoercivity beta must be >= 0, got {cfg.beta}")
        )
        return rep
    if kind != "FDR" and (int(cfg.n_terms) != cfg.n_terms or cfg.n_terms < 1):
        rep.diagnostics.append(
            Diagnostic("error", "InconsistentDimensions", f"n_terms must be >= 1, got {cfg.n_terms}")
        )
    gb = cfg.gamma * cfg.beta
    if gb >= 4.0:
        rep.diagnostics.append(
            Diagnostic(
                "error",
                "StepOutOfRange",
                f"gamma={cfg.gamma} not in (0, 4/beta) with beta={cfg.beta}",
                "gamma in (0, 4/beta)",
            )
        )
        return rep
    if gb == 0:
        rep.diagnostics.append(
            Diagnostic(
                "warning",
                "GammaBetaZero",
                "gamma*beta = 0: no forward term, bounds reduce to the plain ones",
                "theta_k in [0, 2]",
            )
        )
    _check_theta(rep, cfg, cfg.theta_max, "theta_k in [0, 2 - gamma beta / 2]")
    return rep


# -- assemblies ---------------------------------------------------------------

@dataclass
class SchemeAssembly:
    """A splitting in both block (verification) and direct (production) form.

    Attributes
    ----------
    block : BlockAssembly
        ``M + A`` and ``M`` on the product space.
    factor : Factorization
        ``M = C C^T``.
    alpha : float
        Shift; the reduced iterate is ``w~ = C^T u / (1 + alpha)``.
    direct : callable
        ``direct(w~) -> (G(w~), parts)``; the scheme iterates
        ``w~ <- w~ + theta (G(w~) - w~)`` and ``parts`` are the primal blocks.
    x_blocks : tuple
        Block indices (in the product layout) of the primal blocks.
    """

    kind: str
    block: BlockAssembly
    factor: Factorization
    direct: Callable
    alpha: float = 0.0
    theta: RelaxationSchedule = field(default_factory=RelaxationSchedule)
    x_blocks: tuple = (0,)
    primal_index: int = 0
    dim: int = 0
    gamma: Optional[float] = None
    inclusion: Optional[Callable] = None
    full_direct: bool = False  # the direct map acts on the full space (CP)
    config: Optional[SchemeConfig] = None

    @property
    def scale(self) -> float:
        return 1.0 + self.alpha

    @property
    def reduced_dim(self) -> int:
        return self.factor.rank

    def direct_step(self, w):
        return self.direct(np.asarray(w, dtype=float))[0]

    def parts(self, w):
        return self.direct(np.asarray(w, dtype=float))[1]

    def primal_from_reduced(self, w):
        return self.parts(w)[self.primal_index]

    def primal_from_full(self, u):
        """Primal block of ``T u`` (the resolvent image)."""
        from .engine import evaluate_T

        tu = evaluate_T(self.block, u)
        return self.block.layout.split(tu)[self.x_blocks[self.primal_index]]

    def reduce(self, u):
        """``C^T u / (1 + alpha)``."""
        return apply_cstar(self.factor, u) / self.scale

    def lift(self, w):
        """Least-norm ``u`` with ``C^T u = (1 + alpha) w``."""
        C = self.factor.c_matrix
        w = np.asarray(w, dtype=float).reshape(-1)
        return C @ np.linalg.solve(C.T @ C, self.scale * w)

    def lambda_schedule(self) -> RelaxationSchedule:
        """Relaxation in the unscaled variables, ``lambda = (1 + alpha) theta``."""
        return self.theta.scaled(self.scale)

    def inclusion_residual(self, w) -> float:
        """Distance from 0 to the summed operators, measured through graph points."""
        if self.inclusion is None:
            raise NotImplementedError(f"no inclusion residual for {self.kind}")
        return float(self.inclusion(np.asarray(w, dtype=float)))


def _as_float(x):
    return np.asarray(x, dtype=float)


def _raise_invalid(cfg):
    validate_params(cfg).raise_first()


def _schedule_from(theta, tmax):
    vals = tuple(float(t) for t in np.atleast_1d(theta))
    upper = tmax * (1.0 + _REL)
    if len(vals) > 1:
        return RelaxationSchedule.sequence(vals, upper)
    return RelaxationSchedule.constant(vals[0], upper)


def build_drs(A: OperatorBlock, B: OperatorBlock, sigma, dim, theta=1.0) -> SchemeAssembly:
    """Douglas-Rachford on ``0 in A x + B x`` with reduced variable ``w = x - y``."""
    cfg = SchemeConfig("DRS", sigma=sigma, theta=theta)
    _raise_invalid(cfg)
    n = int(dim)
    eye = np.eye(n)
    C = np.vstack([eye, -eye])
    layout = BlockLayout((n, n))
    M = Preconditioner(C @ C.T, layout)
    blk = BlockAssembly(
        M,
        (DiagonalBlock(1.0, A, sigma), DiagonalBlock(1.0, inverse_of(B, sigma), 1.0)),
        (Coupling(1, 0, -2.0),),
    )

    def direct(w):
        a = A.resolvent(sigma, w)
        b = B.resolvent(sigma, 2.0 * a - w)
        return w + b - a, [a, b]

    def inclusion(w):
        a = A.resolvent(sigma, w)
        b = B.resolvent(sigma, 2.0 * a - w)
        ga = (w - a) / sigma
        gb = (2.0 * a - w - b) / sigma
        return np.linalg.norm(ga + gb) + np.linalg.norm(a - b)

    return SchemeAssembly(
        "DRS",
        blk,
        Factorization.from_closed_form(C, M),
        direct,
        theta=_schedule_from(theta, 2.0),
        x_blocks=(0,),
        dim=n,
        gamma=sigma,
        inclusion=inclusion,
        config=cfg,
    )


def build_cp(A: OperatorBlock, B: OperatorBlock, L, tau, sigma, theta=1.0) -> SchemeAssembly:
    """Chambolle-Pock for ``0 in A x + L^T B L x`` with the primal-dual preconditioner.

    ``B`` acts on the range of ``L``; the dual update uses ``J_{sigma B^{-1}}``.
    """
    L = np.atleast_2d(_as_float(L))
    m, n = L.shape
    l_norm = operator_norm(L)
    cfg = SchemeConfig("CP", sigma=sigma, tau=tau, theta=theta, l_norm=l_norm)
    _raise_invalid(cfg)
    layout = BlockLayout((n, m))
    Mmat = np.block([[np.eye(n) / tau, -L.T], [-L, np.eye(m) / sigma]])
    # symmetrize exactly; the blocks are transposes of each other already
    M = Preconditioner(0.5 * (Mmat + Mmat.T), layout)
    blk = BlockAssembly(
        M,
        (DiagonalBlock(1.0 / tau, A, 1.0), DiagonalBlock(1.0 / sigma, inverse_of(B), 1.0)),
        (Coupling(1, 0, -2.0 * L),),
    )

    def direct(u):
        x, y = u[:n], u[n:]
        xp = A.resolvent(tau, x - tau * (L.T @ y))
        yp = resolvent_of_inverse(sigma, B, y + sigma * (L @ (2.0 * xp - x)))
        return np.concatenate([xp, yp]), [xp, yp]

    return SchemeAssembly(
        "CP",
        blk,
        factor_psd(M),
        direct,
        theta=_schedule_from(theta, 2.0),
        x_blocks=(0, 1),
        dim=n,
        full_direct=True,
        config=cfg,
    )


def _common_beta(Cs):
    beta = 0.0
    for i, C in enumerate(Cs):
        if C is None:
            continue
        if C.beta is None:
            raise E.InvalidRegularity(f"forward operator {i + 1} carries no cocoercivity constant")
        beta = max(beta, float(C.beta))
    return beta


def _check_dims(ops, n):
    # probe each resolvent once to catch mismatched operator dimensions early
    z = np.zeros(n)
    for i, op in enumerate(ops):
        if op is None:
            continue
        out = np.asarray(op.resolvent(1.0, z))
        if out.shape != (n,):
            raise E.InconsistentDimensions(f"operator {i} maps R^{n} to shape {out.shape}")


def _fdr_family(kind, topology, A0, As, Cs, gamma, alpha, theta, tmax, dim, cfg, primal_index):
    N = len(As)
    if N < 1:
        raise E.InconsistentDimensions("need at least one operator besides A0")
    if Cs is None:
        Cs = [None] * N
    if len(Cs) != N:
        raise E.InconsistentDimensions(f"{len(As)} backward operators but {len(Cs)} forward ones")
    n = int(dim)
    A0 = A0 if A0 is not None else zero_operator()
    As = [a if a is not None else zero_operator() for a in As]
    _check_dims([A0, *As, *Cs], n)
    sigma = gamma * (1.0 + alpha)
    s1 = 1.0 + alpha
    eye = np.eye(n)

    # block order: x0, v1, x1, ..., vN, xN
    nb = 2 * N + 1
    layout = BlockLayout.uniform(nb, n)
    C = np.zeros((nb * n, N * n))
    for i in range(1, N + 1):
        cols = slice((i - 1) * n, i * n)
        left = 0 if topology == "parallel" else 2 * (i - 1)
        for b in (left, 2 * i - 1, 2 * i):
            C[b * n : (b + 1) * n, cols] = eye
    M = Preconditioner(C @ C.T, layout)

    diag = [DiagonalBlock((N if topology == "parallel" else 1) * s1, A0, sigma)]
    couplings = []
    for i in range(1, N + 1):
        vi, xi = 2 * i - 1, 2 * i
        left = 0 if topology == "parallel" else 2 * (i - 1)
        interior = topology == "sequential" and i < N
        diag.append(DiagonalBlock(1.0))
        diag.append(DiagonalBlock((2.0 if interior else 1.0) * s1, As[i - 1], sigma))
        couplings.append(Coupling(vi, left, 2.0))
        couplings.append(Coupling(xi, left, 2.0 - 2.0 * alpha, Cs[i - 1], sigma))
        couplings.append(Coupling(xi, vi, 2.0))
    blk = BlockAssembly(M, tuple(diag), tuple(couplings))

    def fwd(i, x):
        c = Cs[i - 1]
        return 0.0 if c is None else c.forward(x)

    if topology == "parallel":

        def direct(w):
            W = w.reshape(N, n)
            x0 = A0.resolvent(gamma / N, W.mean(axis=0))
            xs = [x0]
            for i in range(1, N + 1):
                xs.append(As[i - 1].resolvent(gamma, 2.0 * x0 - W[i - 1] - gamma * fwd(i, x0)))
            G = W + np.stack(xs[1:]) - x0
            return G.reshape(-1), xs

        def inclusion(w):
            W = w.reshape(N, n)
            xs = direct(w)[1]
            x0 = xs[0]
            g = N * (W.mean(axis=0) - x0) / gamma
            for i in range(1, N + 1):
                g = g + (2.0 * x0 - W[i - 1] - gamma * fwd(i, x0) - xs[i]) / gamma + fwd(i, x0)
            spread = max(np.linalg.norm(x - x0) for x in xs)
            return np.linalg.norm(g) + spread

    else:

        def direct(w):
            W = w.reshape(N, n)
            x = A0.resolvent(gamma, W[0])
            xs = [x]
            for i in range(1, N):
                z = x + 0.5 * (W[i] - W[i - 1]) - 0.5 * gamma * fwd(i, x)
                x = As[i - 1].resolvent(0.5 * gamma, z)
                xs.append(x)
            xs.append(As[N - 1].resolvent(gamma, 2.0 * x - W[N - 1] - gamma * fwd(N, x)))
            G = W + np.stack(xs[1:]) - np.stack(xs[:-1])
            return G.reshape(-1), xs

        def inclusion(w):
            W = w.reshape(N, n)
            xs = direct(w)[1]
            g = (W[0] - xs[0]) / gamma
            for i in range(1, N):
                z = xs[i - 1] + 0.5 * (W[i] - W[i - 1]) - 0.5 * gamma * fwd(i, xs[i - 1])
                g = g + (z - xs[i]) / (0.5 * gamma) + fwd(i, xs[i - 1])
            last = xs[N - 1]
            g = g + (2.0 * last - W[N - 1] - gamma * fwd(N, last) - xs[N]) / gamma + fwd(N, last)
            spread = max(np.linalg.norm(x - xs[0]) for x in xs)
            return np.linalg.norm(g) + spread

    return SchemeAssembly(
        kind,
        blk,
        Factorization.from_closed_form(C, M),
        direct,
        alpha=alpha,
        theta=_schedule_from(theta, tmax),
        x_blocks=tuple(2 * i for i in range(N + 1)),
        primal_index=primal_index,
        dim=n,
        gamma=gamma,
        inclusion=inclusion,
        config=cfg,
    )


def build_relaxed_drs(A0, A1, gamma, dim, theta=1.0, mu0=None, mu1=None) -> SchemeAssembly:
    """DRS with the shift ``alpha <= 0`` that admits over-relaxation (Peaceman-Rachford at 2)."""
    if mu0 is None:
        mu0 = A0.mu or 0.0
    if mu1 is None:
        mu1 = A1.mu or 0.0
    cfg = SchemeConfig("RelaxedDRS", gamma=gamma, theta=theta, mu0=mu0, mu1=mu1)
    _raise_invalid(cfg)
    return _fdr_family(
        "RelaxedDRS", "parallel", A0, [A1], [None], gamma, cfg.alpha, theta, cfg.theta_max, dim, cfg, 0
    )


def build_fdr(A0, A1, C, gamma, dim, theta=1.0, primal_index=0) -> SchemeAssembly:
    """Forward-Douglas-Rachford for ``0 in A0 x + A1 x + C x``."""
    beta = _common_beta([C])
    cfg = SchemeConfig("FDR", gamma=gamma, theta=theta, beta=beta)
    _raise_invalid(cfg)
    return _fdr_family(
        "FDR", "parallel", A0, [A1], [C], gamma, cfg.alpha, theta, cfg.theta_max, dim, cfg, primal_index
    )


def build_parallel_fdr(A0, As, Cs, gamma, dim, theta=1.0, primal_index=0) -> SchemeAssembly:
    """Parallel FDR: one averaged backward step on ``A0``, then ``N`` independent ones."""
    Cs = [None] * len(As) if Cs is None else list(Cs)
    beta = _common_beta(Cs)
    cfg = SchemeConfig("ParallelFDR", gamma=gamma, theta=theta, beta=beta, n_terms=len(As))
    _raise_invalid(cfg)
    return _fdr_family(
        "ParallelFDR", "parallel", A0, list(As), Cs, gamma, cfg.alpha, theta, cfg.theta_max,
        dim, cfg, primal_index,
    )


def build_sequential_fdr(A0, As, Cs, gamma, dim, theta=1.0, primal_index=0) -> SchemeAssembly:
    """Sequential FDR: a chain of backward steps, each fed by the previous one."""
    Cs = [None] * len(As) if Cs is None else list(Cs)
    beta = _common_beta(Cs)
    cfg = SchemeConfig("SequentialFDR", gamma=gamma, theta=theta, beta=beta, n_terms=len(As))
    _raise_invalid(cfg)
    return _fdr_family(
        "SequentialFDR", "sequential", A0, list(As), Cs, gamma, cfg.alpha, theta, cfg.theta_max,
        dim, cfg, primal_index,
    )


# -- running ------------------------------------------------------------------

@dataclass
class RunResult:
    direct: Optional[IterationTrace] = None
    block: Optional[IterationTrace] = None
    max_deviation: Optional[float] = None

    @property
    def primary(self) -> IterationTrace:
        return self.direct if self.direct is not None else self.block


def run(
    scheme: SchemeAssembly,
    w0=None,
    mode="direct",
    stop: StoppingRule = StoppingRule(),
    distance=None,
    store_iterates=False,
) -> RunResult:
    """Iterate a scheme in ``direct`` (reduced update), ``block`` (full PPP) or ``both`` modes.

    ``w0`` is the start in the direct variables (``w~``, or ``u`` for CP).
    ``distance(x)`` receives the primal point and fills ``dist_ref``. In mode
    ``both`` the iterates are compared after reduction and the largest gap is
    returned as ``max_deviation``.
    """
    if mode not in ("direct", "block", "both"):
        raise E.ConfigError(f"mode must be direct, block or both, got {mode!r}")
    dim_direct = scheme.block.dim if scheme.full_direct else scheme.reduced_dim
    w0 = np.zeros(dim_direct) if w0 is None else np.asarray(w0, dtype=float).reshape(-1)
    if w0.shape[0] != dim_direct:
        raise E.DimensionMismatch(f"start of length {w0.shape[0]}, expected {dim_direct}")
    keep = store_iterates or mode == "both"
    res = RunResult()

    if mode in ("direct", "both"):
        dist = None
        if distance is not None:
            dist = lambda w, gw: distance(scheme.parts(w)[scheme.primal_index])  # noqa: E731
        res.direct = fixed_point_iterate(
            scheme.direct_step, w0, scheme.theta, stop, distance=dist,
            store_iterates=keep, label=f"{scheme.kind}:direct",
        )
    if mode in ("block", "both"):
        u0 = w0 if scheme.full_direct else scheme.lift(w0)
        dist = None
        if distance is not None:
            xb = scheme.x_blocks[scheme.primal_index]
            dist = lambda u, tu: distance(scheme.block.layout.split(tu)[xb])  # noqa: E731
        res.block = ppp_iterate(
            scheme.block, u0, scheme.lambda_schedule(), stop, distance=dist, store_iterates=keep
        )
        res.block.label = f"{scheme.kind}:block"
    if mode == "both":
        a, b = res.direct.iterates, res.block.iterates
        n = min(len(a), len(b))
        if scheme.full_direct:
            gaps = [np.linalg.norm(a[k] - b[k]) for k in range(n)]
        else:
            gaps = [np.linalg.norm(a[k] - scheme.reduce(b[k])) for k in range(n)]
        res.max_deviation = float(max(gaps, default=0.0))
    return res


def run_reduced_block(scheme: SchemeAssembly, w0, stop=StoppingRule(), store_iterates=True):
    """Reduced iteration driven through the block solve, in unscaled variables ``w = C^T u``."""
    return rppp_iterate(
        scheme.block, scheme.factor, np.asarray(w0, dtype=float) * scheme.scale,
        scheme.lambda_schedule(), stop, store_iterates=store_iterates,
    )
