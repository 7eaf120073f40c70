"""Linear-rate certificates for Douglas-Rachford and empirical rate estimates."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .engine import MonitorReport, evaluate_T
from .errors import InsufficientData, InvalidRegularity
from .spaces import m_seminorm


@dataclass(frozen=True)
class RateCertificate:
    """Certified contraction ``rate = 1 / (1 + alpha)`` of the reduced DRS map.

    ``side`` is ``"a"`` when the regularity sits on ``A`` and ``"b"`` when the
    roles of ``A`` and ``B`` are swapped; the formulas are the same.
    """

    case_id: int
    side: str
    alpha: float
    rate: float
    sigma: float
    mu: float
    beta: float

    def to_dict(self):
        return asdict(self)

    def to_json(self):
        return json.dumps(self.to_dict())


def case_alpha(case, sigma, mu, beta):
    if case == 1:
        return min(sigma * mu / 2.0, 1.0 / (2.0 * sigma * beta))
    if case == 2:
        return sigma * mu / (sigma**2 * mu * beta + 1.0)
    if case == 3:
        return sigma * mu / (sigma**2 * beta**2 + 1.0)
    raise InvalidRegularity(f"unknown case {case!r}; expected 1, 2 or 3")


def drs_contraction_factor(case, sigma, mu, beta, side="a") -> RateCertificate:
    """Certificate for one of the three regularity cases.

    1. one operator ``mu``-strongly monotone, the other ``1/beta``-cocoercive;
    2. one operator both ``mu``-strongly monotone and ``1/beta``-cocoercive;
    3. one operator ``mu``-strongly monotone and ``beta``-Lipschitz.
    """
    if side not in ("a", "b"):
        raise InvalidRegularity(f"side must be 'a' or 'b', got {side!r}")
    for name, v in (("sigma", sigma), ("mu", mu), ("beta", beta)):
        if not (np.isfinite(v) and v > 0):
            raise InvalidRegularity(f"{name} must be positive, got {v}")
    if case == 2 and mu > beta:
        raise InvalidRegularity(f"case 2 needs mu <= beta, got mu={mu}, beta={beta}")
    alpha = case_alpha(case, sigma, mu, beta)
    return RateCertificate(int(case), side, alpha, 1.0 / (1.0 + alpha), sigma, mu, beta)


def optimal_sigma_case1(mu, beta):
    """Step balancing both terms of the case-1 minimum."""
    if mu <= 0 or beta <= 0:
        raise InvalidRegularity("mu and beta must be positive")
    return 1.0 / np.sqrt(mu * beta)


def optimal_rate_case1(mu, beta):
    k = np.sqrt(beta / mu)
    return k / (k + 0.5)


def mstrong_check(asm, samples=1000, alpha=0.0, rng=None, scale=1.0, slack=1e-9):
    """Sample graph pairs ``(Tu, u - Tu)`` of ``M^{-1} A`` and test ``M``-``alpha``-strong monotonicity.

    ``worst`` is the largest shortfall ``alpha |p - p'|_M^2 - <q - q', p - p'>_M``
    and ``detail`` holds the violating fraction.
    """
    rng = np.random.default_rng(rng)
    M = asm.m.matrix
    worst, bad = -np.inf, 0
    for _ in range(samples):
        u = scale * rng.standard_normal(asm.dim)
        v = scale * rng.standard_normal(asm.dim)
        pu, pv = evaluate_T(asm, u), evaluate_T(asm, v)
        dp = pu - pv
        dq = (u - pu) - (v - pv)
        gap = alpha * m_seminorm(M, dp) ** 2 - float(dq @ (M @ dp))
        worst = max(worst, gap)
        bad += gap > slack
    return MonitorReport(
        "m_strong_monotone", bad == 0, float(worst), samples, int(bad), f"fraction={bad / samples:g}"
    )


def geometric_ratio(errors, floor=1e-9):
    """Geometric-mean ratio of a decreasing error sequence over its last quartile above ``floor``."""
    e = np.asarray(errors, dtype=float)
    if e.size and e[0] <= floor:
        raise InsufficientData("sequence starts below the floor")
    below = np.nonzero(e <= floor)[0]
    if below.size:
        e = e[: below[0]]
    if e.size < 4:
        raise InsufficientData(f"only {e.size} usable terms for a rate estimate")
    tail = e[-max(e.size // 4, 2):]
    if tail[-1] == 0:
        raise InsufficientData("zero error inside the window")
    return float((tail[-1] / tail[0]) ** (1.0 / (tail.size - 1)))


def empirical_rate(trace, w_ref, floor=1e-9):
    """Observed linear rate of ``|w^k - w_ref|`` for a trace recorded with iterates.

    ``trace`` may also be a plain sequence of iterates.
    """
    iterates = getattr(trace, "iterates", trace)
    if iterates is None:
        raise InsufficientData("trace was recorded without iterates")
    w_ref = np.asarray(w_ref, dtype=float).reshape(-1)
    errors = [np.linalg.norm(np.asarray(w, dtype=float) - w_ref) for w in iterates]
    return geometric_ratio(errors, floor)
