"""Monotone operators exposed through resolvents and forward maps.

An :class:`OperatorBlock` never materializes a set-valued map. It carries its
resolvent ``J_{tA} = (I + tA)^{-1}`` for every step ``t > 0`` and, when the
operator is single valued with full domain, a forward evaluation. Graph points
of ``A`` are recovered from the resolvent as ``(J_{tA} z, (z - J_{tA} z) / t)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import linalg as sla

from .errors import DimensionMismatch, EmptyVector, NonPositiveStep, SolveFailure

__all__ = [
    "OperatorBlock",
    "prox_l1_shifted",
    "prox_pow32",
    "project_simplex",
    "prox_quadratic",
    "grad_quadratic",
    "quadratic_lipschitz",
    "resolvent_of_inverse",
    "graph_point",
    "zero_operator",
    "scaled_identity",
    "linear_operator",
    "point_indicator",
    "l1_shifted",
    "pow32_shifted",
    "simplex_indicator",
    "QuadraticFunction",
    "inverse_of",
    "scaled",
    "scaled_forward",
]


@dataclass(frozen=True)
class OperatorBlock:
    """A maximal monotone operator with regularity metadata.

    Attributes
    ----------
    resolvent : callable
        ``resolvent(t, x)`` returns ``J_{tA}(x)`` for any ``t > 0``.
    forward : callable, optional
        ``forward(x)`` for single-valued operators with full domain.
    mu : float, optional
        Strong monotonicity modulus.
    beta : float, optional
        The operator is ``1/beta``-cocoercive. ``beta = 0`` only for the zero map.
    lipschitz : float, optional
        Lipschitz constant of ``forward``.
    """

    resolvent: Callable
    forward: Optional[Callable] = None
    mu: Optional[float] = None
    beta: Optional[float] = None
    lipschitz: Optional[float] = None
    name: str = "operator"

    def __post_init__(self):
        if self.beta is not None and self.forward is None:
            raise ValueError(f"{self.name}: a cocoercivity constant requires a forward map")

    def __call__(self, x):
        if self.forward is None:
            raise TypeError(f"{self.name} is not single valued; use its resolvent")
        return self.forward(x)


def _check_step(t):
    if not t > 0:
        raise NonPositiveStep(f"step must be positive, got {t}")


def _vec(x):
    return np.asarray(x, dtype=float)


# -- closed-form proximal maps ------------------------------------------------

def prox_l1_shifted(gamma, w0, x):
    """Prox of ``gamma * sum_i |s_i - w0_i|`` (shifted soft thresholding)."""
    _check_step(gamma)
    x, w0 = _vec(x), _vec(w0)
    t = x - w0
    return w0 + np.sign(t) * np.maximum(np.abs(t) - gamma, 0.0)


def prox_pow32(gamma, w0, x):
    """Prox of ``gamma * sum_i |s_i - w0_i|^{3/2}``.

    With ``t = x - w0`` the solution is ``w0 + sign(t) q^2`` where ``q >= 0``
    is the positive root of ``q^2 + (3 gamma / 2) q - |t| = 0``.
    """
    _check_step(gamma)
    x, w0 = _vec(x), _vec(w0)
    t = x - w0
    b = 1.5 * gamma
    # |t| / (b/2 + sqrt(b^2/4 + |t|)) is the cancellation-free form of the root
    q = np.abs(t) / (0.5 * b + np.sqrt(0.25 * b * b + np.abs(t)) + 1e-300)
    return w0 + np.sign(t) * q * q


def project_simplex(x):
    """Euclidean projection onto the standard simplex ``{p >= 0, sum p = 1}``."""
    x = _vec(x).reshape(-1)
    n = x.size
    if n == 0:
        raise EmptyVector("cannot project an empty vector onto the simplex")
    u = np.sort(x)[::-1]
    css = np.cumsum(u) - 1.0
    ind = np.arange(1, n + 1)
    rho = np.nonzero(u - css / ind > 0)[0][-1]
    lam = css[rho] / (rho + 1.0)
    return np.maximum(x - lam, 0.0)


def _solve_checked(factor, a, rhs):
    p = sla.cho_solve(factor, rhs)
    scale = np.linalg.norm(rhs)
    res = a @ p - rhs
    if np.linalg.norm(res) > 1e-12 * scale:
        # one step of iterative refinement before giving up
        p = p - sla.cho_solve(factor, res)
        if np.linalg.norm(a @ p - rhs) > 1e-12 * scale:
            raise SolveFailure("prox of the quadratic did not reach residual 1e-12")
    return p


def _quadratic_system(gamma, sigma, delta):
    n = sigma.shape[0]
    return np.eye(n) + gamma * (2.0 * sigma + delta * np.eye(n))


def prox_quadratic(gamma, Sigma, r, delta, x):
    """Prox of ``f(w) = w^T Sigma w - r^T w + (delta/2)|w|^2``.

    Solves ``(I + gamma (2 Sigma + delta I)) p = x + gamma r``.
    """
    _check_step(gamma)
    sigma = _vec(Sigma)
    x, r = _vec(x), _vec(r)
    if sigma.shape != (x.size, x.size) or r.shape != x.shape:
        raise DimensionMismatch("Sigma, r and x sizes disagree")
    a = _quadratic_system(gamma, sigma, delta)
    try:
        factor = sla.cho_factor(a)
    except np.linalg.LinAlgError as exc:
        raise SolveFailure(str(exc)) from exc
    return _solve_checked(factor, a, x + gamma * r)


def grad_quadratic(Sigma, r, delta, x):
    """``2 Sigma x - r + delta x``."""
    sigma, r, x = _vec(Sigma), _vec(r), _vec(x)
    if sigma.shape != (x.size, x.size) or r.shape != x.shape:
        raise DimensionMismatch("Sigma, r and x sizes disagree")
    return 2.0 * (sigma @ x) - r + delta * x


def quadratic_lipschitz(Sigma, delta=0.0, convention="gradient"):
    """Lipschitz constant used for step sizes of ``f``.

    ``"gradient"`` is the true constant ``2 lambda_max(Sigma) + delta`` of
    ``grad f``; ``"spectral"`` is ``lambda_max(Sigma) + delta``, i.e. ``L`` taken
    as the largest eigenvalue of ``Sigma``.
    """
    lam = float(np.linalg.eigvalsh(_vec(Sigma))[-1]) if np.size(Sigma) else 0.0
    lam = max(lam, 0.0)
    if convention == "gradient":
        return 2.0 * lam + delta
    if convention == "spectral":
        return lam + delta
    raise ValueError(f"unknown Lipschitz convention {convention!r}")


def resolvent_of_inverse(sigma, B: OperatorBlock, x):
    """``J_{sigma B^{-1}}(x) = x - sigma J_{B/sigma}(x / sigma)`` (Moreau)."""
    _check_step(sigma)
    x = _vec(x)
    return x - sigma * B.resolvent(1.0 / sigma, x / sigma)


def graph_point(op: OperatorBlock, t, z):
    """A point ``(p, a)`` with ``a`` in ``op(p)``, computed from the resolvent."""
    z = _vec(z)
    p = op.resolvent(t, z)
    return p, (z - p) / t


# -- catalog ------------------------------------------------------------------

def zero_operator():
    return OperatorBlock(
        resolvent=lambda t, x: _vec(x).copy(),
        forward=lambda x: np.zeros_like(_vec(x)),
        mu=0.0,
        beta=0.0,
        lipschitz=0.0,
        name="zero",
    )


def scaled_identity(c=1.0, offset=None):
    """``A x = c x - offset`` with ``c >= 0``."""
    if c < 0:
        raise ValueError("scaled_identity needs c >= 0")
    b = None if offset is None else _vec(offset)

    def resolvent(t, x):
        _check_step(t)
        x = _vec(x)
        if b is not None:
            x = x + t * b
        return x / (1.0 + t * c)

    def forward(x):
        x = _vec(x)
        return c * x if b is None else c * x - b

    return OperatorBlock(resolvent, forward, mu=c, beta=c, lipschitz=c, name=f"{c}*I")


def _linear_constants(K):
    sym = 0.5 * (K + K.T)
    ev = np.linalg.eigvalsh(sym)
    mu = float(ev[0])
    if mu < -1e-10 * max(abs(ev[-1]), 1.0):
        raise ValueError("linear operator is not monotone")
    lip = float(np.linalg.norm(K, 2))
    beta = None
    if np.allclose(K, K.T, atol=1e-14 * max(lip, 1.0)):
        beta = float(ev[-1])
    elif mu > 0:
        # smallest beta with <Kx, x> >= |Kx|^2 / beta
        s_inv_half = np.linalg.inv(sla.sqrtm(sym).real)
        g = s_inv_half @ K.T @ K @ s_inv_half
        beta = float(np.linalg.eigvalsh(0.5 * (g + g.T))[-1])
    return max(mu, 0.0), beta, lip


def linear_operator(K, offset=None, name="linear"):
    """Affine monotone map ``x -> K x - offset`` (``K + K^T`` PSD)."""
    K = _vec(K)
    n = K.shape[0]
    if K.shape != (n, n):
        raise DimensionMismatch("linear operator must be square")
    b = np.zeros(n) if offset is None else _vec(offset)
    mu, beta, lip = _linear_constants(K)
    cache = {}

    def resolvent(t, x):
        _check_step(t)
        lu = cache.get(t)
        if lu is None:
            lu = sla.lu_factor(np.eye(n) + t * K)
            if len(cache) < 64:
                cache[t] = lu
        return sla.lu_solve(lu, _vec(x) + t * b)

    return OperatorBlock(
        resolvent, lambda x: K @ _vec(x) - b, mu=mu, beta=beta, lipschitz=lip, name=name
    )


def point_indicator(a):
    """Normal cone of the singleton ``{a}``; its resolvent is constant."""
    a = _vec(a)
    return OperatorBlock(lambda t, x: a.copy(), name="point")


def l1_shifted(w0, weight=1.0):
    """Subdifferential of ``weight * sum_i |x_i - w0_i|``."""
    w0 = _vec(w0)
    return OperatorBlock(lambda t, x: prox_l1_shifted(weight * t, w0, x), name="l1")


def pow32_shifted(w0, weight=1.0):
    """Subdifferential of ``weight * sum_i |x_i - w0_i|^{3/2}``."""
    w0 = _vec(w0)
    return OperatorBlock(lambda t, x: prox_pow32(weight * t, w0, x), name="pow32")


def simplex_indicator():
    return OperatorBlock(lambda t, x: project_simplex(x), name="simplex")


@dataclass(frozen=True)
class QuadraticFunction:
    """``f(w) = w^T Sigma w - r^T w + (delta/2)|w|^2`` with cached factorizations."""

    Sigma: np.ndarray
    r: np.ndarray
    delta: float = 0.0
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def value(self, w):
        w = _vec(w)
        return float(w @ self.Sigma @ w - self.r @ w + 0.5 * self.delta * (w @ w))

    def gradient(self, w):
        return grad_quadratic(self.Sigma, self.r, self.delta, w)

    def prox(self, gamma, x):
        _check_step(gamma)
        hit = self._cache.get(gamma)
        if hit is None:
            a = _quadratic_system(gamma, _vec(self.Sigma), self.delta)
            hit = (a, sla.cho_factor(a))
            if len(self._cache) < 64:
                self._cache[gamma] = hit
        a, factor = hit
        return _solve_checked(factor, a, _vec(x) + gamma * _vec(self.r))

    @property
    def lipschitz(self):
        return quadratic_lipschitz(self.Sigma, self.delta)

    @property
    def mu(self):
        lam = float(np.linalg.eigvalsh(_vec(self.Sigma))[0])
        return 2.0 * max(lam, 0.0) + self.delta

    def operator(self):
        L = self.lipschitz
        return OperatorBlock(
            self.prox, self.gradient, mu=self.mu, beta=L, lipschitz=L, name="grad f"
        )


def inverse_of(B: OperatorBlock, scale=1.0):
    """The operator ``(scale * B)^{-1}``, through the Moreau identity."""
    _check_step(scale)

    def resolvent(t, x):
        _check_step(t)
        x = _vec(x)
        # J_{t K^{-1}}(x) = x - t J_{K/t}(x/t) with K = scale*B
        return x - t * B.resolvent(scale / t, x / t)

    return OperatorBlock(resolvent, name=f"inv({B.name})")


def scaled(B: OperatorBlock, s):
    """``s * B`` for ``s > 0``."""
    _check_step(s)
    fwd = None if B.forward is None else (lambda x: s * B.forward(x))

    def mul(v):
        return None if v is None else s * v

    return OperatorBlock(
        lambda t, x: B.resolvent(s * t, x),
        fwd,
        mu=mul(B.mu),
        beta=mul(B.beta),
        lipschitz=mul(B.lipschitz),
        name=f"{s}*{B.name}",
    )


def scaled_forward(B: OperatorBlock, s):
    """``s * B`` for a single-valued ``B`` and any ``s >= 0`` (``s = 0`` gives zero)."""
    if s == 0:
        return zero_operator()
    return scaled(B, s)
