"""Product spaces, PSD preconditioners and their factorization ``M = C C^T``.

Everything here is dense and finite dimensional. A preconditioner ``M`` acting
on the product space ``H^m`` is factored through a smaller space ``D`` of
dimension ``rank(M)``; ``C^T`` maps iterates into ``D`` isometrically with
respect to the ``M``-seminorm.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatch, FactorizationError, NotPSD, NotSymmetric

SYMMETRY_RTOL = 1e-12
PSD_RTOL = 1e-10
FACTOR_RTOL = 1e-10


@dataclass(frozen=True)
class BlockLayout:
    """Sizes of the blocks of a product-space vector."""

    sizes: tuple

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.sizes)
        if any(s < 0 for s in sizes):
            raise ValueError("block sizes must be non-negative")
        object.__setattr__(self, "sizes", sizes)

    @classmethod
    def uniform(cls, n_blocks: int, size: int) -> "BlockLayout":
        return cls((size,) * n_blocks)

    @property
    def total_dim(self) -> int:
        return sum(self.sizes)

    @property
    def n_blocks(self) -> int:
        return len(self.sizes)

    @property
    def offsets(self) -> tuple:
        return tuple(np.concatenate([[0], np.cumsum(self.sizes)]).astype(int))

    def slice(self, i: int) -> slice:
        off = self.offsets
        return slice(off[i], off[i + 1])

    def split(self, flat) -> list:
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (self.total_dim,):
            raise DimensionMismatch(
                f"expected vector of length {self.total_dim}, got shape {flat.shape}"
            )
        return [flat[self.slice(i)] for i in range(self.n_blocks)]

    def join(self, blocks: Sequence) -> np.ndarray:
        if len(blocks) != self.n_blocks:
            raise DimensionMismatch(f"expected {self.n_blocks} blocks, got {len(blocks)}")
        out = []
        for i, (b, s) in enumerate(zip(blocks, self.sizes)):
            b = np.asarray(b, dtype=float).reshape(-1)
            if b.size != s:
                raise DimensionMismatch(f"block {i} has length {b.size}, expected {s}")
            out.append(b)
        return np.concatenate(out) if out else np.zeros(0)


class BlockVector:
    """An element ``u = (u_1, ..., u_m)`` of a product space.

    Linear combinations are only defined between vectors sharing the exact
    same layout. ``np.asarray(u)`` gives the flat representation used by the
    iteration engines.
    """

    __slots__ = ("_flat", "layout")

    def __init__(self, blocks: Sequence):
        blocks = [np.asarray(b, dtype=float).reshape(-1) for b in blocks]
        self.layout = BlockLayout(tuple(b.size for b in blocks))
        flat = np.concatenate(blocks) if blocks else np.zeros(0)
        flat.setflags(write=False)
        self._flat = flat

    @classmethod
    def from_flat(cls, flat, layout: BlockLayout) -> "BlockVector":
        return cls(layout.split(flat))

    @property
    def blocks(self) -> list:
        return self.layout.split(self._flat)

    @property
    def flat(self) -> np.ndarray:
        return self._flat

    @property
    def total_dim(self) -> int:
        return self.layout.total_dim

    def __array__(self, dtype=None, copy=None):
        return self._flat.astype(dtype) if dtype is not None else self._flat

    def __len__(self):
        return self.layout.n_blocks

    def __getitem__(self, i):
        return self.blocks[i]

    def _check(self, other):
        if not isinstance(other, BlockVector):
            return NotImplemented
        if other.layout != self.layout:
            raise DimensionMismatch(
                f"block layouts differ: {self.layout.sizes} vs {other.layout.sizes}"
            )
        return other

    def __add__(self, other):
        other = self._check(other)
        if other is NotImplemented:
            return other
        return BlockVector.from_flat(self._flat + other._flat, self.layout)

    def __sub__(self, other):
        other = self._check(other)
        if other is NotImplemented:
            return other
        return BlockVector.from_flat(self._flat - other._flat, self.layout)

    def __mul__(self, scalar):
        if not np.isscalar(scalar):
            return NotImplemented
        return BlockVector.from_flat(scalar * self._flat, self.layout)

    __rmul__ = __mul__

    def __neg__(self):
        return BlockVector.from_flat(-self._flat, self.layout)

    def __repr__(self):
        return f"BlockVector(sizes={self.layout.sizes})"


def _as_flat(u) -> np.ndarray:
    return np.asarray(u, dtype=float).reshape(-1)


@dataclass(frozen=True)
class Preconditioner:
    """Symmetric positive semi-definite matrix on a product space."""

    matrix: np.ndarray
    block_layout: Optional[BlockLayout] = None

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"preconditioner must be square, got {m.shape}")
        scale = max(np.abs(m).max(initial=0.0), 1.0)
        if np.abs(m - m.T).max(initial=0.0) > SYMMETRY_RTOL * scale:
            raise NotSymmetric("preconditioner is not symmetric")
        layout = self.block_layout or BlockLayout((m.shape[0],))
        if layout.total_dim != m.shape[0]:
            raise DimensionMismatch(
                f"layout of dimension {layout.total_dim} for a {m.shape[0]}x{m.shape[0]} matrix"
            )
        if m.size:
            ev = np.linalg.eigvalsh(m)
            if ev[0] < -PSD_RTOL * max(ev[-1], 0.0) - 1e-300:
                raise NotPSD(f"smallest eigenvalue {ev[0]:.3e} is negative")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "block_layout", layout)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def _matrix_of(M) -> np.ndarray:
    if isinstance(M, Preconditioner):
        return M.matrix
    return np.asarray(M, dtype=float)


def m_inner(M, u, v) -> float:
    """Semi inner product ``<u, v>_M = u^T M v``."""
    m = _matrix_of(M)
    u, v = _as_flat(u), _as_flat(v)
    if u.shape != v.shape or u.shape[0] != m.shape[0]:
        raise DimensionMismatch(
            f"cannot pair vectors of length {u.size} and {v.size} through a {m.shape} matrix"
        )
    return float(u @ (m @ v))


def m_seminorm(M, u) -> float:
    # clip: u^T M u can be -eps for u near ker M
    return float(np.sqrt(max(m_inner(M, u, u), 0.0)))


@dataclass(frozen=True)
class Factorization:
    """Injective ``C`` (``d x rank``) with ``C C^T = M``.

    ``C`` is only defined up to an orthogonal transform on the right, so no
    code should depend on its individual entries.
    """

    c_matrix: np.ndarray
    rank: int
    pinv_cache: Optional[np.ndarray] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        c = np.array(self.c_matrix, dtype=float)
        if c.ndim != 2 or c.shape[1] != self.rank:
            raise DimensionMismatch(f"C has shape {c.shape}, rank {self.rank}")
        c.setflags(write=False)
        object.__setattr__(self, "c_matrix", c)

    @property
    def dim(self) -> int:
        return self.c_matrix.shape[0]

    @property
    def preconditioner_matrix(self) -> np.ndarray:
        return self.c_matrix @ self.c_matrix.T

    def reduce_lstsq(self, x) -> np.ndarray:
        """Least-squares solution ``w`` of ``C w = x``."""
        pinv = self.pinv_cache
        if pinv is None:
            pinv = np.linalg.pinv(self.c_matrix)
            object.__setattr__(self, "pinv_cache", pinv)
        return pinv @ _as_flat(x)

    @classmethod
    def from_closed_form(cls, c_matrix, M=None, tol: float = FACTOR_RTOL) -> "Factorization":
        """Install a known ``C``; checks injectivity and, if given, ``C C^T = M``."""
        c = np.asarray(c_matrix, dtype=float)
        if c.shape[1]:
            s = np.linalg.svd(c, compute_uv=False)
            if s[-1] <= tol * max(s[0], 1.0):
                raise FactorizationError("closed-form C is not injective")
        if M is not None:
            m = _matrix_of(M)
            err = np.linalg.norm(c @ c.T - m)
            if err > tol * max(np.linalg.norm(m), 1e-300):
                raise FactorizationError(f"C C^T differs from M by {err:.3e}")
        return cls(c, c.shape[1])


def factor_psd(M, tol: float = FACTOR_RTOL) -> Factorization:
    """Factor a PSD matrix as ``M = C C^T`` with ``C`` injective.

    Eigenpairs with eigenvalue ``> tol * lambda_max`` are kept and
    ``C = V diag(sqrt(lambda))``. The zero matrix gives a rank-0 factor.
    """
    if not isinstance(M, Preconditioner):
        M = Preconditioner(np.asarray(M, dtype=float))
    m = M.matrix
    d = m.shape[0]
    if d == 0:
        return Factorization(np.zeros((0, 0)), 0)
    ev, vecs = np.linalg.eigh(m)
    lam_max = max(ev[-1], 0.0)
    if ev[0] < -tol * lam_max:
        raise NotPSD(f"eigenvalue {ev[0]:.3e} below -tol*lambda_max")
    keep = ev > tol * lam_max if lam_max > 0 else np.zeros(d, dtype=bool)
    c = vecs[:, keep] * np.sqrt(ev[keep])
    return Factorization(c, int(keep.sum()))


def apply_cstar(F: Factorization, u) -> np.ndarray:
    """Map an iterate of the product space into the reduced space: ``C^T u``."""
    u = _as_flat(u)
    if u.shape[0] != F.dim:
        raise DimensionMismatch(f"vector of length {u.shape[0]} for C^T of dimension {F.dim}")
    return F.c_matrix.T @ u


def apply_c(F: Factorization, w) -> np.ndarray:
    w = _as_flat(w)
    if w.shape[0] != F.rank:
        raise DimensionMismatch(f"reduced vector of length {w.shape[0]}, rank is {F.rank}")
    return F.c_matrix @ w
