"""Dense float64 linear-algebra and probability primitives.

Conventions used throughout the package:

* matrices are 2-D C-contiguous ``float64`` arrays, vectors are 1-D
  ``float64`` arrays;
* all public outputs are finite (no NaN/Inf);
* randomness comes from the counter-based Philox generator, keyed by
  ``(seed, stream)`` so sub-streams for distinct purposes never overlap.
  The same (seed, stream) pair reproduces the same draws on every run.

The heavy lifting is delegated to numpy; shapes and preconditions are
checked here so dimension mistakes fail loudly instead of broadcasting.
"""

from __future__ import annotations

import numpy as np

from .errors import ContractViolation

_MASK64 = (1 << 64) - 1


def mix_seed(seed: int, stream: int) -> int:
    """Derive a sub-seed from (seed, stream) via the SplitMix64 finalizer.

    Used wherever one user-facing seed has to drive several independent
    random purposes (per-epoch shuffles, per-split masks, ...).
    """
    x = (seed + 0x9E3779B97F4A7C15 * (stream + 1)) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (x ^ (x >> 31)) & _MASK64


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator keyed by (seed, stream); identical key, identical stream."""
    key = ((seed & _MASK64) << 64) | (stream & _MASK64)
    return np.random.Generator(np.random.Philox(key=key))


def as_matrix(a) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ContractViolation(f"expected a matrix, got ndim={a.ndim}")
    return a


def as_vector(x) -> np.ndarray:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise ContractViolation(f"expected a vector, got ndim={x.ndim}")
    return x


def matvec(a, x) -> np.ndarray:
    """Matrix-vector product; dims must chain."""
    a = as_matrix(a)
    x = as_vector(x)
    if a.shape[1] != x.shape[0]:
        raise ContractViolation(f"matvec dims {a.shape} x {x.shape} do not chain")
    return a @ x


def outer(x, y) -> np.ndarray:
    """Rank-one matrix x yᵀ."""
    return np.outer(as_vector(x), as_vector(y))


def softmax(z) -> np.ndarray:
    """Numerically stable softmax (max is subtracted before exponentiation)."""
    z = as_vector(z)
    if z.shape[0] == 0:
        raise ContractViolation("softmax of empty vector")
    e = np.exp(z - z.max())
    return e / e.sum()


def softmax_rows(z: np.ndarray) -> np.ndarray:
    """Row-wise stable softmax for a 2-D batch of score vectors."""
    z = as_matrix(z)
    if z.shape[1] == 0:
        raise ContractViolation("softmax of empty rows")
    e = np.exp(z - z.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def cholesky_ok(a, pivot_floor: float = 1e-12) -> bool:
    """True iff the Cholesky factorization of `a` succeeds.

    Pivots are the diagonal Schur complements; every one must exceed
    `pivot_floor`. Input must be square and symmetric within 1e-9.
    """
    a = as_matrix(a)
    n, m = a.shape
    if n != m:
        raise ContractViolation(f"cholesky_ok needs a square matrix, got {a.shape}")
    if n and np.abs(a - a.T).max() > 1e-9:
        raise ContractViolation("cholesky_ok needs a symmetric matrix (within 1e-9)")
    lower = np.zeros_like(a)
    for j in range(n):
        d = a[j, j] - lower[j, :j] @ lower[j, :j]
        if d <= pivot_floor:
            return False
        lower[j, j] = np.sqrt(d)
        if j + 1 < n:
            lower[j + 1 :, j] = (a[j + 1 :, j] - lower[j + 1 :, :j] @ lower[j, :j]) / lower[j, j]
    return True
