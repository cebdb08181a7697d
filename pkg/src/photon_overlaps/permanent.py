"""Matrix permanents: direct permutation sum and Ryser's formula with Gray-code updates."""

from __future__ import annotations

import itertools
from functools import lru_cache

import numpy as np

MAX_DIM = 12
NAIVE_MAX_DIM = 4


@lru_cache(maxsize=None)
def permutation_table(n: int) -> np.ndarray:
    """All permutations of ``range(n)`` as an ``(n!, n)`` int array, identity first."""
    return np.array(list(itertools.permutations(range(n))), dtype=np.intp).reshape(-1, n)


def _check_square(m) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError(f"permanent needs a square matrix, got shape {m.shape}")
    if m.shape[0] > MAX_DIM:
        raise ValueError(f"permanent dimension {m.shape[0]} exceeds guard limit {MAX_DIM}")
    return m


def permanent_naive(m) -> complex:
    """Sum over all permutations of the products ``m[i, sigma(i)]``."""
    m = _check_square(m)
    n = m.shape[0]
    if n == 0:
        return 1.0 + 0j
    perms = permutation_table(n)
    return complex(np.prod(m[np.arange(n), perms], axis=1).sum())


def permanent_ryser(m) -> complex:
    """Ryser's inclusion-exclusion formula, O(2^n n) with Gray-code row sums."""
    m = _check_square(m)
    n = m.shape[0]
    if n == 0:
        return 1.0 + 0j
    row_sums = np.zeros(n, dtype=complex)
    total = 0j
    subset = 0
    for k in range(1, 2**n):
        # Gray code: exactly one column enters or leaves the subset per step
        gray = k ^ (k >> 1)
        col = (gray ^ subset).bit_length() - 1
        if gray & (1 << col):
            row_sums += m[:, col]
        else:
            row_sums -= m[:, col]
        subset = gray
        size = bin(gray).count("1")
        sign = -1 if size % 2 else 1
        total += sign * np.prod(row_sums)
    return complex((-1) ** n * total)


def permanent(m) -> complex:
    """Permanent of a square complex matrix (dimension at most 12)."""
    m = _check_square(m)
    if m.shape[0] <= NAIVE_MAX_DIM:
        return permanent_naive(m)
    return permanent_ryser(m)


def batch_permanent(stack) -> np.ndarray:
    """Permanents of a stack of equally sized square matrices, shape ``(..., n, n)``."""
    stack = np.asarray(stack, dtype=complex)
    n = stack.shape[-1]
    if stack.shape[-2] != n:
        raise ValueError("batch_permanent needs square matrices")
    lead = stack.shape[:-2]
    if n == 0:
        return np.ones(lead, dtype=complex)
    if n <= NAIVE_MAX_DIM:
        perms = permutation_table(n)
        picked = stack[..., np.arange(n), perms]  # (..., n!, n)
        return picked.prod(axis=-1).sum(axis=-1)
    flat = stack.reshape(-1, n, n)
    return np.array([permanent_ryser(a) for a in flat]).reshape(lead)
