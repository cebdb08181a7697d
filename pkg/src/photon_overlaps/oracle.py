"""Brute-force Fock-space simulation used to check the permanent-based pmf.

Each photon is given explicit internal-state coordinates, the creation
operators are pushed through ``U (x) 1`` and the product state is expanded
over joint (spatial, internal) modes.  Nothing here shares code with the
permanent formula.
"""

from __future__ import annotations

import math
from collections import defaultdict
from typing import Sequence

import numpy as np

from .core_model import (
    PhysicsError,
    Pmf,
    SchemaError,
    as_occupation,
    check_distinguishability,
    check_unitary,
    enumerate_outcomes,
    occupation_to_assignment,
)

MAX_ORACLE_PHOTONS = 5


def internal_basis_decomposition(s_matrix) -> np.ndarray:
    """Columns ``v_j`` with ``v_i^dagger v_j = S[i, j]``.

    Cholesky when ``S`` is positive definite; otherwise an eigendecomposition
    with negative eigenvalues floored at zero.
    """
    s = np.asarray(s_matrix, dtype=complex)
    try:
        lower = np.linalg.cholesky(s)
        vectors = lower.conj().T
    except np.linalg.LinAlgError:
        lam, q = np.linalg.eigh(s)
        if lam.min() < -1e-10:
            raise PhysicsError("cannot decompose a non-PSD distinguishability matrix")
        vectors = np.sqrt(np.clip(lam, 0.0, None))[:, None] * q.conj().T
    if not np.allclose(vectors.conj().T @ vectors, s, atol=1e-10):
        raise PhysicsError("internal-state decomposition does not reproduce S")
    return vectors


def _expand(creation_rows: list[np.ndarray]) -> dict[tuple[int, ...], complex]:
    """Expand ``prod_j (sum_m c_j[m] a_m^dagger)|0>`` into normalized Fock amplitudes."""
    n_joint = len(creation_rows[0])
    poly: dict[tuple[int, ...], complex] = {(0,) * n_joint: 1.0 + 0j}
    for coeffs in creation_rows:
        support = np.flatnonzero(np.abs(coeffs) > 0)
        nxt: dict[tuple[int, ...], complex] = defaultdict(complex)
        for occ, amp in poly.items():
            for m in support:
                new = list(occ)
                new[m] += 1
                nxt[tuple(new)] += amp * coeffs[m]
        poly = nxt
    # (a^dagger)^q |0> = sqrt(q!) |q>
    return {occ: amp * math.sqrt(math.prod(math.factorial(k) for k in occ)) for occ, amp in poly.items()}


def fock_oracle_pmf(u, input_occ: Sequence[int], s_matrix) -> Pmf:
    u = check_unitary(u)
    occ = as_occupation(input_occ)
    s = check_distinguishability(s_matrix)
    n = sum(occ)
    n_modes = len(occ)
    if u.shape[0] != n_modes or s.shape[0] != n:
        raise SchemaError("dimension mismatch between unitary, input and S")
    if n > MAX_ORACLE_PHOTONS:
        raise SchemaError(f"oracle limited to {MAX_ORACLE_PHOTONS} photons")
    vectors = internal_basis_decomposition(s)
    n_int = vectors.shape[0]
    modes = occupation_to_assignment(occ)

    # joint mode index = spatial * n_int + internal
    before = [np.kron(np.eye(n_modes)[mode], vectors[:, j]) for j, mode in enumerate(modes)]
    after = [np.kron(u[mode], vectors[:, j]) for j, mode in enumerate(modes)]

    norm = sum(abs(a) ** 2 for a in _expand(before).values())
    probs: dict[tuple[int, ...], float] = defaultdict(float)
    for joint, amp in _expand(after).items():
        spatial = tuple(sum(joint[m * n_int:(m + 1) * n_int]) for m in range(n_modes))
        probs[spatial] += abs(amp) ** 2 / norm
    outcomes = enumerate_outcomes(n, n_modes)
    return Pmf(outcomes, np.array([probs.get(o, 0.0) for o in outcomes]))
