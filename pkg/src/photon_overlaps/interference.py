"""Output distributions of partially distinguishable photons in a linear interferometer.

For input occupation ``r``, output ``s`` and ``M = U[d(r), d(s)]``::

    P(s) = 1/(N_in * prod s_i!) * sum_sigma [prod_j S[sigma(j), j]] perm(M o conj(M[sigma]))

``N_in`` is the norm of the input state: ``prod r_i!`` whenever photons that
share an input mode are mutually indistinguishable, and in general the sum of
``prod_j S[sigma(j), j]`` over the permutations that only shuffle photons
within their input modes.

The probability is linear in the products ``w_sigma = prod_j S[sigma(j), j]``,
so a config's pmf is stored as a coefficient table ``C[s, sigma]`` once per
interferometer and evaluated cheaply for many Gram matrices.  That is what
the Fisher-information and likelihood code build on.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .core_model import (
    CountTable,
    PhysicsError,
    Pmf,
    SchemaError,
    as_occupation,
    check_distinguishability,
    check_unitary,
    enumerate_outcomes,
    factorial_product,
    occupation_to_assignment,
)
from .permanent import batch_permanent, permutation_table

NEGATIVE_PROBABILITY_TOL = 1e-12
IMAGINARY_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class InterferenceTable:
    """Coefficients ``C[s, sigma]`` of a fixed (U, input) pair."""

    outcomes: list[tuple[int, ...]]
    coefficients: np.ndarray  # (n_outcomes, n!)
    permutations: np.ndarray  # (n!, n)
    stabilizer: np.ndarray  # bool mask over permutations preserving the input modes

    @property
    def n_photons(self) -> int:
        return self.permutations.shape[1]

    def permutation_weights(self, s: np.ndarray) -> np.ndarray:
        """``w_sigma = prod_j S[sigma(j), j]`` for every permutation."""
        n = self.n_photons
        return np.prod(s[self.permutations, np.arange(n)], axis=1)

    def permutation_weight_gradients(self, s: np.ndarray, ds: np.ndarray) -> np.ndarray:
        """d w_sigma / d theta_k for a Gram matrix linear in each parameter.

        ``ds`` has shape ``(n_params, n, n)``; returns ``(n_params, n!)``.
        """
        n = self.n_photons
        cols = np.arange(n)
        factors = s[self.permutations, cols]  # (n!, n)
        dfactors = ds[:, self.permutations, cols]  # (p, n!, n)
        grad = np.zeros(dfactors.shape[:2], dtype=complex)
        for j in range(n):
            others = np.prod(np.delete(factors, j, axis=1), axis=1)
            grad += dfactors[:, :, j] * others
        return grad

    def probabilities(self, s: np.ndarray) -> np.ndarray:
        """Unvalidated evaluation; ``s`` may be any Hermitian unit-diagonal matrix."""
        w = self.permutation_weights(s)
        norm = w[self.stabilizer].sum().real
        return (self.coefficients @ w).real / norm

    def probabilities_and_gradients(self, s: np.ndarray, ds: np.ndarray):
        w = self.permutation_weights(s)
        dw = self.permutation_weight_gradients(s, ds)
        numer = (self.coefficients @ w).real
        dnumer = (dw @ self.coefficients.T).real  # (p, n_outcomes)
        norm = w[self.stabilizer].sum().real
        dnorm = dw[:, self.stabilizer].sum(axis=1).real
        p = numer / norm
        dp = (dnumer * norm - numer[None, :] * dnorm[:, None]) / norm**2
        return p, dp


@lru_cache(maxsize=64)
def _layout(occ: tuple[int, ...]):
    """Everything about (input, outcomes) that does not depend on U."""
    rows = np.array(occupation_to_assignment(occ), dtype=np.intp)
    n = len(rows)
    perms = permutation_table(n)
    outcomes = enumerate_outcomes(n, len(occ))
    cols = np.array([occupation_to_assignment(s) for s in outcomes], dtype=np.intp).reshape(len(outcomes), n)
    out_fact = np.array([factorial_product(s) for s in outcomes], dtype=float)
    stabilizer = np.all(rows[perms] == rows[None, :], axis=1)
    return rows, perms, outcomes, cols, out_fact, stabilizer


def interference_table(u, input_occ: Sequence[int]) -> InterferenceTable:
    u = np.asarray(u, dtype=complex)
    occ = as_occupation(input_occ)
    n_modes = len(occ)
    if u.ndim != 2 or u.shape != (n_modes, n_modes):
        raise SchemaError(f"unitary of shape {u.shape} does not match {n_modes} input modes")
    rows, perms, outcomes, cols, out_fact, stabilizer = _layout(occ)
    m = u[rows[None, :, None], cols[:, None, :]]  # (n_out, n, n)
    # M o conj(M_sigma), rows of the conjugated copy permuted by sigma
    hadamard = m[:, None, :, :] * np.conj(m[:, perms, :])  # (n_out, n!, n, n)
    coefficients = batch_permanent(hadamard) / out_fact[:, None]
    return InterferenceTable(list(outcomes), coefficients, perms, stabilizer)


def _finalize(outcomes, probs: np.ndarray) -> Pmf:
    if np.any(probs < -NEGATIVE_PROBABILITY_TOL):
        raise PhysicsError(f"negative probability {probs.min():.3g}; model inconsistency")
    return Pmf(list(outcomes), np.clip(probs, 0.0, None))


def pmf(u, input_occ: Sequence[int], s_matrix) -> Pmf:
    """Output distribution over all occupation lists, in canonical order."""
    u = check_unitary(u)
    occ = as_occupation(input_occ)
    s_matrix = check_distinguishability(s_matrix)
    if s_matrix.shape[0] != sum(occ):
        raise SchemaError("distinguishability matrix size must equal the photon number")
    table = interference_table(u, occ)
    w = table.permutation_weights(s_matrix)
    amp = table.coefficients @ w / w[table.stabilizer].sum()
    if np.max(np.abs(amp.imag), initial=0.0) > IMAGINARY_TOL:
        raise PhysicsError("probabilities acquired an imaginary part")
    return _finalize(table.outcomes, amp.real)


def indistinguishable_pmf(u, input_occ: Sequence[int]) -> Pmf:
    """``|perm M|^2 / (prod r! prod s!)``: the fully bosonic limit."""
    return _limit_pmf(u, input_occ, lambda m: abs(_perm(m)) ** 2)


def distinguishable_pmf(u, input_occ: Sequence[int]) -> Pmf:
    """``perm(|M|^2) / prod s!``: classical particles.

    Distinguishable photons sharing an input mode are not a symmetrized
    state, so no ``prod r!`` appears (it is 1 for unbunched inputs anyway).
    """
    occ = as_occupation(input_occ)
    return _limit_pmf(u, occ, lambda m: _perm(np.abs(m) ** 2).real * factorial_product(occ))


def _perm(m):
    from .permanent import permanent

    return permanent(m)


def _limit_pmf(u, input_occ, value) -> Pmf:
    u = check_unitary(u)
    occ = as_occupation(input_occ)
    rows = list(occupation_to_assignment(occ))
    outcomes = enumerate_outcomes(len(rows), len(occ))
    probs = []
    for s in outcomes:
        m = u[np.ix_(rows, list(occupation_to_assignment(s)))]
        probs.append(value(m) / (factorial_product(occ) * factorial_product(s)))
    return _finalize(outcomes, np.array(probs))


# --------------------------------------------------------------------------
# Sampling and distances
# --------------------------------------------------------------------------

def sample(p: Pmf, n_samples: int, seed) -> CountTable:
    """Multinomial counts drawn with a PCG64 stream from ``seed``.

    ``seed`` may be an int or a ``numpy.random.SeedSequence``; the same seed
    always produces the same table on every platform.
    """
    if n_samples < 0:
        raise SchemaError("n_samples must be non-negative")
    rng = np.random.Generator(np.random.PCG64(seed))
    probs = np.clip(p.probabilities, 0.0, None)
    counts = rng.multinomial(n_samples, probs / probs.sum())
    return CountTable(list(p.outcomes), counts)


def sample_stream(p: Pmf, n_samples: int, seed) -> np.ndarray:
    """Chronological sequence of outcome indices (for sample-count studies)."""
    if n_samples < 0:
        raise SchemaError("n_samples must be non-negative")
    rng = np.random.Generator(np.random.PCG64(seed))
    probs = np.clip(p.probabilities, 0.0, None)
    return rng.choice(len(probs), size=n_samples, p=probs / probs.sum())


def counts_from_stream(stream: np.ndarray, outcomes, n: int | None = None, sources=()) -> CountTable:
    stream = np.asarray(stream)[:n]
    return CountTable(list(outcomes), np.bincount(stream, minlength=len(outcomes)), sources)


def total_variation_distance(p, q) -> float:
    """Half the L1 distance; accepts Pmf objects or aligned probability arrays."""
    if isinstance(p, Pmf) and isinstance(q, Pmf):
        if p.outcomes != q.outcomes:
            raise SchemaError("pmfs are defined over different outcome sets")
        p, q = p.probabilities, q.probabilities
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise SchemaError("distributions have different lengths")
    return float(0.5 * np.abs(p - q).sum())


def coarse_grain_bunching(p: Pmf, regions) -> dict[str, float]:
    """Collapse a two-photon pmf to bunched / anti-bunched events.

    ``regions`` is a pair of mode groups (a bare int is a one-mode group).
    Anti-bunched means one photon in each group; everything else is bunched.
    """
    if not p.outcomes or sum(p.outcomes[0]) != 2:
        raise SchemaError("bunching coarse-graining needs a two-photon pmf")
    first, second = ({r} if isinstance(r, (int, np.integer)) else set(r) for r in regions)
    if first & second:
        raise SchemaError("bunching regions overlap")
    anti = 0.0
    for outcome, prob in zip(p.outcomes, p.probabilities):
        in_first = sum(outcome[m] for m in first)
        in_second = sum(outcome[m] for m in second)
        if in_first == 1 and in_second == 1:
            anti += prob
    return {"bunched": float(p.probabilities.sum() - anti), "anti_bunched": float(anti)}
