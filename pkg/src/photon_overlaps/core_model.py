"""Domain types shared by the simulation, design and estimation modules.

Conventions used throughout the package:

* Occupation lists are plain tuples of non-negative ints, one entry per mode.
* Scattering matrices are complex numpy arrays with ``U[i, j]`` the amplitude
  for a photon entering mode ``i`` to leave through mode ``j``.
* Photons are labelled by their position in the input assignment list.  A
  config's ``sources`` tuple says which physical photon source feeds each
  of those positions.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

PSD_TOLERANCE = 1e-12
UNITARY_TOLERANCE = 1e-12


class SchemaError(ValueError):
    """Malformed input: wrong shapes, lengths or field values."""


class PhysicsError(ValueError):
    """Input that is well-formed but unphysical (non-unitary, non-PSD, ...)."""


# --------------------------------------------------------------------------
# Occupation / assignment lists
# --------------------------------------------------------------------------

def as_occupation(occ: Sequence[int]) -> tuple[int, ...]:
    occ = tuple(int(o) for o in occ)
    if len(occ) < 1:
        raise SchemaError("an occupation list needs at least one mode")
    if any(o < 0 for o in occ):
        raise SchemaError(f"negative occupation in {occ}")
    return occ


def occupation_to_assignment(occ: Sequence[int]) -> tuple[int, ...]:
    """Mode index of every photon, sorted: ``(0, 2, 1) -> (1, 1, 2)``."""
    occ = as_occupation(occ)
    return tuple(mode for mode, k in enumerate(occ) for _ in range(k))


def assignment_to_occupation(assignment: Sequence[int], n_modes: int) -> tuple[int, ...]:
    occ = [0] * n_modes
    for mode in assignment:
        if not 0 <= mode < n_modes:
            raise SchemaError(f"mode {mode} outside [0, {n_modes})")
        occ[mode] += 1
    return tuple(occ)


def enumerate_outcomes(n_photons: int, n_modes: int) -> list[tuple[int, ...]]:
    """All occupation lists of ``n_photons`` in ``n_modes``, lexicographically descending.

    Leftmost mode is most significant, so ``(2, 2)`` gives
    ``[(2, 0), (1, 1), (0, 2)]``.
    """
    if n_photons < 0 or n_modes < 1:
        raise SchemaError("need n_photons >= 0 and n_modes >= 1")
    outcomes = []
    for combo in itertools.combinations_with_replacement(range(n_modes), n_photons):
        outcomes.append(assignment_to_occupation(combo, n_modes))
    # combinations_with_replacement already yields this order; sort anyway so the
    # contract does not hinge on an itertools implementation detail
    outcomes.sort(reverse=True)
    return outcomes


def factorial_product(occ: Sequence[int]) -> int:
    return math.prod(math.factorial(k) for k in occ)


# --------------------------------------------------------------------------
# Matrices
# --------------------------------------------------------------------------

def check_unitary(u, tol: float = UNITARY_TOLERANCE) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise SchemaError(f"scattering matrix must be square, got shape {u.shape}")
    residual = np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0])))
    if residual > tol:
        raise PhysicsError(f"matrix is not unitary (residual {residual:.3g})")
    return u


def check_distinguishability(s, tol: float = PSD_TOLERANCE) -> np.ndarray:
    """Validate a Gram matrix of photon internal states and return it as an array."""
    s = np.asarray(s, dtype=complex)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise SchemaError(f"distinguishability matrix must be square, got {s.shape}")
    if not np.allclose(s, s.conj().T, atol=1e-12, rtol=0):
        raise PhysicsError("distinguishability matrix is not Hermitian")
    if not np.allclose(np.diag(s), 1.0, atol=1e-12, rtol=0):
        raise PhysicsError("distinguishability matrix must have unit diagonal")
    if np.any(np.abs(s) > 1 + 1e-12):
        raise PhysicsError("overlap magnitude above 1")
    lam_min = np.linalg.eigvalsh(s).min()
    if lam_min < -tol:
        raise PhysicsError(f"distinguishability matrix not PSD (min eigenvalue {lam_min:.3g})")
    return s


def pair_list(n_photons: int) -> list[tuple[int, int]]:
    return list(itertools.combinations(range(n_photons), 2))


def pair_label(pair: tuple[int, int]) -> str:
    return f"x{pair[0] + 1}{pair[1] + 1}"


def n_photons_for_pairs(n_pairs: int) -> int:
    n = int(round((1 + math.sqrt(1 + 8 * n_pairs)) / 2))
    if n * (n - 1) // 2 != n_pairs:
        raise SchemaError(f"{n_pairs} is not a triangular number of photon pairs")
    return n


@dataclass(frozen=True)
class OverlapParameters:
    """Pairwise overlap magnitudes (and phases) of ``n`` photon sources.

    Pairs are ordered lexicographically, so for three photons the magnitudes
    are ``(x12, x13, x23)``.  The gauge puts every phase on the upper
    triangle entry ``S[i, j]``; for three photons only ``S[0, 2]`` carries a
    phase, the triad phase.  Construction fails for unphysical combinations.
    """

    magnitudes: tuple[float, ...]
    phases: tuple[float, ...] = ()

    def __post_init__(self):
        mags = tuple(float(x) for x in self.magnitudes)
        n_pairs = len(mags)
        n_photons_for_pairs(n_pairs)
        phases = tuple(float(p) for p in self.phases) or (0.0,) * n_pairs
        if len(phases) != n_pairs:
            raise SchemaError("need one phase per photon pair")
        if any(not 0.0 <= x <= 1.0 for x in mags):
            raise PhysicsError(f"overlap magnitudes must lie in [0, 1]: {mags}")
        object.__setattr__(self, "magnitudes", mags)
        object.__setattr__(self, "phases", phases)
        check_distinguishability(self.to_matrix())

    @classmethod
    def three(cls, x12: float, x13: float, x23: float, triad_phase: float = 0.0):
        return cls((x12, x13, x23), (0.0, triad_phase, 0.0))

    @classmethod
    def uniform(cls, n_photons: int, x: float):
        return cls((x,) * (n_photons * (n_photons - 1) // 2))

    @property
    def n_photons(self) -> int:
        return n_photons_for_pairs(len(self.magnitudes))

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return pair_list(self.n_photons)

    @property
    def labels(self) -> list[str]:
        return [pair_label(p) for p in self.pairs]

    @property
    def x12(self) -> float:
        return self.magnitudes[0]

    @property
    def x13(self) -> float:
        return self.magnitudes[1]

    @property
    def x23(self) -> float:
        return self.magnitudes[2]

    @property
    def triad_phase(self) -> float:
        if self.n_photons != 3:
            raise AttributeError("triad phase is defined for three photons")
        return self.phases[1]

    def to_matrix(self) -> np.ndarray:
        return overlap_matrix(self.magnitudes, self.phases)

    def with_magnitudes(self, magnitudes) -> "OverlapParameters":
        return OverlapParameters(tuple(magnitudes), self.phases)

    @classmethod
    def from_matrix(cls, s) -> "OverlapParameters":
        """Read magnitudes and phases back from a gauge-fixed Gram matrix."""
        s = check_distinguishability(s)
        pairs = pair_list(s.shape[0])
        # rounding can leave |S_ij| a hair above 1 for parallel internal states
        mags = tuple(min(float(abs(s[i, j])), 1.0) for i, j in pairs)
        phases = tuple(float(np.angle(s[i, j])) if abs(s[i, j]) > 0 else 0.0 for i, j in pairs)
        return cls(mags, phases)


def overlap_matrix(magnitudes, phases=None) -> np.ndarray:
    """Hermitian unit-diagonal matrix from pair magnitudes/phases, no validation."""
    magnitudes = np.asarray(magnitudes, dtype=float)
    n = n_photons_for_pairs(len(magnitudes))
    if phases is None or len(phases) == 0:
        phases = np.zeros(len(magnitudes))
    s = np.eye(n, dtype=complex)
    for (i, j), x, phi in zip(pair_list(n), magnitudes, phases):
        s[i, j] = x * np.exp(1j * phi)
        s[j, i] = np.conj(s[i, j])
    return s


def overlap_derivatives(phases, n_photons: int) -> np.ndarray:
    """d S / d x_p for every pair p, stacked as shape (n_pairs, n, n)."""
    pairs = pair_list(n_photons)
    if phases is None or len(phases) == 0:
        phases = np.zeros(len(pairs))
    ds = np.zeros((len(pairs), n_photons, n_photons), dtype=complex)
    for k, ((i, j), phi) in enumerate(zip(pairs, phases)):
        ds[k, i, j] = np.exp(1j * phi)
        ds[k, j, i] = np.exp(-1j * phi)
    return ds


def relabel_sources(s: np.ndarray, sources: Sequence[int]) -> np.ndarray:
    """Gram matrix seen by the photons of a config fed by ``sources``."""
    idx = np.asarray(sources, dtype=int)
    return s[np.ix_(idx, idx)]


# --------------------------------------------------------------------------
# Interferometer parameters and experiment designs
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class MeshParameters:
    """Splitting ratios (Clements column order) and internal phases of a mesh.

    A ratio is the probability that a photon stays in its own mode at that
    beamsplitter; see :func:`photon_overlaps.interferometer.beamsplitter`.
    """

    splitting_ratios: tuple[float, ...]
    phases: tuple[float, ...] = ()

    def __post_init__(self):
        ratios = tuple(float(t) for t in self.splitting_ratios)
        if any(not 0.0 <= t <= 1.0 for t in ratios):
            raise SchemaError(f"splitting ratios must lie in [0, 1]: {ratios}")
        object.__setattr__(self, "splitting_ratios", ratios)
        object.__setattr__(self, "phases", tuple(float(a) for a in self.phases))

    @property
    def n_modes(self) -> int:
        # N(N-1)/2 beamsplitters in a full Clements layout
        n_bs = len(self.splitting_ratios)
        return int(round((1 + math.sqrt(1 + 8 * n_bs)) / 2))

    def as_vector(self) -> np.ndarray:
        return np.array(self.splitting_ratios + self.phases)


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """One interference experiment: interferometer, input pattern, source routing.

    Exactly one of ``mesh`` and ``unitary`` describes the interferometer.
    ``sources[j]`` is the photon source feeding the j-th photon of the input
    assignment list.  ``sources`` defaults to the identity routing.
    """

    input: tuple[int, ...]
    mesh: MeshParameters | None = None
    unitary: np.ndarray | None = None
    sources: tuple[int, ...] = ()
    label: str = ""

    def __post_init__(self):
        occ = as_occupation(self.input)
        object.__setattr__(self, "input", occ)
        if (self.mesh is None) == (self.unitary is None):
            raise SchemaError("give exactly one of mesh or unitary")
        n = sum(occ)
        sources = tuple(int(k) for k in self.sources) or tuple(range(n))
        if len(sources) != n:
            raise SchemaError("sources must list one photon source per photon")
        if len(set(sources)) != n or min(sources, default=0) < 0:
            raise SchemaError("sources must be distinct non-negative labels")
        object.__setattr__(self, "sources", sources)
        if self.unitary is not None:
            u = check_unitary(self.unitary)
            if u.shape[0] != len(occ):
                raise SchemaError("unitary size does not match number of modes")
            object.__setattr__(self, "unitary", u)

    @property
    def n_photons(self) -> int:
        return sum(self.input)

    @property
    def n_modes(self) -> int:
        return len(self.input)

    def scattering_matrix(self) -> np.ndarray:
        if self.unitary is not None:
            return self.unitary
        from .interferometer import build_mesh

        return build_mesh(self.mesh, self.n_modes)


@dataclass(frozen=True, eq=False)
class ExperimentDesign:
    configs: tuple[ExperimentConfig, ...]
    weights: tuple[float, ...] = ()

    def __post_init__(self):
        configs = tuple(self.configs)
        if not configs:
            raise SchemaError("a design needs at least one config")
        weights = np.asarray(self.weights or [1.0] * len(configs), dtype=float)
        if len(weights) != len(configs) or np.any(weights < 0) or weights.sum() <= 0:
            raise SchemaError("weights must be non-negative, one per config")
        object.__setattr__(self, "configs", configs)
        object.__setattr__(self, "weights", tuple(weights / weights.sum()))

    def __len__(self) -> int:
        return len(self.configs)

    def __iter__(self) -> Iterator[ExperimentConfig]:
        return iter(self.configs)


# --------------------------------------------------------------------------
# Distributions, counts, information matrices
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Pmf:
    outcomes: list[tuple[int, ...]]
    probabilities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probabilities", np.asarray(self.probabilities, dtype=float))
        if len(self.outcomes) != len(self.probabilities):
            raise SchemaError("outcomes and probabilities differ in length")

    def __getitem__(self, outcome) -> float:
        return float(self.probabilities[self.index(outcome)])

    def index(self, outcome) -> int:
        return self.outcomes.index(tuple(outcome))

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return dict(zip(self.outcomes, self.probabilities.tolist()))


@dataclass(frozen=True, eq=False)
class CountTable:
    outcomes: list[tuple[int, ...]]
    counts: np.ndarray
    sources: tuple[int, ...] = ()

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (len(self.outcomes),):
            raise SchemaError("one count per outcome required")
        if np.any(counts < 0):
            raise SchemaError("counts must be non-negative")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "sources", tuple(int(k) for k in self.sources))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def frequencies(self) -> np.ndarray:
        total = self.total
        return self.counts / total if total else np.zeros(len(self.counts))


@dataclass(frozen=True, eq=False)
class FisherMatrix:
    entries: np.ndarray
    parameter_labels: tuple[str, ...] = field(default=())
    underflow_terms: int = 0

    def __post_init__(self):
        entries = np.atleast_2d(np.asarray(self.entries, dtype=float))
        if entries.shape[0] != entries.shape[1]:
            raise SchemaError("Fisher matrix must be square")
        object.__setattr__(self, "entries", entries)
        labels = tuple(self.parameter_labels) or tuple(f"p{i}" for i in range(len(entries)))
        object.__setattr__(self, "parameter_labels", labels)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def __add__(self, other: "FisherMatrix") -> "FisherMatrix":
        return FisherMatrix(self.entries + other.entries, self.parameter_labels,
                            self.underflow_terms + other.underflow_terms)

    def scaled(self, factor: float) -> "FisherMatrix":
        return FisherMatrix(self.entries * factor, self.parameter_labels, self.underflow_terms)

    def is_valid(self, rtol: float = 1e-8) -> bool:
        """Symmetric and PSD up to the relative tolerance."""
        scale = max(np.max(np.abs(self.entries)), 1e-300)
        if np.max(np.abs(self.entries - self.entries.T)) > rtol * scale:
            return False
        sym = 0.5 * (self.entries + self.entries.T)
        return bool(np.linalg.eigvalsh(sym).min() >= -rtol * np.linalg.norm(sym))
