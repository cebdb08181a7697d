"""Maximum-likelihood fits of overlaps and mesh parameters to count data.

The model has eight parameters: the three overlap magnitudes, the triad
phase, and the mesh (t1, t2, t3, alpha) shared by every run.  Runs differ
only in how the photon sources are routed to the input modes.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .core_model import (
    CountTable,
    ExperimentConfig,
    ExperimentDesign,
    FisherMatrix,
    MeshParameters,
    OverlapParameters,
    Pmf,
    SchemaError,
    enumerate_outcomes,
    overlap_matrix,
)
from .fisher import hom_baseline_fim, inverse_metrics, summed_fim
from .interference import counts_from_stream, interference_table, sample_stream, total_variation_distance
from .interferometer import mesh_unitary

log = logging.getLogger(__name__)

INPUT = (1, 1, 1)
PARAMETER_LABELS = ("x12", "x13", "x23", "triad_phase", "t1", "t2", "t3", "alpha")
MAGNITUDES = (0, 1, 2)
LOG_FLOOR = 1e-300
PSD_MARGIN = 1e-9
PSD_WEIGHT = 1e6


@dataclass(frozen=True)
class FullParameters:
    overlaps: OverlapParameters
    mesh: MeshParameters

    def as_vector(self) -> np.ndarray:
        o = self.overlaps
        return np.array([o.x12, o.x13, o.x23, o.triad_phase, *self.mesh.splitting_ratios, *self.mesh.phases])

    @classmethod
    def from_vector(cls, v) -> "FullParameters":
        v = [float(a) for a in v]
        return cls(OverlapParameters.three(*v[:4]), MeshParameters(tuple(v[4:7]), (v[7],)))


@dataclass
class FitResult:
    estimate: FullParameters
    log_likelihood: float
    observed_fim: FisherMatrix
    converged: bool
    tvd_per_config: list[float] = field(default_factory=list)
    restarts: int = 0


# --------------------------------------------------------------------------
# Likelihood
# --------------------------------------------------------------------------

def _check_tables(data: Sequence[CountTable]) -> list[CountTable]:
    canonical = enumerate_outcomes(3, 3)
    if not data:
        raise SchemaError("no count tables given")
    for table in data:
        if list(table.outcomes) != canonical:
            raise SchemaError("count table outcomes are not in canonical order")
        if len(table.sources) != 3:
            raise SchemaError("every count table must record its source routing")
    return list(data)


def merge_tables(data: Sequence[CountTable]) -> list[CountTable]:
    """Sum tables that share a source routing; order of first appearance kept."""
    merged: dict[tuple[int, ...], np.ndarray] = {}
    for table in _check_tables(data):
        if table.sources in merged:
            merged[table.sources] = merged[table.sources] + table.counts
        else:
            merged[table.sources] = table.counts.copy()
    outcomes = list(data[0].outcomes)
    return [CountTable(outcomes, counts, sources) for sources, counts in merged.items()]


def _model_probabilities(vec, sources_list) -> list[np.ndarray]:
    u = mesh_unitary(np.clip(vec[4:7], 0.0, 1.0), vec[7:8], 3)
    table = interference_table(u, INPUT)
    s = overlap_matrix(vec[:3], (0.0, vec[3], 0.0))
    return [table.probabilities(s[np.ix_(src, src)]) for src in sources_list]


def _log_likelihood_vec(vec, tables: list[CountTable]) -> float:
    total = 0.0
    for table, p in zip(tables, _model_probabilities(vec, [t.sources for t in tables])):
        hit = table.counts > 0
        if np.any(p[hit] < LOG_FLOOR):
            return -math.inf
        total += float(np.dot(table.counts[hit], np.log(p[hit])))
    return total


def log_likelihood(data: Sequence[CountTable], params: FullParameters) -> float:
    """Sum over runs and outcomes of ``counts * log P``; ``-inf`` for impossible data."""
    return _log_likelihood_vec(params.as_vector(), merge_tables(data))


def model_pmfs(data: Sequence[CountTable], params: FullParameters) -> list[np.ndarray]:
    tables = _check_tables(data)
    return _model_probabilities(params.as_vector(), [t.sources for t in tables])


# --------------------------------------------------------------------------
# Fit
# --------------------------------------------------------------------------

def _to_internal(vec) -> np.ndarray:
    # ratios enter as angles, t = cos^2(beta): smooth through t = 0 and t = 1
    out = np.array(vec, dtype=float)
    out[4:7] = np.arccos(np.sqrt(np.clip(vec[4:7], 0.0, 1.0)))
    return out


def _to_external(z) -> np.ndarray:
    out = np.array(z, dtype=float)
    out[4:7] = np.cos(z[4:7]) ** 2
    return out


_BOUNDS = [(0.0, 1.0)] * 3 + [(-2 * np.pi, 2 * np.pi)] + [(0.0, np.pi / 2)] * 3 + [(-2 * np.pi, 2 * np.pi)]


def _psd_penalty(vec) -> float:
    lam = np.linalg.eigvalsh(overlap_matrix(vec[:3], (0.0, vec[3], 0.0))).min()
    return PSD_WEIGHT * max(0.0, -PSD_MARGIN - lam) ** 2


def _objective(z, tables, n_total) -> float:
    vec = _to_external(z)
    penalty = _psd_penalty(vec)
    ll = _log_likelihood_vec(vec, tables)
    if not math.isfinite(ll):
        return 1e6 + penalty
    return -ll / n_total + penalty


def _start_points(init: FullParameters, restarts: int, rng: np.random.Generator) -> list[np.ndarray]:
    base = _to_internal(init.as_vector())
    starts = [base]
    while len(starts) < restarts:
        z = base.copy()
        z[:3] = rng.uniform(0.3, 0.99, 3)
        z[3] = rng.uniform(-np.pi, np.pi)
        z[4:7] = np.clip(base[4:7] + rng.normal(0.0, 0.05, 3), 0.0, np.pi / 2)
        z[7] = base[7] + rng.normal(0.0, 0.2)
        if _psd_penalty(_to_external(z)) == 0.0:
            starts.append(z)
    return starts


def _wrap(a: float) -> float:
    return float((a + np.pi) % (2 * np.pi) - np.pi)


def mle_fit(
    data: Sequence[CountTable],
    init: FullParameters,
    restarts: int = 4,
    seed: int = 0,
) -> FitResult:
    """Multi-start bounded quasi-Newton maximization of the joint likelihood.

    The first start is ``init`` (typically the programmed mesh and a guess of
    the overlaps); further starts redraw the overlaps and jitter the mesh
    with a generator seeded by ``seed``.  Ties between restarts are broken
    by parameter vector order, so the result is deterministic.
    """
    tables = merge_tables(data)
    n_total = sum(t.total for t in tables)
    if n_total == 0:
        raise SchemaError("cannot fit without any counts")
    rng = np.random.Generator(np.random.PCG64(seed))
    best = None
    any_converged = False
    for z0 in _start_points(init, max(restarts, 1), rng):
        res = optimize.minimize(_objective, z0, args=(tables, n_total), method="L-BFGS-B",
                                bounds=_BOUNDS, options={"ftol": 1e-15, "gtol": 1e-10, "maxiter": 2000})
        any_converged |= bool(res.success)
        key = (float(res.fun), tuple(np.round(res.x, 12)))
        if best is None or key < best[0]:
            best = (key, res)
    res = best[1]
    # a simplex polish removes the finite-difference gradient noise left by L-BFGS-B
    polish = optimize.minimize(_objective, res.x, args=(tables, n_total), method="Nelder-Mead",
                               bounds=_BOUNDS, options={"xatol": 1e-8, "fatol": 1e-13, "maxfev": 2500})
    z = polish.x if polish.fun <= res.fun else res.x
    vec = _to_external(z)
    vec[:3] = np.clip(vec[:3], 0.0, 1.0)
    vec[3], vec[7] = _wrap(vec[3]), _wrap(vec[7])
    estimate = _project_physical(vec)
    ll = _log_likelihood_vec(estimate.as_vector(), tables)
    if not any_converged:
        log.warning("no MLE restart reported convergence; returning the best point found")
    pmfs = _model_probabilities(estimate.as_vector(), [t.sources for t in tables])
    tvd = [total_variation_distance(p, t.frequencies()) for p, t in zip(pmfs, tables)]
    return FitResult(estimate, ll, observed_fim(tables, estimate), any_converged, tvd, restarts)


def _project_physical(vec) -> FullParameters:
    """Shrink the overlaps towards zero until the Gram matrix passes validation."""
    for k in range(60):
        try:
            return FullParameters.from_vector(vec)
        except ValueError:
            vec = vec.copy()
            vec[:3] *= 1 - 1e-12 * 2**k
    raise SchemaError("estimate could not be projected onto physical overlaps")


# --------------------------------------------------------------------------
# Observed information
# --------------------------------------------------------------------------

def observed_fim(
    data: Sequence[CountTable],
    params_hat: FullParameters,
    subset: str | Sequence[int] = "magnitudes",
    step: float = 1e-4,
) -> FisherMatrix:
    """Negative finite-difference Hessian of the log-likelihood at ``params_hat``.

    ``subset="magnitudes"`` (default) holds the triad phase and the mesh at
    their estimates; ``subset="all"`` returns the 8x8 matrix, useful for
    judging identifiability.  Near the bounds of a magnitude the step
    shrinks and falls back to one-sided differences at the bound.
    """
    tables = merge_tables(data)
    idx = list(MAGNITUDES if subset == "magnitudes" else range(8) if subset == "all" else subset)
    labels = tuple(PARAMETER_LABELS[i] for i in idx)
    if sum(t.total for t in tables) == 0:
        return FisherMatrix(np.zeros((len(idx), len(idx))), labels)
    center = params_hat.as_vector()
    ll = lambda v: _log_likelihood_vec(v, tables)  # noqa: E731

    def stencil(i):
        """(step, offsets, first-derivative weights) along coordinate ``i``.

        Products of two first-derivative stencils give the Hessian entries,
        including the diagonal (a second difference over twice the step).
        """
        bounded = i in MAGNITUDES or 4 <= i <= 6
        room_lo, room_hi = (center[i], 1.0 - center[i]) if bounded else (math.inf, math.inf)
        if min(room_lo, room_hi) >= 2 * step:
            return step, [-1, 1], [-0.5, 0.5]
        if min(room_lo, room_hi) >= 2 * step / 100:
            return min(room_lo, room_hi) / 2, [-1, 1], [-0.5, 0.5]
        sign = 1 if room_hi >= room_lo else -1
        h = min(step, max(room_lo, room_hi) / 4)
        return h, [0, sign, 2 * sign], [-1.5 * sign, 2.0 * sign, -0.5 * sign]

    n = len(idx)
    hess = np.zeros((n, n))
    stencils = [stencil(i) for i in idx]
    for a in range(n):
        ha, oa, wa = stencils[a]
        for b in range(a, n):
            hb, ob, wb = stencils[b]
            total = 0.0
            for ka, ca in zip(oa, wa):
                for kb, cb in zip(ob, wb):
                    v = center.copy()
                    v[idx[a]] += ka * ha
                    v[idx[b]] += kb * hb
                    total += ca * cb * ll(v)
            hess[a, b] = hess[b, a] = total / (ha * hb)
    fim = -hess
    if np.linalg.eigvalsh(fim).min() < 0:
        log.warning("observed information is indefinite at the estimate")
    return FisherMatrix(fim, labels)


# --------------------------------------------------------------------------
# Sample-count study
# --------------------------------------------------------------------------

def fig1_tables_design(mesh: MeshParameters, routings: Sequence[Sequence[int]]) -> ExperimentDesign:
    return ExperimentDesign(tuple(
        ExperimentConfig(input=INPUT, mesh=mesh, sources=tuple(r)) for r in routings
    ))


def convergence_study(
    streams: Sequence[tuple[Sequence[int], np.ndarray]],
    checkpoints: Sequence[int],
    truth: FullParameters,
    mode: str = "truth",
    restarts: int = 2,
    seed: int = 0,
) -> list[dict]:
    """Inverse-information metrics against the total number of samples.

    ``streams`` holds ``(sources, outcome_indices)`` per run in chronological
    order; a checkpoint of ``n`` samples takes the first ``n / len(streams)``
    of each.  In ``"truth"`` mode the observed information is evaluated at
    ``truth``; in ``"fit"`` mode the data up to the checkpoint are refitted
    (starting from ``truth``) and the references use the estimate.
    """
    checkpoints = list(checkpoints)
    if any(b <= a for a, b in zip(checkpoints, checkpoints[1:])):
        raise SchemaError("checkpoints must be strictly increasing")
    outcomes = enumerate_outcomes(3, 3)
    k = len(streams)
    rows = []
    for n in checkpoints:
        per_run = n // k
        tables = [counts_from_stream(stream, outcomes, per_run, sources) for sources, stream in streams]
        if mode == "fit":
            params = mle_fit(tables, truth, restarts=restarts, seed=seed).estimate
        elif mode == "truth":
            params = truth
        else:
            raise SchemaError(f"unknown convergence mode {mode!r}")
        observed = observed_fim(tables, params)
        design = fig1_tables_design(params.mesh, [s for s, _ in streams])
        n_used = per_run * k
        ideal = summed_fim(design, params.overlaps).scaled(n_used)
        hom = hom_baseline_fim(params.overlaps).scaled(n_used)
        row = {"n": n_used}
        for name, f in (("observed", observed), ("hom", hom), ("ideal", ideal)):
            det_inv, tr_inv, max_inv = inverse_metrics(f)
            row[f"{name}_det_inv"] = det_inv
            row[f"{name}_trace_inv"] = tr_inv
            row[f"{name}_max_eig_inv"] = max_inv
        rows.append(row)
    return rows


# --------------------------------------------------------------------------
# Synthetic data
# --------------------------------------------------------------------------

def simulate_streams(
    truth: FullParameters,
    routings: Sequence[Sequence[int]],
    n_per_config: int,
    seed,
) -> list[tuple[tuple[int, ...], np.ndarray]]:
    """Chronological outcome-index streams, one independent PCG64 child per routing."""
    vec = truth.as_vector()
    routings = [tuple(int(a) for a in r) for r in routings]
    children = np.random.SeedSequence(seed).spawn(len(routings))
    out = []
    for src, p, child in zip(routings, _model_probabilities(vec, routings), children):
        pm = Pmf(enumerate_outcomes(3, 3), np.clip(p, 0.0, None))
        out.append((src, sample_stream(pm, n_per_config, child)))
    return out


def simulate_tables(
    truth: FullParameters,
    routings: Sequence[Sequence[int]],
    n_per_config: int,
    seed,
) -> list[CountTable]:
    outcomes = enumerate_outcomes(3, 3)
    return [counts_from_stream(stream, outcomes, None, src)
            for src, stream in simulate_streams(truth, routings, n_per_config, seed)]
