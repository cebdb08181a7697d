"""Fisher information for overlap magnitudes and D-optimal experiment design.

All information matrices are per sample.  A design's matrix is the
weight-averaged sum of its configs' matrices, the weights being the fraction
of samples (time) spent on each config.
"""

from __future__ import annotations

import itertools
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize

from .core_model import (
    ExperimentConfig,
    ExperimentDesign,
    FisherMatrix,
    MeshParameters,
    OverlapParameters,
    SchemaError,
    overlap_derivatives,
    overlap_matrix,
)
from .interference import InterferenceTable, interference_table
from .interferometer import beamsplitter, build_mesh, fig1_mesh, mesh_unitary

log = logging.getLogger(__name__)

PROB_FLOOR = 1e-14
FD_STEP = 1e-3
CYCLIC_SOURCES = ((0, 1, 2), (1, 2, 0), (2, 0, 1))
THREADS_ENV = "PHOTON_OVERLAPS_THREADS"


def hom_information(x):
    """Per-sample information about ``x`` from one balanced-beamsplitter HOM run."""
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return 4 * x**2 / (1 - x**4)


# --------------------------------------------------------------------------
# Single-config information
# --------------------------------------------------------------------------

def _config_matrices(config: ExperimentConfig, theta: OverlapParameters, magnitudes=None):
    if max(config.sources) >= theta.n_photons:
        raise SchemaError("config uses a photon source that theta does not describe")
    mags = theta.magnitudes if magnitudes is None else magnitudes
    idx = np.asarray(config.sources)
    s = overlap_matrix(mags, theta.phases)[np.ix_(idx, idx)]
    ds = overlap_derivatives(theta.phases, theta.n_photons)[:, idx][:, :, idx]
    return s, ds


def _score_fim(table: InterferenceTable, s, ds, floor=PROB_FLOOR):
    p, dp = table.probabilities_and_gradients(s, ds)
    keep = p > floor
    # a vanishing outcome whose probability still moves is an underflow, not a zero
    underflow = int(np.sum(~keep & (np.abs(dp).max(axis=0) > math.sqrt(floor))))
    g = dp[:, keep]
    return (g / p[keep]) @ g.T, underflow


def _hessian_fim(table: InterferenceTable, config, theta, step, richardson):
    mags = np.array(theta.magnitudes)
    n_par = len(mags)
    # shrink steps so every stencil point stays inside [0, 1]
    steps = np.minimum(step, 0.5 * np.minimum(mags, 1 - mags))
    steps[steps <= 0] = step

    def logp(delta):
        s, _ = _config_matrices(config, theta, mags + delta)
        p = table.probabilities(s)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.log(p), p

    center, p0 = logp(np.zeros(n_par))

    def hessian(h):
        hess = np.zeros((n_par, n_par, len(p0)))
        e = np.eye(n_par) * h[:, None]
        for a in range(n_par):
            hess[a, a] = (logp(e[a])[0] - 2 * center + logp(-e[a])[0]) / h[a] ** 2
            for b in range(a + 1, n_par):
                hab = (logp(e[a] + e[b])[0] - logp(e[a] - e[b])[0]
                       - logp(-e[a] + e[b])[0] + logp(-e[a] - e[b])[0]) / (4 * h[a] * h[b])
                hess[a, b] = hess[b, a] = hab
        return hess

    # zero-probability outcomes give inf - inf here; they are dropped below
    with np.errstate(invalid="ignore"):
        hess = hessian(steps)
        if richardson:
            hess = (4 * hessian(steps / 2) - hess) / 3
    keep = p0 > PROB_FLOOR
    finite = np.all(np.isfinite(hess[:, :, keep]))
    if not finite:
        keep &= np.all(np.isfinite(hess), axis=(0, 1))
    # outcomes below the floor that still change across the stencil are reported
    _, dp = table.probabilities_and_gradients(*_config_matrices(config, theta))
    underflow = int(np.sum((p0 <= PROB_FLOOR) & (np.abs(dp).max(axis=0) > math.sqrt(PROB_FLOOR))))
    fim = -np.einsum("abs,s->ab", hess[:, :, keep], p0[keep])
    return 0.5 * (fim + fim.T), underflow


def fim(
    config: ExperimentConfig,
    theta: OverlapParameters,
    method: str = "score",
    step: float = FD_STEP,
    richardson: bool = True,
) -> FisherMatrix:
    """Per-sample Fisher information of one config about all pair magnitudes.

    ``method="hessian"`` averages the negative finite-difference Hessian of
    ``log P(s)``; ``method="score"`` averages the outer product of exact
    score vectors.  Both cover magnitudes only, never the phases.
    """
    table = interference_table(config.scattering_matrix(), config.input)
    if method == "score":
        entries, underflow = _score_fim(table, *_config_matrices(config, theta))
    elif method == "hessian":
        entries, underflow = _hessian_fim(table, config, theta, step, richardson)
    else:
        raise SchemaError(f"unknown FIM method {method!r}")
    if underflow:
        log.warning("%d outcome(s) underflowed while carrying information; excluded", underflow)
    return FisherMatrix(entries, tuple(theta.labels), underflow)


def summed_fim(design: ExperimentDesign, theta: OverlapParameters, method: str = "score") -> FisherMatrix:
    total = None
    for w, config in zip(design.weights, design.configs):
        part = fim(config, theta, method).scaled(w)
        total = part if total is None else total + part
    return total


def d_optimality(f) -> float:
    entries = f.entries if isinstance(f, FisherMatrix) else np.asarray(f, dtype=float)
    return float(np.linalg.det(entries))


def inverse_metrics(f) -> tuple[float, float, float]:
    """``(det F^-1, tr F^-1, lambda_max F^-1)``; infinite for singular ``F``."""
    entries = f.entries if isinstance(f, FisherMatrix) else np.asarray(f, dtype=float)
    sym = 0.5 * (entries + entries.T)
    lam = np.linalg.eigvalsh(sym)
    if lam.size == 0 or lam.min() <= 1e-13 * max(lam.max(), 1e-300) or not np.all(np.isfinite(lam)):
        return (math.inf, math.inf, math.inf)
    inv = 1.0 / lam
    return (float(np.prod(inv)), float(inv.sum()), float(inv.max()))


# --------------------------------------------------------------------------
# Reference protocols
# --------------------------------------------------------------------------

def hom_config(pair: tuple[int, int]) -> ExperimentConfig:
    return ExperimentConfig(input=(1, 1), unitary=beamsplitter(0.5), sources=pair,
                            label=f"hom{pair[0] + 1}{pair[1] + 1}")


def hom_design(n_photons: int = 3) -> ExperimentDesign:
    """Pairwise HOM runs over every pair, equal time for each."""
    pairs = [(i, j) for i in range(n_photons) for j in range(i + 1, n_photons)]
    return ExperimentDesign(tuple(hom_config(p) for p in pairs))


def hom_baseline_fim(theta: OverlapParameters) -> FisherMatrix:
    """Analytic per-sample information of the equal-time pairwise HOM scheme."""
    mags = np.array(theta.magnitudes)
    info = hom_information(mags) / len(mags)
    return FisherMatrix(np.diag(info), tuple(theta.labels))


def fig1_design(second_ratio: float) -> ExperimentDesign:
    """The three-photon protocol run under the three cyclic source routings."""
    mesh = fig1_mesh(second_ratio)
    return ExperimentDesign(tuple(
        ExperimentConfig(input=(1, 1, 1), mesh=mesh, sources=src, label=f"fig1-{k}")
        for k, src in enumerate(CYCLIC_SOURCES)
    ))


# --------------------------------------------------------------------------
# Best second splitting ratio at equal overlaps
# --------------------------------------------------------------------------

def _fig1_objective(q: float, theta: OverlapParameters) -> float:
    """log det of the cyclic two-coupler design's summed FIM."""
    table = interference_table(build_mesh(fig1_mesh(q), 3), (1, 1, 1))
    total = np.zeros((3, 3))
    for src in CYCLIC_SOURCES:
        cfg = ExperimentConfig(input=(1, 1, 1), unitary=np.eye(3), sources=src)
        part, _ = _score_fim(table, *_config_matrices(cfg, theta))
        total += part / 3
    sign, logdet = np.linalg.slogdet(total)
    return logdet if sign > 0 else -np.inf


def optimal_second_ratio(x: float, grid: int = 41, tol: float = 1e-6) -> float:
    """Second coupler ratio maximizing the D-optimality at equal overlaps ``x``.

    Ratios ``q`` and ``1 - q`` give the same information (they differ by
    relabelling two outputs), so the search runs over ``[0, 1/2]``: a coarse
    grid followed by bounded Brent refinement around the best grid point.
    """
    if not 0.0 < x < 1.0:
        raise SchemaError("equal overlap must lie strictly inside (0, 1)")
    theta = OverlapParameters.uniform(3, x)
    qs = np.linspace(0.0, 0.5, grid)
    vals = np.array([_fig1_objective(q, theta) for q in qs])
    k = int(np.argmax(vals))
    lo, hi = qs[max(k - 1, 0)], qs[min(k + 1, grid - 1)]
    res = optimize.minimize_scalar(lambda q: -_fig1_objective(q, theta), bounds=(lo, hi),
                                   method="bounded", options={"xatol": tol})
    best = float(res.x) if -res.fun >= vals[k] else float(qs[k])
    return best


def second_ratio_curve(xs: Sequence[float], grid: int = 41) -> list[tuple[float, float]]:
    return [(float(x), optimal_second_ratio(x, grid)) for x in xs]


# --------------------------------------------------------------------------
# 12-parameter D-optimal search
# --------------------------------------------------------------------------

@dataclass
class DesignResult:
    design: ExperimentDesign
    score: float
    fim: FisherMatrix
    optimizer_trace: list[tuple[int, float]] = field(default_factory=list)
    converged: bool = True
    theta: OverlapParameters | None = None


def _unpack(vec, n_configs) -> list[MeshParameters]:
    vec = np.asarray(vec, dtype=float).reshape(n_configs, 4)
    return [MeshParameters(tuple(np.clip(v[:3], 0.0, 1.0)), (float(v[3]),)) for v in vec]


def _design_from_vector(vec, n_configs) -> ExperimentDesign:
    meshes = _unpack(vec, n_configs)
    return ExperimentDesign(tuple(
        ExperimentConfig(input=(1, 1, 1), mesh=m, sources=CYCLIC_SOURCES[k % 3], label=f"config{k}")
        for k, m in enumerate(meshes)
    ))


def _source_weights(theta: OverlapParameters, n_configs: int):
    """Permutation weights and their gradients for each config's source routing."""
    table = interference_table(np.eye(3), (1, 1, 1))
    out = []
    for k in range(n_configs):
        cfg = ExperimentConfig(input=(1, 1, 1), unitary=np.eye(3), sources=CYCLIC_SOURCES[k % 3])
        s, ds = _config_matrices(cfg, theta)
        out.append((table.permutation_weights(s), table.permutation_weight_gradients(s, ds)))
    return out


def _design_logdet(vec, weights, n_configs: int) -> float:
    total = np.zeros((3, 3))
    vec = np.asarray(vec, dtype=float).reshape(n_configs, 4)
    for row, (w, dw) in zip(vec, weights):
        u = mesh_unitary(np.clip(row[:3], 0.0, 1.0), row[3:], 3)
        coeffs = interference_table(u, (1, 1, 1)).coefficients
        p = (coeffs @ w).real
        dp = (dw @ coeffs.T).real
        keep = p > PROB_FLOOR
        g = dp[:, keep]
        total += (g / p[keep]) @ g.T / n_configs
    sign, logdet = np.linalg.slogdet(total)
    return logdet if sign > 0 else -1e6


def _one_restart(args):
    seed_seq, theta, n_configs, maxiter = args
    weights = _source_weights(theta, n_configs)
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    x0 = np.concatenate([
        np.concatenate([rng.uniform(0.05, 0.95, 3), rng.uniform(-np.pi, np.pi, 1)])
        for _ in range(n_configs)
    ])
    search_bounds = [(0.01, 0.99)] * 3 + [(-2 * np.pi, 2 * np.pi)]
    polish_bounds = [(0.0, 1.0)] * 3 + [(-2 * np.pi, 2 * np.pi)]
    obj = lambda v: -_design_logdet(v, weights, n_configs)  # noqa: E731
    trace: list[tuple[int, float]] = []
    res = optimize.minimize(
        obj, x0, method="Nelder-Mead", bounds=search_bounds * n_configs,
        options={"maxiter": maxiter, "maxfev": 4 * maxiter, "xatol": 1e-7, "fatol": 1e-12, "adaptive": True},
        callback=lambda xk: trace.append((len(trace) + 1, float(np.exp(-obj(xk))))),
    )
    polish = optimize.minimize(
        obj, res.x, method="Nelder-Mead", bounds=polish_bounds * n_configs,
        options={"maxiter": maxiter, "maxfev": 4 * maxiter, "xatol": 1e-9, "fatol": 1e-14, "adaptive": True},
    )
    best = polish if polish.fun <= res.fun else res
    trace.append((len(trace) + 1, float(np.exp(-best.fun))))
    return best.x, float(-best.fun), bool(res.success or polish.success), trace


def _wrap_phase(a: float) -> float:
    return float((a + np.pi) % (2 * np.pi) - np.pi)


def canonical_mesh(mesh: MeshParameters) -> MeshParameters:
    """Fold the output-relabelling symmetries of the three-mode mesh.

    The last coupler with ratio ``t3`` and ``1 - t3`` (phase shifted by pi)
    differ only by swapping two detectors, so ``t3`` is reported in
    ``[1/2, 1]`` (towards "off").  When the last coupler is off the phase no
    longer matters and the second coupler folds to ``[0, 1/2]`` the same way.
    """
    t1, t2, t3 = mesh.splitting_ratios
    (alpha,) = mesh.phases
    if t3 < 0.5:
        t3, alpha = 1.0 - t3, alpha + np.pi
    if t3 > 1 - 1e-9:
        t3, alpha = 1.0, 0.0
        if t2 > 0.5:
            t2 = 1.0 - t2
    return MeshParameters((t1, t2, t3), (_wrap_phase(alpha),))


def _decode_fig1_layout(v: np.ndarray) -> MeshParameters | None:
    """Read (t1, t2, t3, alpha) off a matrix assumed to have the three-mode layout.

    In that layout mode 2 is only touched by the second coupler, which gives
    ``|v22|^2 = t2``, ``|v02|^2 = (1-t1)(1-t2)`` and ``|v20|^2 = (1-t2)(1-t3)``.
    The phase is then found by matching the pmf.
    """
    p = np.abs(v) ** 2
    t2 = p[2, 2]
    if t2 > 1 - 1e-9:
        return None
    t1 = 1 - p[0, 2] / (1 - t2)
    t3 = 1 - p[2, 0] / (1 - t2)
    if min(t1, t3) < -1e-7 or max(t1, t3) > 1 + 1e-7:
        return None
    t1, t3 = float(np.clip(t1, 0, 1)), float(np.clip(t3, 0, 1))
    grid = np.linspace(-np.pi, np.pi, 73)
    mismatch = lambda a: _pmf_mismatch(mesh_unitary((t1, t2, t3), (a,), 3), v)  # noqa: E731
    a0 = grid[int(np.argmin([mismatch(a) for a in grid]))]
    res = optimize.minimize_scalar(mismatch, bounds=(a0 - 0.1, a0 + 0.1), method="bounded",
                                   options={"xatol": 1e-10})
    return MeshParameters((t1, float(t2), t3), (_wrap_phase(res.x),))


_PROBE_MATRICES = [
    OverlapParameters.three(0.52, 0.41, 0.46, 0.9).to_matrix(),
    OverlapParameters.three(0.31, 0.63, 0.22, -2.1).to_matrix(),
    OverlapParameters.three(0.55, 0.27, 0.77, 0.0).to_matrix(),
]


def _pmf_mismatch(u, v) -> float:
    """Distance between two interferometers' pmfs over a fixed set of Gram matrices."""
    a = interference_table(u, (1, 1, 1))
    b = interference_table(v, (1, 1, 1))
    return float(sum(np.sum((a.probabilities(s) - b.probabilities(s)) ** 2) for s in _PROBE_MATRICES))


def canonical_config(config: ExperimentConfig, tol: float = 1e-10) -> ExperimentConfig:
    """Re-express a three-photon config in the two-coupler layout where possible.

    The same experiment can be programmed with the photons entering other
    modes and the detectors relabelled.  Every input-mode and output-mode
    relabelling is tried; candidates that decode into the three-mode layout
    with an identical pmf are kept, and the one closest to a balanced first
    coupler and a switched-off third coupler is returned.  The sources follow
    the photons, so the new config is the same experiment.
    """
    if config.n_modes != 3 or config.input != (1, 1, 1):
        return config
    u = config.scattering_matrix()
    best = None
    for rows in itertools.permutations(range(3)):
        for cols in itertools.permutations(range(3)):
            v = u[np.ix_(rows, cols)]
            mesh = _decode_fig1_layout(v)
            if mesh is None:
                continue
            mesh = canonical_mesh(mesh)
            if _pmf_mismatch(build_mesh(mesh, 3), v) > tol:
                continue
            t1, _, t3 = mesh.splitting_ratios
            key = (round(abs(t1 - 0.5) + (1 - t3), 9), rows, cols)
            if best is None or key < best[0]:
                best = (key, mesh, rows)
    if best is None:
        return canonical_mesh_config(config)
    _, mesh, rows = best
    sources = tuple(config.sources[r] for r in rows)
    return ExperimentConfig(input=(1, 1, 1), mesh=mesh, sources=sources, label=config.label)


def canonical_mesh_config(config: ExperimentConfig) -> ExperimentConfig:
    if config.mesh is None:
        return config
    return ExperimentConfig(input=config.input, mesh=canonical_mesh(config.mesh),
                            sources=config.sources, label=config.label)


def configs_equivalent(a: ExperimentConfig, b: ExperimentConfig, tol: float = 1e-8) -> bool:
    """True when ``b`` is ``a`` with photon sources relabelled (and outputs relabelled)."""
    if a.input != b.input:
        return False
    ta = interference_table(a.scattering_matrix(), a.input)
    tb = interference_table(b.scattering_matrix(), b.input)
    n = a.n_photons
    for relabel in itertools.permutations(range(n)):
        ok = True
        for s in _PROBE_MATRICES if n == 3 else [np.eye(n)]:
            pa = np.sort(ta.probabilities(s[np.ix_(a.sources, a.sources)]))
            sb = s[np.ix_(relabel, relabel)]
            pb = np.sort(tb.probabilities(sb[np.ix_(b.sources, b.sources)]))
            if np.max(np.abs(pa - pb)) > tol:
                ok = False
                break
        if ok:
            return True
    return False


def optimize_design(
    theta: OverlapParameters,
    n_configs: int = 3,
    restarts: int = 32,
    seed: int = 0,
    maxiter: int = 6000,
    workers: int | None = None,
) -> DesignResult:
    """Multi-start bounded Nelder-Mead over ``n_configs`` x (t1, t2, t3, alpha).

    Every config sends one photon per mode; config ``k`` starts with the
    ``k``-th cyclic source routing.  Restart ``i`` uses the ``i``-th child of
    ``SeedSequence(seed)``, and the winner is picked by (score, restart
    index), so the result does not depend on ``workers``.  The reported
    configs are canonicalized (:func:`canonical_config`) and sorted by their
    source routing.
    """
    if theta.n_photons != 3:
        raise SchemaError("the design search covers three photons")
    if any(not 0 < x < 1 for x in theta.magnitudes):
        raise SchemaError("design search needs overlaps strictly inside (0, 1)")
    workers = workers or int(os.environ.get(THREADS_ENV, "1"))
    jobs = [(child, theta, n_configs, maxiter) for child in np.random.SeedSequence(seed).spawn(restarts)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_restart, jobs))
    else:
        results = [_one_restart(job) for job in jobs]
    best_i = max(range(len(results)), key=lambda i: (results[i][1], -i))
    vec, logdet, converged, trace = results[best_i]

    raw = _design_from_vector(vec, n_configs)
    configs = sorted((canonical_config(c) for c in raw.configs), key=lambda c: c.sources)
    design = ExperimentDesign(tuple(
        ExperimentConfig(input=c.input, mesh=c.mesh, sources=c.sources, label=f"config{k}")
        for k, c in enumerate(configs)
    ))
    f = summed_fim(design, theta)
    return DesignResult(design, d_optimality(f), f, trace, converged, theta)


# --------------------------------------------------------------------------
# Protocol comparison
# --------------------------------------------------------------------------

def compare_protocols(
    theta: OverlapParameters,
    designs: Sequence[ExperimentDesign],
    labels: Sequence[str] | None = None,
) -> list[dict]:
    """Per-sample inverse-information metrics for each design plus the HOM baseline row."""
    labels = list(labels) if labels is not None else [f"design{k}" for k in range(len(designs))]
    rows = []
    for label, design in zip(labels, designs):
        f = summed_fim(design, theta)
        det_inv, tr_inv, max_inv = inverse_metrics(f)
        rows.append({"protocol": label, "det": d_optimality(f), "det_inv": det_inv,
                     "trace_inv": tr_inv, "max_eig_inv": max_inv})
    f = hom_baseline_fim(theta)
    det_inv, tr_inv, max_inv = inverse_metrics(f)
    rows.append({"protocol": "hom_baseline", "det": d_optimality(f), "det_inv": det_inv,
                 "trace_inv": tr_inv, "max_eig_inv": max_inv})
    return rows
