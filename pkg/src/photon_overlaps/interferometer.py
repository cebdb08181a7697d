"""Scattering matrices for beamsplitter meshes and the characterization circuits.

Row index = input mode, column index = output mode.  Every element used here
is a symmetric matrix, so the scattering matrix of a circuit is the product
of its elements in the order light meets them.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .core_model import MeshParameters, SchemaError, check_unitary


def beamsplitter(ratio: float) -> np.ndarray:
    """Two-mode beamsplitter; ``ratio`` is the probability of staying in the same mode.

    ``[[sqrt(t), i sqrt(1-t)], [i sqrt(1-t), sqrt(t)]]``: ratio 1 is the
    identity, ratio 0 a full crossing.  With this convention a ratio of 1/3
    fed with two photons in one port and one in the other suppresses the
    output where the counts are exchanged.
    """
    if not 0.0 <= ratio <= 1.0:
        raise SchemaError(f"splitting ratio {ratio} outside [0, 1]")
    bar = np.sqrt(ratio)
    cross = 1j * np.sqrt(1.0 - ratio)
    return np.array([[bar, cross], [cross, bar]], dtype=complex)


def embed(two_mode: np.ndarray, mode: int, n_modes: int) -> np.ndarray:
    """Place a 2x2 element on modes ``(mode, mode + 1)`` of an N-mode identity."""
    if not 0 <= mode < n_modes - 1:
        raise SchemaError(f"cannot couple modes ({mode}, {mode + 1}) in {n_modes} modes")
    out = np.eye(n_modes, dtype=complex)
    out[mode:mode + 2, mode:mode + 2] = two_mode
    return out


def phase_shift(phase: float, mode: int, n_modes: int) -> np.ndarray:
    out = np.eye(n_modes, dtype=complex)
    out[mode, mode] = np.exp(1j * phase)
    return out


def clements_couplers(n_modes: int) -> list[tuple[int, int]]:
    """(column, upper mode) of every beamsplitter in the rectangular layout."""
    return [(col, k) for col in range(n_modes) for k in range(col % 2, n_modes - 1, 2)]


def mesh_layout(n_modes: int) -> list[tuple[str, int]]:
    """Ordered element list ``("bs", mode)`` / ``("phase", mode)`` for an N-mode mesh.

    Only the (N-1)^2 pmf-relevant parameters appear: external phases are
    fixed to zero.  Couplers in the first two columns never close an
    interference loop, so each later coupler gets one phase on its lower
    input.  For three modes the phase is placed on mode 1 ahead of the
    second coupler instead, which is the same pmf family.
    """
    if n_modes == 3:
        return [("bs", 0), ("phase", 1), ("bs", 1), ("bs", 0)]
    layout = []
    for col, k in clements_couplers(n_modes):
        if col >= 2:
            layout.append(("phase", k + 1))
        layout.append(("bs", k))
    return layout


def mesh_parameter_counts(n_modes: int) -> tuple[int, int]:
    layout = mesh_layout(n_modes)
    return (sum(kind == "bs" for kind, _ in layout), sum(kind == "phase" for kind, _ in layout))


def build_mesh(params: MeshParameters, n_modes: int | None = None) -> np.ndarray:
    n_modes = params.n_modes if n_modes is None else n_modes
    n_bs, n_phase = mesh_parameter_counts(n_modes)
    if len(params.splitting_ratios) != n_bs or len(params.phases) != n_phase:
        raise SchemaError(
            f"{n_modes}-mode mesh needs {n_bs} ratios and {n_phase} phases, got "
            f"{len(params.splitting_ratios)} and {len(params.phases)}"
        )
    return mesh_unitary(params.splitting_ratios, params.phases, n_modes)


def mesh_unitary(ratios, phases, n_modes: int) -> np.ndarray:
    """Unchecked fast path of :func:`build_mesh` for optimizer inner loops."""
    ratios = iter(ratios)
    phases = iter(phases)
    u = np.eye(n_modes, dtype=complex)
    for kind, mode in mesh_layout(n_modes):
        if kind == "bs":
            t = next(ratios)
            bar, cross = np.sqrt(t), 1j * np.sqrt(1.0 - t)
            # right-multiplying by the embedded coupler mixes two columns
            a, b = u[:, mode].copy(), u[:, mode + 1].copy()
            u[:, mode] = a * bar + b * cross
            u[:, mode + 1] = a * cross + b * bar
        else:
            u[:, mode] *= np.exp(1j * next(phases))
    return u


def fig1_mesh(second_ratio: float) -> MeshParameters:
    """Balanced coupler on modes (0, 1), then ``second_ratio`` on (1, 2), third coupler off."""
    return MeshParameters((0.5, second_ratio, 1.0), (0.0,))


def protocol_fig1(second_ratio: float) -> np.ndarray:
    """Three-photon protocol: HOM beamsplitter followed by a coupler to the third photon."""
    return build_mesh(fig1_mesh(second_ratio), 3)


def cascade_protocol(n_photons: int, ratios: Sequence[float]) -> np.ndarray:
    """Beamsplitter k couples the output arm of coupler k-1 to fresh photon k+1."""
    ratios = list(ratios)
    if n_photons < 2 or len(ratios) != n_photons - 1:
        raise SchemaError("cascade needs n_photons >= 2 and n_photons - 1 ratios")
    if not np.isclose(ratios[0], 0.5, rtol=0, atol=1e-12):
        raise SchemaError("the first coupler of a cascade must be balanced")
    u = np.eye(n_photons, dtype=complex)
    for k, t in enumerate(ratios):
        u = u @ embed(beamsplitter(t), k, n_photons)
    return u


def layered_protocol(
    n_photons: int,
    second_layer: Sequence[tuple[int, float]] = (),
) -> np.ndarray:
    """Balanced couplers on pairs (0,1), (2,3), ... then explicit second-layer couplers.

    ``second_layer`` lists ``(upper_mode, ratio)`` entries; each couples
    modes ``(upper_mode, upper_mode + 1)``.  Mode 0, the upper output of the
    first pair, is never touched so that pair always reads out a plain
    bunching/anti-bunching event.
    """
    if n_photons < 2 or n_photons % 2:
        raise SchemaError("layered protocol needs an even number of photons")
    u = np.eye(n_photons, dtype=complex)
    for k in range(0, n_photons, 2):
        u = u @ embed(beamsplitter(0.5), k, n_photons)
    used: set[int] = set()
    for mode, t in second_layer:
        if mode == 0:
            raise SchemaError("mode 0 must stay untouched in the second layer")
        if mode in used or mode + 1 in used:
            raise SchemaError(f"mode used twice in the second layer at ({mode}, {mode + 1})")
        used.update((mode, mode + 1))
        u = u @ embed(beamsplitter(t), mode, n_photons)
    return u


def permute_inputs(u, perm: Sequence[int]) -> np.ndarray:
    """Reorder input rows: new row ``i`` is old row ``perm[i]``."""
    u = np.asarray(u, dtype=complex)
    perm = list(perm)
    if sorted(perm) != list(range(u.shape[0])):
        raise SchemaError(f"{perm} is not a permutation of {u.shape[0]} modes")
    return u[perm, :]


def amplitude_fidelity(target, actual) -> float:
    """``(1/N) Tr(|U_target|^T |U_actual|)``, insensitive to all phases."""
    target = np.asarray(target, dtype=complex)
    actual = np.asarray(actual, dtype=complex)
    if target.shape != actual.shape or target.ndim != 2:
        raise SchemaError("fidelity needs two matrices of equal square shape")
    n = target.shape[0]
    return float(np.trace(np.abs(target).T @ np.abs(actual)) / n)


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a complex Ginibre matrix."""
    z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    d = np.diag(r)
    return check_unitary(q * (d / np.abs(d)), tol=1e-10)
