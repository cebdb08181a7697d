"""``photon-overlaps`` command-line front end.

Exit codes: 0 ok, 2 malformed input, 3 unphysical input, 4 optimizer did
not converge (the result is still written).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import formats
from .core_model import (
    CountTable,
    ExperimentDesign,
    OverlapParameters,
    PhysicsError,
    SchemaError,
    as_occupation,
    enumerate_outcomes,
    relabel_sources,
)
from .estimator import FullParameters, convergence_study, mle_fit, simulate_streams
from .fisher import compare_protocols, optimal_second_ratio, optimize_design, second_ratio_curve
from .interference import pmf, sample, sample_stream
from .interferometer import build_mesh
from .oracle import fock_oracle_pmf

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_PHYSICS = 3
EXIT_CONVERGENCE = 4

log = logging.getLogger("photon_overlaps")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_SCHEMA, f"{self.prog}: error: {message}\n")


def _emit(text: str, out) -> None:
    if out is None or str(out) == "-":
        sys.stdout.write(text)
    else:
        formats.atomic_write(out, text)


def _parse_occupation(text: str) -> tuple[int, ...]:
    try:
        return as_occupation(int(a) for a in text.split(","))
    except ValueError as exc:
        raise SchemaError(f"bad occupation list {text!r}: {exc}") from None


def _load_overlaps(path) -> OverlapParameters:
    obj = formats.load_object(path, "overlaps", "parameters")
    return obj.overlaps if isinstance(obj, FullParameters) else obj


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------

def cmd_pmf(args) -> int:
    if args.unitary:
        u = formats.load_object(args.unitary, "unitary")
    else:
        mesh = formats.load_object(args.mesh, "mesh")
        u = build_mesh(mesh, len(args.input))
    s = _load_overlaps(args.overlaps).to_matrix() if args.overlaps else np.ones((sum(args.input),) * 2)
    engine = fock_oracle_pmf if args.oracle else pmf
    _emit(formats.dumps(formats.encode(engine(u, args.input, s))), args.out)
    return EXIT_OK


def cmd_design(args) -> int:
    theta = OverlapParameters.uniform(3, args.overlap) if args.theta is None else _load_overlaps(args.theta)
    mags = np.asarray(theta.magnitudes)
    second = optimal_second_ratio(float(mags[0])) if np.allclose(mags, mags[0], rtol=0, atol=1e-12) else None
    status = EXIT_OK
    if args.restarts > 0:
        result = optimize_design(theta, n_configs=args.configs, restarts=args.restarts, seed=args.seed,
                                 maxiter=args.maxiter)
        doc = formats.encode(result, second_ratio=second, seed=args.seed, restarts=args.restarts)
        if not result.converged:
            log.warning("design optimizer did not converge; result flagged")
            status = EXIT_CONVERGENCE
    else:
        doc = {"schema": "second_ratio/v1", "theta": formats.encode(theta), "second_ratio": second}
    _emit(formats.dumps(doc), args.out)
    if args.curve:
        xs = np.linspace(args.curve_min, args.curve_max, args.curve_points)
        rows = [(float(x), q) for x, q in second_ratio_curve(xs)]
        formats.atomic_write(args.curve, formats.csv_text(["overlap", "second_ratio"], rows))
    return status


def _sampling_seeds(seed: int, n: int):
    return np.random.SeedSequence(seed).spawn(n)


def cmd_simulate(args) -> int:
    design: ExperimentDesign = formats.load_object(args.design, "design")
    theta = _load_overlaps(args.truth)
    if args.samples < 0:
        raise SchemaError("--samples must be non-negative")
    out_dir = Path(args.out_dir)
    s_full = theta.to_matrix()
    written = []
    for k, (config, child) in enumerate(zip(design.configs, _sampling_seeds(args.seed, len(design.configs)))):
        if config.n_photons != theta.n_photons:
            raise SchemaError(f"config {k} has {config.n_photons} photons, truth has {theta.n_photons}")
        p = pmf(config.scattering_matrix(), config.input, relabel_sources(s_full, config.sources))
        if args.stream:
            doc = formats.encode_stream(config.sources, p.outcomes, sample_stream(p, args.samples, child))
            name = f"stream_{k:02d}.json"
        else:
            table = sample(p, args.samples, child)
            doc = formats.encode(CountTable(table.outcomes, table.counts, config.sources))
            name = f"counts_{k:02d}.json"
        formats.atomic_write(out_dir / name, formats.dumps(doc))
        written.append(str(out_dir / name))
    for path in written:
        print(path)
    return EXIT_OK


def cmd_fit(args) -> int:
    tables = [formats.load_object(path, "counts") for path in args.counts]
    init = formats.load_object(args.init, "parameters")
    result = mle_fit(tables, init, restarts=args.restarts, seed=args.seed)
    _emit(formats.dumps(formats.encode(result)), args.out)
    if not result.converged:
        log.warning("likelihood maximization did not converge; result flagged")
        return EXIT_CONVERGENCE
    return EXIT_OK


CONVERGENCE_COLUMNS = [
    "n",
    "observed_det_inv", "hom_det_inv", "ideal_det_inv",
    "observed_trace_inv", "hom_trace_inv", "ideal_trace_inv",
    "observed_max_eig_inv", "hom_max_eig_inv", "ideal_max_eig_inv",
]
PROTOCOL_COLUMNS = ["protocol", "det", "det_inv", "trace_inv", "max_eig_inv"]


def _shared_mesh(design: ExperimentDesign):
    meshes = {c.mesh for c in design.configs}
    if len(meshes) != 1 or None in meshes:
        raise SchemaError("a convergence study needs every config on one programmed mesh")
    if any(tuple(c.input) != (1, 1, 1) for c in design.configs):
        raise SchemaError("a convergence study needs three photons in input 1,1,1")
    return meshes.pop()


def cmd_compare(args) -> int:
    theta = _load_overlaps(args.theta)
    designs = [formats.load_object(path, "design", "design_result") for path in args.designs]
    designs = [d.design if hasattr(d, "design") else d for d in designs]
    if args.samples is None and not args.streams:
        labels = [Path(p).stem for p in args.designs]
        rows = compare_protocols(theta, designs, labels)
        _emit(formats.csv_text(PROTOCOL_COLUMNS, rows), args.out)
        return EXIT_OK

    truth = FullParameters(theta, _shared_mesh(designs[0]))
    if args.streams:
        streams = []
        outcomes = enumerate_outcomes(3, 3)
        for path in args.streams:
            sources, stream_outcomes, indices = formats.load_object(path, "stream")
            if list(stream_outcomes) != outcomes:
                raise SchemaError(f"{path}: outcomes not in canonical order")
            streams.append((sources, indices))
    else:
        routings = [c.sources for c in designs[0].configs]
        per_config = -(-args.samples // len(routings))
        streams = simulate_streams(truth, routings, per_config, args.seed)
    total = min(len(s) for _, s in streams) * len(streams)
    checkpoints = args.checkpoints or [int(n) for n in np.unique(np.round(
        np.logspace(2, np.log10(total), 9)).astype(int))]
    if checkpoints[-1] > total:
        raise SchemaError(f"checkpoint {checkpoints[-1]} exceeds the {total} available samples")
    rows = convergence_study(streams, checkpoints, truth, mode=args.mode, seed=args.seed)
    _emit(formats.csv_text(CONVERGENCE_COLUMNS, rows), args.out)
    return EXIT_OK


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="photon-overlaps", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("pmf", help="output distribution of one interferometer")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--unitary", help="unitary/v1 JSON")
    src.add_argument("--mesh", help="mesh/v1 JSON")
    p.add_argument("--input", required=True, type=_parse_occupation, help='occupation list, e.g. "1,1,1"')
    p.add_argument("--overlaps", help="overlaps/v1 JSON (default: indistinguishable photons)")
    p.add_argument("--oracle", action="store_true", help="use the brute-force Fock-space simulation")
    p.add_argument("--out")
    p.set_defaults(func=cmd_pmf)

    p = sub.add_parser("design", help="D-optimal three-photon characterization design")
    th = p.add_mutually_exclusive_group(required=True)
    th.add_argument("--overlap", type=float, help="equal pairwise overlap")
    th.add_argument("--theta", help="overlaps/v1 JSON")
    p.add_argument("--restarts", type=int, default=32, help="0 skips the full search")
    p.add_argument("--configs", type=int, default=3)
    p.add_argument("--maxiter", type=int, default=6000, help="simplex iterations per restart")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.add_argument("--curve", help="write the optimal second-ratio curve to this CSV")
    p.add_argument("--curve-min", type=float, default=0.01)
    p.add_argument("--curve-max", type=float, default=0.999)
    p.add_argument("--curve-points", type=int, default=50)
    p.set_defaults(func=cmd_design)

    p = sub.add_parser("simulate", help="sample count tables from a design")
    p.add_argument("--design", required=True)
    p.add_argument("--truth", required=True, help="overlaps/v1 or parameters/v1 JSON")
    p.add_argument("--samples", type=int, required=True, help="samples per config")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--stream", action="store_true", help="write chronological outcome streams instead")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("fit", help="maximum-likelihood overlaps and mesh from counts")
    p.add_argument("--counts", nargs="+", required=True)
    p.add_argument("--init", required=True, help="parameters/v1 JSON")
    p.add_argument("--restarts", type=int, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("compare", help="protocol table, or information against sample count")
    p.add_argument("--theta", required=True)
    p.add_argument("--designs", nargs="+", required=True)
    p.add_argument("--samples", type=int, help="total synthetic samples for a convergence study")
    p.add_argument("--streams", nargs="+", help="stream/v1 files for a convergence study")
    p.add_argument("--checkpoints", type=lambda t: [int(a) for a in t.split(",")])
    p.add_argument("--mode", choices=("truth", "fit"), default="truth")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except PhysicsError as exc:
        print(f"physics error: {exc}", file=sys.stderr)
        return EXIT_PHYSICS
    except SchemaError as exc:
        print(f"schema error: {exc}", file=sys.stderr)
        return EXIT_SCHEMA


if __name__ == "__main__":
    sys.exit(main())
