"""``certify`` command-line entry point."""

from __future__ import annotations

import argparse
import logging
import sys
import time

from .detector import TmdConfig, build_tmd_povm, read_povm, write_povm
from .errors import CertificationError
from .fock import povm_completeness_check
from .harness import dump_certificates, emit_csv, load_config, run_sweep
from .reduction import TAIL_MODES


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="certify",
        description="Certified min-entropy of a single-detector source-independent QRNG.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sweep = sub.add_parser("sweep", help="sweep the mean photon number and write a CSV")
    sweep.add_argument("--config", help="flat key = value file with RunConfig fields")
    sweep.add_argument("--cutoff", type=int, help="photon-number cutoff N")
    sweep.add_argument("--outcomes", type=int, help="number of POVM outcomes m")
    sweep.add_argument("--modes", type=int, help="number of temporal modes")
    sweep.add_argument("--mu-start", type=float)
    sweep.add_argument("--mu-stop", type=float)
    sweep.add_argument("--mu-count", type=int)
    sweep.add_argument("--spacing", choices=("linear", "log"))
    sweep.add_argument("--tail", dest="tail_mode", choices=TAIL_MODES)
    sweep.add_argument("--probe-horizon", type=int)
    sweep.add_argument("--out", help="CSV output path")
    sweep.add_argument("--dump-certificates", metavar="DIR")
    sweep.add_argument("--workers", type=int, help="parallel worker processes")

    export = sub.add_parser("export-povm", help="write the TMD POVM as JSON lines")
    export.add_argument("--modes", type=int, default=32)
    export.add_argument("--outcomes", type=int, default=10)
    export.add_argument("--store", type=int, default=20, help="stored Fock entries per element")
    export.add_argument("--out", required=True)

    check = sub.add_parser("check-povm", help="read an exported POVM and test completeness")
    check.add_argument("path")
    check.add_argument("--tol", type=float, default=1e-12)
    return parser


def _sweep(args) -> int:
    cfg = load_config(
        args.config,
        cutoff=args.cutoff,
        outcomes=args.outcomes,
        modes=args.modes,
        mu_start=args.mu_start,
        mu_stop=args.mu_stop,
        mu_count=args.mu_count,
        spacing=args.spacing,
        tail_mode=args.tail_mode,
        probe_horizon=args.probe_horizon,
        out=args.out,
        dump_certificates=args.dump_certificates,
        workers=args.workers,
    )
    start = time.perf_counter()
    report = run_sweep(cfg)
    emit_csv(report, cfg.out)
    if cfg.dump_certificates:
        dump_certificates(report, cfg.dump_certificates)
    failed = sum(not r.ok for r in report.records)
    print(
        f"{len(report.records)} points, {failed} failed, max H_min = "
        f"{report.max_min_entropy():.6g} bits ({time.perf_counter() - start:.1f}s) -> {cfg.out}",
        file=sys.stderr,
    )
    return 0 if report.all_verified else 1


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "sweep":
            return _sweep(args)
        if args.command == "export-povm":
            povm = build_tmd_povm(TmdConfig(args.modes, args.outcomes, args.store))
            write_povm(povm, args.out)
            return 0
        povm = read_povm(args.path)
        n_max = min(op.n_store for op in povm) - 1
        ok = povm_completeness_check(povm, n_max, args.tol)
        print(f"{len(povm)} elements, complete up to n={n_max}: {ok}")
        return 0 if ok else 1
    except (CertificationError, OSError) as exc:
        print(f"certify: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
