"""Command line entry point: ``cutfem <experiment> --config <path.json> [--out <dir>] [--check]``."""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace

from . import harness

EXIT_OK, EXIT_ERROR, EXIT_CHECK = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cutfem", description="Stabilized cut finite element experiments.")
    p.add_argument("experiment", choices=harness.EXPERIMENTS)
    p.add_argument("--config", required=True, help="JSON experiment configuration")
    p.add_argument("--out", default=None, help="output directory (default: config out_dir or ./out)")
    p.add_argument("--check", action="store_true", help="evaluate the config's checks; exit 2 on violation")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = harness.load_config(args.config)
        if cfg.experiment != args.experiment:
            cfg = replace(cfg, experiment=args.experiment)
        report, last = harness.run_experiment(cfg, keep_last=True)
        if args.check:
            harness.evaluate_checks(report, cfg.checks)
        out = harness.write_outputs(cfg, report, last, args.out or cfg.out_dir or "out")
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"cutfem: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    for c in report.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'} {c['name']}: {c['detail']}")
    print(f"wrote {out}/results.csv ({len(report.rows)} rows, {report.failed_rows} failed)")
    if args.check and not report.passed:
        return EXIT_CHECK
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
