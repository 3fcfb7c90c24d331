"""Run every shipped config with its checks; outputs go to out/<config name>/."""
import argparse
import sys
import time
from pathlib import Path

from cutfem import cli, harness

ROOT = Path(__file__).resolve().parents[1]


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("names", nargs="*", help="config names (default: all in configs/)")
    p.add_argument("--out", default=str(ROOT / "out"))
    args = p.parse_args()
    paths = [ROOT / "configs" / f"{n}.json" for n in args.names] or sorted((ROOT / "configs").glob("*.json"))
    worst = 0
    for path in paths:
        cfg = harness.load_config(path)
        print(f"== {path.stem} ({cfg.experiment})", flush=True)
        t0 = time.perf_counter()
        code = cli.main([cfg.experiment, "--config", str(path), "--out", f"{args.out}/{path.stem}", "--check"])
        print(f"   exit {code} in {time.perf_counter() - t0:.1f}s")
        worst = max(worst, code)
    return worst


if __name__ == "__main__":
    sys.exit(main())
