"""Print a results.csv as an aligned table, or the per-level condition summary of a report.json."""
import json
import sys
from pathlib import Path

from cutfem.harness import StudyReport


def fmt(v):
    if isinstance(v, float):
        return f"{v:.4g}"
    return "" if v is None else str(v)


def print_csv(path, columns=None):
    rep = StudyReport.from_csv(path)
    cols = columns or [c for c in rep.columns if c != "status"] + ["status"]
    table = [cols] + [[fmt(r.get(c)) for c in cols] for r in rep.rows]
    widths = [max(len(row[i]) for row in table) for i in range(len(cols))]
    for row in table:
        print("  ".join(v.rjust(w) for v, w in zip(row, widths)))


def print_condition(path):
    summary = json.loads(Path(path).read_text())["summary"]
    print(f"{'tau':>5} {'h':>8} {'n':>4}  {'h2k min':>9} {'h2k max':>9} {'h2k mean':>9}  {'k/n2 mean':>9}")
    for e in summary["per_level"]:
        print(f"{e['tau']:>5g} {e['h']:>8.4f} {e['n']:>4d}  {e.get('h2_kappa_min', float('nan')):>9.3f} "
              f"{e.get('h2_kappa_max', float('nan')):>9.3f} {e.get('h2_kappa_mean', float('nan')):>9.3f}  "
              f"{e.get('kappa_over_n2_mean', float('nan')):>9.3f}")


if __name__ == "__main__":
    if len(sys.argv) != 2:
        sys.exit("usage: summarize.py <out_dir>")
    out = Path(sys.argv[1])
    report = json.loads((out / "report.json").read_text())
    if report["experiment"] == "condition":
        print_condition(out / "report.json")
    else:
        print_csv(out / "results.csv")
