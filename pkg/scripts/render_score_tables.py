"""Render per-concept score CSVs into Average tables.

Reads one or more score files (method,variant,concept,metric,value rows) and
prints the aggregated CSV, or writes CSV/markdown files per input. The two
reference fixtures under tests/data reproduce published Average columns.

    python scripts/render_score_tables.py tests/data/scores_cc101_detail.csv
    python scripts/render_score_tables.py tests/data/*.csv --out-dir /tmp/tables
"""

import argparse
from pathlib import Path

from adaptsp.report import (
    aggregate,
    averages_csv,
    averages_markdown,
    parse_scores_csv,
    parse_scores_json,
)


def load_rows(path: Path):
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".json":
        return parse_scores_json(text)
    return parse_scores_csv(text)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("scores", nargs="+", type=Path)
    ap.add_argument("--out-dir", type=Path, help="write <stem>.averages.csv/.md here")
    ap.add_argument("--scale", type=int, default=1, choices=(1, 100))
    args = ap.parse_args()

    for path in args.scores:
        agg = aggregate(load_rows(path))
        csv_text = averages_csv(agg, scale=args.scale)
        if args.out_dir is None:
            print("# %s" % path)
            print(csv_text, end="")
            continue
        args.out_dir.mkdir(parents=True, exist_ok=True)
        base = args.out_dir / path.stem
        Path(str(base) + ".averages.csv").write_text(csv_text, encoding="utf-8")
        Path(str(base) + ".averages.md").write_text(
            averages_markdown(agg, scale=args.scale), encoding="utf-8"
        )
        print("wrote %s.averages.{csv,md}" % base)


if __name__ == "__main__":
    main()
