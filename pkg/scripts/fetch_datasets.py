#!/usr/bin/env python3
"""Download and prepare the benchmark datasets used by the acceptance suite.

Writes three CSVs (header row, features first, target last) into data/:

    boston.csv            506 x (13 features + medv)
    yacht.csv             308 x (6 features + resistance)
    winequality-red.csv  1599 x (11 features + quality)

Needs network access to the UCI repository (with a statlib fallback for
Boston); run it on any networked machine and copy data/ across if this one
is offline.
"""

import csv
import io
import sys
import urllib.request
from pathlib import Path

DATA_DIR = Path(__file__).resolve().parent.parent / "data"

BOSTON_COLUMNS = [
    "crim", "zn", "indus", "chas", "nox", "rm", "age",
    "dis", "rad", "tax", "ptratio", "b", "lstat", "medv",
]
YACHT_COLUMNS = [
    "long_pos_buoyancy", "prismatic_coeff", "length_disp_ratio",
    "beam_draught_ratio", "length_beam_ratio", "froude_number",
    "resistance",
]

UCI = "https://archive.ics.uci.edu/ml/machine-learning-databases"


def fetch(url: str) -> str:
    print(f"  fetching {url}", file=sys.stderr)
    with urllib.request.urlopen(url, timeout=60) as resp:
        return resp.read().decode("utf-8")


def write_csv(path: Path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    print(f"  wrote {path} ({len(rows)} rows)", file=sys.stderr)


def parse_whitespace(text: str, n_cols: int):
    values = text.split()
    if len(values) % n_cols != 0:
        raise SystemExit(f"token count {len(values)} not divisible by {n_cols}")
    rows = [values[i : i + n_cols] for i in range(0, len(values), n_cols)]
    return [[repr(float(v)) for v in row] for row in rows]


def prepare_boston():
    try:
        raw = fetch(f"{UCI}/housing/housing.data")
    except Exception as exc:  # statlib fallback carries a preamble
        print(f"  UCI failed ({exc}); trying statlib", file=sys.stderr)
        raw = fetch("http://lib.stat.cmu.edu/datasets/boston")
        raw = "\n".join(raw.splitlines()[22:])
    rows = parse_whitespace(raw, 14)
    if len(rows) != 506:
        raise SystemExit(f"boston: expected 506 rows, got {len(rows)}")
    write_csv(DATA_DIR / "boston.csv", BOSTON_COLUMNS, rows)


def prepare_yacht():
    raw = fetch(f"{UCI}/00243/yacht_hydrodynamics.data")
    rows = parse_whitespace(raw, 7)
    if len(rows) != 308:
        raise SystemExit(f"yacht: expected 308 rows, got {len(rows)}")
    write_csv(DATA_DIR / "yacht.csv", YACHT_COLUMNS, rows)


def prepare_wine():
    raw = fetch(f"{UCI}/wine-quality/winequality-red.csv")
    reader = csv.reader(io.StringIO(raw), delimiter=";")
    header = [h.strip().strip('"').replace(" ", "_") for h in next(reader)]
    rows = [[repr(float(v)) for v in row] for row in reader if row]
    if len(rows) != 1599 or len(header) != 12:
        raise SystemExit(f"wine: expected 1599 x 12, got {len(rows)} x {len(header)}")
    write_csv(DATA_DIR / "winequality-red.csv", header, rows)


def main():
    DATA_DIR.mkdir(exist_ok=True)
    for name, prep in (("boston", prepare_boston), ("yacht", prepare_yacht), ("wine", prepare_wine)):
        target_exists = any(DATA_DIR.glob(f"{name}*"))
        if target_exists:
            print(f"{name}: already present, skipping", file=sys.stderr)
            continue
        print(f"{name}:", file=sys.stderr)
        prep()


if __name__ == "__main__":
    main()
