#!/usr/bin/env python3
"""Convert NHANES 2017-2018 public files into the synthmean cohort CSV.

Download these three SAS transport files from the CDC NHANES site
(2017-2018 cycle) into one directory:

    DEMO_J.XPT   demographics and survey weights
    BPX_J.XPT    blood pressure examination
    BMX_J.XPT    body measures

Then run

    python3 scripts/prepare_nhanes.py path/to/xpt_dir nhanes_2017_cohort.csv

Choices made here, all reported on stderr:

* Ages 2-17 at screening (RIDAGEYR) are kept.
* Participants with no exam weight (WTMEC2YR missing or 0) are dropped;
  they were interviewed but not examined.
* Participants with no standing height (BMXHT) are dropped. Height is
  needed to place a child in a reference-table stratum, and with this
  exclusion the per-age counts equal the published age table (n = 2,572).
* Systolic readings BPXSY1-3 become reading1-3. When one of those is
  missing and the fourth attempt BPXSY4 is present, BPXSY4 fills the first
  empty slot (disable with --no-fourth-reading). synthmean averages
  whatever readings remain when at least two are present.

Output columns: id, age, gender, height_cm, reading1-3, weight. Gender is
written as male/female.
"""

import argparse
import sys
from pathlib import Path

import pandas as pd

READINGS = ["BPXSY1", "BPXSY2", "BPXSY3"]


def read_xpt(directory: Path, stem: str) -> pd.DataFrame:
    for name in (f"{stem}.XPT", f"{stem}.xpt"):
        path = directory / name
        if path.is_file():
            return pd.read_sas(path, format="xport")
    sys.exit(f"missing {stem}.XPT in {directory}")


def fold_fourth_reading(bp: pd.DataFrame) -> pd.DataFrame:
    bp = bp.copy()
    fourth = bp["BPXSY4"]
    for col in READINGS:
        take = bp[col].isna() & fourth.notna()
        bp.loc[take, col] = fourth[take]
        fourth = fourth.where(~take)
    return bp


def prepare(demo: pd.DataFrame, bpx: pd.DataFrame, bmx: pd.DataFrame, use_fourth: bool = True):
    """Returns the cohort frame and a dict of exclusion counts."""
    counts = {}
    d = demo[["SEQN", "RIDAGEYR", "RIAGENDR", "WTMEC2YR"]]
    d = d[(d["RIDAGEYR"] >= 2) & (d["RIDAGEYR"] <= 17)]
    counts["aged_2_17"] = len(d)

    examined = d["WTMEC2YR"].fillna(0) > 0
    counts["dropped_no_exam_weight"] = int((~examined).sum())
    d = d[examined]

    bp_cols = ["SEQN"] + READINGS + (["BPXSY4"] if "BPXSY4" in bpx.columns else [])
    bp = bpx[bp_cols]
    if use_fourth and "BPXSY4" in bp.columns:
        bp = fold_fourth_reading(bp)
    merged = d.merge(bp, on="SEQN", how="left").merge(bmx[["SEQN", "BMXHT"]], on="SEQN", how="left")

    has_height = merged["BMXHT"].notna()
    counts["dropped_no_height"] = int((~has_height).sum())
    merged = merged[has_height]
    counts["retained"] = len(merged)

    out = pd.DataFrame(
        {
            "id": merged["SEQN"].astype("int64"),
            "age": merged["RIDAGEYR"].astype("int64"),
            "gender": merged["RIAGENDR"].map({1.0: "male", 2.0: "female"}),
            "height_cm": merged["BMXHT"],
            "reading1": merged["BPXSY1"],
            "reading2": merged["BPXSY2"],
            "reading3": merged["BPXSY3"],
            "weight": merged["WTMEC2YR"],
        }
    )
    if out["gender"].isna().any():
        sys.exit("unexpected RIAGENDR code")
    return out.sort_values("id"), counts


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("xpt_dir", type=Path)
    ap.add_argument("output", type=Path)
    ap.add_argument("--no-fourth-reading", action="store_true", help="ignore BPXSY4")
    args = ap.parse_args()

    cohort, counts = prepare(
        read_xpt(args.xpt_dir, "DEMO_J"),
        read_xpt(args.xpt_dir, "BPX_J"),
        read_xpt(args.xpt_dir, "BMX_J"),
        use_fourth=not args.no_fourth_reading,
    )
    cohort.to_csv(args.output, index=False, float_format="%.10g")
    for k, v in counts.items():
        print(f"{k}: {v}", file=sys.stderr)
    print(f"wrote {args.output}", file=sys.stderr)


if __name__ == "__main__":
    main()
