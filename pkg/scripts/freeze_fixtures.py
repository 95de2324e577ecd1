"""Recompute src/harmlab/harness/fixtures.json.

Runs every criterion once to collect the measured regression values and adds
the quasi-Monte Carlo reference sums for the H1(q) kernels. Review the diff
before committing the new file.
"""
import argparse
import logging
from pathlib import Path

from harmlab.harness import config as cfgm
from harmlab.harness.cli import freeze
from harmlab.harness.suites import FIXTURES


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--config", type=Path, default=None)
    ap.add_argument("--out", type=Path, default=FIXTURES)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    values = freeze(cfgm.load(args.config), args.out)
    for k, v in values.items():
        print(f"{k} = {v!r}")


if __name__ == "__main__":
    main()
