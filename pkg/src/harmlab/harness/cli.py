"""Command line entry point: ``harmlab [flags] SUBCOMMAND``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .. import covering as cv
from .. import geometry as geo
from ..oscillation import BallSampler, bmo_seminorm, delta_power, doubling_constant, vmo_modulus
from ..potentials import quadratic_potential, rho_lattice_csv
from . import config as config_mod
from .suites import FIXTURES, SUBCOMMANDS, Result, load_fixtures, run_criterion
from .svg import render_covering_svg, render_rho_heatmap

log = logging.getLogger("harmlab")

CSV_HEADER = ["suite", "criterion", "quantity", "params", "value", "target", "passed"]


def _flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # subcommand copies must not overwrite values given before the subcommand
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--config", type=Path, default=d(None), help="YAML experiment config")
    parser.add_argument("--out", type=Path, default=d(None), help="output directory")
    parser.add_argument("--seed", type=int, default=d(None))
    parser.add_argument("--freeze", action="store_true", default=d(False),
                        help="recompute the fixtures file from the reference computations first")
    parser.add_argument("--jobs", type=int, default=d(None), help="worker processes")
    parser.add_argument("--fixtures", type=Path, default=d(None), help="fixtures file to compare against")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="harmlab",
                                 description="Numerical checks for local weights, Schroedinger kernels "
                                             "and weighted second-order estimates.")
    _flags(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", required=True)
    helps = {
        "weights": "local A_p, doubling, BMO and VMO reports",
        "potential": "critical radius, reverse Hoelder and comparison reports",
        "cover": "build and verify coverings, write SVG",
        "maximal": "maximal operator boundedness and Fefferman-Stein",
        "operators": "H1(q), duality, domination and VMO smallness",
        "estimate": "interpolation, local and global estimates",
        "all": "every acceptance criterion",
    }
    for name in SUBCOMMANDS:
        _flags(sub.add_parser(name, help=helps[name]), suppress=True)
    return ap


def _merge(args, cfg: config_mod.ExperimentConfig) -> config_mod.ExperimentConfig:
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out = str(args.out)
    if args.jobs is not None:
        cfg.jobs = args.jobs
    if args.fixtures is not None:
        cfg.fixtures = str(args.fixtures)
    return cfg.validate()


def run_criteria(ids, cfg, fixtures) -> list[Result]:
    if cfg.jobs > 1 and len(ids) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as ex:
            futs = [ex.submit(run_criterion, i, cfg, fixtures) for i in ids]
            results = [f.result() for f in futs]
    else:
        results = [run_criterion(i, cfg, fixtures) for i in ids]
    return sorted(results, key=lambda r: r.cid)


def freeze(cfg, path: Path = FIXTURES) -> dict:
    """Write the fixtures file: library regressions plus oracle values for S_J."""
    from .oracles import hormander_qmc
    from .suites import h1_instances

    results = run_criteria(sorted(SUBCOMMANDS["all"]), cfg, None)
    values: dict = {}
    for r in results:
        values.update(r.measured)
    O = cfg.operators
    for name, (spec, x, x0, r0) in h1_instances(cfg).items():
        values[f"operators.S{O.J_max}.{name}"] = float(
            hormander_qmc(spec, O.q, x, x0, r0, O.J_max, log2_points=18)[-1])
    values = dict(sorted(values.items()))
    path.write_text(json.dumps(values, indent=2) + "\n")
    log.info("froze %d values into %s", len(values), path)
    return values


def extra_rows(command: str, cfg, out: Path) -> list[dict]:
    """Reports that carry no pass/fail target, plus picture files."""
    rows = []

    def row(suite, quantity, value, params=""):
        rows.append({"suite": suite, "criterion": "", "quantity": quantity, "params": params,
                     "value": repr(float(value)), "target": "", "passed": ""})

    if command in ("weights", "all"):
        D = geo.interval(0, 1)
        s = BallSampler(16, 4)
        row("weights", "doubling (Lebesgue)", doubling_constant(None, D, cfg.weights.beta, s), "(0,1)")
        for a in cfg.weights.alphas:
            w = delta_power(D, a)
            row("weights", "doubling", doubling_constant(w, D, cfg.weights.beta, s), f"w={w.name}")
        E1 = geo.euclidean(1)
        win = ([-1.0], [1.0])
        for name, b in (("x", lambda x: x[:, 0]), ("sign", lambda x: np.sign(x[:, 0])),
                        ("log|x|", lambda x: np.log(np.abs(x[:, 0]) + 1e-300))):
            row("weights", "BMO seminorm", bmo_seminorm(b, E1, win, 0.5, s), f"b={name}")
            rep = vmo_modulus(b, E1, win, [0.01, 0.05, 0.2], s)
            row("weights", "VMO eta(0.01)", rep.eta[0], f"b={name} consistent={rep.vmo_consistent}")
    if command in ("cover", "all"):
        c = cv.build_covering(geo.unit_cube(2), cfg.cover.svg_r0, cfg.cover.beta)
        (out / "covering_square.svg").write_text(render_covering_svg(c))
        (out / "covering_square.txt").write_text(c.to_text())
        row("cover", "balls", len(c), f"square r0={cfg.cover.svg_r0:g}")
    if command in ("potential", "all"):
        V = quadratic_potential(2)
        (out / "rho_heatmap.svg").write_text(render_rho_heatmap(V, ((-2, -2), (2, 2)), 24))
        pts = geo.lattice([-2, -2], [2, 2], [9, 9])
        rho = rho_lattice_csv(V, pts, out / "rho_lattice.csv")
        row("potential", "min rho on lattice", np.min(rho), "V=|y|^2 n=2 [-2,2]^2")
    return rows


def write_outputs(command: str, cfg, results: list[Result], extras: list[dict], out: Path) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"{command}.csv", "w", newline="") as fh:
        wr = csv.DictWriter(fh, fieldnames=CSV_HEADER, lineterminator="\n")
        wr.writeheader()
        for r in results:
            wr.writerows(r.rows())
        wr.writerows(extras)
    summary = {
        "command": command,
        "seed": cfg.seed,
        "passed": all(r.passed for r in results),
        "criteria": {str(r.cid): {"title": r.title, "suite": r.suite, "passed": r.passed,
                                  "failing": [c.quantity for c in r.checks if not c.passed]}
                     for r in results},
    }
    (out / f"{command}.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


def main(argv=None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = _merge(args, config_mod.load(args.config))
    except config_mod.ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    fx_path = Path(cfg.fixtures) if cfg.fixtures else FIXTURES
    if args.freeze:
        freeze(cfg, fx_path)
    fixtures = load_fixtures(fx_path)
    if fixtures is None:
        log.warning("no fixtures file at %s: frozen comparisons will fail", fx_path)
    results = run_criteria(SUBCOMMANDS[args.command], cfg, fixtures)
    for r in results:
        print(r.line())
    extras = extra_rows(args.command, cfg, out)
    summary = write_outputs(args.command, cfg, results, extras, out)
    return 0 if summary["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
