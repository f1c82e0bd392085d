"""Command-line front end.

    coupled-nod simulate|bifurcate|classify|sweep --config PATH --out DIR
                [--set key=value]... [--overwrite]
    coupled-nod dump-defaults [--config PATH] [--out DIR] [--overwrite]

``--config`` also accepts the name of a shipped config (fig4, fig5, ...).
The output directory defaults to $COUPLED_NOD_OUT, else ./coupled_nod_out.
Exit status: 0 success, 1 invalid input, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import bifurcation as bif
from .config import (SHIPPED, ConfigError, build_scenario, bifurcation_params, default_config,
                     dumps, load_config, load_shipped, normalize)
from .engine import run, write_summary
from .integrator import NumericalBlowup
from .svg import trajectory_svg

OUT_ENV = "COUPLED_NOD_OUT"
EXIT_OK, EXIT_INVALID, EXIT_NUMERIC = 0, 1, 2

OUTPUTS = {
    "simulate": ("trajectory.csv", "summary.json", "trash.csv", "trajectory.svg",
                 "config.json"),
    "bifurcate": ("branch.csv", "folds.json", "config.json"),
    "classify": ("classification.json", "config.json"),
    "sweep": ("thresholds.csv", "config.json"),
    "dump-defaults": ("config.json",),
}


class OutputExists(Exception):
    pass


def _resolve_config(arg: str | None, overrides) -> dict:
    if arg is None:
        from .config import apply_override
        raw = default_config()
        for o in overrides:
            apply_override(raw, o)
        return normalize(raw)
    if not Path(arg).exists() and arg in SHIPPED:
        return load_shipped(arg, overrides)
    if not Path(arg).exists():
        raise ConfigError(arg, "config file not found")
    return load_config(arg, overrides)


def _prepare_out(out: str | None, command: str, overwrite: bool, svg: bool = True) -> Path:
    d = Path(out or os.environ.get(OUT_ENV) or "coupled_nod_out")
    d.mkdir(parents=True, exist_ok=True)
    names = [n for n in OUTPUTS[command] if svg or not n.endswith(".svg")]
    clash = [n for n in names if (d / n).exists()]
    if clash and not overwrite:
        raise OutputExists(f"{d / clash[0]} exists; pass --overwrite to replace it")
    return d


def cmd_simulate(cfg: dict, out: Path, args) -> int:
    scenario = build_scenario(cfg)
    log = run(scenario)
    log.to_csv(out / "trajectory.csv")
    log.trash.to_csv(out / "trash.csv")
    data = write_summary(log, out / "summary.json")
    if not args.no_svg:
        trajectory_svg(log, scenario.patches, out / "trajectory.svg")
    firsts = ", ".join(f"{a['label']}={a['first_switch']}" for a in data["agents"])
    print(f"simulated {len(log.t) - 1} steps; first switches: {firsts}")
    return EXIT_OK


def cmd_bifurcate(cfg: dict, out: Path, args) -> int:
    params, rho = bifurcation_params(cfg)
    b = cfg["bifurcation"]
    lo, hi = b["range"]
    if b["free_param"] == "b":
        branches = [bif.b_branch(params, rho, (lo, hi))]
    else:
        branches = bif.u_diagram(params, rho, (lo, hi))
    with open(out / "branch.csv", "w") as fh:
        fh.write("param,z,x,stability,is_fold,branch\n")
        for k, br in enumerate(branches):
            for param, z, x, stab, is_fold in br.rows():
                fh.write(f"{float(param)!r},{float(z)!r},{float(x)!r},{stab},{int(is_fold)},{k}\n")
    folds = [f for br in branches for f in br.folds_json()]
    with open(out / "folds.json", "w") as fh:
        json.dump({"free_param": b["free_param"], "rho": rho, "folds": folds}, fh, indent=2)
    print(f"{len(branches)} branch(es), {len(folds)} fold(s)")
    return EXIT_OK


def cmd_classify(cfg: dict, out: Path, args) -> int:
    params, rho = bifurcation_params(cfg)
    p0 = params.with_(b=0.0)
    result = {
        "neutral_stability": bif.neutral_stability(p0),
        "det_J": float(p0.d - p0.u),
        "cubic_coefficient": bif.cubic_coefficient(p0, rho),
        "series_cubic_coefficient": bif.series_cubic_coefficient(p0, rho),
        "quintic_coefficient": bif.quintic_coefficient(p0, rho),
    }
    try:
        result["criticality"] = bif.classify_criticality(p0, rho)
    except bif.OutOfTheoryError as exc:
        result["criticality"] = None
        result["note"] = str(exc)
    if p0.u > p0.d:
        (z1, b1), (z2, b2) = bif.normal_form_saddles(p0.u, p0.d)
        result["normal_form_saddles"] = [{"z": z1, "b": b1}, {"z": z2, "b": b2}]
    with open(out / "classification.json", "w") as fh:
        json.dump(result, fh, indent=2)
    print(json.dumps(result))
    return EXIT_OK


def cmd_sweep(cfg: dict, out: Path, args) -> int:
    params, rho = bifurcation_params(cfg)
    sw = cfg["bifurcation"]["sweep"]
    rows = bif.threshold_table(params, rho, sw["param"], sw["values"], tuple(sw["b_range"]))
    with open(out / "thresholds.csv", "w") as fh:
        fh.write("param_value,b1_star,b2_star,z1_star,z2_star,ok,error\n")
        for r in rows:
            vals = [r["param_value"], r["b1_star"], r["b2_star"], r["z1_star"], r["z2_star"]]
            cells = ["" if v is None or v != v else repr(float(v)) for v in vals]
            err = (r.get("error") or "").replace(",", ";").replace("\n", " ")
            fh.write(",".join(cells + [str(int(r["ok"])), err]) + "\n")
    bad = sum(not r["ok"] for r in rows)
    print(f"{len(rows)} grid point(s), {bad} flagged")
    return EXIT_OK


COMMANDS = {"simulate": cmd_simulate, "bifurcate": cmd_bifurcate, "classify": cmd_classify,
            "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="coupled-nod", description=__doc__.split("\n\n")[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in (*COMMANDS, "dump-defaults"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", required=name != "dump-defaults",
                        help="JSON config path or shipped config name")
        sp.add_argument("--out", help=f"output directory (default ${OUT_ENV})")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="dotted-path override, value parsed as JSON when possible")
        sp.add_argument("--overwrite", action="store_true")
        if name == "simulate":
            sp.add_argument("--no-svg", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _resolve_config(args.config, args.set)
        out = _prepare_out(args.out, args.command, args.overwrite,
                           svg=not getattr(args, "no_svg", False))
        (out / "config.json").write_text(dumps(cfg))
        if args.command == "dump-defaults":
            print(out / "config.json")
            return EXIT_OK
        return COMMANDS[args.command](cfg, out, args)
    except (ConfigError, OutputExists, bif.OutOfTheoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (NumericalBlowup, bif.ContinuationError, ArithmeticError,
            FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
