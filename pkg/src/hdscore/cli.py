"""Command-line interface: test, simulate, power, datagen."""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .data import build_coefficients, design_from_dict, generate_dataset, ingest_csv
from .simulate import (relative_efficiency, run_scenario, scenario_from_dict,
                       signal_grid, theoretical_power_mn, theoretical_power_tn)
from .streams import DEFAULT_SEED, derive_rng
from .testing import run_mn_test, run_tn_test
from .ustat import DegenerateVarianceError


def _fail(kind: str, message: str):
    # single-line machine-parseable diagnostic, then human-readable detail
    first = message.splitlines()[0] if message else ""
    print(f"error[{kind}]: {first}", file=sys.stderr)


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse usage problems are validation errors
        _fail("usage", message)
        raise SystemExit(1)


def _parse_cols(spec: str, header: list[str]) -> list[str]:
    """Expand a comma list of names and inclusive name ranges 'a:b'."""
    out: list[str] = []
    pos = {name: i for i, name in enumerate(header)}
    for item in spec.split(","):
        item = item.strip()
        if not item:
            continue
        if ":" in item:
            lo, hi = item.split(":", 1)
            for name in (lo, hi):
                if name not in pos:
                    raise ValueError(f"missing column {name!r}")
            i, j = pos[lo], pos[hi]
            if i > j:
                raise ValueError(f"empty column range {item!r}")
            out.extend(header[i:j + 1])
        else:
            if item not in pos:
                raise ValueError(f"missing column {item!r}")
            out.append(item)
    return out


def _read_header(path) -> list[str]:
    import csv
    with open(path, newline="", encoding="utf-8") as fh:
        row = next(csv.reader(fh), None)
    if row is None:
        raise ValueError(f"{path}: empty file")
    return row


def _load_json(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _dump_json(obj, path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)


def _alphas(arg: str) -> tuple[float, ...]:
    levels = tuple(sorted(float(a) for a in arg.split(",") if a.strip()))
    if not levels:
        raise ValueError("no significance levels given")
    return levels


def cmd_test(args) -> int:
    header = _read_header(args.input)
    x_cols = _parse_cols(args.x_cols, header)
    z_cols = None if args.z_cols == "rest" else _parse_cols(args.z_cols, header)
    dataset = ingest_csv(args.input, args.response_col, x_cols, z_cols,
                         standardize=args.standardize)
    alphas = _alphas(args.alpha)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    results = []
    for i, method in enumerate(methods):
        rng = derive_rng(args.seed, i)
        if method == "tn":
            res = run_tn_test(dataset, alphas, rng)
        elif method == "mn":
            res = run_mn_test(dataset, alphas, w_source=args.w_source, rng=rng,
                              split_fraction=args.split_fraction,
                              w_lambda_mode=_w_mode(args.w_lambda_mode))
        else:
            raise ValueError(f"unknown method {method!r} (expected tn or mn)")
        results.append(res.to_dict())
    _dump_json({
        "input": args.input,
        "n": dataset.n,
        "p_beta": dataset.p_beta,
        "p_gamma": dataset.p_gamma,
        "seed": args.seed,
        "standardized": bool(args.standardize),
        "results": results,
    }, args.output)
    return 0


def _w_mode(text: str):
    if text in ("per_column_cv", "shared_cv"):
        return text
    try:
        return float(text)
    except ValueError:
        raise ValueError(f"unknown w lambda mode {text!r}") from None


def cmd_simulate(args) -> int:
    config = scenario_from_dict(_load_json(args.config))
    if args.seed is not None:
        from dataclasses import replace
        config = replace(config, master_seed=args.seed)
    report = run_scenario(config, threads=args.threads)
    _dump_json(report.to_json_dict(), args.output + ".json")
    with open(args.output + ".csv", "w", encoding="utf-8") as fh:
        fh.write(report.to_csv_text())
    print(f"wrote {args.output}.json and {args.output}.csv "
          f"({report.runtime_seconds:.1f}s)", file=sys.stderr)
    return 0


def cmd_power(args) -> int:
    cfg = _load_json(args.config)
    design = design_from_dict(cfg["design"])
    alpha = float(cfg.get("alpha", 0.05))
    grid = cfg.get("b0_grid")
    grid = tuple(float(b) for b in grid) if grid else signal_grid(design)
    s_beta = design.beta_pattern.s
    rows = []
    for b0 in grid:
        beta = build_coefficients(design.p_beta, s_beta, b0)
        rows.append({
            "b0": b0,
            "beta_norm": float(np.linalg.norm(beta)),
            "power_tn": theoretical_power_tn(beta, design, alpha=alpha),
            "power_mn": theoretical_power_mn(beta, design, alpha=alpha),
        })
    _dump_json({
        "alpha": alpha,
        "n": design.n,
        "relative_efficiency": relative_efficiency(design),
        "rows": rows,
    }, args.output)
    return 0


def cmd_datagen(args) -> int:
    design = design_from_dict(_load_json(args.config))
    dataset = generate_dataset(design, derive_rng(args.seed))
    names = (["y"] + [f"x{j + 1}" for j in range(design.p_beta)]
             + [f"z{j + 1}" for j in range(design.p_gamma)])
    table = np.column_stack([dataset.y, dataset.x] +
                            ([dataset.z] if design.p_gamma else []))
    np.savetxt(args.output, table, fmt="%.17g", delimiter=",",
               header=",".join(names), comments="")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="hdscore",
                     description="Score-based significance tests for "
                                 "high-dimensional linear models")
    sub = parser.add_subparsers(dest="command", required=True)
    threads_default = int(os.environ.get("HDSCORE_THREADS", "1"))

    p = sub.add_parser("test", help="run significance tests on a CSV dataset")
    p.add_argument("--input", required=True)
    p.add_argument("--output", default=None, help="JSON report path (default stdout)")
    p.add_argument("--response-col", required=True)
    p.add_argument("--x-cols", required=True,
                   help="comma list of names / inclusive ranges 'a:b'")
    p.add_argument("--z-cols", default="rest",
                   help="column spec or 'rest' (all remaining columns)")
    p.add_argument("--standardize", action="store_true")
    p.add_argument("--alpha", default="0.01,0.05,0.1",
                   help="comma list of significance levels")
    p.add_argument("--methods", default="tn,mn")
    p.add_argument("--w-source", default="estimate_full",
                   choices=["estimate_full", "estimate_split"])
    p.add_argument("--split-fraction", type=float, default=0.5)
    p.add_argument("--w-lambda-mode", default="per_column_cv",
                   help="per_column_cv, shared_cv, or a numeric penalty")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("simulate", help="run a Monte Carlo scenario from JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--output", required=True, help="output prefix (.json and .csv)")
    p.add_argument("--seed", type=int, default=None, help="override master seed")
    p.add_argument("--threads", type=int, default=threads_default)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("power", help="tabulate theoretical power for a design")
    p.add_argument("--config", required=True)
    p.add_argument("--output", default=None)
    p.set_defaults(func=cmd_power)

    p = sub.add_parser("datagen", help="write a synthetic dataset CSV")
    p.add_argument("--config", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_datagen)
    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except DegenerateVarianceError as exc:
        _fail("degenerate-variance", str(exc))
        return 2
    except (ValueError, KeyError) as exc:
        _fail("validation", str(exc))
        return 1
    except OSError as exc:
        _fail("io", str(exc))
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
