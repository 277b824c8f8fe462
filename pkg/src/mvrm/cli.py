"""Command-line front end: ingest, test, diagnose, rank, simulate.

Every artifact-writing subcommand drops a ``manifest.json`` next to its
outputs holding the resolved arguments (seed included, even when it was
drawn), so any result can be reproduced bit-identically from the manifest
alone.  All state flows through flags; no environment variables are read.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

from . import __version__
from .dataset import (
    DataError,
    RepeatedMeasuresDataset,
    Schema,
    drop_variable,
    load_long,
    load_wide,
    select_time,
)
from .diagnostics import (
    collinearity_report,
    homogeneity_report,
    pairwise_covariance_blocks,
    scree_data,
    suggest_removals,
)
from .discriminant import dfc_table
from .inference import _draw_seed, manova_rm
from .simulate import ScenarioConfig, run_experiment

RESAMPLING_SCHEMES = {"paramBS": "parametric", "wildBS": "wild"}
ALL_EFFECTS = ("group", "time", "interaction")


@dataclass(frozen=True)
class RunManifest:
    """Resolved invocation record written alongside every output."""

    subcommand: str
    arguments: dict

    def to_dict(self) -> dict:
        return {
            "tool": "mvrm",
            "version": __version__,
            "subcommand": self.subcommand,
            "arguments": self.arguments,
        }


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as stream:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)


def _cell(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _load_dataset(args) -> RepeatedMeasuresDataset:
    schema = Schema.from_json(args.schema) if args.schema else None
    loader = load_long if args.format == "long" else load_wide
    return loader(args.input, schema)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit_json(args) -> bool:
    return not args.csv_only


def _emit_csv(args) -> bool:
    return not args.json_only


def _safe_name(label: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in label)


def _write_manifest(out: Path, subcommand: str, arguments: dict) -> None:
    manifest = RunManifest(subcommand=subcommand, arguments=arguments)
    _write_json(out / "manifest.json", manifest.to_dict())


def _data_arguments(args) -> dict:
    return {
        "input": args.input,
        "format": args.format,
        "schema": args.schema,
        "out": args.out,
    }


# -- subcommands ---------------------------------------------------------------


def _cmd_validate(args) -> int:
    ds = _load_dataset(args)
    summary = {
        "groups": list(ds.group_labels),
        "group_sizes": list(ds.group_sizes),
        "times": list(ds.time_labels),
        "variables": list(ds.variable_labels),
        "n_total": ds.n_total,
        "n_dropped_incomplete": ds.n_dropped,
    }
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _manova_payload(results) -> list[dict]:
    payload = [r.to_dict() for r in results]
    tested = {str(r.effect) for r in results}
    for effect in ALL_EFFECTS:
        if effect not in tested:
            payload.append({"effect": effect, "status": "not applicable"})
    return payload


def _cmd_manova(args) -> int:
    ds = _load_dataset(args)
    seed = args.seed if args.seed is not None else _draw_seed()
    scheme = RESAMPLING_SCHEMES[args.resampling]
    out = _out_dir(args)
    _write_manifest(
        out,
        "manova",
        {
            **_data_arguments(args),
            "iter": args.iter,
            "resampling": args.resampling,
            "seed": seed,
            "rtol": args.rtol,
            "dump_replicates": args.dump_replicates,
        },
    )
    results = manova_rm(ds, n_boot=args.iter, scheme=scheme, seed=seed, rtol=args.rtol)
    _write_json(out / "manova.json", _manova_payload(results))
    if args.dump_replicates:
        header = ["b", *(f"statistic_{r.effect}" for r in results)]
        rows = [
            [b, *(_cell(float(r.replicates[b])) for r in results)]
            for b in range(args.iter)
        ]
        _write_csv(out / "replicates.csv", header, rows)
    for r in results:
        print(f"{r.effect}: statistic={r.statistic:.6g} p={r.p_value:.6g}")
    return 0


def _single_variable(ds, variable):
    for other in [v for v in ds.variable_labels if v != variable]:
        ds = drop_variable(ds, other)
    return ds


def _cmd_anova(args) -> int:
    ds = _load_dataset(args)
    seed = args.seed if args.seed is not None else _draw_seed()
    scheme = RESAMPLING_SCHEMES[args.resampling]
    alpha_adjusted = args.alpha / ds.n_variables
    out = _out_dir(args)
    _write_manifest(
        out,
        "anova",
        {
            **_data_arguments(args),
            "iter": args.iter,
            "resampling": args.resampling,
            "seed": seed,
            "rtol": args.rtol,
            "alpha": args.alpha,
        },
    )
    print(
        f"per-variable tests: alpha={args.alpha}, Bonferroni-adjusted "
        f"alpha={args.alpha}/{ds.n_variables} = {alpha_adjusted:.6g}"
    )
    records = []
    for variable in ds.variable_labels:
        sub = _single_variable(ds, variable)
        for r in manova_rm(sub, n_boot=args.iter, scheme=scheme, seed=seed, rtol=args.rtol):
            records.append(
                {
                    "variable": variable,
                    "effect": str(r.effect),
                    "statistic": r.statistic,
                    "p_value": r.p_value,
                }
            )
    if _emit_csv(args):
        _write_csv(
            out / "anova.csv",
            ["variable", "effect", "statistic", "p_value"],
            [
                [rec["variable"], rec["effect"], _cell(rec["statistic"]), _cell(rec["p_value"])]
                for rec in records
            ],
        )
    if _emit_json(args):
        _write_json(
            out / "anova.json",
            {
                "alpha": args.alpha,
                "alpha_adjusted": alpha_adjusted,
                "B": args.iter,
                "scheme": scheme,
                "seed": seed,
                "results": records,
            },
        )
    return 0


def _dfc_outputs(out, stem, table, args) -> None:
    rows = sorted(table.to_rows(), key=lambda row: row["rank"])
    if _emit_csv(args):
        _write_csv(
            out / f"{stem}.csv",
            ["variable", "time", "raw", "pooled_sd", "standardized", "rank"],
            [
                [
                    row["variable"],
                    row["time"],
                    _cell(row["raw"]),
                    _cell(row["pooled_sd"]),
                    _cell(row["standardized"]),
                    row["rank"],
                ]
                for row in rows
            ],
        )
    if _emit_json(args):
        _write_json(out / f"{stem}.json", table.to_dict())


def _cmd_dda(args) -> int:
    ds = _load_dataset(args)
    protected = [v for v in (args.protected or "").split(",") if v]
    out = _out_dir(args)
    _write_manifest(
        out,
        "dda",
        {
            **_data_arguments(args),
            "per_timepoint": args.per_timepoint,
            "remove_collinear": args.remove_collinear,
            "protected": protected,
            "ci_threshold": args.ci_threshold,
            "vdp_threshold": args.vdp_threshold,
        },
    )
    removed: list[str] = []
    if args.remove_collinear:
        report = collinearity_report(
            ds, index_threshold=args.ci_threshold, vdp_threshold=args.vdp_threshold
        )
        removed = suggest_removals(report, ds, protected=protected)
        for variable in removed:
            ds = drop_variable(ds, variable)
        _write_json(out / "removed_variables.json", {"removed": removed})
        if removed:
            print(f"removed collinear variables: {', '.join(removed)}")
    if args.per_timepoint:
        for time in ds.time_labels:
            table = dfc_table(select_time(ds, time))
            _dfc_outputs(out, f"dfc_time_{_safe_name(time)}", table, args)
    else:
        table = dfc_table(ds)
        _dfc_outputs(out, "dfc", table, args)
    return 0


def _format_vdp(value: float, threshold: float) -> str:
    return f"{value:.2f}" if value > threshold else "."


def _cmd_diagnose(args) -> int:
    ds = _load_dataset(args)
    out = _out_dir(args)
    _write_manifest(
        out,
        "diagnose",
        {
            **_data_arguments(args),
            "ci_threshold": args.ci_threshold,
            "vdp_threshold": args.vdp_threshold,
            "include_intercept": not args.no_intercept,
        },
    )
    homogeneity = homogeneity_report(ds)
    if _emit_json(args):
        _write_json(out / "homogeneity.json", homogeneity.to_dict())
    if _emit_csv(args):
        _write_csv(
            out / "scree.csv",
            ["index", "log_eigenvalue", "series"],
            [
                [row["index"], _cell(row["log_eigenvalue"]), row["series"]]
                for row in scree_data(homogeneity)
            ],
        )
        pair_header = ["group", "x", "y", "mean_x", "mean_y", "var_x", "var_y", "cov_xy"]
        _write_csv(
            out / "pairwise_covariances.csv",
            pair_header,
            [
                [_cell(row[key]) for key in pair_header]
                for row in pairwise_covariance_blocks(ds)
            ],
        )
    collinearity = collinearity_report(
        ds,
        include_intercept=not args.no_intercept,
        index_threshold=args.ci_threshold,
        vdp_threshold=args.vdp_threshold,
    )
    if _emit_json(args):
        _write_json(out / "collinearity.json", collinearity.to_dict())
    if _emit_csv(args):
        header = ["condition_index", *collinearity.column_labels]
        rows = []
        for j, index in enumerate(collinearity.condition_indices):
            label = f"{index:.2f}" if math.isfinite(index) else "inf"
            rows.append(
                [
                    label,
                    *(
                        _format_vdp(v, args.vdp_threshold)
                        for v in collinearity.vdp[j]
                    ),
                ]
            )
        _write_csv(out / "collinearity.csv", header, rows)
    if collinearity.flags:
        for flag in collinearity.flags:
            print(
                f"flagged condition index {flag.condition_index:.2f}: "
                f"{', '.join(flag.implicated)}"
            )
    else:
        print("no collinearity flags")
    return 0


def _cmd_simulate(args) -> int:
    config = ScenarioConfig.from_json(args.scenario)
    scheme = RESAMPLING_SCHEMES[args.resampling]
    out = _out_dir(args)
    _write_manifest(
        out,
        "simulate",
        {
            "scenario": args.scenario,
            "out": args.out,
            "reps": args.reps,
            "iter": args.iter,
            "resampling": args.resampling,
            "seed": args.seed,
            "alpha": args.alpha,
        },
    )
    result = run_experiment(
        config, reps=args.reps, n_boot=args.iter, scheme=scheme, seed=args.seed
    )
    rows = result.to_rows()
    header = list(rows[0].keys())
    if _emit_csv(args):
        _write_csv(
            out / "results.csv",
            header,
            [[_cell(row[k]) for k in header] for row in rows],
        )
    if _emit_json(args):
        _write_json(out / "summary.json", result.summary(args.alpha))
    for effect in result.effects:
        rate, (lo, hi) = result.rejection_rate(effect, args.alpha)
        print(f"{effect}: rejection rate {rate:.4f} (99% CI {lo:.4f}-{hi:.4f})")
    return 0


# -- parser ----------------------------------------------------------------------


def _add_data_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", required=True, help="CSV data file")
    parser.add_argument(
        "--format", choices=("long", "wide"), default="long", help="data layout"
    )
    parser.add_argument("--schema", help="JSON sidecar mapping columns to roles")


def _add_output_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--out", required=True, help="output directory for artifacts")
    emit = parser.add_mutually_exclusive_group()
    emit.add_argument(
        "--json", dest="json_only", action="store_true", help="emit only JSON artifacts"
    )
    emit.add_argument(
        "--csv", dest="csv_only", action="store_true", help="emit only CSV artifacts"
    )


def _add_resampling_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--iter", type=int, default=1000, help="number of bootstrap replicates"
    )
    parser.add_argument(
        "--resampling",
        choices=tuple(RESAMPLING_SCHEMES),
        default="paramBS",
        help="bootstrap scheme",
    )
    parser.add_argument("--seed", type=int, help="64-bit seed (drawn and recorded if omitted)")
    parser.add_argument(
        "--rtol",
        type=float,
        default=1e-12,
        help="advanced: relative eigenvalue cutoff for the pseudoinverse",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mvrm",
        description=(
            "Robust repeated-measures MANOVA with bootstrap p-values, "
            "descriptive discriminant ranking, and covariance diagnostics."
        ),
    )
    parser.add_argument("--version", action="version", version=f"mvrm {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("validate", help="load a dataset and report its shape")
    _add_data_flags(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("manova", help="joint group/time/interaction tests")
    _add_data_flags(p)
    _add_output_flags(p)
    _add_resampling_flags(p)
    p.add_argument(
        "--dump-replicates",
        action="store_true",
        help="also write the full replicate statistics as CSV",
    )
    p.set_defaults(func=_cmd_manova)

    p = sub.add_parser("anova", help="per-variable univariate tests")
    _add_data_flags(p)
    _add_output_flags(p)
    _add_resampling_flags(p)
    p.add_argument("--alpha", type=float, default=0.05, help="nominal level")
    p.set_defaults(func=_cmd_anova)

    p = sub.add_parser("dda", help="ranked discriminant coefficient table")
    _add_data_flags(p)
    _add_output_flags(p)
    p.add_argument(
        "--per-timepoint",
        action="store_true",
        help="rank within each time point separately",
    )
    p.add_argument(
        "--remove-collinear",
        action="store_true",
        help="drop flagged collinear variables before ranking",
    )
    p.add_argument(
        "--protected",
        help="comma-separated variables never to remove",
    )
    p.add_argument("--ci-threshold", type=float, default=30.0, help="condition-index flag threshold")
    p.add_argument("--vdp-threshold", type=float, default=0.3, help="variance-proportion flag threshold")
    p.set_defaults(func=_cmd_dda)

    p = sub.add_parser("diagnose", help="homogeneity and collinearity reports")
    _add_data_flags(p)
    _add_output_flags(p)
    p.add_argument("--ci-threshold", type=float, default=30.0, help="condition-index flag threshold")
    p.add_argument("--vdp-threshold", type=float, default=0.3, help="variance-proportion flag threshold")
    p.add_argument(
        "--no-intercept",
        action="store_true",
        help="exclude the intercept column from the collinearity design",
    )
    p.set_defaults(func=_cmd_diagnose)

    p = sub.add_parser("simulate", help="Monte-Carlo error-rate experiment")
    p.add_argument("--scenario", required=True, help="scenario JSON file")
    _add_output_flags(p)
    p.add_argument("--reps", type=int, default=400, help="Monte-Carlo repetitions")
    p.add_argument("--iter", type=int, default=500, help="bootstrap replicates per repetition")
    p.add_argument(
        "--resampling",
        choices=tuple(RESAMPLING_SCHEMES),
        default="paramBS",
        help="bootstrap scheme",
    )
    p.add_argument("--seed", type=int, default=0, help="experiment seed")
    p.add_argument("--alpha", type=float, default=0.05, help="nominal level")
    p.set_defaults(func=_cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "json_only"):
        args.json_only = False
        args.csv_only = False
    try:
        return args.func(args)
    except (DataError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
