"""Command-line pipeline: synth, fit, modes, explain, compare.

Every command writes machine-readable files under --out plus a config echo
(<command>_config.json) that pins the resolved parameters; re-running with
the same inputs reproduces the outputs byte-for-byte.  Timestamps never
enter report files, only the run.log sidecar.

Exit codes: 0 success, 2 validation, 3 ingestion, 4 numerical failure,
5 internal error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .attribution import (
    ExplainSettings,
    explain_many,
    report_rows,
    report_to_json,
)
from .dataset import (
    Dataset,
    generate_synthetic,
    load_csv,
    load_synthetic_spec,
    trimodal_benchmark_spec,
    split,
    synthetic_spec_to_json,
)
from .errors import (
    DevexplainError,
    IngestionError,
    NumericalError,
    ValidationError,
)
from .inverse import default_budget
from .mixtures import (
    fit_gmm,
    fit_priors,
    mixture_to_json,
    modes,
    priors_from_specs,
    select_k,
)
from .models import (
    GbtParams,
    fit_gbt,
    fit_linear,
    load_model,
    model_to_json,
    residual_stats,
)
from .svgchart import grouped_bar_svg

_CSV_COLUMNS = [
    "observation_index",
    "feature",
    "reference_kind",
    "mode_index",
    "y_obs",
    "y_ref",
    "z",
    "z_m",
    "delta",
    "score",
    "shap",
    "degenerate",
]


def _resolve_seed(value: int | None) -> int:
    if value is not None:
        return value
    env = os.environ.get("DEVEXPLAIN_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ValidationError(
                f"DEVEXPLAIN_SEED must be an integer, got {env!r}"
            ) from None
    return 0


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")


def _read_json(path: str | Path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except FileNotFoundError:
        raise IngestionError(f"no such file: {path}") from None
    except json.JSONDecodeError as exc:
        raise IngestionError(f"{path}: invalid JSON ({exc})") from exc


def _log_run(out: Path, command: str, argv: list[str]) -> None:
    stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
    with open(out / "run.log", "a") as fh:
        fh.write(f"{stamp} {command} {argv}\n")


def _echo_config(out: Path, command: str, params: dict) -> None:
    _write_json(out / f"{command}_config.json", {"command": command, **params})


def _load_dataset(path: str, label: str) -> Dataset:
    return load_csv(path, label)


def cmd_synth(args) -> None:
    out = _out_dir(args)
    seed = _resolve_seed(args.seed)
    if args.preset:
        spec = trimodal_benchmark_spec()
    else:
        spec = load_synthetic_spec(args.spec)
    data = generate_synthetic(spec, args.n, seed)
    data.save_csv(out / args.name)
    _echo_config(
        out,
        "synth",
        {
            "spec": synthetic_spec_to_json(spec),
            "n": args.n,
            "seed": seed,
            "name": args.name,
        },
    )
    _log_run(out, "synth", sys.argv[1:])
    print(
        f"wrote {out / args.name}: {data.n} rows, {data.d_x} features, "
        f"label mean {data.labels.mean():.4f}, std {data.labels.std():.4f}"
    )


def cmd_fit(args) -> None:
    out = _out_dir(args)
    seed = _resolve_seed(args.seed)
    data = _load_dataset(args.data, args.label)
    if not 0 < args.split <= 1:
        raise ValidationError("--split must be in (0, 1]")
    if args.split < 1:
        train, test = split(data, args.split, seed)
    else:
        train, test = data, None
    if args.kind == "linear":
        model = fit_linear(train)
    else:
        params = GbtParams(
            n_trees=args.trees,
            max_depth=args.depth,
            learning_rate=args.lr,
            min_samples_leaf=args.min_leaf,
        )
        model = fit_gbt(train, params)
    stats = residual_stats(model, train, test)
    _write_json(out / "model.json", model_to_json(model))
    metrics = {
        "kind": args.kind,
        "n_train": train.n,
        "n_test": 0 if test is None else test.n,
        "sigma_e_squared": stats.sigma_e_squared,
        "r_squared_train": stats.r_squared_train,
        "r_squared_test": stats.r_squared_test,
    }
    if args.kind == "linear":
        metrics["intercept"] = model.intercept
        metrics["coefficients"] = model.coefficients.tolist()
    _write_json(out / "metrics.json", metrics)
    _echo_config(
        out,
        "fit",
        {
            "data": args.data,
            "label": args.label,
            "kind": args.kind,
            "split": args.split,
            "seed": seed,
            "trees": args.trees,
            "depth": args.depth,
            "lr": args.lr,
            "min_leaf": args.min_leaf,
        },
    )
    _log_run(out, "fit", sys.argv[1:])
    test_part = (
        "" if stats.r_squared_test is None else f", test R^2 {stats.r_squared_test:.4f}"
    )
    print(
        f"fitted {args.kind} on {train.n} rows: train R^2 "
        f"{stats.r_squared_train:.4f}{test_part}, sigma_e^2 {stats.sigma_e_squared:.6g}"
    )


def cmd_modes(args) -> None:
    out = _out_dir(args)
    seed = _resolve_seed(args.seed)
    data = _load_dataset(args.data, args.label)
    k = select_k(data.labels, args.k_max, seed)
    gmm = fit_gmm(data.labels, k, seed)
    mode_list = modes(gmm)
    doc = {
        "k": k,
        "mixture": mixture_to_json(gmm),
        "modes": [
            {
                "location": m.location,
                "density": m.density,
                "sigma_m": m.sigma_m,
                "weight": m.weight,
                "component_index": m.component_index,
            }
            for m in mode_list
        ],
    }
    _write_json(out / "modes.json", doc)
    _echo_config(
        out,
        "modes",
        {"data": args.data, "label": args.label, "k_max": args.k_max, "seed": seed},
    )
    _log_run(out, "modes", sys.argv[1:])
    print(f"fitted k={k} mixture; {len(mode_list)} mode(s):")
    for i, m in enumerate(mode_list):
        print(f"  mode {i}: location {m.location:.4f}, sigma_m {m.sigma_m:.4f}")


def _parse_index_range(text: str) -> tuple[int, int]:
    try:
        lo, hi = text.split(":")
        lo, hi = int(lo), int(hi)
    except ValueError:
        raise ValidationError(
            f"--index-range expects START:STOP, got {text!r}"
        ) from None
    if hi <= lo:
        raise ValidationError("--index-range STOP must exceed START")
    return lo, hi


def _normalized(values: np.ndarray) -> list[float] | None:
    total = float(values.sum())
    if total == 0:
        return None
    return [float(v) / total for v in values]


def _chart_for_report(report, mean_report) -> str | None:
    series = []
    if report.reference_kind == "mode" and not report.scores.degenerate:
        series.append(("mode score", [float(v) for v in report.scores.first_order]))
    if mean_report is not None and not mean_report.scores.degenerate:
        series.append(
            ("mean score", [float(v) for v in mean_report.scores.first_order])
        )
    shap_norm = _normalized(report.shap.values)
    if shap_norm is not None:
        series.append(("SHAP (normalized)", shap_norm))
    if not series:
        return None
    ref = (
        "mean"
        if report.reference_kind == "mean"
        else f"mode {report.mode_index} (y*={report.y_ref:.3f})"
    )
    return grouped_bar_svg(
        f"Observation {report.observation_index} vs {ref}",
        list(report.feature_names),
        series,
    )


def cmd_explain(args) -> None:
    out = _out_dir(args)
    seed = _resolve_seed(args.seed)
    data = _load_dataset(args.data, args.label)
    model = load_model(args.model)
    if args.index is not None:
        indices = [args.index]
    else:
        lo, hi = _parse_index_range(args.index_range)
        indices = list(range(lo, hi))
    reference = "mean" if args.mean else ("mode", args.mode)

    priors_seed, explain_seed = (
        int(child.generate_state(1)[0])
        for child in np.random.SeedSequence(seed).spawn(2)
    )
    if args.priors:
        priors = priors_from_specs(load_synthetic_spec(args.priors).feature_specs)
        priors_source = args.priors
    else:
        priors = fit_priors(data, args.k_max, priors_seed)
        priors_source = "fitted"
    np_count = args.np if args.np is not None else min(data.n, 2000)
    budget = None
    if args.budget_runs is not None:
        budget = replace(default_budget(priors), n_runs=args.budget_runs)
    settings = ExplainSettings(
        seed=explain_seed,
        np_count=np_count,
        order=args.order,
        k_max=args.k_max,
        budget=budget,
        degeneracy_tau=args.tau,
        bg_source=args.bg,
    )

    reports = explain_many(model, priors, data, indices, reference, settings)
    mean_reports = [None] * len(indices)
    if args.svg and not args.mean:
        # mean-reference companions for the charts, sharing one background
        mean_reports = explain_many(model, priors, data, indices, "mean", settings)

    rows = []
    for report, mean_report in zip(reports, mean_reports):
        index = report.observation_index
        _write_json(out / f"report_{index}.json", report_to_json(report))
        rows.extend(report_rows(report))
        if args.svg:
            chart = _chart_for_report(report, mean_report)
            if chart is not None:
                (out / f"chart_{index}.svg").write_text(chart)
        if report.scores.degenerate:
            print(
                f"index {index}: degenerate ({report.reference_kind} reference, "
                f"|delta|={abs(report.decomposition.total_delta):.4f})"
            )
        else:
            score_text = ", ".join(
                f"{name}={s:.3f}"
                for name, s in zip(report.feature_names, report.scores.first_order)
            )
            print(f"index {index}: {report.reference_kind} scores {score_text}")
    if len(indices) > 1:
        with open(out / "reports.csv", "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=_CSV_COLUMNS)
            writer.writeheader()
            writer.writerows(rows)
        print(f"wrote {out / 'reports.csv'} ({len(rows)} rows)")

    _echo_config(
        out,
        "explain",
        {
            "data": args.data,
            "label": args.label,
            "model": args.model,
            "indices": indices,
            "reference": "mean" if args.mean else f"mode:{args.mode}",
            "np": np_count,
            "order": args.order,
            "k_max": args.k_max,
            "bg": args.bg,
            "tau": args.tau,
            "seed": seed,
            "priors": priors_source,
            "budget_runs": args.budget_runs,
            "svg": bool(args.svg),
        },
    )
    _log_run(out, "explain", sys.argv[1:])


def cmd_compare(args) -> None:
    out = _out_dir(args)
    rows = []
    for path in args.reports:
        doc = _read_json(path)
        if doc.get("schema") != 1:
            raise IngestionError(f"{path}: unsupported report schema")
        names = doc["feature_names"]
        scores = doc["scores"]
        degenerate = scores["degenerate"]
        for i, name in enumerate(names):
            rows.append(
                {
                    "observation_index": doc["observation_index"],
                    "feature": name,
                    "reference_kind": doc["reference_kind"],
                    "mode_index": "" if doc["mode_index"] is None else doc["mode_index"],
                    "y_obs": doc["y_obs"],
                    "y_ref": doc["y_ref"],
                    "z": doc["z"],
                    "z_m": "" if doc["z_m"] is None else doc["z_m"],
                    "delta": doc["decomposition"]["first_order"][i],
                    "score": ""
                    if degenerate or scores["first_order"][i] is None
                    else scores["first_order"][i],
                    "shap": doc["shap"]["values"][i],
                    "degenerate": degenerate,
                }
            )
    with open(out / args.name, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=_CSV_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    _echo_config(
        out, "compare", {"reports": list(args.reports), "name": args.name}
    )
    _log_run(out, "compare", sys.argv[1:])
    print(f"wrote {out / args.name} ({len(rows)} rows from {len(args.reports)} reports)")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="devexplain",
        description="Explain label deviations from a mean or mode reference.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--spec", help="JSON generator spec (features + noise_std)")
    src.add_argument(
        "--preset",
        choices=["trimodal"],
        help="built-in three-feature trimodal additive benchmark",
    )
    p.add_argument("--n", type=int, required=True, help="number of observations")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".", help="output directory")
    p.add_argument("--name", default="synthetic.csv", help="output file name")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("fit", help="fit a forward model")
    p.add_argument("--data", required=True)
    p.add_argument("--label", default="y")
    p.add_argument("--kind", choices=["linear", "gbt"], default="linear")
    p.add_argument("--split", type=float, default=0.8, help="train fraction; 1 = no test split")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--trees", type=int, default=300)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--min-leaf", type=int, default=1)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("modes", help="fit a label mixture and list its modes")
    p.add_argument("--data", required=True)
    p.add_argument("--label", default="y")
    p.add_argument("--k-max", type=int, default=6)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_modes)

    p = sub.add_parser("explain", help="explain one or more observations")
    p.add_argument("--data", required=True)
    p.add_argument("--label", default="y")
    p.add_argument("--model", required=True, help="model JSON from `fit`")
    which = p.add_mutually_exclusive_group(required=True)
    which.add_argument("--index", type=int, help="observation index")
    which.add_argument("--index-range", help="START:STOP observation range")
    ref = p.add_mutually_exclusive_group(required=True)
    ref.add_argument("--mean", action="store_true", help="mean reference")
    ref.add_argument("--mode", type=int, help="mode reference (0 = dominant)")
    p.add_argument("--np", type=int, default=None, help="background size (default min(N, 2000))")
    p.add_argument("--order", type=int, choices=[1, 2], default=1)
    p.add_argument("--k-max", type=int, default=6)
    p.add_argument("--bg", choices=["resample", "prior"], default="resample")
    p.add_argument("--priors", help="exact priors from a generator-spec JSON (default: fit from data)")
    p.add_argument("--tau", type=float, default=0.05, help="degeneracy threshold (fraction of label std)")
    p.add_argument("--budget-runs", type=int, default=None, help="override restart count")
    p.add_argument("--svg", action="store_true", help="emit grouped bar charts")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_explain)

    p = sub.add_parser("compare", help="tabulate reports into one CSV")
    p.add_argument("reports", nargs="*", help="report JSON files")
    p.add_argument("--name", default="compare.csv")
    p.add_argument("--out", default=".")
    p.set_defaults(func=cmd_compare)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
        return 0
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except IngestionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except DevexplainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 5
    except Exception as exc:  # last-resort guard so scripts get a stable code
        print(f"internal error: {exc}", file=sys.stderr)
        return 5


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    sys.exit(main())
