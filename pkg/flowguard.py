"""CLI entrypoint: simulate traffic, extract features, train, detect and evaluate."""

import argparse
import csv
import logging
import sys
from pathlib import Path

from rich.console import Console
from rich.logging import RichHandler

from config import DATA_DIR, MODEL_DIR, LOG_LEVEL, load_run_config
from errors import DataError, FlowGuardError
from features import extract_series, feature_matrix, load_features, save_features, summarize_series
from flows import partition_windows
from ingest import read_trace, write_csv
from metrics import (
    compare, comparison_table, selected_group, selection_table, split,
    write_comparison_csv, write_selection_csv,
)
from mkl import load_model, predict_many, save_model, select_model
from trafficgen import gen_scenario, load_labels, load_spec, preset, save_labels

logger = logging.getLogger("flowguard")
console = Console()


def _setup_logging(level: str):
    logging.basicConfig(
        level=level.upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), show_path=False)],
        force=True,
    )


def _run_config(args, **overrides):
    return load_run_config(args.config, seed=args.seed, **overrides)


# ── Commands ─────────────────────────────────────────────────


def cmd_simulate(args) -> int:
    if args.spec:
        spec = load_spec(args.spec, seed=args.seed)
    else:
        spec = preset(args.scenario, seed=args.seed if args.seed is not None else _run_config(args).seed)
    out = Path(args.out or DATA_DIR / f"{spec.kind.value}.csv")
    labels_out = Path(args.labels or out.with_name(out.stem + ".labels.csv"))

    packets, labels = gen_scenario(spec)
    write_csv(packets, out)
    save_labels(labels, labels_out)
    console.print(
        f"[bold]{spec.kind.value}[/bold]: {len(packets)} packets, {len(labels)} windows "
        f"({labels.count(1)} normal / {labels.count(-1)} attack) -> {out}, {labels_out}"
    )
    return 0


def cmd_extract(args) -> int:
    rc = _run_config(args, window_seconds=args.window)
    th = rc.thresholds()
    packets, source = read_trace(args.trace)
    if source.skipped:
        logger.info(
            "skipped %d records (non-IPv4 %d, non-TCP/UDP %d, fragments %d, malformed %d)",
            source.skipped, source.non_ipv4, source.non_transport, source.fragments, source.malformed,
        )

    labels = load_labels(args.labels) if args.labels else None
    end = len(labels) * th.dt if labels else None
    windows = partition_windows(packets, th.dt, end=end)
    series = extract_series(windows, th, labels)

    out = Path(args.out or Path(args.trace).with_suffix(".features.csv"))
    save_features(series, out)
    console.print(f"{len(series)} feature rows -> {out}")

    if labels and 1 in labels and -1 in labels:
        for name, row in summarize_series(series).items():
            console.print(
                f"  {name.upper()}: normal {row['normal_mean']:.3f} ± {row['normal_std']:.3f}, "
                f"attack {row['attack_mean']:.3f} ± {row['attack_std']:.3f}, "
                f"separation {row['separation']:.2f} sd"
            )
    return 0


def cmd_train(args) -> int:
    overrides = {"svm_c": args.C}
    if args.family:
        overrides["kernel_families"] = (args.family,)
    if args.regularizer:
        overrides["regularizers"] = (args.regularizer,)
    rc = _run_config(args, **overrides)

    series = load_features(args.features)
    X, y = feature_matrix(series, rc.features)
    if y is None:
        raise DataError(f"{args.features}: training needs a label for every window")

    model, report = select_model(X, y, rc.mkl_candidates())
    model_out = Path(args.model or MODEL_DIR / "model.json")
    save_model(model, model_out)
    if args.report:
        write_selection_csv(report, args.report)

    console.print(selection_table(report, selected_group(report)))
    console.print(f"selected [bold]{model.config.label}[/bold] (R={model.R:.4g}) -> {model_out}")
    return 0


def cmd_detect(args) -> int:
    model = load_model(args.model)
    series = load_features(args.features)
    X, _ = feature_matrix(series, model.config.features)
    flags = predict_many(model, X)

    out = Path(args.out or Path(args.features).with_suffix(".flags.csv"))
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(("window", "flag"))
        for v, flag in zip(series, flags):
            writer.writerow((v.window_index, int(flag)))

    attacks = sum(1 for flag in flags if flag == -1)
    console.print(f"{len(series)} windows, {attacks} flagged as attack -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    rc = _run_config(args, svm_c=args.C)
    series = load_features(args.features)
    train_set, test_set = split(series, rc.train_fraction, rc.seed)
    logger.info("split %d windows into %d train / %d test", len(series), len(train_set), len(test_set))

    results = compare(rc.compare_methods, train_set, test_set, rc)
    for r in results:
        if r.selection:
            console.print(selection_table(r.selection, selected_group(r.selection)))
    console.print(comparison_table(results))
    if args.report:
        write_comparison_csv(results, args.report)
        console.print(f"report -> {args.report}")
    return 0


# ── Parser ───────────────────────────────────────────────────


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="flowguard",
        description="FlowGuard: DDoS detection from fused flow features with kernel-selected MKL.",
    )
    parser.add_argument("--config", default=None, help="KEY=VALUE run configuration file.")
    parser.add_argument("--seed", type=int, default=None, help="Seed for every random choice.")
    parser.add_argument("--log-level", default=LOG_LEVEL, help="Logging level (default: %(default)s).")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="Generate a labeled synthetic trace.")
    p.add_argument("scenario", nargs="?", default="early",
                   help="Preset: early, impulse, intermittent or baseline (default: early).")
    p.add_argument("--spec", default=None, help="Scenario file instead of a preset.")
    p.add_argument("--out", default=None, help="Trace CSV to write.")
    p.add_argument("--labels", default=None, help="Per-window label CSV to write.")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("extract", help="Compute per-window features from a trace (CSV or pcap).")
    p.add_argument("trace")
    p.add_argument("--out", default=None, help="Feature CSV to write.")
    p.add_argument("--labels", default=None, help="Label CSV to attach to the windows.")
    p.add_argument("--window", type=float, default=None, help="Window length in seconds.")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="Train candidate kernels and keep the smallest-R model.")
    p.add_argument("features")
    p.add_argument("--model", default=None, help="Model JSON to write.")
    p.add_argument("--report", default=None, help="Selection report CSV to write.")
    p.add_argument("--family", choices=("sum", "product"), default=None,
                   help="Restrict candidates to one kernel family.")
    p.add_argument("--regularizer", choices=("l1", "l2"), default=None,
                   help="Restrict candidates to one regularizer.")
    p.add_argument("--C", type=float, default=None, help="SVM box constraint.")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("detect", help="Flag each window of a feature file as normal (1) or attack (-1).")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--out", default=None, help="Flag CSV to write.")
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("evaluate", help="Compare detection methods on a stratified split.")
    p.add_argument("features")
    p.add_argument("--report", default=None, help="Comparison CSV (method,DR,ER) to write.")
    p.add_argument("--C", type=float, default=None, help="SVM box constraint.")
    p.set_defaults(func=cmd_evaluate)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(args.log_level)
    try:
        return args.func(args)
    except FlowGuardError as e:
        logger.error("%s", e)
        for line in getattr(e, "row_errors", [])[:10]:
            logger.error("  %s", line)
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
