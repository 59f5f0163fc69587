"""Command-line interface.

Subcommands: ingest (raw CSV + windows -> labeled dataset), synth
(generate turbines), features (export the feature matrix), experiment
(run the configured pipelines and write reports), predict (bundle + raw
CSV -> labels CSV), inspect-rules (rule pass rates on a dataset).

Exit codes: 0 success, 2 configuration or usage error, 3 data error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import synthgen
from .errors import ConfigError, DataError, InvalidConfig
from .features import feature_vectors, rank_features, write_feature_csv
from .learners import LearnerConfig
from .pipeline import (
    ModelBundle,
    PipelineConfig,
    bundle_from_dict,
    bundle_to_dict,
    predict_stream,
    render_report_text,
    report_to_dict,
    run_reengineered,
    run_traditional,
    train_bundle,
)
from .preprocess import BalanceConfig, DenoiseConfig, denoise_dataset, drop_invalid, over_sample, under_sample
from .rules import SegmentationConfig, load_rule, rule_satisfied
from .scada import (
    apply_label_windows,
    parse_label_windows_csv,
    parse_scada_csv,
    read_labeled_csv,
    summarize,
    write_label_windows_csv,
    write_labeled_csv,
    write_scada_csv,
)


def _dump_json(doc, path: Path) -> None:
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


# --- subcommands ----------------------------------------------------------------


def _cmd_ingest(args) -> int:
    records = parse_scada_csv(args.scada, args.turbine_id)
    windows = parse_label_windows_csv(args.windows)
    dataset = apply_label_windows(records, windows, args.turbine_id).require_time_order()
    write_labeled_csv(dataset, args.out)
    s = summarize(dataset)
    print(
        f"{s.turbine_id}: {len(dataset)} records "
        f"({s.n_normal} normal, {s.n_abnormal} abnormal, {s.n_invalid} invalid) -> {args.out}"
    )
    return 0


def _write_turbine(out: synthgen.SynthOutput, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    write_scada_csv(out.records, directory / "scada.csv")
    write_label_windows_csv(out.truth_windows, directory / "windows.csv")
    counts = {"normal": 0, "abnormal": 0, "invalid": 0}
    for label in out.truth_labels:
        counts[label.value] += 1
    ledger = {
        "episodes": [
            {"start": e.start, "end": e.end, "severity": e.severity} for e in out.episode_ledger
        ],
        "counts": counts,
    }
    _dump_json(ledger, directory / "ledger.json")


def _cmd_synth(args) -> int:
    out_dir = Path(args.out)
    if args.config:
        doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    else:
        doc = {}
    if args.pair:
        base_doc = doc.get("base", doc if "duration" in doc else {})
        base = synthgen.config_from_dict(base_doc)
        if args.seed is not None:
            base = replace(base, seed=args.seed)
        profile = synthgen.profile_from_dict(doc["profile"]) if "profile" in doc else synthgen.default_offset_profile()
        turbine_a, turbine_b = synthgen.make_turbine_pair(base, profile)
        _write_turbine(turbine_a, out_dir / "A")
        _write_turbine(turbine_b, out_dir / "B")
        print(f"wrote pair to {out_dir}/A and {out_dir}/B")
    else:
        cfg = synthgen.config_from_dict(doc)
        if args.seed is not None:
            cfg = replace(cfg, seed=args.seed)
        _write_turbine(synthgen.generate_turbine(cfg), out_dir)
        print(f"wrote turbine to {out_dir}")
    return 0


def _preprocessed(args):
    dataset = read_labeled_csv(args.data, Path(args.data).stem)
    dataset = drop_invalid(dataset)
    dataset = denoise_dataset(dataset, DenoiseConfig(window=args.ma_window))
    if getattr(args, "balance", "none") == "under":
        dataset = under_sample(dataset, args.seed)
    elif getattr(args, "balance", "none") == "over":
        dataset = over_sample(dataset, args.seed)
    return dataset


def _cmd_features(args) -> int:
    dataset = _preprocessed(args)
    vectors = feature_vectors(dataset)
    write_feature_csv(vectors, args.out)
    print(f"wrote {len(vectors)} feature rows -> {args.out}")
    if args.rank:
        for name, value in rank_features(vectors):
            print(f"{name:>4}  fisher={value:.4f}")
    return 0


def _cmd_inspect_rules(args) -> int:
    dataset = _preprocessed(args)
    vectors = feature_vectors(dataset)
    n = len(vectors)
    abnormal = [fv for fv in vectors if fv.label.value == "abnormal"]
    rule_ids = args.rules or ["R1", "R2", "R3", "R4", "R5"]
    for rule_id in rule_ids:
        rule = load_rule(rule_id)
        passed = sum(1 for fv in vectors if rule_satisfied(rule, fv))
        captured = sum(1 for fv in abnormal if rule_satisfied(rule, fv))
        cap_rate = captured / len(abnormal) if abnormal else float("nan")
        print(
            f"{rule.rule_id}: {passed}/{n} pass ({passed / n:.1%}), "
            f"abnormal captured {captured}/{len(abnormal)} ({cap_rate:.1%})"
        )
    return 0


def _learner_config(doc: dict) -> LearnerConfig:
    known = {
        "algorithm",
        "knn_k",
        "cart_max_depth",
        "cart_min_leaf",
        "mlp_hidden",
        "mlp_learning_rate",
        "mlp_epochs",
        "mlp_batch_size",
        "mlp_init_scale",
    }
    unknown = set(doc) - known
    if unknown:
        raise InvalidConfig(f"unknown learner options: {sorted(unknown)}")
    if "algorithm" not in doc:
        raise InvalidConfig("learner.algorithm is required")
    kwargs = dict(doc)
    if "mlp_hidden" in kwargs:
        kwargs["mlp_hidden"] = tuple(int(h) for h in kwargs["mlp_hidden"])
    return LearnerConfig(**kwargs)


def _load_datasets(doc: dict):
    data = doc.get("data")
    if not isinstance(data, dict):
        raise InvalidConfig("config needs a 'data' object")
    if "pair" in data:
        pair = data["pair"]
        base = synthgen.config_from_dict(pair.get("base", {}))
        profile = (
            synthgen.profile_from_dict(pair["profile"])
            if "profile" in pair
            else synthgen.default_offset_profile()
        )
        turbine_a, turbine_b = synthgen.make_turbine_pair(base, profile)
        ds_a = apply_label_windows(turbine_a.records, turbine_a.truth_windows, "A")
        ds_b = apply_label_windows(turbine_b.records, turbine_b.truth_windows, "B")
        if data.get("direction", "AB") == "BA":
            return ds_b, ds_a
        return ds_a, ds_b
    if "train" in data and "test" in data:
        train = read_labeled_csv(data["train"], Path(data["train"]).stem)
        test = read_labeled_csv(data["test"], Path(data["test"]).stem)
        return train, test
    raise InvalidConfig("data must contain either 'pair' or 'train'+'test'")


def _pipeline_configs(doc: dict) -> dict[str, PipelineConfig]:
    variants = doc.get("variants", ["traditional", "reengineered"])
    denoise = DenoiseConfig(window=int(doc.get("denoise", {}).get("window", 10)))
    balance_doc = doc.get("balance", {})
    balance = BalanceConfig(
        method=balance_doc.get("method", "under"), seed=int(balance_doc.get("seed", 0))
    )
    learner = _learner_config(doc.get("learner", {}))
    common = dict(
        denoise=denoise,
        balance=balance,
        learner=learner,
        cv_k=int(doc.get("cv_k", 5)),
        n_runs=int(doc.get("n_runs", 10)),
        master_seed=int(doc.get("master_seed", 0)),
        min_segment_size=int(doc.get("min_segment_size", 50)),
    )
    configs: dict[str, PipelineConfig] = {}
    for variant in variants:
        if variant == "traditional":
            configs[variant] = PipelineConfig(
                variant="traditional",
                traditional_raw_features=bool(doc.get("traditional_raw_features", False)),
                **common,
            )
        elif variant == "reengineered":
            rule_spec = doc.get("rule", "R5")
            rule = load_rule(rule_spec) if isinstance(rule_spec, str) else None
            if rule is None:
                raise InvalidConfig("rule must be a builtin id or a JSON file path")
            configs[variant] = PipelineConfig(
                variant="reengineered",
                rule=rule,
                segmentation=SegmentationConfig(threshold=float(doc.get("segment_threshold", -0.25))),
                **common,
            )
        else:
            raise InvalidConfig(f"unknown variant {variant!r}")
    return configs


def _cmd_experiment(args) -> int:
    doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
    if args.rule is not None:
        doc["rule"] = args.rule
    if args.segment_threshold is not None:
        doc["segment_threshold"] = args.segment_threshold
    train, test = _load_datasets(doc)
    configs = _pipeline_configs(doc)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    reports = []
    for variant, cfg in configs.items():
        if variant == "traditional":
            reports.append(run_traditional(train, test, cfg))
        else:
            reports.append(run_reengineered(train, test, cfg))
        if args.bundles:
            _dump_json(bundle_to_dict(train_bundle(train, cfg)), out_dir / f"{variant}.bundle.json")

    _dump_json(
        {"format": 1, "reports": [report_to_dict(r) for r in reports]},
        out_dir / "report.json",
    )
    text = render_report_text(reports)
    (out_dir / "report.txt").write_text(text, encoding="utf-8")
    print(text)
    return 0


def _cmd_predict(args) -> int:
    bundle_doc = json.loads(Path(args.bundle).read_text(encoding="utf-8"))
    bundle: ModelBundle = bundle_from_dict(bundle_doc)
    records = parse_scada_csv(args.scada)
    predictions = predict_stream(bundle, records)
    with open(args.out, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(("time", "label", "confidence_flag"))
        for p in predictions:
            writer.writerow((p.time, p.label.value, int(p.low_confidence)))
    n_abnormal = sum(1 for p in predictions if p.label.value == "abnormal")
    print(f"predicted {len(predictions)} records ({n_abnormal} abnormal) -> {args.out}")
    return 0


# --- parser ---------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="icewatch", description="Blade-icing prediction pipelines")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="label a raw SCADA CSV with icing windows")
    p.add_argument("--scada", required=True)
    p.add_argument("--windows", required=True)
    p.add_argument("--turbine-id", default="WT")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("synth", help="generate synthetic turbines")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--config", default=None, help="synth config JSON (or pair config with --pair)")
    p.add_argument("--pair", action="store_true", help="generate a cross-calibrated A/B pair")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("features", help="export the engineered feature matrix")
    p.add_argument("--data", required=True, help="labeled dataset CSV (from ingest)")
    p.add_argument("--ma-window", type=int, default=10)
    p.add_argument("--balance", choices=("under", "over", "none"), default="none")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--rank", action="store_true", help="print Fisher-score ranking")
    p.set_defaults(func=_cmd_features)

    p = sub.add_parser("experiment", help="run the configured pipelines and write reports")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir", default="reports")
    p.add_argument("--bundles", action="store_true", help="also train and save deployable bundles")
    p.add_argument("--rule", default=None, help="override the strong rule (R1..R5 or a JSON path)")
    p.add_argument("--segment-threshold", type=float, default=None, help="override the wind-speed split point")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("predict", help="label a raw SCADA CSV with a trained bundle")
    p.add_argument("--bundle", required=True)
    p.add_argument("--scada", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("inspect-rules", help="rule pass rates on a labeled dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--ma-window", type=int, default=10)
    p.add_argument("--rules", nargs="*", default=None, help="builtin ids or JSON paths (default: R1..R5)")
    p.set_defaults(func=_cmd_inspect_rules)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except FileNotFoundError as exc:
        print(f"file not found: {exc.filename}", file=sys.stderr)
        return 3
    except json.JSONDecodeError as exc:
        print(f"config error: invalid JSON: {exc}", file=sys.stderr)
        return 2


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
