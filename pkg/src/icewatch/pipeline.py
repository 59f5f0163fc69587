"""End-to-end flows: the traditional baseline and the re-engineered,
physics-gated pipeline, plus the deployable model bundle.

Traditional flow, per seeded run: drop invalid records, denoise, balance
by under-sampling, cross-validate on the balanced training set, train on
all of it, then score on the full (invalid-dropped, denoised, unbalanced)
test turbine.

Re-engineered flow: after the same preprocessing, the strong rule filters
training records down to icing candidates (everything else is excluded
from training), candidates split into low and high wind-speed segments,
and each segment gets its own balanced model. At test time every record
passes through the gate: rule failures are predicted normal outright,
candidates are routed to their segment's model. Scores are reported per
segment and pooled over the whole test set.

Seed derivation, recorded in every report: run i uses
derive_seed(master_seed, i); balancing draws come from the balance seed
(derive_seed(balance.seed, i, segment_index)); fold shuffles and learner
initialization derive from the run seed. Reports carry a config hash and
all seeds, and contain no timestamps, so identical configs reproduce
byte-identical report files.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Sequence, TypeVar

import numpy as np

from . import learners
from .errors import DegenerateDenominator, InvalidConfig, SegmentTooSmall
from .evaluation import (
    RunStatistics,
    confusion,
    crossval_fold_scores,
    derive_seed,
    run_statistics,
    score,
)
from .features import (
    FeatureVector,
    LABEL_CODES,
    assemble_feature_vector,
    engineer_record,
    feature_matrix,
    feature_vectors,
)
from .learners import LearnerConfig, TrainedModel
from .preprocess import (
    BalanceConfig,
    DenoiseConfig,
    denoise_dataset,
    drop_invalid,
    oversample_order,
    undersample_order,
)
from .rules import (
    GateDecision,
    IntervalRule,
    Segment,
    SegmentationConfig,
    gate,
    rule_from_json,
    rule_to_json,
    segment as segment_vectors,
    strong_rule_filter,
)
from .scada import Label, LabeledDataset, ScadaRecord, channel_matrix

REPORT_FORMAT = 1
BUNDLE_FORMAT = 1


@dataclass(frozen=True)
class PipelineConfig:
    variant: str  # "traditional" or "reengineered"
    learner: LearnerConfig
    denoise: DenoiseConfig = DenoiseConfig()
    balance: BalanceConfig = BalanceConfig()
    rule: IntervalRule | None = None
    segmentation: SegmentationConfig | None = None
    cv_k: int = 5
    n_runs: int = 10
    master_seed: int = 0
    min_segment_size: int = 50
    traditional_raw_features: bool = False

    def __post_init__(self):
        if self.variant not in ("traditional", "reengineered"):
            raise InvalidConfig(f"unknown pipeline variant {self.variant!r}")
        if self.variant == "reengineered":
            if self.rule is None or self.segmentation is None:
                raise InvalidConfig("reengineered pipeline requires rule and segmentation")
            if self.traditional_raw_features:
                raise InvalidConfig("raw-channel features apply to the traditional variant only")
        else:
            if self.rule is not None or self.segmentation is not None:
                raise InvalidConfig("traditional pipeline forbids rule and segmentation")
        if self.cv_k < 2:
            raise InvalidConfig(f"cv_k must be >= 2, got {self.cv_k}")
        if self.n_runs < 1:
            raise InvalidConfig(f"n_runs must be >= 1, got {self.n_runs}")
        if self.min_segment_size < 1:
            raise InvalidConfig("min_segment_size must be positive")


@dataclass(frozen=True)
class ReportCell:
    pipeline: str
    algorithm: str
    segment: str  # "all", "low", "high", or "pooled"
    cv: RunStatistics | None
    test: RunStatistics


@dataclass(frozen=True)
class ExperimentReport:
    train_id: str
    test_id: str
    config: dict
    config_hash: str
    run_seeds: tuple[int, ...]
    cells: tuple[ReportCell, ...]


def config_hash(doc: dict) -> str:
    canonical = json.dumps(doc, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def pipeline_config_to_dict(cfg: PipelineConfig) -> dict:
    lc = cfg.learner
    doc = {
        "variant": cfg.variant,
        "denoise": {"window": cfg.denoise.window, "channels": list(cfg.denoise.channels)},
        "balance": {"method": cfg.balance.method, "seed": cfg.balance.seed},
        "learner": {
            "algorithm": lc.algorithm,
            "knn_k": lc.knn_k,
            "cart_max_depth": lc.cart_max_depth,
            "cart_min_leaf": lc.cart_min_leaf,
            "mlp_hidden": list(lc.mlp_hidden),
            "mlp_learning_rate": lc.mlp_learning_rate,
            "mlp_epochs": lc.mlp_epochs,
            "mlp_batch_size": lc.mlp_batch_size,
            "mlp_init_scale": lc.mlp_init_scale,
        },
        "cv_k": cfg.cv_k,
        "n_runs": cfg.n_runs,
        "master_seed": cfg.master_seed,
        "min_segment_size": cfg.min_segment_size,
        "traditional_raw_features": cfg.traditional_raw_features,
    }
    if cfg.rule is not None:
        doc["rule"] = {"id": cfg.rule.rule_id, "constraints": rule_to_json(cfg.rule)}
    if cfg.segmentation is not None:
        doc["segment_threshold"] = cfg.segmentation.threshold
    return doc


# --- shared preparation ---------------------------------------------------------


def _prepare(dataset: LabeledDataset, denoise: DenoiseConfig) -> LabeledDataset:
    return denoise_dataset(drop_invalid(dataset), denoise)


def _label_codes(dataset: LabeledDataset) -> np.ndarray:
    return np.array([LABEL_CODES[lr.label] for lr in dataset.records], dtype=np.int8)


def _raw_matrix(dataset: LabeledDataset) -> tuple[np.ndarray, np.ndarray]:
    X = channel_matrix([lr.record for lr in dataset.records])
    return X, _label_codes(dataset)


def _balance_order(y: np.ndarray, cfg: BalanceConfig, seed: int) -> np.ndarray:
    if cfg.method == "under":
        return undersample_order(y == 1, seed)
    return oversample_order(y == 1, seed)


def _run_seeds(cfg: PipelineConfig) -> list[int]:
    return [derive_seed(cfg.master_seed, i) for i in range(cfg.n_runs)]


_T = TypeVar("_T")


def _max_workers(n_runs: int) -> int:
    """Parallelism cap from ICEWATCH_THREADS (0 = auto, unset = sequential)."""
    raw = os.environ.get("ICEWATCH_THREADS")
    if raw is None:
        return 1
    try:
        value = int(raw)
    except ValueError:
        raise InvalidConfig(f"ICEWATCH_THREADS must be an integer, got {raw!r}") from None
    if value < 0:
        raise InvalidConfig(f"ICEWATCH_THREADS must be >= 0, got {value}")
    if value == 0:
        value = os.cpu_count() or 1
    return max(1, min(value, n_runs))


def _map_runs(fn: Callable[[int], _T], n_runs: int) -> list[_T]:
    """Run the per-seed closure for every run index, optionally in parallel.
    Results come back ordered by run index, and every seed is pre-derived,
    so the output is byte-identical to sequential execution."""
    workers = _max_workers(n_runs)
    if workers == 1:
        return [fn(i) for i in range(n_runs)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_runs)))


# --- traditional flow -----------------------------------------------------------


def run_traditional(
    train: LabeledDataset, test: LabeledDataset, cfg: PipelineConfig
) -> ExperimentReport:
    if cfg.variant != "traditional":
        raise InvalidConfig("run_traditional needs a traditional config")
    train_prep = _prepare(train, cfg.denoise)
    test_prep = _prepare(test, cfg.denoise)
    if cfg.traditional_raw_features:
        X_train, y_train = _raw_matrix(train_prep)
        X_test, y_test = _raw_matrix(test_prep)
    else:
        X_train, y_train = feature_matrix(feature_vectors(train_prep))
        X_test, y_test = feature_matrix(feature_vectors(test_prep))

    seeds = _run_seeds(cfg)

    def one_run(i: int) -> tuple[float, float]:
        run_seed = seeds[i]
        order = _balance_order(y_train, cfg.balance, derive_seed(cfg.balance.seed, i))
        Xb, yb = X_train[order], y_train[order]
        lcfg = replace(cfg.learner, seed=derive_seed(run_seed, 2))
        cv = float(np.mean(crossval_fold_scores(Xb, yb, lcfg, cfg.cv_k, derive_seed(run_seed, 1))))
        model = learners.train(lcfg, Xb, yb)
        predicted = learners.predict_batch(model, X_test)
        return cv, score(confusion(y_test, predicted))

    results = _map_runs(one_run, cfg.n_runs)
    cv_scores = [cv for cv, _ in results]
    test_scores = [t for _, t in results]

    doc = pipeline_config_to_dict(cfg)
    cell = ReportCell(
        pipeline="traditional",
        algorithm=cfg.learner.algorithm,
        segment="all",
        cv=run_statistics(cv_scores),
        test=run_statistics(test_scores),
    )
    return ExperimentReport(
        train_id=train.turbine_id,
        test_id=test.turbine_id,
        config=doc,
        config_hash=config_hash(doc),
        run_seeds=tuple(seeds),
        cells=(cell,),
    )


# --- re-engineered flow ---------------------------------------------------------


@dataclass(frozen=True)
class _GatedTest:
    auto_labels: np.ndarray  # actual labels of auto-normal records
    X: dict[Segment, np.ndarray]
    y: dict[Segment, np.ndarray]


def _gate_test(vectors: Sequence[FeatureVector], rule: IntervalRule, seg: SegmentationConfig) -> _GatedTest:
    auto: list[FeatureVector] = []
    per_segment: dict[Segment, list[FeatureVector]] = {Segment.LOW: [], Segment.HIGH: []}
    for fv in vectors:
        decision = gate(fv, rule, seg)
        if decision is GateDecision.AUTO_NORMAL:
            auto.append(fv)
        else:
            per_segment[decision.segment].append(fv)
    _, auto_y = feature_matrix(auto)
    X: dict[Segment, np.ndarray] = {}
    y: dict[Segment, np.ndarray] = {}
    for s in Segment:
        X[s], y[s] = feature_matrix(per_segment[s])
    return _GatedTest(auto_labels=auto_y, X=X, y=y)


def run_reengineered(
    train: LabeledDataset, test: LabeledDataset, cfg: PipelineConfig
) -> ExperimentReport:
    if cfg.variant != "reengineered":
        raise InvalidConfig("run_reengineered needs a reengineered config")
    train_vectors = feature_vectors(_prepare(train, cfg.denoise))
    candidates, _ = strong_rule_filter(train_vectors, cfg.rule)
    low, high = segment_vectors(candidates, cfg.segmentation)
    train_seg = {Segment.LOW: feature_matrix(low), Segment.HIGH: feature_matrix(high)}
    for s in Segment:
        count = train_seg[s][0].shape[0]
        if count < cfg.min_segment_size:
            raise SegmentTooSmall(s.value, count, cfg.min_segment_size)

    test_vectors = feature_vectors(_prepare(test, cfg.denoise))
    gated = _gate_test(test_vectors, cfg.rule, cfg.segmentation)

    seeds = _run_seeds(cfg)

    def one_run(i: int) -> tuple[dict[Segment, float], dict[Segment, float], float, float]:
        run_seed = seeds[i]
        run_cv: dict[Segment, float] = {}
        run_test: dict[Segment, float] = {}
        actual_parts = [gated.auto_labels]
        predicted_parts = [np.zeros_like(gated.auto_labels)]  # auto-normal predicts normal
        for s_index, s in enumerate(Segment):
            X_seg, y_seg = train_seg[s]
            order = _balance_order(y_seg, cfg.balance, derive_seed(cfg.balance.seed, i, s_index))
            Xb, yb = X_seg[order], y_seg[order]
            lcfg = replace(cfg.learner, seed=derive_seed(run_seed, 2, s_index))
            run_cv[s] = float(
                np.mean(crossval_fold_scores(Xb, yb, lcfg, cfg.cv_k, derive_seed(run_seed, 1, s_index)))
            )
            model = learners.train(lcfg, Xb, yb)
            predicted = learners.predict_batch(model, gated.X[s])
            run_test[s] = score(confusion(gated.y[s], predicted))
            actual_parts.append(gated.y[s])
            predicted_parts.append(predicted)
        pooled_cv = float(np.mean(list(run_cv.values())))
        pooled_test = score(confusion(np.concatenate(actual_parts), np.concatenate(predicted_parts)))
        return run_cv, run_test, pooled_cv, pooled_test

    results = _map_runs(one_run, cfg.n_runs)
    cv_scores = {s: [r[0][s] for r in results] for s in Segment}
    test_scores = {s: [r[1][s] for r in results] for s in Segment}
    pooled_cv = [r[2] for r in results]
    pooled_test = [r[3] for r in results]

    doc = pipeline_config_to_dict(cfg)
    algorithm = cfg.learner.algorithm
    cells = (
        ReportCell("reengineered", algorithm, "low", run_statistics(cv_scores[Segment.LOW]), run_statistics(test_scores[Segment.LOW])),
        ReportCell("reengineered", algorithm, "high", run_statistics(cv_scores[Segment.HIGH]), run_statistics(test_scores[Segment.HIGH])),
        ReportCell("reengineered", algorithm, "pooled", run_statistics(pooled_cv), run_statistics(pooled_test)),
    )
    return ExperimentReport(
        train_id=train.turbine_id,
        test_id=test.turbine_id,
        config=doc,
        config_hash=config_hash(doc),
        run_seeds=tuple(seeds),
        cells=cells,
    )


# --- deployable bundle ----------------------------------------------------------


@dataclass(frozen=True)
class ModelBundle:
    variant: str
    denoise: DenoiseConfig
    raw_features: bool = False
    model: TrainedModel | None = None  # traditional
    rule: IntervalRule | None = None  # reengineered
    segmentation: SegmentationConfig | None = None
    low_model: TrainedModel | None = None
    high_model: TrainedModel | None = None


def train_bundle(train: LabeledDataset, cfg: PipelineConfig) -> ModelBundle:
    """Train the final deployable model(s) with one balance draw, seeded
    one past the experiment's runs."""
    i = cfg.n_runs  # one past the last experiment run
    seed = derive_seed(cfg.master_seed, i)
    train_prep = _prepare(train, cfg.denoise)
    if cfg.variant == "traditional":
        if cfg.traditional_raw_features:
            X, y = _raw_matrix(train_prep)
        else:
            X, y = feature_matrix(feature_vectors(train_prep))
        order = _balance_order(y, cfg.balance, derive_seed(cfg.balance.seed, i))
        lcfg = replace(cfg.learner, seed=derive_seed(seed, 2))
        model = learners.train(lcfg, X[order], y[order])
        return ModelBundle(
            variant="traditional",
            denoise=cfg.denoise,
            raw_features=cfg.traditional_raw_features,
            model=model,
        )
    vectors = feature_vectors(train_prep)
    candidates, _ = strong_rule_filter(vectors, cfg.rule)
    low, high = segment_vectors(candidates, cfg.segmentation)
    models: dict[Segment, TrainedModel] = {}
    for s_index, (s, vecs) in enumerate(((Segment.LOW, low), (Segment.HIGH, high))):
        X, y = feature_matrix(vecs)
        if X.shape[0] < cfg.min_segment_size:
            raise SegmentTooSmall(s.value, X.shape[0], cfg.min_segment_size)
        order = _balance_order(y, cfg.balance, derive_seed(cfg.balance.seed, i, s_index))
        lcfg = replace(cfg.learner, seed=derive_seed(seed, 2, s_index))
        models[s] = learners.train(lcfg, X[order], y[order])
    return ModelBundle(
        variant="reengineered",
        denoise=cfg.denoise,
        rule=cfg.rule,
        segmentation=cfg.segmentation,
        low_model=models[Segment.LOW],
        high_model=models[Segment.HIGH],
    )


@dataclass(frozen=True)
class StreamPrediction:
    time: int
    label: Label
    low_confidence: bool  # smoothed from a partial window or degenerate features


def predict_stream(bundle: ModelBundle, records: Sequence[ScadaRecord]) -> list[StreamPrediction]:
    """Label a raw record stream with the bundle's full preprocessing.

    Deployment smoothing is a trailing window over the stream; the first
    window-1 records are averaged over the partial prefix and flagged
    low-confidence instead of being dropped, because a deployed predictor
    must answer from the first record. Records whose physics features are
    degenerate (channels at -5) are predicted normal and flagged.
    """
    if not records:
        return []
    w = bundle.denoise.window
    smooth_channels = bundle.denoise.channels
    raw = channel_matrix(records, smooth_channels)
    csum = np.cumsum(raw, axis=0)
    n = raw.shape[0]
    means = np.empty_like(raw)
    head = min(w - 1, n)
    means[:head] = csum[:head] / np.arange(1, head + 1)[:, None]
    if n >= w:
        means[w - 1 :] = csum[w - 1 :] - np.concatenate([np.zeros((1, raw.shape[1])), csum[:-w]])[: n - w + 1]
        means[w - 1 :] /= w

    out: list[StreamPrediction] = []
    for i, record in enumerate(records):
        smoothed = {ch: float(means[i, k]) for k, ch in enumerate(smooth_channels)}
        rec = replace(record, **smoothed)
        flagged = i < w - 1
        label = _predict_one(bundle, rec)
        if label is None:
            label, flagged = Label.NORMAL, True
        out.append(StreamPrediction(time=record.time, label=label, low_confidence=flagged))
    return out


def _predict_one(bundle: ModelBundle, rec: ScadaRecord) -> Label | None:
    if bundle.variant == "traditional" and bundle.raw_features:
        row = channel_matrix([rec])[0]
        return learners.predict(bundle.model, row)
    try:
        # the label on a prediction-time vector is an inert placeholder
        fv = assemble_feature_vector(engineer_record(rec), Label.NORMAL)
    except DegenerateDenominator:
        return None
    if bundle.variant == "traditional":
        return learners.predict(bundle.model, fv.as_array())
    decision = gate(fv, bundle.rule, bundle.segmentation)
    if decision is GateDecision.AUTO_NORMAL:
        return Label.NORMAL
    model = bundle.low_model if decision.segment is Segment.LOW else bundle.high_model
    return learners.predict(model, fv.as_array())


def bundle_to_dict(bundle: ModelBundle) -> dict:
    doc = {
        "format": BUNDLE_FORMAT,
        "variant": bundle.variant,
        "denoise": {"window": bundle.denoise.window, "channels": list(bundle.denoise.channels)},
        "raw_features": bundle.raw_features,
    }
    if bundle.variant == "traditional":
        doc["model"] = learners.model_to_dict(bundle.model)
    else:
        doc["rule"] = {"id": bundle.rule.rule_id, "constraints": rule_to_json(bundle.rule)}
        doc["segment_threshold"] = bundle.segmentation.threshold
        doc["low_model"] = learners.model_to_dict(bundle.low_model)
        doc["high_model"] = learners.model_to_dict(bundle.high_model)
    return doc


def bundle_from_dict(doc: dict) -> ModelBundle:
    if doc.get("format") != BUNDLE_FORMAT:
        raise InvalidConfig(f"unsupported bundle format {doc.get('format')!r}")
    denoise = DenoiseConfig(window=int(doc["denoise"]["window"]), channels=tuple(doc["denoise"]["channels"]))
    if doc["variant"] == "traditional":
        return ModelBundle(
            variant="traditional",
            denoise=denoise,
            raw_features=bool(doc.get("raw_features", False)),
            model=learners.model_from_dict(doc["model"]),
        )
    return ModelBundle(
        variant="reengineered",
        denoise=denoise,
        rule=rule_from_json(doc["rule"]["constraints"], rule_id=doc["rule"]["id"]),
        segmentation=SegmentationConfig(threshold=float(doc["segment_threshold"])),
        low_model=learners.model_from_dict(doc["low_model"]),
        high_model=learners.model_from_dict(doc["high_model"]),
    )


# --- report output --------------------------------------------------------------


def report_to_dict(report: ExperimentReport) -> dict:
    cells = []
    for c in report.cells:
        cells.append(
            {
                "pipeline": c.pipeline,
                "algorithm": c.algorithm,
                "segment": c.segment,
                "cv_mean": None if c.cv is None else c.cv.mean,
                "cv_std": None if c.cv is None else c.cv.std,
                "test_mean": c.test.mean,
                "test_std": c.test.std,
                "n_runs": c.test.runs,
            }
        )
    return {
        "format": REPORT_FORMAT,
        "train_dataset": report.train_id,
        "test_dataset": report.test_id,
        "config": report.config,
        "config_hash": report.config_hash,
        "run_seeds": list(report.run_seeds),
        "results": cells,
    }


def render_report_text(reports: Sequence[ExperimentReport]) -> str:
    """Aligned plain-text table over one or more reports."""
    lines = []
    header = f"{'pipeline':<14}{'algorithm':<11}{'segment':<9}{'metric':<10}{'mean':>9}{'std':>9}"
    for report in reports:
        lines.append(f"Train: {report.train_id}  Test: {report.test_id}  (runs: {len(report.run_seeds)})")
        lines.append(header)
        lines.append("-" * len(header))
        for c in report.cells:
            if c.cv is not None:
                lines.append(
                    f"{c.pipeline:<14}{c.algorithm:<11}{c.segment:<9}{'cv':<10}{c.cv.mean:>9.2f}{c.cv.std:>9.2f}"
                )
            lines.append(
                f"{c.pipeline:<14}{c.algorithm:<11}{c.segment:<9}{'test':<10}{c.test.mean:>9.2f}{c.test.std:>9.2f}"
            )
        lines.append("")
    return "\n".join(lines)
