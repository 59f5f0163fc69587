"""Confusion accounting, the competition score, cross-validation, and
repeated seeded experiments.

The confusion-matrix orientation treats normal as the positive row, which
is unusual but matches the competition's scoring convention:

    tp = actual normal,   predicted normal
    fn = actual normal,   predicted fault
    fp = actual fault,    predicted normal
    tn = actual fault,    predicted fault

The score averages the per-class error rates:

    score = 100 - 50 * fn / n_normal - 50 * fp / n_fault

which is 100 for a perfect predictor, 0 for an always-wrong one, and
centers at 50 for a chance predictor regardless of class imbalance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import learners
from .errors import DegenerateFolds, EmptyClassInTest, InvalidK, LengthMismatch
from .learners import ABNORMAL, NORMAL, LearnerConfig
from .scada import Label


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fn: int
    fp: int
    tn: int

    @property
    def n_normal(self) -> int:
        return self.tp + self.fn

    @property
    def n_fault(self) -> int:
        return self.fp + self.tn


def _as_codes(labels: Sequence) -> np.ndarray:
    out = np.empty(len(labels), dtype=np.int8)
    for i, item in enumerate(labels):
        if isinstance(item, Label):
            if item is Label.INVALID:
                raise ValueError("invalid labels cannot be scored")
            out[i] = NORMAL if item is Label.NORMAL else ABNORMAL
        else:
            code = int(item)
            if code not in (NORMAL, ABNORMAL):
                raise ValueError(f"label code must be 0 or 1, got {code}")
            out[i] = code
    return out


def confusion(actual: Sequence, predicted: Sequence) -> ConfusionCounts:
    """Count the four cells. Accepts Label enums or 0/1 codes."""
    if len(actual) != len(predicted):
        raise LengthMismatch(len(actual), len(predicted))
    if len(actual) == 0:
        raise ValueError("cannot build a confusion matrix from zero labels")
    a = _as_codes(actual)
    p = _as_codes(predicted)
    a_normal = a == NORMAL
    p_normal = p == NORMAL
    return ConfusionCounts(
        tp=int(np.sum(a_normal & p_normal)),
        fn=int(np.sum(a_normal & ~p_normal)),
        fp=int(np.sum(~a_normal & p_normal)),
        tn=int(np.sum(~a_normal & ~p_normal)),
    )


def score(counts: ConfusionCounts) -> float:
    """Competition score in [0, 100]; see the module docstring."""
    if counts.n_normal < 1:
        raise EmptyClassInTest("normal")
    if counts.n_fault < 1:
        raise EmptyClassInTest("fault")
    return 100.0 - 50.0 * counts.fn / counts.n_normal - 50.0 * counts.fp / counts.n_fault


@dataclass(frozen=True)
class RunStatistics:
    runs: int
    mean: float
    std: float  # sample standard deviation (n-1); 0 for a single run


def run_statistics(scores: Sequence[float]) -> RunStatistics:
    values = np.asarray(scores, dtype=float)
    if values.size < 1:
        raise ValueError("need at least one score")
    std = float(np.std(values, ddof=1)) if values.size > 1 else 0.0
    return RunStatistics(runs=int(values.size), mean=float(values.mean()), std=std)


def derive_seed(master_seed: int, *key: int) -> int:
    """Deterministic child seed from a master seed and an index path."""
    ss = np.random.SeedSequence([int(master_seed), *[int(k) for k in key]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def derive_seeds(master_seed: int, n: int) -> list[int]:
    return [derive_seed(master_seed, i) for i in range(n)]


def kfold_split(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Seeded shuffle then contiguous split into k folds whose sizes
    differ by at most one."""
    if not 2 <= k <= n:
        raise InvalidK(k, n)
    perm = np.random.default_rng(seed).permutation(n)
    return list(np.array_split(perm, k))


def _draw_folds(y: np.ndarray, k: int, seed: int, attempts: int = 10) -> list[np.ndarray]:
    n = y.shape[0]
    for attempt in range(attempts):
        folds = kfold_split(n, k, derive_seed(seed, attempt))
        ok = True
        for i in range(k):
            train_idx = np.concatenate([folds[j] for j in range(k) if j != i])
            if len(np.unique(y[train_idx])) < 2:
                ok = False
                break
        if ok:
            return folds
    raise DegenerateFolds(attempts)


def crossval_fold_scores(
    features: np.ndarray, labels: Sequence[int], cfg: LearnerConfig, k: int, seed: int
) -> list[float]:
    """Per-fold scores: train on k-1 folds, score the held-out fold."""
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=np.int8)
    folds = _draw_folds(y, k, seed)
    fold_scores: list[float] = []
    for i in range(k):
        test_idx = folds[i]
        train_idx = np.concatenate([folds[j] for j in range(k) if j != i])
        model = learners.train(cfg, X[train_idx], y[train_idx])
        predicted = learners.predict_batch(model, X[test_idx])
        fold_scores.append(score(confusion(y[test_idx], predicted)))
    return fold_scores


def cross_validate(
    features: np.ndarray, labels: Sequence[int], cfg: LearnerConfig, k: int, seed: int
) -> float:
    """Mean score over k folds."""
    return float(np.mean(crossval_fold_scores(features, labels, cfg, k, seed)))


def repeated_runs(
    experiment: Callable[[int], float], n_runs: int, master_seed: int
) -> RunStatistics:
    """Run the experiment once per deterministically derived child seed and
    aggregate to mean and sample standard deviation."""
    if n_runs < 1:
        raise ValueError(f"n_runs must be >= 1, got {n_runs}")
    return run_statistics([experiment(s) for s in derive_seeds(master_seed, n_runs)])
