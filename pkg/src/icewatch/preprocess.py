"""Preprocessing: invalid removal, moving-average denoising, class balancing.

The pipeline order is drop_invalid -> denoise -> balance. Denoising uses a
trailing (causal) moving average and drops the first window-1 records so
that every surviving record is backed by a full window; the survivor keeps
the time, group, and label of the window's most recent raw record. All
randomness is injected through explicit seeds.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import EmptyClass, WindowLargerThanSeries
from .scada import CHANNELS, Label, LabeledDataset, LabeledRecord, channel_matrix, replace_channels

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class DenoiseConfig:
    window: int = 10
    channels: tuple[str, ...] = CHANNELS  # every continuous channel; time and group are never smoothed

    def __post_init__(self):
        if self.window < 1:
            raise ValueError(f"window must be >= 1, got {self.window}")
        unknown = set(self.channels) - set(CHANNELS)
        if unknown:
            raise ValueError(f"unknown channels: {sorted(unknown)}")


@dataclass(frozen=True)
class BalanceConfig:
    method: str = "under"  # "under" or "over"
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("under", "over"):
            raise ValueError(f"balance method must be 'under' or 'over', got {self.method!r}")


def drop_invalid(dataset: LabeledDataset) -> LabeledDataset:
    """Keep only normal and abnormal records, preserving order."""
    kept = tuple(lr for lr in dataset.records if lr.label is not Label.INVALID)
    return LabeledDataset(turbine_id=dataset.turbine_id, records=kept)


def moving_average(series: Sequence[float], window: int) -> np.ndarray:
    """Trailing moving average: out[i] = mean(series[i : i+window]).

    Output length is len(series) - window + 1. A window larger than the
    series raises WindowLargerThanSeries instead of returning an empty
    result, so a misconfigured window surfaces immediately.
    """
    if window < 1:
        raise ValueError(f"window must be >= 1, got {window}")
    x = np.asarray(series, dtype=float)
    if x.ndim != 1:
        raise ValueError("series must be one-dimensional")
    if window > x.shape[0]:
        raise WindowLargerThanSeries(window, x.shape[0])
    return sliding_window_view(x, window).mean(axis=-1)


def denoise_dataset(dataset: LabeledDataset, cfg: DenoiseConfig) -> LabeledDataset:
    """Replace configured channels by their trailing moving average.

    The first window-1 records are dropped. Each surviving record keeps
    the label of the most recent raw record in its window (causal
    semantics); windows mixing labels are counted and logged.
    """
    n = len(dataset)
    w = cfg.window
    if w > n:
        raise WindowLargerThanSeries(w, n)
    if w == 1:
        return dataset

    matrix = channel_matrix([lr.record for lr in dataset.records], cfg.channels)
    means = sliding_window_view(matrix, w, axis=0).mean(axis=-1)

    labels = np.array([lr.label.value for lr in dataset.records])
    windows = sliding_window_view(labels, w)
    mixed = int(np.sum(np.any(windows != windows[:, -1:], axis=1)))
    if mixed:
        log.debug("denoise: %d of %d windows mix labels", mixed, means.shape[0])

    out = []
    for i in range(means.shape[0]):
        raw = dataset.records[i + w - 1]
        smoothed = {ch: float(means[i, k]) for k, ch in enumerate(cfg.channels)}
        out.append(LabeledRecord(replace_channels(raw.record, **smoothed), raw.label))
    return LabeledDataset(turbine_id=dataset.turbine_id, records=tuple(out))


def undersample_order(is_abnormal: np.ndarray, seed: int) -> np.ndarray:
    """Index order for under-sampling: all abnormal rows plus an equal-size
    uniform sample of normal rows (without replacement), shuffled. Shared by
    the record-level and feature-matrix paths so both draw identically."""
    is_abnormal = np.asarray(is_abnormal, dtype=bool)
    abnormal = np.flatnonzero(is_abnormal)
    normal = np.flatnonzero(~is_abnormal)
    if abnormal.size == 0:
        raise EmptyClass("abnormal")
    if normal.size == 0:
        raise EmptyClass("normal")
    if normal.size < abnormal.size:
        raise ValueError(
            f"cannot under-sample: {normal.size} normal < {abnormal.size} abnormal"
        )
    rng = np.random.default_rng(seed)
    chosen = normal[rng.choice(normal.size, size=abnormal.size, replace=False)]
    combined = np.concatenate([abnormal, chosen])
    return combined[rng.permutation(combined.size)]


def oversample_order(is_abnormal: np.ndarray, seed: int) -> np.ndarray:
    """Index order for over-sampling: original rows followed by minority
    rows re-drawn with replacement until the classes balance. Already
    balanced input comes back unchanged."""
    is_abnormal = np.asarray(is_abnormal, dtype=bool)
    abnormal = np.flatnonzero(is_abnormal)
    normal = np.flatnonzero(~is_abnormal)
    if abnormal.size == 0:
        raise EmptyClass("abnormal")
    if normal.size == 0:
        raise EmptyClass("normal")
    if abnormal.size == normal.size:
        return np.arange(is_abnormal.size)
    minority = abnormal if abnormal.size < normal.size else normal
    need = abs(normal.size - abnormal.size)
    rng = np.random.default_rng(seed)
    extra = minority[rng.integers(0, minority.size, size=need)]
    return np.concatenate([np.arange(is_abnormal.size), extra])


def _abnormal_mask(dataset: LabeledDataset) -> np.ndarray:
    for lr in dataset.records:
        if lr.label is Label.INVALID:
            raise ValueError("balancing requires invalid records to be dropped first")
    return np.array([lr.label is Label.ABNORMAL for lr in dataset.records], dtype=bool)


def under_sample(dataset: LabeledDataset, seed: int) -> LabeledDataset:
    """Balance by randomly discarding normal records down to the abnormal
    count. The output is shuffled deterministically by the seed."""
    order = undersample_order(_abnormal_mask(dataset), seed)
    records = tuple(dataset.records[i] for i in order)
    return LabeledDataset(turbine_id=dataset.turbine_id, records=records)


def over_sample(dataset: LabeledDataset, seed: int) -> LabeledDataset:
    """Balance by duplicating minority records (sampled with replacement).
    Already balanced input comes back unchanged."""
    order = oversample_order(_abnormal_mask(dataset), seed)
    records = tuple(dataset.records[i] for i in order)
    return LabeledDataset(turbine_id=dataset.turbine_id, records=records)
