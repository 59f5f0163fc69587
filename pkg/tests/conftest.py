from __future__ import annotations

import numpy as np
import pytest

from icewatch.features import FeatureVector
from icewatch.scada import CHANNELS, Label, LabeledDataset, LabeledRecord, ScadaRecord


def make_record(time: int = 0, group: int = 1, **channels) -> ScadaRecord:
    values = {ch: 0.0 for ch in CHANNELS}
    values.update(channels)
    return ScadaRecord(time=time, group=group, **values)


def make_fv(label: Label = Label.NORMAL, **fields) -> FeatureVector:
    values = dict(
        pitch1_moto_tmp=0.0,
        pitch2_moto_tmp=0.0,
        pitch3_moto_tmp=0.0,
        wind_speed=0.0,
        environment_tmp=0.0,
        tmp_diff=0.0,
        power=0.0,
        tip_speed_ratio=1.0,
        torque=1.0,
        pitch_angle_avg=0.0,
    )
    values.update(fields)
    return FeatureVector(label=label, **values)


def make_dataset(labels, turbine_id="T", start_time=0, dt=7) -> LabeledDataset:
    records = tuple(
        LabeledRecord(make_record(time=start_time + i * dt), label)
        for i, label in enumerate(labels)
    )
    return LabeledDataset(turbine_id=turbine_id, records=records)


def random_record(rng: np.random.Generator, time: int = 0) -> ScadaRecord:
    channels = {ch: float(rng.uniform(-4.0, 10.0)) for ch in CHANNELS}
    return make_record(time=time, group=int(rng.integers(1, 5)), **channels)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
