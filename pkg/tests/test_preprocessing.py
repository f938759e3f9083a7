from dataclasses import replace

import numpy as np
import pandas as pd
import pytest

from action_signal.core.exceptions import (
    DataValidationError,
    EmptyDatasetError,
    EventsOutOfOrderError,
    NormalizationMismatchError,
    ShapeMismatchError,
    SplitError,
    UnknownChannelError,
)
from action_signal.data.cohort_io import cohort_sidecar, read_cohort, write_cohort
from action_signal.data.normalization import (
    apply_normalization,
    fit_normalization,
    invert_normalization,
)
from action_signal.data.split import split_cohort
from action_signal.data.trajectory import PatientTrajectory
from action_signal.preprocessing.binning import (
    bin_hourly,
    cohort_from_events,
    exclude_long_stays,
    hourly_rate_average,
)
from action_signal.preprocessing.dataset import (
    ModelDataset,
    apply_scheme,
    build_action_dataset,
    build_model_dataset,
    gather_history,
)
from action_signal.preprocessing.imputation import LocfImputer, forward_fill, impute_missing
from action_signal.preprocessing.pipeline import PreparedData
from action_signal.simulator.events import cohort_to_events, read_events, write_events


def make_trajectory(pid, length, rng, n_obs=3, constant_channel=None, missing=0.0):
    values = rng.normal(size=(length, n_obs))
    if constant_channel is not None:
        values[:, constant_channel] = 5.0
    mask = rng.random((length, n_obs)) >= missing
    return PatientTrajectory(
        patient_id=pid,
        demographics=np.array([rng.uniform(20, 90), float(rng.random() < 0.5)]),
        observations=np.where(mask, values, np.nan),
        observed_mask=mask,
        actions=rng.uniform(0, 100, size=(length, 2)),
        severity=np.column_stack(
            [rng.integers(0, 24, length), rng.integers(0, 4, length), rng.uniform(0.5, 1.5, length)]
        ).astype(float),
    )


def assert_same_cohort(a, b):
    assert a.patient_ids == b.patient_ids
    assert a.schema == b.schema
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.demographics, y.demographics)
        np.testing.assert_array_equal(x.observed_mask, y.observed_mask)
        np.testing.assert_array_equal(x.observations, y.observations)
        np.testing.assert_array_equal(x.actions, y.actions)
        np.testing.assert_array_equal(x.severity, y.severity)


# Cohort files and event streams


def test_cohort_csv_round_trip(cohort, tmp_path):
    csv_path, sidecar_path = write_cohort(cohort, tmp_path / "cohort.csv")
    assert sidecar_path.name == "cohort.json"
    assert_same_cohort(cohort, read_cohort(csv_path))


def test_events_bin_back_to_hourly_cohort(cohort):
    events = cohort_to_events(cohort)
    assert list(events.columns) == ["patient_id", "time", "channel", "value"]
    assert_same_cohort(cohort, cohort_from_events(events, cohort_sidecar(cohort)))


def test_event_file_round_trip(cohort, tmp_path):
    csv_path, _ = write_events(cohort, tmp_path / "events.csv")
    assert_same_cohort(cohort, cohort_from_events(read_events(csv_path), cohort_sidecar(cohort)))


def test_events_out_of_order():
    events = pd.DataFrame(
        {
            "patient_id": ["A", "A", "B"],
            "time": [0.5, 0.2, 0.1],
            "channel": ["heart_rate", "heart_rate", "heart_rate"],
            "value": [80.0, 82.0, 90.0],
        }
    )
    with pytest.raises(EventsOutOfOrderError, match="events out of order"):
        bin_hourly(events, ["heart_rate"])


def test_bin_hourly_aggregates():
    rows = [
        (0.0, "vasopressor", 0.1),
        (0.2, "heart_rate", 80.0),
        (0.4, "iv_fluid", 250.0),
        (0.5, "vasopressor", 0.3),
        (1.3, "heart_rate", 90.0),
        (1.7, "heart_rate", 100.0),
    ]
    events = pd.DataFrame(rows, columns=["time", "channel", "value"])
    events.insert(0, "patient_id", "A")
    grid = bin_hourly(events, ["heart_rate"])
    assert grid["hour"].tolist() == [0, 1]
    assert grid["heart_rate"].tolist() == [80.0, 95.0]
    assert grid["mask_heart_rate"].tolist() == [1, 1]
    assert grid["iv_fluid"].tolist() == [250.0, 0.0]
    expected_vaso = [0.5 * 0.1 + 0.5 * 0.3, 0.3]
    np.testing.assert_allclose(grid["vasopressor"], expected_vaso, rtol=0, atol=1e-15)


def test_hourly_rate_average_before_first_event():
    averages = hourly_rate_average(np.array([1.5]), np.array([2.0]), 3)
    np.testing.assert_allclose(averages, [0.0, 1.0, 2.0])


def test_exclude_long_stays(rng):
    trajs = [make_trajectory(f"P{i}", length, rng) for i, length in enumerate([5, 40, 12])]
    kept, removed = exclude_long_stays(trajs, max_hours=12)
    assert [t.patient_id for t in kept] == ["P0", "P2"]
    assert removed == 1


# Splits


def test_split_is_disjoint_and_complete(cohort):
    train, val, test = split_cohort(list(cohort), (0.8, 0.1, 0.1), seed=7)
    ids = [t.patient_id for part in (train, val, test) for t in part]
    assert sorted(ids) == sorted(cohort.patient_ids)
    assert len(set(ids)) == len(ids)
    assert len(val) >= 1 and len(test) >= 1

    again = split_cohort(list(cohort), (0.8, 0.1, 0.1), seed=7)
    assert [t.patient_id for t in again[0]] == [t.patient_id for t in train]


def test_split_errors(rng):
    trajs = [make_trajectory(f"P{i}", 5, rng) for i in range(10)]
    with pytest.raises(SplitError, match="fractions must sum to 1"):
        split_cohort(trajs, (0.5, 0.2, 0.2))
    with pytest.raises(SplitError, match="at least 3 patients"):
        split_cohort(trajs[:2])


# Normalization


def test_normalization_uses_training_split_only(rng):
    train = [make_trajectory(f"T{i}", 20, rng) for i in range(5)]
    other = [make_trajectory(f"V{i}", 20, rng) for i in range(5)]
    stats = fit_normalization(train, ["a", "b", "c"], ["age", "gender"], horizons=(6,))

    pooled = np.concatenate([t.observations[:, 1] for t in train])
    assert stats.get("obs:b").mean == pytest.approx(pooled.mean(), abs=1e-12)
    assert stats.get("obs:b").std == pytest.approx(pooled.std(ddof=0), abs=1e-12)

    again = fit_normalization(train, ["a", "b", "c"], ["age", "gender"], horizons=(6,))
    assert again.fingerprint() == stats.fingerprint()
    with_other = fit_normalization(train + other, ["a", "b", "c"], ["age", "gender"], horizons=(6,))
    assert with_other.fingerprint() != stats.fingerprint()


def test_degenerate_channel_gets_unit_std(rng):
    train = [make_trajectory(f"T{i}", 10, rng, constant_channel=0) for i in range(3)]
    stats = fit_normalization(train, ["a", "b", "c"], ["age", "gender"], horizons=(1,))
    assert stats.get("obs:a").std == 1.0
    assert stats.get("obs:a").mean == 5.0
    assert any("obs:a" in w for w in stats.warnings)


def test_normalization_errors(rng):
    with pytest.raises(DataValidationError, match="empty training split"):
        fit_normalization([], ["a"], ["age"])
    train = [make_trajectory("T", 10, rng)]
    stats = fit_normalization(train, ["a", "b", "c"], ["age", "gender"], (1,))
    with pytest.raises(UnknownChannelError, match="unknown channel"):
        stats.get("obs:missing")


def test_action_normalization_inverts(prepared):
    stats = prepared.stats
    for dose in (0.0, 0.05, 120.0):
        z = apply_normalization(dose, "action:iv_fluid", stats)
        assert invert_normalization(z, "action:iv_fluid", stats) == pytest.approx(dose, abs=1e-9)
    assert invert_normalization(-1e6, "action:vasopressor", stats) == 0.0
    expected = [
        apply_normalization(0.0, f"action:{name}", stats) for name in ("iv_fluid", "vasopressor")
    ]
    np.testing.assert_allclose(stats.zero_dose_z(), expected)


# Imputation


def test_forward_fill_keeps_leading_gaps():
    values = np.array([[np.nan, 1.0], [2.0, np.nan], [np.nan, np.nan], [3.0, 4.0]])
    filled = forward_fill(values)
    expected = np.array([[np.nan, 1.0], [2.0, 1.0], [2.0, 1.0], [3.0, 4.0]])
    np.testing.assert_array_equal(filled, expected)


def test_locf_fills_leading_gaps_with_training_means(rng):
    train = [make_trajectory(f"T{i}", 12, rng, missing=0.3) for i in range(4)]
    imputer = LocfImputer().fit(train, ["a", "b", "c"])
    measured = np.concatenate([t.observations for t in train])
    expected_means = np.nanmean(measured, axis=0)
    np.testing.assert_allclose(imputer.fill_values, expected_means, rtol=0, atol=1e-12)

    completed = impute_missing(train, imputer)
    for original, done in zip(train, completed):
        assert done.is_complete
        np.testing.assert_array_equal(done.observed_mask, original.observed_mask)
        measured = original.observed_mask
        np.testing.assert_array_equal(done.observations[measured], original.observations[measured])


def test_imputer_default_for_never_observed_channel(rng):
    trajs = [make_trajectory(f"T{i}", 6, rng) for i in range(2)]
    blank = [
        PatientTrajectory(
            t.patient_id,
            t.demographics,
            np.column_stack([t.observations[:, :2], np.full(len(t), np.nan)]),
            np.column_stack([t.observed_mask[:, :2], np.zeros(len(t), dtype=bool)]),
            t.actions,
            t.severity,
        )
        for t in trajs
    ]
    imputer = LocfImputer(defaults={"c": 42.0}).fit(blank, ["a", "b", "c"])
    assert imputer.fill_values[2] == 42.0
    assert imputer.warnings


# Prepared splits and datasets


def test_prepared_splits_are_complete(prepared, cohort):
    total = sum(split.n_patients for split in prepared.splits.values())
    assert total == len(cohort)
    for split in prepared.splits.values():
        assert np.all(np.isfinite(split.states))
        assert split.stats_fingerprint == prepared.stats.fingerprint()


@pytest.mark.parametrize("horizon", [6, 12, 18])
def test_record_counts(prepared, horizon):
    split = prepared.train
    expected = int(sum(max(0, int(n) - horizon) for n in split.lengths))
    if expected == 0:
        with pytest.raises(EmptyDatasetError, match="no usable samples"):
            build_model_dataset(split, horizon, "SOFA", prepared.stats)
        return
    records = build_model_dataset(split, horizon, "SOFA", prepared.stats)
    assert len(records) == expected
    assert prepared.record_counts([horizon])["train"][f"{horizon}h"] == expected


def test_record_targets_and_future_actions(prepared):
    split = prepared.train
    records = build_model_dataset(split, 6, "SIRS", prepared.stats, context_length=4)
    for i in (0, len(records) // 2, len(records) - 1):
        p, t = records.record_patient[i], records.record_anchor[i]
        start = split.offsets[p]
        raw = split.severity[start + t + 6, 1] - split.severity[start + t, 1]
        expected = float(prepared.stats.normalize_delta(raw, "SIRS", 6))
        assert records.target[i] == pytest.approx(expected, abs=1e-12)
        future = split.actions[start + t + 1 : start + t + 7]
        np.testing.assert_array_equal(records.actions[i], future)
        assert records.terminal[i] == float(t + 6 == split.lengths[p] - 1)


def test_history_is_left_padded(prepared):
    split = prepared.train
    p = int(np.argmax(split.lengths))
    assert split.lengths[p] >= 6
    start = split.offsets[p]
    states, valid = gather_history(split, np.array([p, p]), np.array([0, 5]), 4)
    assert valid[0].tolist() == [False, False, False, True]
    assert valid[1].tolist() == [True, True, True, True]
    np.testing.assert_array_equal(states[0, :3], 0.0)
    np.testing.assert_array_equal(states[0, 3], split.states[start])
    np.testing.assert_array_equal(states[1], split.states[start + 2 : start + 6])


def test_adjacency_pairs_stay_inside_window(prepared):
    records = build_model_dataset(prepared.train, 6, "SOFA", prepared.stats, context_length=4)
    anchor_pos = 3
    k = anchor_pos - records.adj_partner
    feasible = records.adj_weight == 1.0
    assert np.all(k[~feasible] == 0)
    assert np.all(k[feasible & (records.adj_label == 1.0)] == 1)
    negatives = feasible & (records.adj_label == 0.0)
    k_max = np.minimum(records.record_anchor[negatives], 3)
    assert np.all((k[negatives] >= 2) & (k[negatives] <= k_max))


def test_schemes_neutralize_inputs(test_records):
    batch = test_records.batch()
    states_only = apply_scheme(batch, "StatesOnly")
    np.testing.assert_array_equal(states_only.actions, 0.0)
    np.testing.assert_array_equal(states_only.states, batch.states)

    actions_only = apply_scheme(batch, "ActionsOnly")
    np.testing.assert_array_equal(actions_only.states, 0.0)
    np.testing.assert_array_equal(actions_only.demographics, 0.0)
    kept = apply_scheme(batch, "ActionsOnly", keep_demographics=True)
    np.testing.assert_array_equal(kept.demographics, batch.demographics)


def test_with_actions_checks_shape(test_records):
    with pytest.raises(ShapeMismatchError, match="action tensor shape mismatch"):
        test_records.with_actions(np.zeros((len(test_records), 5, 2)))


def test_dataset_file_round_trip(prepared, test_records, tmp_path):
    path = test_records.save(tmp_path / "records.tensors")
    loaded = ModelDataset.load(path, prepared.test)
    np.testing.assert_array_equal(loaded.target, test_records.target)
    np.testing.assert_array_equal(loaded.actions, test_records.actions)

    other = replace(prepared.test, stats_fingerprint="0" * 16)
    with pytest.raises(NormalizationMismatchError, match="normalization mismatch"):
        ModelDataset.load(path, other)


def test_prepared_data_round_trip(prepared, tmp_path):
    prepared.save(tmp_path / "prepared", ["SOFA"], [6], context_length=4)
    loaded = PreparedData.load(tmp_path / "prepared")
    assert loaded.stats.fingerprint() == prepared.stats.fingerprint()
    fresh = prepared.dataset("test", "SOFA", 6, "StatesAndActions", context_length=4)
    stored = loaded.dataset("test", "SOFA", 6, "StatesAndActions", context_length=4)
    np.testing.assert_array_equal(stored.target, fresh.target)
    np.testing.assert_array_equal(stored.adj_partner, fresh.adj_partner)


def test_action_dataset_targets(prepared):
    records = build_action_dataset(prepared.train, context_length=4)
    assert records.targets.shape == (len(records), 6, 2)
    batch = records.batch(np.arange(3))
    assert batch.targets.shape == (3, 12)
    np.testing.assert_array_equal(batch.targets[0, :2], records.targets[0, 0])
