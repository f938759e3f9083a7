"""Hourly aggregation of timestamped events and long-stay filtering."""

from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from action_signal.core.exceptions import DataValidationError, EventsOutOfOrderError
from action_signal.data.cohort_io import SEVERITY_COLUMNS, cohort_from_frame, mask_column
from action_signal.data.trajectory import MAX_TRAJECTORY_HOURS, Cohort, PatientTrajectory
from action_signal.utils.logger import logger


def check_event_order(events: pd.DataFrame) -> None:
    """Raise if event times decrease within any patient.

    Raises:
        EventsOutOfOrderError: On the first backwards step in time.
    """
    steps = events.groupby("patient_id", sort=False)["time"].diff()
    if (steps < 0).any():
        bad = events.loc[steps[steps < 0].index[0], "patient_id"]
        raise EventsOutOfOrderError(f"events out of order for patient {bad}")


def hourly_rate_average(times: np.ndarray, rates: np.ndarray, n_hours: int) -> np.ndarray:
    """Time-average of a piecewise-constant rate over each hour.

    The rate is 0 before the first event and holds from each event until the
    next one.
    """
    averages = np.zeros(n_hours)
    for h in range(n_hours):
        before = np.searchsorted(times, h, side="right") - 1
        inside = np.nonzero((times > h) & (times < h + 1))[0]
        edges = np.concatenate([[float(h)], times[inside], [float(h + 1)]])
        levels = np.concatenate([[rates[before] if before >= 0 else 0.0], rates[inside]])
        averages[h] = float(np.sum(levels * np.diff(edges)))
    return averages


def bin_hourly(events: pd.DataFrame, observation_channels: Sequence[str]) -> pd.DataFrame:
    """Aggregate an event stream into an hourly grid with masks.

    Per patient and hour: observation channels take the mean of their
    measurements (mask 0 and an empty value when there are none), fluid
    boluses are summed and the vasopressor rate is time-averaged. Charted
    severity columns, if present, are averaged like observations.

    Args:
        events: Frame with columns patient_id, time (hours since admission),
            channel, value; sorted by time within each patient
        observation_channels: Observation channel names, in column order

    Returns:
        Frame in cohort CSV layout, patients in order of first appearance

    Raises:
        EventsOutOfOrderError: If times decrease within a patient.
    """
    check_event_order(events)
    obs_names = list(observation_channels)
    events = events.assign(hour=np.floor(events["time"].to_numpy()).astype(np.int64))
    if (events["hour"] < 0).any():
        raise DataValidationError("event times must be >= 0")

    patients = list(dict.fromkeys(events["patient_id"]))
    n_hours = events.groupby("patient_id", sort=False)["hour"].max() + 1
    index = pd.MultiIndex.from_tuples(
        [(pid, h) for pid in patients for h in range(int(n_hours[pid]))],
        names=["patient_id", "hour"],
    )

    means = (
        events[events["channel"].isin(obs_names + list(SEVERITY_COLUMNS))]
        .groupby(["patient_id", "hour", "channel"], sort=False)["value"]
        .mean()
        .unstack("channel")
        .reindex(index=index, columns=obs_names + list(SEVERITY_COLUMNS))
    )
    fluids = (
        events[events["channel"] == "iv_fluid"]
        .groupby(["patient_id", "hour"], sort=False)["value"]
        .sum()
        .reindex(index, fill_value=0.0)
    )

    vaso_parts = []
    vaso_events = events[events["channel"] == "vasopressor"]
    by_patient = dict(tuple(vaso_events.groupby("patient_id", sort=False)))
    for pid in patients:
        group = by_patient.get(pid)
        if group is None:
            vaso_parts.append(np.zeros(int(n_hours[pid])))
        else:
            rate = hourly_rate_average(
                group["time"].to_numpy(), group["value"].to_numpy(), int(n_hours[pid])
            )
            vaso_parts.append(rate)

    grid = means.reset_index()
    for name in obs_names:
        grid[mask_column(name)] = grid[name].notna().astype(np.int64)
    grid["iv_fluid"] = fluids.to_numpy()
    grid["vasopressor"] = np.concatenate(vaso_parts) if vaso_parts else np.empty(0)
    ordered = (
        ["patient_id", "hour"]
        + obs_names
        + [mask_column(n) for n in obs_names]
        + ["iv_fluid", "vasopressor"]
        + list(SEVERITY_COLUMNS)
    )
    return grid[ordered]


def cohort_from_events(events: pd.DataFrame, sidecar: Dict[str, Any]) -> Cohort:
    """Bin an event stream and attach demographics from its sidecar."""
    grid = bin_hourly(events, sidecar["observation_channels"])
    cohort = cohort_from_frame(grid, sidecar)
    logger.info(
        f"Binned {len(events)} events into {cohort.total_steps} hourly steps "
        f"for {len(cohort)} patients"
    )
    return cohort


def exclude_long_stays(
    trajectories: Sequence[PatientTrajectory],
    max_hours: int = MAX_TRAJECTORY_HOURS,
) -> Tuple[List[PatientTrajectory], int]:
    """Drop trajectories longer than ``max_hours`` hourly steps.

    Returns:
        Tuple of (kept trajectories in input order, number removed)
    """
    kept = [t for t in trajectories if len(t) <= max_hours]
    removed = len(trajectories) - len(kept)
    if removed:
        logger.warning(f"Excluded {removed} stays longer than {max_hours} hours")
    return kept, removed
