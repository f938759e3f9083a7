"""Export a cohort as a timestamped event stream.

Each hour ``t`` of a trajectory becomes:

* a vasopressor rate event at ``t`` (rate holds until the next rate event),
* two fluid boluses of half the hourly volume at ``t + 0.1`` and ``t + 0.6``,
* one measurement per observed channel, spread over ``(t + 0.2, t + 0.9)``,
* charted SOFA / SIRS / Shock Index at ``t + 0.95``.

Binning the stream with :func:`action_signal.preprocessing.binning.bin_hourly`
gives back the hourly cohort.
"""

from pathlib import Path
from typing import List, Tuple, Union

import numpy as np
import pandas as pd

from action_signal.data.cohort_io import (
    FLOAT_FORMAT,
    SEVERITY_COLUMNS,
    sidecar_path_for,
    write_sidecar,
)
from action_signal.data.trajectory import Cohort
from action_signal.utils.logger import logger

EVENT_COLUMNS = ("patient_id", "time", "channel", "value")
FLUID_OFFSETS = (0.1, 0.6)
SCORE_OFFSET = 0.95


def _measurement_offsets(n_channels: int) -> np.ndarray:
    return 0.2 + 0.7 * np.arange(n_channels) / max(n_channels, 1)


def cohort_to_events(cohort: Cohort) -> pd.DataFrame:
    """Expand an hourly cohort into a sorted event frame.

    Returns:
        DataFrame with columns patient_id, time, channel, value, sorted by
        time within each patient, patients in cohort order
    """
    channels = np.array(cohort.schema.observation_channels, dtype=object)
    offsets = _measurement_offsets(len(channels))
    frames = []
    for traj in cohort:
        n = len(traj)
        hours = np.arange(n, dtype=np.float64)
        parts: List[Tuple[np.ndarray, np.ndarray, np.ndarray]] = [
            (hours, np.full(n, "vasopressor", dtype=object), traj.actions[:, 1]),
        ]
        for offset in FLUID_OFFSETS:
            fluid = traj.actions[:, 0] / 2.0
            parts.append((hours + offset, np.full(n, "iv_fluid", dtype=object), fluid))

        rows, cols = np.nonzero(traj.observed_mask)
        parts.append((rows + offsets[cols], channels[cols], traj.observations[rows, cols]))

        for m, name in enumerate(SEVERITY_COLUMNS):
            names = np.full(n, name, dtype=object)
            parts.append((hours + SCORE_OFFSET, names, traj.severity[:, m]))

        times = np.concatenate([p[0] for p in parts])
        order = np.argsort(times, kind="stable")
        frames.append(
            pd.DataFrame(
                {
                    "patient_id": traj.patient_id,
                    "time": times[order],
                    "channel": np.concatenate([p[1] for p in parts])[order],
                    "value": np.concatenate([p[2] for p in parts])[order],
                }
            )
        )
    return pd.concat(frames, ignore_index=True)


def write_events(cohort: Cohort, csv_path: Union[str, Path]) -> Tuple[Path, Path]:
    """Write the event stream of a cohort with the cohort sidecar next to it."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    events = cohort_to_events(cohort)
    events.to_csv(csv_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    sidecar_path = write_sidecar(cohort, sidecar_path_for(csv_path))
    logger.info(f"Wrote {len(events)} events for {len(cohort)} patients to {csv_path}")
    return csv_path, sidecar_path


def read_events(csv_path: Union[str, Path]) -> pd.DataFrame:
    return pd.read_csv(
        csv_path, dtype={"patient_id": str, "channel": str}, float_precision="round_trip"
    )
