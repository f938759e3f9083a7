"""Cohort CSV + JSON sidecar reading and writing.

CSV columns::

    patient_id,hour,<obs channels...>,mask_<obs channels...>,
    iv_fluid,vasopressor,sofa,sirs,shock_index

Unmeasured observation cells are left empty. The sidecar lists channel names,
per-patient demographics, patient order and the generator config.
"""

import json
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np
import pandas as pd

from action_signal.core.exceptions import DataValidationError
from action_signal.data.trajectory import ACTION_CHANNELS, Cohort, CohortSchema, PatientTrajectory
from action_signal.utils.logger import logger

SIDECAR_FORMAT = "action-signal-cohort/1"
SEVERITY_COLUMNS = ("sofa", "sirs", "shock_index")
FLOAT_FORMAT = "%.17g"

PathLike = Union[str, Path]


def mask_column(channel: str) -> str:
    return f"mask_{channel}"


def cohort_columns(schema: CohortSchema) -> List[str]:
    obs_names = list(schema.observation_channels)
    return (
        ["patient_id", "hour"]
        + obs_names
        + [mask_column(n) for n in obs_names]
        + list(ACTION_CHANNELS)
        + list(SEVERITY_COLUMNS)
    )


def sidecar_path_for(csv_path: PathLike) -> Path:
    """Sidecar path next to a CSV (``cohort.csv`` -> ``cohort.json``)."""
    return Path(csv_path).with_suffix(".json")


def cohort_sidecar(cohort: Cohort) -> Dict[str, Any]:
    return {
        "format": SIDECAR_FORMAT,
        **cohort.schema.to_dict(),
        "patients": [t.patient_id for t in cohort],
        "demographics": {t.patient_id: t.demographics.tolist() for t in cohort},
        "generator_config": cohort.generator_config,
    }


def write_sidecar(cohort: Cohort, path: PathLike) -> Path:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(cohort_sidecar(cohort), f, indent=2, sort_keys=True)
        f.write("\n")
    return path


def read_sidecar(path: PathLike) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise DataValidationError(f"cohort sidecar not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        sidecar = json.load(f)
    if sidecar.get("format") != SIDECAR_FORMAT:
        raise DataValidationError(f"unsupported sidecar format in {path}: {sidecar.get('format')}")
    return sidecar


def cohort_to_frame(cohort: Cohort) -> pd.DataFrame:
    """Flatten a cohort into the CSV column layout."""
    obs_names = list(cohort.schema.observation_channels)
    frames = []
    for traj in cohort:
        observed = np.where(traj.observed_mask, traj.observations, np.nan)
        frame = pd.DataFrame(observed, columns=obs_names)
        frame.insert(0, "hour", np.arange(len(traj), dtype=np.int64))
        frame.insert(0, "patient_id", traj.patient_id)
        for j, name in enumerate(obs_names):
            frame[mask_column(name)] = traj.observed_mask[:, j].astype(np.int64)
        for j, name in enumerate(ACTION_CHANNELS):
            frame[name] = traj.actions[:, j]
        frame["sofa"] = traj.severity[:, 0].astype(np.int64)
        frame["sirs"] = traj.severity[:, 1].astype(np.int64)
        frame["shock_index"] = traj.severity[:, 2]
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def cohort_from_frame(frame: pd.DataFrame, sidecar: Dict[str, Any]) -> Cohort:
    """Rebuild a cohort from a frame in CSV layout and its sidecar.

    Raises:
        DataValidationError: On missing columns, absent patients or gaps in hours.
    """
    schema = CohortSchema.from_dict(sidecar)
    obs_names = list(schema.observation_channels)
    missing = [c for c in cohort_columns(schema) if c not in frame.columns]
    if missing:
        raise DataValidationError(f"cohort CSV is missing columns: {missing}")

    groups = {str(pid): g.sort_values("hour") for pid, g in frame.groupby("patient_id", sort=False)}
    trajectories = []
    for pid in sidecar["patients"]:
        if pid not in groups:
            raise DataValidationError(f"patient {pid} listed in sidecar but absent from CSV")
        group = groups[pid]
        hours = group["hour"].to_numpy()
        if not np.array_equal(hours, np.arange(len(hours))):
            raise DataValidationError(f"patient {pid}: hours are not consecutive from 0")
        trajectories.append(
            PatientTrajectory(
                patient_id=pid,
                demographics=np.asarray(sidecar["demographics"][pid], dtype=np.float64),
                observations=group[obs_names].to_numpy(dtype=np.float64),
                observed_mask=group[[mask_column(n) for n in obs_names]].to_numpy() == 1,
                actions=group[list(ACTION_CHANNELS)].to_numpy(dtype=np.float64),
                severity=group[list(SEVERITY_COLUMNS)].to_numpy(dtype=np.float64),
            )
        )
    return Cohort(schema, tuple(trajectories), sidecar.get("generator_config", {}))


def write_cohort(cohort: Cohort, csv_path: PathLike) -> Tuple[Path, Path]:
    """Write a cohort CSV and its JSON sidecar.

    Args:
        cohort: Cohort to write
        csv_path: Destination CSV path; the sidecar goes next to it

    Returns:
        Tuple of (csv path, sidecar path)
    """
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    frame = cohort_to_frame(cohort)
    frame.to_csv(csv_path, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")
    sidecar_path = write_sidecar(cohort, sidecar_path_for(csv_path))
    logger.info(
        f"Wrote cohort of {len(cohort)} patients ({cohort.total_steps} steps) to {csv_path}"
    )
    return csv_path, sidecar_path


def read_cohort(csv_path: PathLike) -> Cohort:
    """Read a cohort CSV and its sidecar.

    Raises:
        DataValidationError: On a missing sidecar, missing columns or gaps in hours.
    """
    csv_path = Path(csv_path)
    sidecar = read_sidecar(sidecar_path_for(csv_path))
    frame = pd.read_csv(csv_path, dtype={"patient_id": str}, float_precision="round_trip")
    return cohort_from_frame(frame, sidecar)
