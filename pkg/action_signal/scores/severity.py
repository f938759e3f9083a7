"""SOFA, SIRS and Shock Index from raw clinical channels.

Scalar functions score one :class:`RawClinicalState`; :func:`score_matrix`
applies the same criteria tables to a ``(T, 16)`` array of channel values.
"""

from dataclasses import astuple, dataclass, fields
from typing import Sequence

import numpy as np

from action_signal.core.exceptions import DataValidationError, HorizonOutOfRangeError
from action_signal.data.normalization import NormalizationStats
from action_signal.data.trajectory import SEVERITY_METRICS, PatientTrajectory

SOFA = "SOFA"
SIRS = "SIRS"
SHOCK_INDEX = "ShockIndex"

SBP_FLOOR = 30.0


@dataclass(frozen=True)
class RawClinicalState:
    """Clinical channels of one hour in raw units."""

    heart_rate: float
    systolic_bp: float
    mean_arterial_pressure: float
    temperature: float
    respiratory_rate: float
    paco2: float
    pao2: float
    fio2: float
    wbc: float
    platelets: float
    bilirubin: float
    creatinine: float
    gcs: float
    urine_output_24h: float
    on_mech_vent: bool
    vasopressor_rate: float

    def __post_init__(self):
        values = np.array([float(v) for v in astuple(self)])
        if not np.all(np.isfinite(values)):
            raise DataValidationError("clinical state values must be finite")
        if not 0.0 < self.fio2 <= 1.0:
            raise DataValidationError(f"fio2 must be in (0, 1], got {self.fio2}")
        if not 3 <= self.gcs <= 15:
            raise DataValidationError(f"gcs must be in [3, 15], got {self.gcs}")

    @classmethod
    def from_vector(cls, values: Sequence[float]) -> "RawClinicalState":
        """Build from values ordered as :data:`CLINICAL_CHANNELS`."""
        if len(values) < len(CLINICAL_CHANNELS):
            raise DataValidationError(
                f"expected {len(CLINICAL_CHANNELS)} clinical values, got {len(values)}"
            )
        kwargs = {name: float(values[i]) for i, name in enumerate(CLINICAL_CHANNELS)}
        kwargs["on_mech_vent"] = bool(kwargs["on_mech_vent"] >= 0.5)
        return cls(**kwargs)

    def to_vector(self) -> np.ndarray:
        return np.array([float(v) for v in astuple(self)], dtype=np.float64)


CLINICAL_CHANNELS = tuple(f.name for f in fields(RawClinicalState))
_COL = {name: i for i, name in enumerate(CLINICAL_CHANNELS)}


def compute_sirs(state: RawClinicalState) -> int:
    """Number of SIRS criteria met (0-4)."""
    score = 0
    if state.temperature > 38.0 or state.temperature < 36.0:
        score += 1
    if state.heart_rate > 90.0:
        score += 1
    if state.respiratory_rate > 20.0 or state.paco2 < 32.0:
        score += 1
    if state.wbc > 12.0 or state.wbc < 4.0:
        score += 1
    return score


def compute_shock_index(state: RawClinicalState) -> float:
    """Heart rate over systolic pressure, SBP clamped at 30 mmHg."""
    return state.heart_rate / max(state.systolic_bp, SBP_FLOOR)


def sofa_respiration(pao2: float, fio2: float, on_mech_vent: bool) -> int:
    ratio = pao2 / fio2
    if ratio < 100 and on_mech_vent:
        return 4
    if ratio < 200 and on_mech_vent:
        return 3
    if ratio < 300:
        return 2
    if ratio < 400:
        return 1
    return 0


def sofa_coagulation(platelets: float) -> int:
    if platelets < 20:
        return 4
    if platelets < 50:
        return 3
    if platelets < 100:
        return 2
    if platelets < 150:
        return 1
    return 0


def sofa_liver(bilirubin: float) -> int:
    if bilirubin >= 12.0:
        return 4
    if bilirubin >= 6.0:
        return 3
    if bilirubin >= 2.0:
        return 2
    if bilirubin >= 1.2:
        return 1
    return 0


def sofa_cardiovascular(mean_arterial_pressure: float, vasopressor_rate: float) -> int:
    # Dopamine/dobutamine tiers are folded into the norepinephrine-equivalent rate
    if vasopressor_rate > 0.1:
        return 4
    if vasopressor_rate > 0.0:
        return 3
    if mean_arterial_pressure < 70:
        return 1
    return 0


def sofa_cns(gcs: float) -> int:
    if gcs < 6:
        return 4
    if gcs < 10:
        return 3
    if gcs < 13:
        return 2
    if gcs < 15:
        return 1
    return 0


def sofa_renal(creatinine: float, urine_output_24h: float) -> int:
    if creatinine >= 5.0:
        score = 4
    elif creatinine >= 3.5:
        score = 3
    elif creatinine >= 2.0:
        score = 2
    elif creatinine >= 1.2:
        score = 1
    else:
        score = 0
    if urine_output_24h < 200:
        return 4
    if urine_output_24h < 500:
        return max(score, 3)
    return score


def compute_sofa(state: RawClinicalState) -> int:
    """Sum of the six SOFA organ sub-scores (0-24)."""
    return (
        sofa_respiration(state.pao2, state.fio2, state.on_mech_vent)
        + sofa_coagulation(state.platelets)
        + sofa_liver(state.bilirubin)
        + sofa_cardiovascular(state.mean_arterial_pressure, state.vasopressor_rate)
        + sofa_cns(state.gcs)
        + sofa_renal(state.creatinine, state.urine_output_24h)
    )


def _tiers(values: np.ndarray, thresholds: Sequence[float], ascending: bool) -> np.ndarray:
    """Count how many thresholds a value crosses in the deranging direction."""
    stacked = np.stack([values >= t if ascending else values < t for t in thresholds])
    return stacked.sum(axis=0)


def score_matrix(values: np.ndarray) -> np.ndarray:
    """Score every row of a (T, 16) clinical array.

    Returns:
        (T, 3) array of SOFA, SIRS and Shock Index
    """
    x = np.atleast_2d(np.asarray(values, dtype=np.float64))
    col = {name: x[:, i] for name, i in _COL.items()}

    sirs = (
        ((col["temperature"] > 38.0) | (col["temperature"] < 36.0)).astype(np.int64)
        + (col["heart_rate"] > 90.0)
        + ((col["respiratory_rate"] > 20.0) | (col["paco2"] < 32.0))
        + ((col["wbc"] > 12.0) | (col["wbc"] < 4.0))
    )

    vent = col["on_mech_vent"] >= 0.5
    ratio = col["pao2"] / col["fio2"]
    respiration = np.select(
        [(ratio < 100) & vent, (ratio < 200) & vent, ratio < 300, ratio < 400],
        [4, 3, 2, 1],
        default=0,
    )
    coagulation = _tiers(col["platelets"], (150, 100, 50, 20), ascending=False)
    liver = _tiers(col["bilirubin"], (1.2, 2.0, 6.0, 12.0), ascending=True)
    cardiovascular = np.select(
        [
            col["vasopressor_rate"] > 0.1,
            col["vasopressor_rate"] > 0.0,
            col["mean_arterial_pressure"] < 70,
        ],
        [4, 3, 1],
        default=0,
    )
    cns = _tiers(col["gcs"], (15, 13, 10, 6), ascending=False)
    renal = _tiers(col["creatinine"], (1.2, 2.0, 3.5, 5.0), ascending=True)
    uo = col["urine_output_24h"]
    renal = np.where(uo < 200, 4, np.where(uo < 500, np.maximum(renal, 3), renal))

    sofa = respiration + coagulation + liver + cardiovascular + cns + renal
    shock_index = col["heart_rate"] / np.maximum(col["systolic_bp"], SBP_FLOOR)
    return np.column_stack([sofa.astype(np.float64), sirs.astype(np.float64), shock_index])


def severity_delta(
    traj: PatientTrajectory,
    t: int,
    horizon: int,
    metric: str,
    stats: NormalizationStats,
) -> float:
    """z-scaled change y[t + horizon] - y[t] of one metric.

    Raises:
        HorizonOutOfRangeError: If the window does not fit inside the trajectory.
        UnknownChannelError: If no delta statistics exist for (metric, horizon).
    """
    if metric not in SEVERITY_METRICS:
        raise DataValidationError(f"unknown severity metric: {metric}")
    if t < 0 or horizon < 1 or t + horizon >= len(traj):
        raise HorizonOutOfRangeError("horizon out of range")
    series = traj.metric_series(metric)
    raw = series[t + horizon] - series[t]
    return float(stats.normalize_delta(raw, metric, horizon))
