"""Clinical severity scores."""

from action_signal.scores.severity import (
    CLINICAL_CHANNELS,
    SOFA,
    SIRS,
    SHOCK_INDEX,
    RawClinicalState,
    compute_sirs,
    compute_shock_index,
    compute_sofa,
    score_matrix,
    severity_delta,
)

__all__ = [
    "CLINICAL_CHANNELS",
    "SOFA",
    "SIRS",
    "SHOCK_INDEX",
    "RawClinicalState",
    "compute_sirs",
    "compute_shock_index",
    "compute_sofa",
    "score_matrix",
    "severity_delta",
]
