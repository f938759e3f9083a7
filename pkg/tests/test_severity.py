"""SOFA, SIRS and Shock Index against independent lookup-table oracles."""

from bisect import bisect_right

import numpy as np
import pytest

from action_signal.core.exceptions import DataValidationError, HorizonOutOfRangeError
from action_signal.scores.severity import (
    CLINICAL_CHANNELS,
    RawClinicalState,
    compute_shock_index,
    compute_sirs,
    compute_sofa,
    score_matrix,
    severity_delta,
)

# (thresholds ascending, points for each bisect position)
PLATELET_TABLE = ((20, 50, 100, 150), (4, 3, 2, 1, 0))
BILIRUBIN_TABLE = ((1.2, 2.0, 6.0, 12.0), (0, 1, 2, 3, 4))
GCS_TABLE = ((6, 10, 13, 15), (4, 3, 2, 1, 0))
CREATININE_TABLE = ((1.2, 2.0, 3.5, 5.0), (0, 1, 2, 3, 4))
PF_RATIO_TABLE = ((100, 200, 300, 400), (4, 3, 2, 1, 0))


def lookup(table, value):
    thresholds, points = table
    return points[bisect_right(thresholds, value)]


def sofa_oracle(s: RawClinicalState) -> int:
    respiration = lookup(PF_RATIO_TABLE, s.pao2 / s.fio2)
    if not s.on_mech_vent:
        respiration = min(respiration, 2)
    if s.vasopressor_rate > 0.1:
        cardio = 4
    elif s.vasopressor_rate > 0:
        cardio = 3
    else:
        cardio = 1 if s.mean_arterial_pressure < 70 else 0
    renal = lookup(CREATININE_TABLE, s.creatinine)
    if s.urine_output_24h < 200:
        renal = 4
    elif s.urine_output_24h < 500:
        renal = max(renal, 3)
    return (
        respiration
        + lookup(PLATELET_TABLE, s.platelets)
        + lookup(BILIRUBIN_TABLE, s.bilirubin)
        + cardio
        + lookup(GCS_TABLE, s.gcs)
        + renal
    )


def sirs_oracle(s: RawClinicalState) -> int:
    criteria = [
        not 36.0 <= s.temperature <= 38.0,
        s.heart_rate > 90.0,
        s.respiratory_rate > 20.0 or s.paco2 < 32.0,
        not 4.0 <= s.wbc <= 12.0,
    ]
    return sum(criteria)


def fuzz_states(n: int, rng: np.random.Generator) -> np.ndarray:
    """Random clinical rows; a quarter of the threshold channels sit exactly on a cut point."""
    x = np.column_stack(
        [
            rng.uniform(30, 180, n),  # heart_rate
            rng.uniform(10, 200, n),  # systolic_bp
            rng.uniform(30, 120, n),  # mean_arterial_pressure
            rng.uniform(34, 41, n),  # temperature
            rng.uniform(5, 40, n),  # respiratory_rate
            rng.uniform(20, 60, n),  # paco2
            rng.uniform(40, 500, n),  # pao2
            rng.uniform(0.21, 1.0, n),  # fio2
            rng.uniform(0.5, 30, n),  # wbc
            rng.uniform(5, 400, n),  # platelets
            rng.uniform(0.1, 20, n),  # bilirubin
            rng.uniform(0.3, 8, n),  # creatinine
            rng.integers(3, 16, n).astype(float),  # gcs
            rng.uniform(0, 3000, n),  # urine_output_24h
            (rng.random(n) < 0.4).astype(float),  # on_mech_vent
            np.where(rng.random(n) < 0.5, 0.0, rng.uniform(0, 0.5, n)),  # vasopressor_rate
        ]
    )
    cut_points = {
        "temperature": (36.0, 38.0),
        "heart_rate": (90.0,),
        "respiratory_rate": (20.0,),
        "paco2": (32.0,),
        "wbc": (4.0, 12.0),
        "platelets": PLATELET_TABLE[0],
        "bilirubin": BILIRUBIN_TABLE[0],
        "creatinine": CREATININE_TABLE[0],
        "mean_arterial_pressure": (70.0,),
        "urine_output_24h": (200.0, 500.0),
        "vasopressor_rate": (0.1,),
    }
    for name, cuts in cut_points.items():
        j = CLINICAL_CHANNELS.index(name)
        snap = rng.random(n) < 0.25
        x[snap, j] = rng.choice(np.asarray(cuts, dtype=float), size=int(snap.sum()))
    return x


def test_channel_order():
    assert len(CLINICAL_CHANNELS) == 16
    assert CLINICAL_CHANNELS[0] == "heart_rate"
    assert CLINICAL_CHANNELS[-1] == "vasopressor_rate"


def test_scores_match_oracles_on_fuzzed_states():
    rng = np.random.default_rng(2024)
    rows = fuzz_states(10_000, rng)
    matrix = score_matrix(rows)
    for i, row in enumerate(rows):
        state = RawClinicalState.from_vector(row)
        expected_sofa = sofa_oracle(state)
        expected_sirs = sirs_oracle(state)
        assert compute_sofa(state) == expected_sofa
        assert compute_sirs(state) == expected_sirs
        assert matrix[i, 0] == expected_sofa
        assert matrix[i, 1] == expected_sirs
        expected_si = state.heart_rate / max(state.systolic_bp, 30.0)
        assert abs(compute_shock_index(state) - expected_si) <= 1e-12
        assert abs(matrix[i, 2] - compute_shock_index(state)) <= 1e-12


def healthy(**changes) -> RawClinicalState:
    values = dict(
        heart_rate=70.0,
        systolic_bp=120.0,
        mean_arterial_pressure=85.0,
        temperature=37.0,
        respiratory_rate=14.0,
        paco2=40.0,
        pao2=95.0,
        fio2=0.21,
        wbc=8.0,
        platelets=250.0,
        bilirubin=0.8,
        creatinine=0.9,
        gcs=15.0,
        urine_output_24h=1500.0,
        on_mech_vent=False,
        vasopressor_rate=0.0,
    )
    values.update(changes)
    return RawClinicalState(**values)


def test_healthy_state_scores_zero():
    state = healthy()
    assert compute_sofa(state) == 0
    assert compute_sirs(state) == 0


@pytest.mark.parametrize(
    "changes, expected",
    [
        ({"platelets": 150.0}, 0),
        ({"platelets": 149.9}, 1),
        ({"bilirubin": 1.2}, 1),
        ({"bilirubin": 12.0}, 4),
        ({"gcs": 14.0}, 1),
        ({"gcs": 5.0}, 4),
        ({"mean_arterial_pressure": 69.9}, 1),
        ({"vasopressor_rate": 0.1}, 3),
        ({"vasopressor_rate": 0.11}, 4),
        ({"urine_output_24h": 499.0}, 3),
        ({"pao2": 60.0, "fio2": 1.0}, 2),
        ({"pao2": 60.0, "fio2": 1.0, "on_mech_vent": True}, 4),
    ],
)
def test_sofa_boundaries(changes, expected):
    assert compute_sofa(healthy(**changes)) == expected


def test_sirs_counts_each_criterion_once():
    state = healthy(temperature=39.0, heart_rate=120.0, respiratory_rate=30.0, paco2=25.0, wbc=2.0)
    assert compute_sirs(state) == 4


def test_shock_index_floors_systolic_pressure():
    floored = healthy(heart_rate=90.0, systolic_bp=10.0)
    assert compute_shock_index(floored) == pytest.approx(3.0, abs=1e-12)
    normal = healthy(heart_rate=90.0, systolic_bp=120.0)
    assert compute_shock_index(normal) == pytest.approx(0.75, abs=1e-12)


def test_invalid_states_rejected():
    with pytest.raises(DataValidationError):
        healthy(fio2=0.0)
    with pytest.raises(DataValidationError):
        healthy(gcs=2.0)
    with pytest.raises(DataValidationError):
        healthy(heart_rate=float("nan"))


def test_severity_delta(cohort, prepared):
    traj = max(cohort.trajectories, key=len)
    stats = prepared.stats
    series = traj.metric_series("SOFA")
    expected = stats.normalize_delta(series[6] - series[0], "SOFA", 6)
    assert severity_delta(traj, 0, 6, "SOFA", stats) == pytest.approx(float(expected), abs=1e-12)

    with pytest.raises(HorizonOutOfRangeError, match="horizon out of range"):
        severity_delta(traj, len(traj) - 6, 6, "SOFA", stats)
