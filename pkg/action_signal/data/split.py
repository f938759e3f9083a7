"""Patient-level train/validation/test splitting."""

from typing import List, Sequence, Tuple

import numpy as np

from action_signal.core.exceptions import SplitError
from action_signal.data.trajectory import PatientTrajectory

DEFAULT_FRACTIONS = (0.8, 0.1, 0.1)


def split_sizes(n: int, fractions: Tuple[float, float, float]) -> Tuple[int, int, int]:
    """Rounded split sizes; validation and test each keep at least one patient."""
    n_val = max(1, int(round(fractions[1] * n)))
    n_test = max(1, int(round(fractions[2] * n)))
    n_train = n - n_val - n_test
    if n_train < 1:
        raise SplitError(f"cohort of {n} patients is too small for fractions {fractions}")
    return n_train, n_val, n_test


def split_cohort(
    cohort: Sequence[PatientTrajectory],
    fractions: Tuple[float, float, float] = DEFAULT_FRACTIONS,
    seed: int = 7,
) -> Tuple[List[PatientTrajectory], List[PatientTrajectory], List[PatientTrajectory]]:
    """Split trajectories into disjoint train, validation and test collections.

    The split is made at the patient level from a seeded shuffle, so the same
    cohort and seed always give the same partition.

    Args:
        cohort: Trajectories to split
        fractions: (train, val, test) fractions, positive and summing to 1
        seed: Shuffle seed

    Returns:
        Tuple of (train, val, test) lists

    Raises:
        SplitError: On invalid fractions or a cohort smaller than 3 patients.
    """
    if len(fractions) != 3 or any(f <= 0 for f in fractions) or abs(sum(fractions) - 1.0) > 1e-9:
        raise SplitError("fractions must sum to 1")
    n = len(cohort)
    if n < 3:
        raise SplitError("cohort must contain at least 3 patients")

    ids = [t.patient_id for t in cohort]
    if len(set(ids)) != n:
        raise SplitError("patient ids must be unique")

    n_train, n_val, _ = split_sizes(n, fractions)
    order = np.random.default_rng(seed).permutation(n)
    train = [cohort[i] for i in order[:n_train]]
    val = [cohort[i] for i in order[n_train:n_train + n_val]]
    test = [cohort[i] for i in order[n_train + n_val:]]
    return train, val, test
