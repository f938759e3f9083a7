"""Informative-actions statistic computed from flat RMSE rows.

Rows are dictionaries with keys ``metric``, ``horizon``, ``scheme``, ``seed``,
``condition`` and ``rmse`` (the rmse_table.csv layout).
"""

from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from action_signal.config.schema import HORIZONS, METRICS, SCHEMES

INFORMATIVE = "actions informative"
NOT_INFORMATIVE = "actions not informative"
NULL_SPREAD_BOUND = 0.05
SPREAD_CONDITIONS = ("True", "Zero", "Shuffled")

Row = Mapping[str, Any]


def sample_std(values: Sequence[float]) -> float:
    """Standard deviation with ddof=1; 0.0 for fewer than two values."""
    if len(values) < 2:
        return 0.0
    return float(np.std(np.asarray(values, dtype=np.float64), ddof=1))


def sample_var(values: Sequence[float]) -> float:
    return sample_std(values) ** 2


def pooled_std(a: Sequence[float], b: Sequence[float]) -> float:
    return float(np.sqrt((sample_var(a) + sample_var(b)) / 2.0))


def _index(rows: Iterable[Row]) -> Dict[Tuple[str, int, str, str], Dict[int, float]]:
    table: Dict[Tuple[str, int, str, str], Dict[int, float]] = {}
    for row in rows:
        key = (str(row["metric"]), int(row["horizon"]), str(row["scheme"]), str(row["condition"]))
        table.setdefault(key, {})[int(row["seed"])] = float(row["rmse"])
    return table


def _paired(a: Dict[int, float], b: Dict[int, float]) -> Tuple[List[float], List[float]]:
    seeds = sorted(set(a) & set(b))
    return [a[s] for s in seeds], [b[s] for s in seeds]


def _gap_test(worse: Dict[int, float], better: Dict[int, float]) -> Optional[Dict[str, Any]]:
    """Mean paired gap worse − better against 2 × pooled std."""
    x, y = _paired(worse, better)
    if not x:
        return None
    gaps = [p - q for p, q in zip(x, y)]
    pooled = pooled_std(x, y)
    gap = float(np.mean(gaps))
    return {
        "gap": gap,
        "gap_std": sample_std(gaps),
        "pooled_std": pooled,
        "threshold": 2.0 * pooled,
        "n_seeds": len(gaps),
        "significant": bool(gap > 2.0 * pooled),
    }


def _target_averaged(
    table: Dict[Tuple[str, int, str, str], Dict[int, float]],
    targets: Sequence[Tuple[str, int]],
    worse: Tuple[str, str],
    better: Tuple[str, str],
) -> Tuple[Dict[int, float], Dict[int, float]]:
    """Per-seed RMSE averaged over the targets where both keys hold that seed."""
    worse_sums: Dict[int, List[float]] = {}
    better_sums: Dict[int, List[float]] = {}
    for metric, horizon in targets:
        a = table.get((metric, horizon) + worse, {})
        b = table.get((metric, horizon) + better, {})
        for seed in set(a) & set(b):
            worse_sums.setdefault(seed, []).append(a[seed])
            better_sums.setdefault(seed, []).append(b[seed])
    return (
        {s: float(np.mean(v)) for s, v in worse_sums.items()},
        {s: float(np.mean(v)) for s, v in better_sums.items()},
    )


def compute_verdict(rows: Iterable[Row]) -> Dict[str, Any]:
    """Verdict comparing StatesAndActions-True against StatesOnly-True.

    Per (metric, horizon):

    * ``informative``: mean over seeds of RMSE(StatesOnly, True) −
      RMSE(StatesAndActions, True) exceeds twice the pooled cross-seed std,
    * ``shuffled``: the same test for RMSE(StatesAndActions, Shuffled) −
      RMSE(StatesAndActions, True),
    * ``null_spread``: max − min of the cross-seed mean RMSE over the
      conditions True, Zero and Shuffled and every trained scheme,
    * ``mean_variance`` / ``true_variance``: cross-seed RMSE variance of the
      StatesAndActions model under Mean and True.

    The verdict itself is a single test: each seed's True-condition RMSE is
    averaged over every (metric, horizon) for both schemes, and the averaged
    gap must exceed twice the pooled std of the averages. Per-target tests
    are reported but do not decide the verdict.
    """
    table = _index(rows)
    targets = sorted(
        {(m, h) for m, h, _, _ in table},
        key=lambda t: (METRICS.index(t[0]) if t[0] in METRICS else len(METRICS), t[1]),
    )

    entries = []
    for metric, horizon in targets:

        def seeds(scheme: str, condition: str) -> Dict[int, float]:
            return table.get((metric, horizon, scheme, condition), {})

        informative = _gap_test(seeds("StatesOnly", "True"), seeds("StatesAndActions", "True"))
        shuffled = _gap_test(
            seeds("StatesAndActions", "Shuffled"), seeds("StatesAndActions", "True")
        )
        means = [
            float(np.mean(list(values.values())))
            for (m, h, scheme, condition), values in table.items()
            if m == metric and h == horizon and condition in SPREAD_CONDITIONS and values
        ]
        sa_mean = list(seeds("StatesAndActions", "Mean").values())
        sa_true = list(seeds("StatesAndActions", "True").values())
        entries.append(
            {
                "metric": metric,
                "horizon": horizon,
                "informative": informative,
                "shuffled": shuffled,
                "null_spread": float(max(means) - min(means)) if means else None,
                "mean_variance": sample_var(sa_mean) if sa_mean else None,
                "true_variance": sample_var(sa_true) if sa_true else None,
            }
        )

    overall = _gap_test(
        *_target_averaged(table, targets, ("StatesOnly", "True"), ("StatesAndActions", "True"))
    )
    is_informative = bool(overall and overall["significant"])
    spreads = [e["null_spread"] for e in entries if e["null_spread"] is not None]
    max_spread = max(spreads) if spreads else None
    return {
        "verdict": INFORMATIVE if is_informative else NOT_INFORMATIVE,
        "criterion": (
            "mean seed gap RMSE(StatesOnly,True) - RMSE(StatesAndActions,True),"
            " averaged over targets, > 2 x pooled std"
        ),
        "overall": overall,
        "null_spread_bound": NULL_SPREAD_BOUND,
        "max_null_spread": max_spread,
        "within_null_bound": bool(max_spread is not None and max_spread < NULL_SPREAD_BOUND),
        "targets": entries,
    }


def summarize_rows(rows: Iterable[Row]) -> List[Dict[str, Any]]:
    """Cross-seed mean and std per (metric, horizon, scheme, condition)."""
    table = _index(rows)
    conditions = ("True", "Zero", "Shuffled", "Mean")

    def order(key: Tuple[str, int, str, str]) -> Tuple[int, int, int, int]:
        m, h, s, c = key
        return (
            METRICS.index(m) if m in METRICS else len(METRICS),
            HORIZONS.index(h) if h in HORIZONS else h,
            SCHEMES.index(s) if s in SCHEMES else len(SCHEMES),
            conditions.index(c) if c in conditions else len(conditions),
        )

    summary = []
    for key in sorted(table, key=order):
        values = [table[key][seed] for seed in sorted(table[key])]
        metric, horizon, scheme, condition = key
        summary.append(
            {
                "metric": metric,
                "horizon": horizon,
                "scheme": scheme,
                "condition": condition,
                "mean": float(np.mean(values)),
                "std": sample_std(values),
                "n_seeds": len(values),
            }
        )
    return summary
