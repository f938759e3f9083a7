import numpy as np
import pytest

from action_signal.config.schema import GridConfig
from action_signal.core.exceptions import NormalizationMismatchError
from action_signal.experiment.conditions import TrainingScheme
from action_signal.experiment.evaluate import (
    evaluate_all_conditions,
    evaluate_condition,
    evaluate_rmse,
    rmse,
)
from action_signal.experiment.grid import ExperimentGrid, GridCell
from action_signal.experiment.perturb import perturb_actions
from action_signal.experiment.runner import DiagnosticReport, retained_indices, run_experiment_grid
from action_signal.experiment.verdict import (
    INFORMATIVE,
    NOT_INFORMATIVE,
    compute_verdict,
    pooled_std,
    sample_std,
    summarize_rows,
)
from action_signal.nn.model import DynamicsModel
from action_signal.nn.tensorfile import load_tensors


def make_model(config, prepared, scheme):
    return DynamicsModel(
        config,
        n_channels=prepared.test.n_channels,
        n_demographics=prepared.test.n_demographics,
        horizon=6,
        scheme=scheme,
        stats_fingerprint=prepared.stats.fingerprint(),
    )


def rows_for(metric, horizon, values):
    """Flat RMSE rows from {(scheme, condition): [rmse per seed]}."""
    rows = []
    for (scheme, condition), per_seed in values.items():
        for seed, value in enumerate(per_seed):
            rows.append(
                {
                    "metric": metric,
                    "horizon": horizon,
                    "scheme": scheme,
                    "seed": seed,
                    "condition": condition,
                    "rmse": value,
                }
            )
    return rows


def sorted_rows(actions):
    flat = actions.reshape(-1, actions.shape[-1])
    return flat[np.lexsort(flat.T[::-1])]


# Action substitutions


def test_true_condition_keeps_records(test_records, prepared):
    assert perturb_actions(test_records, "True", prepared.stats) is test_records


def test_zero_and_mean_conditions(test_records, prepared):
    zero = perturb_actions(test_records, "Zero", prepared.stats)
    expected = prepared.stats.zero_dose_z()
    assert np.all(zero.actions == expected)

    mean = perturb_actions(test_records, "Mean", prepared.stats)
    np.testing.assert_array_equal(mean.actions, 0.0)
    np.testing.assert_array_equal(mean.target, test_records.target)


def test_shuffled_condition_permutes_action_vectors(test_records, prepared):
    shuffled = perturb_actions(
        test_records, "Shuffled", prepared.stats, rng=np.random.default_rng(0)
    )
    assert shuffled.actions.shape == test_records.actions.shape
    np.testing.assert_array_equal(sorted_rows(shuffled.actions), sorted_rows(test_records.actions))
    assert not np.array_equal(shuffled.actions, test_records.actions)

    again = perturb_actions(test_records, "Shuffled", prepared.stats, rng=np.random.default_rng(0))
    np.testing.assert_array_equal(again.actions, shuffled.actions)


def test_per_trajectory_shuffle_stays_within_patient(test_records, prepared):
    shuffled = perturb_actions(
        test_records,
        "Shuffled",
        prepared.stats,
        rng=np.random.default_rng(3),
        per_trajectory=True,
    )
    split = test_records.split
    for i in range(len(test_records)):
        p = test_records.record_patient[i]
        own = split.actions[split.offsets[p] : split.offsets[p + 1]]
        for row in shuffled.actions[i]:
            assert np.any(np.all(own == row, axis=1))


# Evaluation


def test_rmse():
    assert rmse(np.array([1.0, 2.0]), np.array([1.0, 0.0])) == pytest.approx(np.sqrt(2.0))


def test_states_only_model_ignores_conditions(tiny_model_config, prepared, test_records):
    model = make_model(tiny_model_config, prepared, "StatesOnly")
    evaluations = evaluate_all_conditions(model, test_records, prepared.stats, seed=0)
    assert list(evaluations) == ["True", "Zero", "Shuffled", "Mean"]
    values = {e.rmse for e in evaluations.values()}
    assert len(values) == 1


def test_actions_model_reacts_to_conditions(tiny_model_config, prepared, test_records):
    model = make_model(tiny_model_config, prepared, "StatesAndActions")
    evaluations = evaluate_all_conditions(model, test_records, prepared.stats, seed=0)
    assert evaluations["True"].rmse != evaluations["Zero"].rmse
    repeated = evaluate_all_conditions(model, test_records, prepared.stats, seed=0)
    assert repeated["Shuffled"].rmse == evaluations["Shuffled"].rmse


def test_evaluate_rmse_matches_predictions(tiny_model_config, prepared, test_records):
    model = make_model(tiny_model_config, prepared, "StatesAndActions")
    value = evaluate_rmse(model, test_records, "Zero", prepared.stats)
    expected = evaluate_condition(model, test_records, "Zero", prepared.stats)
    assert value == pytest.approx(rmse(expected.predictions, test_records.target))
    assert value >= 0.0


def test_fingerprint_mismatch_rejected(tiny_model_config, prepared, test_records):
    model = make_model(tiny_model_config, prepared, "StatesAndActions")
    model.stats_fingerprint = "0" * 16
    with pytest.raises(NormalizationMismatchError, match="normalization mismatch"):
        evaluate_condition(model, test_records, "True", prepared.stats)


# Grid


@pytest.mark.parametrize(
    "scheme, states, actions",
    [("ActionsOnly", False, True), ("StatesOnly", True, False), ("StatesAndActions", True, True)],
)
def test_scheme_inputs(scheme, states, actions):
    assert TrainingScheme(scheme).uses_states is states
    assert TrainingScheme(scheme).uses_actions is actions


def test_full_grid_size():
    grid = ExperimentGrid()
    cells = grid.cells()
    assert len(grid) == len(cells) == 81
    assert len({c.name for c in cells}) == 81
    assert cells[0].name == "SOFA_6h_ActionsOnly_s0"
    assert len(grid.targets()) == 9
    assert len(cells) * 4 == 324


def test_grid_from_config_uses_canonical_order():
    grid = ExperimentGrid.from_config(
        GridConfig(metrics=["ShockIndex", "SOFA"], horizons=[18, 6], seeds=[2, 0])
    )
    assert grid.metrics == ("SOFA", "ShockIndex")
    assert grid.horizons == (6, 18)
    assert grid.seeds == (0, 2)
    assert len(grid) == 2 * 2 * 3 * 2


def test_grid_restrict():
    grid = ExperimentGrid().restrict(metrics=["SIRS"], seeds=[1])
    assert [c.name for c in grid.cells()][:3] == [
        "SIRS_6h_ActionsOnly_s1",
        "SIRS_6h_StatesOnly_s1",
        "SIRS_6h_StatesAndActions_s1",
    ]


def test_cell_round_trip():
    cell = GridCell("SIRS", 12, "StatesOnly", 2)
    assert GridCell.from_dict(cell.to_dict()) == cell
    assert cell.name == "SIRS_12h_StatesOnly_s2"


def test_retained_indices():
    assert retained_indices(10, 4).tolist() == [0, 3, 6, 9]
    assert retained_indices(3, 5).tolist() == [0, 1, 2]


# Verdict


def test_sample_and_pooled_std():
    assert sample_std([1.0]) == 0.0
    assert sample_std([1.0, 3.0]) == pytest.approx(np.sqrt(2.0))
    assert pooled_std([1.0, 3.0], [2.0, 2.0]) == pytest.approx(1.0)


def test_verdict_informative_when_actions_help():
    rows = rows_for(
        "SOFA",
        6,
        {
            ("StatesOnly", "True"): [1.00, 1.01, 0.99],
            ("StatesAndActions", "True"): [0.50, 0.51, 0.49],
            ("StatesAndActions", "Shuffled"): [0.90, 0.91, 0.89],
            ("StatesAndActions", "Zero"): [0.95, 0.96, 0.94],
            ("StatesAndActions", "Mean"): [0.70, 0.90, 0.60],
        },
    )
    verdict = compute_verdict(rows)
    assert verdict["verdict"] == INFORMATIVE
    entry = verdict["targets"][0]
    assert entry["informative"]["gap"] == pytest.approx(0.5)
    assert entry["informative"]["significant"]
    assert entry["shuffled"]["significant"]
    assert entry["mean_variance"] > entry["true_variance"]
    assert not verdict["within_null_bound"]


def test_verdict_not_informative_under_null():
    rows = rows_for(
        "SIRS",
        12,
        {
            ("StatesOnly", "True"): [0.80, 0.82, 0.79],
            ("StatesAndActions", "True"): [0.81, 0.80, 0.80],
            ("StatesAndActions", "Shuffled"): [0.81, 0.81, 0.80],
            ("StatesAndActions", "Zero"): [0.80, 0.81, 0.81],
        },
    )
    verdict = compute_verdict(rows)
    assert verdict["verdict"] == NOT_INFORMATIVE
    assert verdict["within_null_bound"]
    assert verdict["max_null_spread"] < 0.05


def null_grid(rng, n_seeds=3, sd=0.01):
    rows = []
    for metric in ("SOFA", "SIRS", "ShockIndex"):
        for horizon in (6, 12, 18):
            draws = rng.normal(0.8, sd, size=(2, n_seeds))
            rows += rows_for(
                metric,
                horizon,
                {
                    ("StatesOnly", "True"): list(draws[0]),
                    ("StatesAndActions", "True"): list(draws[1]),
                },
            )
    return rows


def test_verdict_false_positive_rate_under_null():
    rng = np.random.default_rng(2024)
    draws = 2000
    positives = sum(compute_verdict(null_grid(rng))["verdict"] == INFORMATIVE for _ in range(draws))
    assert positives / draws < 0.05


def test_verdict_averages_targets_before_testing():
    rows = rows_for(
        "SOFA",
        6,
        {
            ("StatesOnly", "True"): [1.00, 1.01, 0.99],
            ("StatesAndActions", "True"): [0.50, 0.51, 0.49],
        },
    )
    rows += rows_for(
        "SIRS",
        6,
        {
            ("StatesOnly", "True"): [0.60, 0.61, 0.59],
            ("StatesAndActions", "True"): [0.50, 0.51, 0.49],
        },
    )
    verdict = compute_verdict(rows)
    assert verdict["overall"]["gap"] == pytest.approx(0.3)
    assert verdict["overall"]["n_seeds"] == 3
    assert verdict["verdict"] == INFORMATIVE
    assert [t["metric"] for t in verdict["targets"]] == ["SOFA", "SIRS"]


def test_verdict_single_significant_target_does_not_decide():
    rows = []
    for metric in ("SOFA", "SIRS", "ShockIndex"):
        for horizon in (6, 12, 18):
            if (metric, horizon) == ("SOFA", 6):
                values = {
                    ("StatesOnly", "True"): [0.90, 0.90, 0.90],
                    ("StatesAndActions", "True"): [0.80, 0.80, 0.80],
                }
            else:
                values = {
                    ("StatesOnly", "True"): [0.80, 0.80, 0.80],
                    ("StatesAndActions", "True"): [0.80, 0.85, 0.75],
                }
            rows += rows_for(metric, horizon, values)
    verdict = compute_verdict(rows)
    assert verdict["targets"][0]["informative"]["significant"]
    assert not verdict["overall"]["significant"]
    assert verdict["verdict"] == NOT_INFORMATIVE


def test_summarize_rows():
    rows = rows_for(
        "SOFA",
        6,
        {("StatesOnly", "Mean"): [1.0, 3.0], ("StatesOnly", "True"): [2.0, 2.0]},
    )
    summary = summarize_rows(rows)
    assert [s["condition"] for s in summary] == ["True", "Mean"]
    assert summary[1]["mean"] == pytest.approx(2.0)
    assert summary[1]["std"] == pytest.approx(np.sqrt(2.0))
    assert summary[0]["std"] == 0.0
    assert summary[0]["n_seeds"] == 2


# End to end


def test_tiny_grid_run(prepared, tiny_run_config, tmp_path):
    report = run_experiment_grid(prepared, tiny_run_config, checkpoint_root=tmp_path / "cells")
    assert len(report.cells) == 3
    assert report.failed == 0, [c.error for c in report.cells]
    rows = report.rmse_rows()
    assert len(rows) == 12
    assert all(np.isfinite(r["rmse"]) for r in rows)

    states_only = [r["rmse"] for r in rows if r["scheme"] == "StatesOnly"]
    assert len(set(states_only)) == 1

    for result in report.cells:
        assert (tmp_path / "cells" / result.checkpoint).exists()
        samples, _ = load_tensors(tmp_path / "cells" / result.samples)
        assert samples["True/pred"].shape == samples["True/true"].shape
        assert samples["True/pred"].shape[0] <= 50

    path = report.save(tmp_path / "grid.json")
    loaded = DiagnosticReport.load(path)
    assert loaded.rmse_rows() == rows
    assert loaded.verdict()["verdict"] in (INFORMATIVE, NOT_INFORMATIVE)
