"""Scenario orchestration: determinism, inference modes, feedback growth."""

import numpy as np
import pytest

from fedfall.config import ExperimentConfig
from fedfall.data.synthetic import make_separable_dataset
from fedfall.data.windows import SequenceWindow
from fedfall.errors import ConfigError
from fedfall.nn import model_forward, params_to_vector
from fedfall.simulate import (
    SCENARIOS,
    SimulationResult,
    run_simulation,
    simulate_full,
    stratified_validation_split,
)


def fast_config(**kw):
    defaults = dict(
        hidden_size=4,
        global_epochs=4,
        client_epochs=1,
        batch_size=16,
        lr=0.01,
        smote_target=0.0,
        early_stop_patience=10,
        monitor_windows_per_round=4,
        seed=0,
    )
    defaults.update(kw)
    return ExperimentConfig(**defaults)


@pytest.fixture(scope="module")
def dataset():
    return make_separable_dataset(
        seed=0, n_clients=3, train_per_client=24, test_per_client=12, window=6, features=3
    )


class TestScenarioContract:
    def test_known_scenarios(self):
        assert SCENARIOS == ("central", "fl_fedavg", "pfl_swa", "epfl_swa")

    def test_unknown_scenario_rejected(self, dataset):
        with pytest.raises(ConfigError):
            simulate_full(dataset, fast_config(), "federated")

    @pytest.mark.parametrize("scenario", ["central", "fl_fedavg", "pfl_swa", "epfl_swa"])
    def test_each_scenario_produces_full_result(self, dataset, scenario):
        result = simulate_full(dataset, fast_config(), scenario)
        assert isinstance(result, SimulationResult)
        assert result.metrics.scenario == scenario
        assert 1 <= result.rounds_run <= 4
        assert 0 <= result.best_round < result.rounds_run
        assert len(result.loss_curve) == result.rounds_run
        for row in result.loss_curve:
            assert set(row) == {"round", "train_loss", "val_recall", "val_f1"}
            assert np.isfinite(row["train_loss"])
        assert sorted(result.test_probabilities) == ["A", "B", "C"]
        for cid, probs in result.test_probabilities.items():
            assert probs.shape == (12,)
            assert np.all((probs >= 0.0) & (probs <= 1.0))
            assert result.test_labels[cid].shape == (12,)

    @pytest.mark.parametrize("scenario", ["central", "fl_fedavg", "pfl_swa", "epfl_swa"])
    def test_determinism(self, dataset, scenario):
        a = simulate_full(dataset, fast_config(), scenario)
        b = simulate_full(dataset, fast_config(), scenario)
        assert a.metrics.to_dict() == b.metrics.to_dict()
        assert a.rounds_run == b.rounds_run
        np.testing.assert_array_equal(
            params_to_vector(a.global_params), params_to_vector(b.global_params)
        )
        for cid in a.test_probabilities:
            np.testing.assert_array_equal(
                a.test_probabilities[cid], b.test_probabilities[cid]
            )

    def test_seed_changes_results(self, dataset):
        a = simulate_full(dataset, fast_config(seed=0), "fl_fedavg")
        b = simulate_full(dataset, fast_config(seed=1), "fl_fedavg")
        assert not np.array_equal(
            params_to_vector(a.global_params), params_to_vector(b.global_params)
        )

    def test_per_client_recall_covers_every_client(self, dataset):
        result = simulate_full(dataset, fast_config(), "pfl_swa")
        assert sorted(result.metrics.per_client) == ["A", "B", "C"]
        for value in result.metrics.per_client.values():
            assert value is None or 0.0 <= value <= 1.0

    def test_report_carries_provenance_fields(self, dataset):
        cfg = fast_config()
        report = run_simulation(dataset, cfg, "fl_fedavg")
        assert report.config_fingerprint == cfg.fingerprint()
        assert report.seed == cfg.seed
        assert report.scenario == "fl_fedavg"


class TestInferenceMode:
    def test_ensemble_only_for_epfl(self, dataset):
        modes = {}
        for scenario in ("fl_fedavg", "pfl_swa", "epfl_swa"):
            result = simulate_full(dataset, fast_config(), scenario)
            rows = [e for e in result.round_log if e.get("event") == "validation"]
            kinds = {e["inference"] for e in rows}
            assert len(kinds) == 1
            modes[scenario] = kinds.pop()
        assert modes == {
            "fl_fedavg": "global",
            "pfl_swa": "global",
            "epfl_swa": "ensemble",
        }

    def test_epfl_test_probs_are_client_specific(self, dataset):
        result = simulate_full(dataset, fast_config(global_epochs=3), "epfl_swa")
        # ensemble halves differ per client, so identical outputs would mean
        # the personal model is being ignored
        client_params = result.client_params
        assert sorted(client_params) == ["A", "B", "C"]
        assert not np.array_equal(
            params_to_vector(client_params["A"]), params_to_vector(client_params["B"])
        )

    def test_fedavg_inference_is_shared_model(self, dataset):
        result = simulate_full(dataset, fast_config(global_epochs=2), "fl_fedavg")
        # restart scenario trains from the global each round; the published
        # probabilities come from the single global model
        model = result.global_params
        for cid, windows in dataset.test_by_client.items():
            batch = np.stack([w.values for w in windows])
            probs, _ = model_forward(model, batch, mode="eval")
            np.testing.assert_array_equal(result.test_probabilities[cid], probs)


class TestFeedbackLoop:
    def test_disabled_by_default_outside_epfl(self, dataset):
        result = simulate_full(
            dataset, fast_config(feedback_enabled=True), "pfl_swa"
        )
        assert result.feedback_events == []

    def test_noise_free_feedback_grows_datasets_by_alert_count(self, dataset):
        cfg = fast_config(
            feedback_enabled=True, feedback_noise_p=0.0, global_epochs=3,
            monitor_windows_per_round=6,
        )
        result = simulate_full(dataset, cfg, "epfl_swa")
        rows = [e for e in result.round_log if e.get("event") == "feedback"]
        assert rows, "feedback phase should be logged each round"
        assert len(result.feedback_events) == sum(e["alerts"] for e in rows)
        sizes = {}
        for e in rows:
            cid = e["client"]
            if cid in sizes:
                assert e["dataset_size"] >= sizes[cid]
            # 24 train windows per client minus 2 held out for validation
            assert e["dataset_size"] == 22 + sum(
                r["alerts"] for r in rows if r["client"] == cid and r["round"] <= e["round"]
            )
            sizes[cid] = e["dataset_size"]

    def test_feedback_off_keeps_dataset_size_constant(self, dataset):
        cfg = fast_config(feedback_enabled=False, global_epochs=2)
        result = simulate_full(dataset, cfg, "epfl_swa")
        assert result.feedback_events == []
        assert all(e.get("event") != "feedback" for e in result.round_log)

    def test_feedback_events_carry_round_and_probability(self, dataset):
        cfg = fast_config(
            feedback_enabled=True, global_epochs=3, monitor_windows_per_round=8
        )
        result = simulate_full(dataset, cfg, "epfl_swa")
        for event in result.feedback_events:
            assert 0 <= event.round_index < result.rounds_run
            assert event.alert_probability > cfg.alert_threshold
            assert event.response in (0, 1)


class TestValidationSplit:
    def windows(self, n_pos, n_neg):
        rng = np.random.default_rng(0)
        out = []
        for i in range(n_pos + n_neg):
            label = 1 if i < n_pos else 0
            out.append(
                SequenceWindow(
                    values=rng.normal(size=(4, 2)), label=label, origin=("A", "A01", i)
                )
            )
        return out

    def test_fraction_taken_per_label(self):
        train, val = stratified_validation_split(
            self.windows(20, 40), 0.15, np.random.default_rng(0)
        )
        assert sum(w.label for w in val) == 3  # floor(0.15 * 20)
        assert sum(1 - w.label for w in val) == 6  # floor(0.15 * 40)
        assert len(train) + len(val) == 60

    def test_partition_is_exact(self):
        windows = self.windows(10, 10)
        train, val = stratified_validation_split(windows, 0.2, np.random.default_rng(1))
        seen = sorted(id(w) for w in train + val)
        assert seen == sorted(id(w) for w in windows)

    def test_tiny_minority_keeps_training_data(self):
        train, val = stratified_validation_split(
            self.windows(2, 40), 0.15, np.random.default_rng(0)
        )
        # floor(0.15 * 2) = 0: both positives stay in training
        assert sum(w.label for w in train) == 2
        assert sum(w.label for w in val) == 0

    def test_deterministic_under_seed(self):
        windows = self.windows(12, 30)
        a = stratified_validation_split(windows, 0.15, np.random.default_rng(7))
        b = stratified_validation_split(windows, 0.15, np.random.default_rng(7))
        assert [id(w) for w in a[0]] == [id(w) for w in b[0]]
        assert [id(w) for w in a[1]] == [id(w) for w in b[1]]


class TestCentralPath:
    def test_central_ignores_federation_knobs(self, dataset):
        # mu and aggregation settings must not matter when pooling
        a = simulate_full(dataset, fast_config(mu=0.01), "central")
        b = simulate_full(dataset, fast_config(mu=0.9), "central")
        np.testing.assert_array_equal(
            params_to_vector(a.global_params), params_to_vector(b.global_params)
        )

    def test_central_trains_one_model_for_all_clients(self, dataset):
        result = simulate_full(dataset, fast_config(), "central")
        model = result.global_params
        for cid, windows in dataset.test_by_client.items():
            batch = np.stack([w.values for w in windows])
            probs, _ = model_forward(model, batch, mode="eval")
            np.testing.assert_array_equal(result.test_probabilities[cid], probs)

    def test_round_log_marks_central_trainer(self, dataset):
        result = simulate_full(dataset, fast_config(global_epochs=2), "central")
        train_rows = [e for e in result.round_log if "client" in e and "event" not in e]
        assert train_rows
        assert {e["client"] for e in train_rows} == {"central"}
