"""End-to-end experiment scenarios.

Four scenarios share one data path (per-client validation split, then
minority oversampling of the remaining train windows) and one model:

* ``central``   - one model on the pooled train windows, plain BCE.
* ``fl_fedavg`` - sample-weighted averaging rounds; clients restart from
                  the incoming global each round; global-only inference.
* ``pfl_swa``   - persistent local models with a proximal pull toward the
                  global, robust weighted aggregation; global inference.
* ``epfl_swa``  - pfl_swa plus two-model ensemble inference and the
                  optional alert-driven feedback loop.

Every random choice flows from one seed through spawned generator
streams, so a scenario rerun with the same config is bit-identical.
"""

from __future__ import annotations

import logging
import random as _random
from dataclasses import dataclass, replace

import numpy as np

from fedfall.config import ExperimentConfig
from fedfall.data.smote import smote_oversample
from fedfall.data.split import DatasetSplit
from fedfall.data.windows import SequenceWindow, stack_windows
from fedfall.errors import ConfigError
from fedfall.federation import (
    ClientState,
    FeedbackEvent,
    PrivateDataset,
    RoundConfig,
    alert_and_feedback,
    classify,
    early_stop_check,
    ensemble_predict,
    local_train,
    make_label_oracle,
    run_round,
    TransportConfig,
)
from fedfall.metrics import MetricsReport, compute_metrics, counts_from_predictions, per_client_recall
from fedfall.nn import ModelParams, init_params, model_forward, params_to_vector, vector_to_params
from fedfall.secure_transport import FixedPointCodec, keygen

logger = logging.getLogger(__name__)

SCENARIOS = ("central", "fl_fedavg", "pfl_swa", "epfl_swa")

VALIDATION_FRACTION = 0.15


@dataclass
class SimulationResult:
    metrics: MetricsReport
    round_log: list
    loss_curve: list
    feedback_events: list
    rounds_run: int
    best_round: int
    global_params: ModelParams
    client_params: dict
    test_probabilities: dict
    test_labels: dict


def stratified_validation_split(
    windows: list[SequenceWindow], fraction: float, rng: np.random.Generator
) -> tuple[list[SequenceWindow], list[SequenceWindow]]:
    """Hold out ``fraction`` of the windows per label for early stopping."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"fraction must be in [0,1), got {fraction}")
    train: list[SequenceWindow] = []
    val: list[SequenceWindow] = []
    by_label: dict[int, list[int]] = {}
    for i, w in enumerate(windows):
        by_label.setdefault(w.label, []).append(i)
    val_idx: set[int] = set()
    for label in sorted(by_label):
        idx = np.asarray(by_label[label])
        n_val = int(np.floor(fraction * len(idx)))
        if n_val > 0:
            chosen = rng.permutation(len(idx))[:n_val]
            val_idx.update(int(idx[c]) for c in chosen)
    for i, w in enumerate(windows):
        (val if i in val_idx else train).append(w)
    return train, val


def _eval_probabilities(params: ModelParams, windows: list[SequenceWindow]) -> np.ndarray:
    if not windows:
        return np.zeros(0)
    batch, _ = stack_windows(windows)
    probs, _ = model_forward(params, batch, mode="eval")
    return probs


def _ensemble_probabilities(
    global_model: ModelParams, client_model: ModelParams, windows: list[SequenceWindow]
) -> np.ndarray:
    if not windows:
        return np.zeros(0)
    batch, _ = stack_windows(windows)
    return ensemble_predict(global_model, client_model, batch)


def _labels_of(windows: list[SequenceWindow]) -> np.ndarray:
    return np.asarray([w.label for w in windows], dtype=np.float64)


class _Evaluator:
    """Scenario-consistent inference over a per-client window partition."""

    def __init__(self, scenario: str, threshold: float):
        self.scenario = scenario
        self.threshold = threshold

    def probabilities(
        self,
        windows_by_client: dict[str, list[SequenceWindow]],
        global_model: ModelParams,
        client_models: dict[str, ModelParams],
    ) -> dict[str, np.ndarray]:
        out: dict[str, np.ndarray] = {}
        for cid in sorted(windows_by_client):
            windows = windows_by_client[cid]
            if self.scenario == "epfl_swa":
                out[cid] = _ensemble_probabilities(global_model, client_models[cid], windows)
            else:
                out[cid] = _eval_probabilities(global_model, windows)
        return out

    def predictions(
        self,
        windows_by_client: dict[str, list[SequenceWindow]],
        global_model: ModelParams,
        client_models: dict[str, ModelParams],
    ) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        out: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        for cid, probs in self.probabilities(
            windows_by_client, global_model, client_models
        ).items():
            windows = windows_by_client[cid]
            preds = classify(probs, self.threshold) if len(probs) else np.zeros(0, dtype=int)
            out[cid] = (np.asarray(preds, dtype=np.float64), _labels_of(windows))
        return out

    @staticmethod
    def pooled_counts(per_client: dict[str, tuple[np.ndarray, np.ndarray]]):
        preds = np.concatenate([p for p, _ in per_client.values()]) if per_client else np.zeros(0)
        labels = np.concatenate([l for _, l in per_client.values()]) if per_client else np.zeros(0)
        return counts_from_predictions(preds, labels)


def _make_monitor_window(
    base: SequenceWindow, client_id: str, round_index: int, rng: np.random.Generator
) -> SequenceWindow:
    spread = float(np.std(base.values))
    noise = rng.normal(0.0, 0.05 * (spread + 1e-12), size=base.values.shape)
    return SequenceWindow(
        values=base.values + noise,
        label=base.label,
        origin=(client_id, "monitor", round_index),
    )


def simulate_full(
    dataset: DatasetSplit, config: ExperimentConfig, scenario: str
) -> SimulationResult:
    """Run one scenario end to end and return metrics plus diagnostics."""
    if scenario not in SCENARIOS:
        raise ConfigError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    client_ids = dataset.clients
    if not client_ids:
        raise ConfigError("dataset has no clients")
    sample = next(iter(dataset.train))
    input_size = sample.values.shape[1]

    root = np.random.SeedSequence(config.seed)
    ss_init, ss_smote, ss_val, ss_feedback, ss_transport = root.spawn(5)
    client_seeds = root.spawn(len(client_ids))

    # Per-client data path: hold out validation first so oversampling
    # never leaks synthetic neighbors into the early-stopping score.
    smote_streams = ss_smote.spawn(len(client_ids))
    val_streams = ss_val.spawn(len(client_ids))
    train_by_client: dict[str, list[SequenceWindow]] = {}
    val_by_client: dict[str, list[SequenceWindow]] = {}
    for i, cid in enumerate(client_ids):
        raw = dataset.train_by_client[cid]
        tr, va = stratified_validation_split(
            raw, VALIDATION_FRACTION, np.random.default_rng(val_streams[i])
        )
        if config.smote_target > 0.0:
            tr = smote_oversample(
                tr,
                target_minority_fraction=config.smote_target,
                k=config.smote_k,
                rng=np.random.default_rng(smote_streams[i]),
            )
        train_by_client[cid] = tr
        val_by_client[cid] = va
    if sum(len(v) for v in val_by_client.values()) == 0:
        raise ConfigError(
            "validation split came out empty; provide more training windows per client"
        )

    init = init_params(input_size, config.hidden_size, np.random.default_rng(ss_init))
    round_cfg = config.round_config()
    evaluator = _Evaluator(scenario, config.classification_threshold)

    if scenario == "central":
        return _run_central(
            dataset,
            config,
            round_cfg,
            init,
            train_by_client,
            val_by_client,
            np.random.default_rng(client_seeds[0]),
        )

    strategy = "fedavg" if scenario == "fl_fedavg" else "swa"
    if scenario == "fl_fedavg":
        round_cfg = replace(round_cfg, mu=0.0)

    clients = [
        ClientState(
            client_id=cid,
            dataset=PrivateDataset(cid, train_by_client[cid]),
            local_params=init.copy(),
            adam=None,
            rng=np.random.default_rng(client_seeds[i]),
            epochs_per_round=config.client_epochs,
        )
        for i, cid in enumerate(client_ids)
    ]

    transport = None
    if config.encrypt_transport:
        key = keygen(config.he_key_bits, seed=config.seed)
        codec = FixedPointCodec(scale_bits=config.fixed_point_bits, clip_range=config.clip_range)
        transport = TransportConfig(key=key, codec=codec, rng=_random.Random(int(ss_transport.generate_state(1)[0])))

    feedback_on = scenario == "epfl_swa" and config.feedback_enabled
    oracle = None
    monitor_rngs: dict[str, np.random.Generator] = {}
    if feedback_on:
        fb_streams = ss_feedback.spawn(len(client_ids) + 1)
        oracle = make_label_oracle(config.feedback_noise_p, np.random.default_rng(fb_streams[-1]))
        monitor_rngs = {
            cid: np.random.default_rng(fb_streams[i]) for i, cid in enumerate(client_ids)
        }

    global_vec = params_to_vector(init)
    round_log: list = []
    loss_curve: list = []
    feedback_events: list[FeedbackEvent] = []
    history: list[float] = []
    best_score = -np.inf
    best_round = -1
    best_global = global_vec.copy()
    best_locals = {c.client_id: params_to_vector(c.local_params) for c in clients}
    rounds_run = 0

    for r in range(config.global_epochs):
        if scenario == "fl_fedavg":
            for c in clients:
                c.local_params = vector_to_params(global_vec, input_size, config.hidden_size)
                c.adam = None
        result = run_round(
            global_vec, clients, round_cfg, strategy=strategy, round_index=r, transport=transport
        )
        global_vec = result.global_params
        round_log.extend(result.entries)
        rounds_run = r + 1

        global_model = vector_to_params(global_vec, input_size, config.hidden_size)
        client_models = {c.client_id: c.local_params for c in clients}

        if feedback_on:
            for c in clients:
                raw = dataset.train_by_client[c.client_id]
                if not raw:
                    continue
                rng = monitor_rngs[c.client_id]
                alerts = 0
                for _ in range(config.monitor_windows_per_round):
                    base = raw[int(rng.integers(0, len(raw)))]
                    window = _make_monitor_window(base, c.client_id, r, rng)
                    prob = float(
                        _ensemble_probabilities(global_model, c.local_params, [window])[0]
                    )
                    event = alert_and_feedback(c, window, prob, oracle, round_cfg, r)
                    if event is not None:
                        feedback_events.append(event)
                        alerts += 1
                round_log.append(
                    {
                        "round": r,
                        "client": c.client_id,
                        "event": "feedback",
                        "alerts": alerts,
                        "dataset_size": len(c.dataset),
                    }
                )

        per_client_val = evaluator.predictions(val_by_client, global_model, client_models)
        counts = evaluator.pooled_counts(per_client_val)
        val_metrics = compute_metrics(counts)
        score = val_metrics.recall + val_metrics.f1
        history.append(score)
        mean_loss = float(
            np.mean([e["loss"] for e in result.entries if "loss" in e])
        )
        round_log.append(
            {
                "round": r,
                "event": "validation",
                "inference": "ensemble" if scenario == "epfl_swa" else "global",
                "val_recall": val_metrics.recall,
                "val_f1": val_metrics.f1,
                "score": score,
            }
        )
        loss_curve.append(
            {
                "round": r,
                "train_loss": mean_loss,
                "val_recall": val_metrics.recall,
                "val_f1": val_metrics.f1,
            }
        )
        if score > best_score:
            best_score = score
            best_round = r
            best_global = global_vec.copy()
            best_locals = {c.client_id: params_to_vector(c.local_params) for c in clients}
        if early_stop_check(history, config.early_stop_patience):
            round_log.append({"round": r, "event": "early_stop", "best_round": best_round})
            break

    global_model = vector_to_params(best_global, input_size, config.hidden_size)
    client_models = {
        cid: vector_to_params(vec, input_size, config.hidden_size)
        for cid, vec in best_locals.items()
    }
    test_probs = evaluator.probabilities(dataset.test_by_client, global_model, client_models)
    test_labels = {cid: _labels_of(dataset.test_by_client[cid]) for cid in test_probs}
    per_client_test = {
        cid: (np.asarray(classify(probs, config.classification_threshold), dtype=np.float64)
              if len(probs) else np.zeros(0),
              test_labels[cid])
        for cid, probs in test_probs.items()
    }
    counts = evaluator.pooled_counts(per_client_test)
    core = compute_metrics(counts)
    partition = {
        cid: (preds.astype(int), labels.astype(int))
        for cid, (preds, labels) in per_client_test.items()
    }
    metrics = MetricsReport(
        accuracy=core.accuracy,
        precision=core.precision,
        recall=core.recall,
        f1=core.f1,
        degenerate=core.degenerate,
        per_client=per_client_recall(partition),
        scenario=scenario,
        config_fingerprint=config.fingerprint(),
        seed=config.seed,
    )
    return SimulationResult(
        metrics=metrics,
        round_log=round_log,
        loss_curve=loss_curve,
        feedback_events=feedback_events,
        rounds_run=rounds_run,
        best_round=best_round,
        global_params=global_model,
        client_params=client_models,
        test_probabilities=test_probs,
        test_labels=test_labels,
    )


def _run_central(
    dataset: DatasetSplit,
    config: ExperimentConfig,
    round_cfg: RoundConfig,
    init: ModelParams,
    train_by_client: dict,
    val_by_client: dict,
    rng: np.random.Generator,
) -> SimulationResult:
    """Pooled single-model training: the non-federated reference point."""
    input_size = init.lstm1.wx.shape[1]
    pooled_train = [w for cid in sorted(train_by_client) for w in train_by_client[cid]]
    cfg = replace(round_cfg, mu=0.0)
    trainer = ClientState(
        client_id="central",
        dataset=PrivateDataset("central", pooled_train),
        local_params=init.copy(),
        adam=None,
        rng=rng,
        epochs_per_round=1,
    )
    evaluator = _Evaluator("central", config.classification_threshold)
    vec = params_to_vector(init)
    round_log: list = []
    loss_curve: list = []
    history: list[float] = []
    best_score = -np.inf
    best_round = -1
    best_vec = vec.copy()
    rounds_run = 0

    for epoch in range(config.global_epochs):
        update = local_train(trainer, vec, cfg)
        if update is None:
            raise ConfigError("central scenario requires nonempty pooled training data")
        vec = update.params
        rounds_run = epoch + 1
        model = vector_to_params(vec, input_size, config.hidden_size)
        per_client_val = evaluator.predictions(val_by_client, model, {})
        val_metrics = compute_metrics(evaluator.pooled_counts(per_client_val))
        score = val_metrics.recall + val_metrics.f1
        history.append(score)
        round_log.append(
            {
                "round": epoch,
                "client": "central",
                "loss": trainer.last_train_log["loss"],
                "epochs": 1,
                "n_samples": update.sample_count,
            }
        )
        round_log.append(
            {
                "round": epoch,
                "event": "validation",
                "inference": "global",
                "val_recall": val_metrics.recall,
                "val_f1": val_metrics.f1,
                "score": score,
            }
        )
        loss_curve.append(
            {
                "round": epoch,
                "train_loss": trainer.last_train_log["loss"],
                "val_recall": val_metrics.recall,
                "val_f1": val_metrics.f1,
            }
        )
        if score > best_score:
            best_score = score
            best_round = epoch
            best_vec = vec.copy()
        if early_stop_check(history, config.early_stop_patience):
            round_log.append({"round": epoch, "event": "early_stop", "best_round": best_round})
            break

    model = vector_to_params(best_vec, input_size, config.hidden_size)
    test_probs = evaluator.probabilities(dataset.test_by_client, model, {})
    test_labels = {cid: _labels_of(dataset.test_by_client[cid]) for cid in test_probs}
    per_client_test = {
        cid: (np.asarray(classify(probs, config.classification_threshold), dtype=np.float64)
              if len(probs) else np.zeros(0),
              test_labels[cid])
        for cid, probs in test_probs.items()
    }
    core = compute_metrics(evaluator.pooled_counts(per_client_test))
    partition = {
        cid: (preds.astype(int), labels.astype(int))
        for cid, (preds, labels) in per_client_test.items()
    }
    metrics = MetricsReport(
        accuracy=core.accuracy,
        precision=core.precision,
        recall=core.recall,
        f1=core.f1,
        degenerate=core.degenerate,
        per_client=per_client_recall(partition),
        scenario="central",
        config_fingerprint=config.fingerprint(),
        seed=config.seed,
    )
    return SimulationResult(
        metrics=metrics,
        round_log=round_log,
        loss_curve=loss_curve,
        feedback_events=[],
        rounds_run=rounds_run,
        best_round=best_round,
        global_params=model,
        client_params={},
        test_probabilities=test_probs,
        test_labels=test_labels,
    )


def run_simulation(
    dataset: DatasetSplit, config: ExperimentConfig, scenario: str
) -> MetricsReport:
    """Contract entry point: scenario in, final MetricsReport out."""
    return simulate_full(dataset, config, scenario).metrics
