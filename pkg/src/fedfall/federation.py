"""Client/server round mechanics.

One communication round: every client trains its own model against the
frozen incoming global parameters (cross-entropy plus a proximal penalty
pulling toward the global), the server collects one ClientUpdate per
client at a barrier, and the configured aggregation rule produces the next
global vector.

Raw windows never leave a client: ``PrivateDataset`` raises when touched
outside its owner's execution scope and counts every access, so tests can
audit the boundary. Only ClientUpdate objects cross to the server.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field, replace

import numpy as np

from fedfall.aggregation import ClientUpdate, SwaConfig, fedavg, swa_aggregate
from fedfall.data.windows import SequenceWindow, stack_windows
from fedfall.errors import ConfigError, PrivacyViolationError, ShapeMismatchError
from fedfall.nn import (
    AdamState,
    ModelParams,
    adam_step,
    bce_loss,
    fedprox_penalty,
    grads_to_vector,
    manifest_for,
    model_backward,
    model_forward,
    params_to_vector,
    vector_to_params,
)
from fedfall.secure_transport import FixedPointCodec, HeKeyPair, decrypt_vector, encrypt_vector

logger = logging.getLogger(__name__)

_ACTIVE_CLIENT: ContextVar = ContextVar("fedfall_active_client", default=None)


@contextmanager
def client_scope(client_id: str):
    """Marks the dynamic extent in which one client's code is running."""
    token = _ACTIVE_CLIENT.set(client_id)
    try:
        yield
    finally:
        _ACTIVE_CLIENT.reset(token)


def current_scope() -> str | None:
    return _ACTIVE_CLIENT.get()


class PrivateDataset:
    """A client's windows, readable only inside that client's scope.

    Every access attempt is tallied in ``access_log`` (scope -> count),
    including rejected ones, so tests can assert the boundary held. Length
    is shared metadata (it crosses the boundary legitimately inside each
    ClientUpdate as the sample count).
    """

    def __init__(self, owner: str, windows: list[SequenceWindow]):
        self.owner = owner
        self._windows = list(windows)
        self.access_log: dict[str, int] = {}

    def __len__(self) -> int:
        return len(self._windows)

    def _check(self, action: str) -> None:
        scope = _ACTIVE_CLIENT.get() or "server"
        self.access_log[scope] = self.access_log.get(scope, 0) + 1
        if scope != self.owner:
            raise PrivacyViolationError(
                f"{action} of client {self.owner!r} windows from scope {scope!r}"
            )

    def windows(self) -> list[SequenceWindow]:
        self._check("read")
        return list(self._windows)

    def append(self, window: SequenceWindow) -> None:
        self._check("append")
        self._windows.append(window)


@dataclass
class ClientState:
    """Everything one client owns across rounds."""

    client_id: str
    dataset: PrivateDataset
    local_params: ModelParams
    adam: AdamState | None
    rng: np.random.Generator
    epochs_per_round: int
    last_train_log: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.epochs_per_round < 1:
            raise ValueError(f"epochs_per_round must be >= 1, got {self.epochs_per_round}")


@dataclass(frozen=True)
class RoundConfig:
    """Knobs of the training protocol."""

    global_epochs: int = 60
    client_epochs: int = 30
    batch_size: int = 32
    lr: float = 0.001
    mu: float = 0.01
    classification_threshold: float = 0.3
    alert_threshold: float = 0.4
    swa: SwaConfig = field(default_factory=SwaConfig)
    early_stop_patience: int = 10

    def __post_init__(self):
        for name in ("global_epochs", "client_epochs", "batch_size", "early_stop_patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("classification_threshold", "alert_threshold"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ConfigError(f"{name} must be in (0,1), got {v}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.mu < 0:
            raise ConfigError(f"mu must be >= 0, got {self.mu}")


@dataclass(frozen=True)
class FeedbackEvent:
    """One confirmed alert, created only when the alert actually fired."""

    window: SequenceWindow
    alert_probability: float
    response: int
    round_index: int


@dataclass(frozen=True)
class TransportConfig:
    """Encrypt updates on the client->server path; server decrypts before
    aggregating (sorting-based rules need plaintext)."""

    key: HeKeyPair
    codec: FixedPointCodec
    rng: object  # random.Random


def local_train(
    client: ClientState, global_params: np.ndarray, config: RoundConfig
) -> ClientUpdate | None:
    """Run this client's local epochs against the frozen global anchor.

    Minimizes BCE plus the proximal penalty (trainable coordinates only;
    batch statistics are data, not weights, and cannot be pulled toward the
    anchor). Returns None for a client with no data, which the round skips.
    """
    if len(client.dataset) == 0:
        logger.warning("client %s has no training windows; skipped", client.client_id)
        return None
    with client_scope(client.client_id):
        windows = client.dataset.windows()
        batch_all, labels_all = stack_windows(windows)

        in_size = batch_all.shape[2]
        hid = client.local_params.hidden_size
        manifest = manifest_for(in_size, hid)
        mask = manifest.trainable_mask()
        offsets = manifest.offsets()
        vec = params_to_vector(client.local_params)
        global_params = np.asarray(global_params, dtype=np.float64)
        if global_params.shape != vec.shape:
            raise ShapeMismatchError(
                f"global vector {global_params.shape} vs client model {vec.shape}"
            )
        if client.adam is None or client.adam.dim != manifest.dim:
            client.adam = AdamState(dim=manifest.dim, lr=config.lr)
        anchor = global_params[mask]

        n = len(windows)
        rm_lo, rm_hi = offsets["bn_running_mean"]
        rv_lo, rv_hi = offsets["bn_running_var"]
        epoch_losses = []
        for _ in range(client.epochs_per_round):
            order = client.rng.permutation(n)
            batch_losses = []
            for s in range(0, n, config.batch_size):
                idx = order[s : s + config.batch_size]
                if len(idx) < 2:
                    continue  # train-mode batch statistics need >= 2 windows
                params = vector_to_params(vec, in_size, hid)
                probs, cache = model_forward(params, batch_all[idx], mode="train")
                data_loss, dprobs = bce_loss(probs, labels_all[idx])
                grads = grads_to_vector(model_backward(cache, dprobs, params))
                penalty = 0.0
                if config.mu != 0.0:
                    penalty, pen_grad = fedprox_penalty(vec[mask], anchor, config.mu)
                    grads[mask] += pen_grad
                vec = adam_step(client.adam, vec, grads, config.lr)
                vec[rm_lo:rm_hi] = cache.new_running_mean
                vec[rv_lo:rv_hi] = cache.new_running_var
                batch_losses.append(data_loss + penalty)
            epoch_losses.append(float(np.mean(batch_losses)) if batch_losses else float("nan"))

        client.local_params = vector_to_params(vec, in_size, hid)
    client.last_train_log = {"loss": epoch_losses[-1], "epoch_losses": epoch_losses}
    return ClientUpdate(
        client_id=client.client_id,
        params=vec,
        epochs_trained=client.epochs_per_round,
        sample_count=n,
    )


@dataclass
class RoundResult:
    global_params: np.ndarray
    entries: list[dict]


def run_round(
    global_params: np.ndarray,
    clients: list[ClientState],
    config: RoundConfig,
    strategy: str = "swa",
    round_index: int = 0,
    update_transform=None,
    transport: TransportConfig | None = None,
) -> RoundResult:
    """One barrier-synchronized communication round.

    Every client trains against the same incoming global vector; the new
    global depends only on this round's updates and the incoming global.
    ``update_transform`` intercepts each ClientUpdate before transport
    (used to inject adversarial corruption in experiments); ``transport``
    encrypts each update and has the server decrypt before aggregation.
    """
    if strategy not in ("fedavg", "swa"):
        raise ConfigError(f"strategy must be 'fedavg' or 'swa', got {strategy!r}")
    global_params = np.asarray(global_params, dtype=np.float64)
    updates: list[ClientUpdate] = []
    entries: list[dict] = []
    for client in clients:
        update = local_train(client, global_params, config)
        if update is None:
            entries.append(
                {"round": round_index, "client": client.client_id, "skipped": True}
            )
            continue
        if update_transform is not None:
            update = update_transform(update)
        if transport is not None:
            enc = encrypt_vector(update.params, transport.key, transport.codec, transport.rng)
            received = decrypt_vector(enc, transport.key, transport.codec)
            update = replace(update, params=received)
        entries.append(
            {
                "round": round_index,
                "client": client.client_id,
                "loss": client.last_train_log["loss"],
                "update_norm": float(np.linalg.norm(update.params - global_params)),
                "epochs": update.epochs_trained,
                "n_samples": update.sample_count,
                "encrypted": transport is not None,
            }
        )
        updates.append(update)
    if not updates:
        raise ConfigError(f"round {round_index}: no client produced an update")
    if strategy == "fedavg":
        new_global = fedavg(updates)
    else:
        new_global = swa_aggregate(global_params, updates, config.swa)
    return RoundResult(global_params=new_global, entries=entries)


def ensemble_predict(
    global_model: ModelParams, client_model: ModelParams, batch
) -> np.ndarray:
    """Arithmetic mean of the two models' fall probabilities per window."""
    pg, _ = model_forward(global_model, batch, mode="eval")
    pi, _ = model_forward(client_model, batch, mode="eval")
    return (pg + pi) / 2.0


def classify(probability, threshold: float):
    """1 iff probability strictly exceeds the threshold."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"threshold must be in (0,1), got {threshold}")
    arr = np.asarray(probability)
    out = (arr > threshold).astype(int)
    return int(out) if out.ndim == 0 else out


def make_label_oracle(noise_p: float, rng: np.random.Generator):
    """Ground-truth lookup with labels flipped at probability ``noise_p``.

    Stands in for the human confirming or dismissing an alert.
    """
    if not 0.0 <= noise_p <= 1.0:
        raise ValueError(f"noise_p must be in [0,1], got {noise_p}")

    def oracle(window: SequenceWindow) -> int:
        truth = int(window.label)
        if noise_p > 0.0 and rng.uniform() < noise_p:
            return 1 - truth
        return truth

    return oracle


def alert_and_feedback(
    client: ClientState,
    window: SequenceWindow,
    ensemble_prob: float,
    label_oracle,
    config: RoundConfig,
    round_index: int,
) -> FeedbackEvent | None:
    """Fire an alert when the ensemble probability exceeds theta.

    A fired alert queries the oracle for the confirmed label and appends
    the window, so labeled, to the client's own dataset (size +1 exactly).
    Below-threshold probabilities change nothing and return None.
    """
    if not ensemble_prob > config.alert_threshold:
        return None
    response = int(label_oracle(window))
    confirmed = SequenceWindow(
        values=window.values.copy(),
        label=response,
        origin=(client.client_id, "feedback", round_index),
    )
    with client_scope(client.client_id):
        client.dataset.append(confirmed)
    return FeedbackEvent(
        window=window,
        alert_probability=float(ensemble_prob),
        response=response,
        round_index=round_index,
    )


def early_stop_check(history: list[float], patience: int) -> bool:
    """Stop when the best score is ``patience`` or more evaluations old.

    ``history`` holds one validation score per evaluation (higher is
    better); ties keep the earliest occurrence as best.
    """
    if patience < 1:
        raise ValueError(f"patience must be >= 1, got {patience}")
    if not history:
        return False
    best = int(np.argmax(history))
    return (len(history) - 1 - best) >= patience
