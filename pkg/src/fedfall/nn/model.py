"""Stacked-LSTM fall classifier with exact manual gradients.

The network maps a (batch, time, features) window of motion data to a fall
probability: two LSTM layers, batch normalization of the final hidden state,
a dense layer with ReLU, a second dense layer, and a sigmoid output.

Everything is plain numpy in float64. Forward passes are pure functions of
(params, batch); the backward pass replays the forward from a cache and is
validated coordinate-wise against central finite differences, so this module
can serve as the single source of truth for training without an autodiff
framework.

Gate layout inside each LSTM weight block is (input, forget, cell, output),
stacked along the first axis in that order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from fedfall.errors import NumericalFailureError, ShapeMismatchError

# Small enough that normalized batch statistics stay within 1e-5 of
# mean 0 / variance 1 even for low-variance hidden states.
BN_EPS = 1e-10
BN_MOMENTUM = 0.1


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass
class LstmLayer:
    """Gate weights for one LSTM layer.

    wx: (4H, input_dim) input-to-gate weights
    wh: (4H, H) recurrent weights
    b:  (4H,) gate biases
    """

    wx: np.ndarray
    wh: np.ndarray
    b: np.ndarray

    def copy(self) -> "LstmLayer":
        return LstmLayer(self.wx.copy(), self.wh.copy(), self.b.copy())


@dataclass
class ModelParams:
    """All weights of the classifier, in plain arrays.

    ``bn_running_mean`` / ``bn_running_var`` are data statistics rather than
    gradient-trained weights; they still travel with the parameter vector so
    aggregation shares them between clients.
    """

    lstm1: LstmLayer
    lstm2: LstmLayer
    bn_gamma: np.ndarray
    bn_beta: np.ndarray
    bn_running_mean: np.ndarray
    bn_running_var: np.ndarray
    fc1_w: np.ndarray
    fc1_b: np.ndarray
    fc2_w: np.ndarray
    fc2_b: np.ndarray
    hidden_size: int

    @property
    def input_size(self) -> int:
        return self.lstm1.wx.shape[1]

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        """Named tensors in canonical serialization order."""
        return [
            ("lstm1_wx", self.lstm1.wx),
            ("lstm1_wh", self.lstm1.wh),
            ("lstm1_b", self.lstm1.b),
            ("lstm2_wx", self.lstm2.wx),
            ("lstm2_wh", self.lstm2.wh),
            ("lstm2_b", self.lstm2.b),
            ("bn_gamma", self.bn_gamma),
            ("bn_beta", self.bn_beta),
            ("bn_running_mean", self.bn_running_mean),
            ("bn_running_var", self.bn_running_var),
            ("fc1_w", self.fc1_w),
            ("fc1_b", self.fc1_b),
            ("fc2_w", self.fc2_w),
            ("fc2_b", self.fc2_b),
        ]

    def copy(self) -> "ModelParams":
        return ModelParams(
            lstm1=self.lstm1.copy(),
            lstm2=self.lstm2.copy(),
            bn_gamma=self.bn_gamma.copy(),
            bn_beta=self.bn_beta.copy(),
            bn_running_mean=self.bn_running_mean.copy(),
            bn_running_var=self.bn_running_var.copy(),
            fc1_w=self.fc1_w.copy(),
            fc1_b=self.fc1_b.copy(),
            fc2_w=self.fc2_w.copy(),
            fc2_b=self.fc2_b.copy(),
            hidden_size=self.hidden_size,
        )


# Tensors excluded from gradient updates (batch statistics).
NON_TRAINABLE = frozenset({"bn_running_mean", "bn_running_var"})


def init_params(input_size: int, hidden_size: int, seed: int | np.random.Generator = 0) -> ModelParams:
    """Seeded weight initialization.

    Weights are uniform in +-1/sqrt(H); forget-gate biases start at 1.0 so
    early training does not wipe cell state.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    h = hidden_size
    bound = 1.0 / np.sqrt(h)

    def u(*shape):
        return rng.uniform(-bound, bound, size=shape)

    def lstm(in_dim):
        b = u(4 * h)
        b[h : 2 * h] = 1.0
        return LstmLayer(wx=u(4 * h, in_dim), wh=u(4 * h, h), b=b)

    return ModelParams(
        lstm1=lstm(input_size),
        lstm2=lstm(h),
        bn_gamma=np.ones(h),
        bn_beta=np.zeros(h),
        bn_running_mean=np.zeros(h),
        bn_running_var=np.ones(h),
        fc1_w=u(h, h),
        fc1_b=u(h),
        fc2_w=u(1, h),
        fc2_b=u(1),
        hidden_size=h,
    )


def zero_grads(params: ModelParams) -> ModelParams:
    """A gradient container with the same shapes as ``params``, all zeros."""
    return ModelParams(
        lstm1=LstmLayer(np.zeros_like(params.lstm1.wx), np.zeros_like(params.lstm1.wh), np.zeros_like(params.lstm1.b)),
        lstm2=LstmLayer(np.zeros_like(params.lstm2.wx), np.zeros_like(params.lstm2.wh), np.zeros_like(params.lstm2.b)),
        bn_gamma=np.zeros_like(params.bn_gamma),
        bn_beta=np.zeros_like(params.bn_beta),
        bn_running_mean=np.zeros_like(params.bn_running_mean),
        bn_running_var=np.zeros_like(params.bn_running_var),
        fc1_w=np.zeros_like(params.fc1_w),
        fc1_b=np.zeros_like(params.fc1_b),
        fc2_w=np.zeros_like(params.fc2_w),
        fc2_b=np.zeros_like(params.fc2_b),
        hidden_size=params.hidden_size,
    )


@dataclass
class _LstmTrace:
    inputs: np.ndarray  # (B, T, in_dim)
    h: np.ndarray       # (T+1, B, H); h[0] is the zero initial state
    c: np.ndarray       # (T+1, B, H)
    gi: np.ndarray      # (T, B, H) input gates
    gf: np.ndarray      # (T, B, H) forget gates
    gg: np.ndarray      # (T, B, H) cell candidates (tanh)
    go: np.ndarray      # (T, B, H) output gates
    tc: np.ndarray      # (T, B, H) tanh(c_t)


@dataclass
class ForwardCache:
    """Every intermediate needed to replay the forward pass in backward.

    Holds a reference to the exact ``ModelParams`` object used, so a stale or
    mismatched cache is rejected instead of silently producing wrong
    gradients.
    """

    params: ModelParams
    mode: str
    layer1: _LstmTrace
    layer2: _LstmTrace
    bn_mean: np.ndarray
    bn_var: np.ndarray
    bn_std: np.ndarray
    bn_xhat: np.ndarray
    bn_out: np.ndarray
    new_running_mean: np.ndarray
    new_running_var: np.ndarray
    fc_a1: np.ndarray
    fc_relu: np.ndarray
    fc_a2: np.ndarray
    probs: np.ndarray
    batch_size: int = field(init=False)

    def __post_init__(self):
        self.batch_size = self.probs.shape[0]


def _as_batch_array(batch) -> np.ndarray:
    if isinstance(batch, np.ndarray):
        x = batch
    else:
        x = np.stack([np.asarray(w.values, dtype=float) for w in batch])
    if x.ndim != 3:
        raise ShapeMismatchError(f"batch must be (B, T, F), got shape {x.shape}")
    return np.asarray(x, dtype=np.float64)


def _check_finite(arr: np.ndarray, layer: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericalFailureError(f"non-finite values in {layer}", layer=layer)


def _lstm_forward(layer: LstmLayer, inputs: np.ndarray) -> _LstmTrace:
    b_sz, t_len, _ = inputs.shape
    h_dim = layer.wh.shape[1]
    h = np.zeros((t_len + 1, b_sz, h_dim))
    c = np.zeros((t_len + 1, b_sz, h_dim))
    gi = np.empty((t_len, b_sz, h_dim))
    gf = np.empty_like(gi)
    gg = np.empty_like(gi)
    go = np.empty_like(gi)
    tc = np.empty_like(gi)
    for t in range(t_len):
        a = inputs[:, t, :] @ layer.wx.T + h[t] @ layer.wh.T + layer.b
        gi[t] = sigmoid(a[:, :h_dim])
        gf[t] = sigmoid(a[:, h_dim : 2 * h_dim])
        gg[t] = np.tanh(a[:, 2 * h_dim : 3 * h_dim])
        go[t] = sigmoid(a[:, 3 * h_dim :])
        c[t + 1] = gf[t] * c[t] + gi[t] * gg[t]
        tc[t] = np.tanh(c[t + 1])
        h[t + 1] = go[t] * tc[t]
    return _LstmTrace(inputs=inputs, h=h, c=c, gi=gi, gf=gf, gg=gg, go=go, tc=tc)


def model_forward(params: ModelParams, batch, mode: str = "train") -> tuple[np.ndarray, ForwardCache]:
    """Run the classifier over a batch of windows.

    ``batch`` is either a (B, T, F) array or a list of SequenceWindow-like
    objects with a ``values`` attribute. Returns per-window fall
    probabilities and the cache required by :func:`model_backward`.

    In ``train`` mode batch normalization uses batch statistics and the cache
    carries refreshed running statistics (the caller decides when to commit
    them); in ``eval`` mode the stored running statistics are used.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    x = _as_batch_array(batch)
    if x.shape[2] != params.input_size:
        raise ShapeMismatchError(
            f"batch has {x.shape[2]} features, model expects {params.input_size}"
        )

    l1 = _lstm_forward(params.lstm1, x)
    _check_finite(l1.h[-1], "lstm1")
    l2 = _lstm_forward(params.lstm2, np.transpose(l1.h[1:], (1, 0, 2)))
    _check_finite(l2.h[-1], "lstm2")

    h_last = l2.h[-1]  # (B, H)
    if mode == "train":
        mean = h_last.mean(axis=0)
        var = h_last.var(axis=0)
        new_rm = (1.0 - BN_MOMENTUM) * params.bn_running_mean + BN_MOMENTUM * mean
        new_rv = (1.0 - BN_MOMENTUM) * params.bn_running_var + BN_MOMENTUM * var
    else:
        mean = params.bn_running_mean
        var = params.bn_running_var
        if np.any(var + BN_EPS <= 0):
            raise NumericalFailureError("non-positive running variance", layer="batchnorm")
        new_rm = params.bn_running_mean
        new_rv = params.bn_running_var
    std = np.sqrt(var + BN_EPS)
    xhat = (h_last - mean) / std
    bn_out = params.bn_gamma * xhat + params.bn_beta
    _check_finite(bn_out, "batchnorm")

    a1 = bn_out @ params.fc1_w.T + params.fc1_b
    relu = np.maximum(a1, 0.0)
    a2 = relu @ params.fc2_w.T + params.fc2_b
    probs = sigmoid(a2[:, 0])
    _check_finite(probs, "sigmoid")

    cache = ForwardCache(
        params=params,
        mode=mode,
        layer1=l1,
        layer2=l2,
        bn_mean=mean,
        bn_var=var,
        bn_std=std,
        bn_xhat=xhat,
        bn_out=bn_out,
        new_running_mean=new_rm,
        new_running_var=new_rv,
        fc_a1=a1,
        fc_relu=relu,
        fc_a2=a2,
        probs=probs,
    )
    return probs, cache


def _lstm_backward(
    layer: LstmLayer, trace: _LstmTrace, dh_seq: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Backpropagation through time for one layer.

    ``dh_seq`` is the (T, B, H) upstream gradient arriving at each hidden
    state from the layer above (zeros where nothing arrives). Returns
    (dwx, dwh, db, dinputs).
    """
    t_len, b_sz, h_dim = dh_seq.shape
    dwx = np.zeros_like(layer.wx)
    dwh = np.zeros_like(layer.wh)
    db = np.zeros_like(layer.b)
    dinputs = np.zeros_like(trace.inputs)
    dh = np.zeros((b_sz, h_dim))
    dc = np.zeros((b_sz, h_dim))
    for t in reversed(range(t_len)):
        dh = dh + dh_seq[t]
        do = dh * trace.tc[t]
        dc = dc + dh * trace.go[t] * (1.0 - trace.tc[t] ** 2)
        di = dc * trace.gg[t]
        dg = dc * trace.gi[t]
        df = dc * trace.c[t]
        da = np.concatenate(
            [
                di * trace.gi[t] * (1.0 - trace.gi[t]),
                df * trace.gf[t] * (1.0 - trace.gf[t]),
                dg * (1.0 - trace.gg[t] ** 2),
                do * trace.go[t] * (1.0 - trace.go[t]),
            ],
            axis=1,
        )
        dwx += da.T @ trace.inputs[:, t, :]
        dwh += da.T @ trace.h[t]
        db += da.sum(axis=0)
        dinputs[:, t, :] = da @ layer.wx
        dh = da @ layer.wh
        dc = dc * trace.gf[t]
    return dwx, dwh, db, dinputs


def model_backward(cache: ForwardCache, loss_grads: np.ndarray, params: ModelParams) -> ModelParams:
    """Exact gradients of the loss w.r.t. every parameter.

    ``loss_grads`` is dL/dprobability per window, as returned by the loss.
    The cache must come from a train-mode forward over the same ``params``
    object; anything else is rejected.
    """
    if cache.params is not params:
        raise ShapeMismatchError("cache was produced for a different ModelParams object")
    if cache.mode != "train":
        raise ShapeMismatchError("backward requires a train-mode cache")
    loss_grads = np.asarray(loss_grads, dtype=np.float64)
    if loss_grads.shape != cache.probs.shape:
        raise ShapeMismatchError(
            f"loss_grads shape {loss_grads.shape} does not match batch {cache.probs.shape}"
        )

    grads = zero_grads(params)
    b_sz = cache.batch_size

    # sigmoid output
    da2 = (loss_grads * cache.probs * (1.0 - cache.probs))[:, None]  # (B, 1)
    grads.fc2_w[:] = da2.T @ cache.fc_relu
    grads.fc2_b[:] = da2.sum(axis=0)
    drelu = da2 @ params.fc2_w
    da1 = drelu * (cache.fc_a1 > 0.0)
    grads.fc1_w[:] = da1.T @ cache.bn_out
    grads.fc1_b[:] = da1.sum(axis=0)
    dbn_out = da1 @ params.fc1_w

    # batch normalization over the batch axis
    grads.bn_gamma[:] = (dbn_out * cache.bn_xhat).sum(axis=0)
    grads.bn_beta[:] = dbn_out.sum(axis=0)
    dxhat = dbn_out * params.bn_gamma
    dh_last = (
        dxhat
        - dxhat.mean(axis=0)
        - cache.bn_xhat * (dxhat * cache.bn_xhat).mean(axis=0)
    ) / cache.bn_std

    # layer 2 receives upstream gradient only at the final timestep
    t_len = cache.layer1.inputs.shape[1]
    h_dim = params.hidden_size
    dh_seq2 = np.zeros((t_len, b_sz, h_dim))
    dh_seq2[t_len - 1] = dh_last
    dwx2, dwh2, db2, dinto_l2 = _lstm_backward(params.lstm2, cache.layer2, dh_seq2)
    grads.lstm2.wx[:] = dwx2
    grads.lstm2.wh[:] = dwh2
    grads.lstm2.b[:] = db2

    # layer 1 receives per-timestep gradients from layer 2's inputs
    dh_seq1 = np.transpose(dinto_l2, (1, 0, 2))
    dwx1, dwh1, db1, _ = _lstm_backward(params.lstm1, cache.layer1, dh_seq1)
    grads.lstm1.wx[:] = dwx1
    grads.lstm1.wh[:] = dwh1
    grads.lstm1.b[:] = db1
    return grads


def commit_batchnorm_stats(params: ModelParams, cache: ForwardCache) -> None:
    """Adopt the running statistics refreshed by a train-mode forward."""
    params.bn_running_mean[:] = cache.new_running_mean
    params.bn_running_var[:] = cache.new_running_var
