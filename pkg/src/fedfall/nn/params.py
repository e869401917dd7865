"""Flat-vector view of the model weights.

Aggregation, the proximal penalty, and encrypted transport all operate on a
single float64 vector. The manifest (tensor name, shape) fixes the layout; it
is derived from the model dimensions alone, so two models built with the same
sizes always agree on coordinate order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from fedfall.errors import ShapeMismatchError
from fedfall.nn.model import LstmLayer, ModelParams, NON_TRAINABLE

_FILE_MAGIC = b"EPFLPV1\n"


@dataclass(frozen=True)
class ParamManifest:
    """Ordered (name, shape) entries describing one flat layout."""

    entries: tuple[tuple[str, tuple[int, ...]], ...]

    @property
    def dim(self) -> int:
        return sum(int(np.prod(shape)) for _, shape in self.entries)

    def offsets(self) -> dict[str, tuple[int, int]]:
        out = {}
        pos = 0
        for name, shape in self.entries:
            size = int(np.prod(shape))
            out[name] = (pos, pos + size)
            pos += size
        return out

    def trainable_mask(self) -> np.ndarray:
        mask = np.zeros(self.dim, dtype=bool)
        for name, (lo, hi) in self.offsets().items():
            if name not in NON_TRAINABLE:
                mask[lo:hi] = True
        return mask


def manifest_for(input_size: int, hidden_size: int) -> ParamManifest:
    h = hidden_size
    return ParamManifest(
        entries=(
            ("lstm1_wx", (4 * h, input_size)),
            ("lstm1_wh", (4 * h, h)),
            ("lstm1_b", (4 * h,)),
            ("lstm2_wx", (4 * h, h)),
            ("lstm2_wh", (4 * h, h)),
            ("lstm2_b", (4 * h,)),
            ("bn_gamma", (h,)),
            ("bn_beta", (h,)),
            ("bn_running_mean", (h,)),
            ("bn_running_var", (h,)),
            ("fc1_w", (h, h)),
            ("fc1_b", (h,)),
            ("fc2_w", (1, h)),
            ("fc2_b", (1,)),
        )
    )


def params_to_vector(params: ModelParams) -> np.ndarray:
    return np.concatenate([arr.ravel() for _, arr in params.tensors()]).astype(np.float64)


def vector_to_params(vec: np.ndarray, input_size: int, hidden_size: int) -> ModelParams:
    vec = np.asarray(vec, dtype=np.float64)
    manifest = manifest_for(input_size, hidden_size)
    if vec.shape != (manifest.dim,):
        raise ShapeMismatchError(
            f"vector has shape {vec.shape}, layout for input={input_size} "
            f"hidden={hidden_size} needs ({manifest.dim},)"
        )
    arrs = {}
    for name, shape in manifest.entries:
        lo, hi = manifest.offsets()[name]
        arrs[name] = vec[lo:hi].reshape(shape).copy()
    return ModelParams(
        lstm1=LstmLayer(arrs["lstm1_wx"], arrs["lstm1_wh"], arrs["lstm1_b"]),
        lstm2=LstmLayer(arrs["lstm2_wx"], arrs["lstm2_wh"], arrs["lstm2_b"]),
        bn_gamma=arrs["bn_gamma"],
        bn_beta=arrs["bn_beta"],
        bn_running_mean=arrs["bn_running_mean"],
        bn_running_var=arrs["bn_running_var"],
        fc1_w=arrs["fc1_w"],
        fc1_b=arrs["fc1_b"],
        fc2_w=arrs["fc2_w"],
        fc2_b=arrs["fc2_b"],
        hidden_size=hidden_size,
    )


def grads_to_vector(grads: ModelParams) -> np.ndarray:
    """Flatten a gradient container; running-stat slots come out as zeros."""
    return params_to_vector(grads)


def save_params(path, params: ModelParams) -> None:
    """Write weights as a JSON header plus a little-endian float64 blob."""
    header = {
        "input_size": params.input_size,
        "hidden_size": params.hidden_size,
        "tensors": [[name, list(arr.shape)] for name, arr in params.tensors()],
    }
    vec = params_to_vector(params)
    with open(path, "wb") as fh:
        fh.write(_FILE_MAGIC)
        blob = json.dumps(header).encode("utf-8")
        fh.write(len(blob).to_bytes(4, "little"))
        fh.write(blob)
        fh.write(vec.astype("<f8").tobytes())


def load_params(path) -> ModelParams:
    with open(path, "rb") as fh:
        magic = fh.read(len(_FILE_MAGIC))
        if magic != _FILE_MAGIC:
            raise ShapeMismatchError(f"{path}: not a parameter file")
        hlen = int.from_bytes(fh.read(4), "little")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        vec = np.frombuffer(fh.read(), dtype="<f8").astype(np.float64)
    expected = manifest_for(header["input_size"], header["hidden_size"])
    stored = tuple((name, tuple(shape)) for name, shape in header["tensors"])
    if stored != expected.entries:
        raise ShapeMismatchError(f"{path}: tensor table does not match declared sizes")
    return vector_to_params(vec, header["input_size"], header["hidden_size"])
