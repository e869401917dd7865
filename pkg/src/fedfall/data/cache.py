"""Binary dataset cache and its human-readable summary.

Layout: magic bytes, a 4-byte little-endian JSON header length, the JSON
header (window/feature sizes, counts, labels, origins), then the train and
test window values as contiguous little-endian float64 blocks.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from fedfall.data.split import DatasetSplit
from fedfall.data.windows import SequenceWindow

MAGIC = b"EPFLDS1"


def _window_block(windows: list[SequenceWindow]) -> bytes:
    if not windows:
        return b""
    return np.stack([w.values for w in windows]).astype("<f8").tobytes()


def save_dataset(path, split: DatasetSplit, write_summary: bool = True) -> None:
    path = Path(path)
    for name, group in (("train", split.train), ("test", split.test)):
        if group:
            t, f = group[0].values.shape
            break
    else:
        raise ValueError("empty dataset")
    header = {
        "window": t,
        "features": f,
        "n_train": len(split.train),
        "n_test": len(split.test),
        "train_labels": [w.label for w in split.train],
        "test_labels": [w.label for w in split.test],
        "train_origins": [list(w.origin) for w in split.train],
        "test_origins": [list(w.origin) for w in split.test],
    }
    blob = json.dumps(header).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(blob).to_bytes(4, "little"))
        fh.write(blob)
        fh.write(_window_block(split.train))
        fh.write(_window_block(split.test))
    if write_summary:
        Path(str(path) + ".summary.txt").write_text(summary_text(split), encoding="utf-8")


def _read_block(fh, count: int, t: int, f: int) -> np.ndarray:
    raw = fh.read(count * t * f * 8)
    if len(raw) != count * t * f * 8:
        raise ValueError("truncated dataset cache")
    return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(count, t, f)


def load_dataset(path) -> DatasetSplit:
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ValueError(f"{path}: not a dataset cache")
        hlen = int.from_bytes(fh.read(4), "little")
        header = json.loads(fh.read(hlen).decode("utf-8"))
        t, f = header["window"], header["features"]
        train_vals = _read_block(fh, header["n_train"], t, f)
        test_vals = _read_block(fh, header["n_test"], t, f)

    def rebuild(values, labels, origins):
        return [
            SequenceWindow(values=values[i], label=int(labels[i]), origin=tuple(origins[i]))
            for i in range(len(labels))
        ]

    split = DatasetSplit(
        train=rebuild(train_vals, header["train_labels"], header["train_origins"]),
        test=rebuild(test_vals, header["test_labels"], header["test_origins"]),
    )
    for w in split.train:
        split.train_by_client.setdefault(w.individual, []).append(w)
    for w in split.test:
        split.test_by_client.setdefault(w.individual, []).append(w)
    return split


def summary_text(split: DatasetSplit) -> str:
    lines = ["dataset summary", "==============="]
    for name, group, by_client in (
        ("train", split.train, split.train_by_client),
        ("test", split.test, split.test_by_client),
    ):
        pos = sum(w.label for w in group)
        lines.append(f"{name}: {len(group)} windows, {pos} fall ({_pct(pos, len(group))})")
        for cid in sorted(by_client):
            ws = by_client[cid]
            cpos = sum(w.label for w in ws)
            lines.append(f"  {cid}: {len(ws)} windows, {cpos} fall ({_pct(cpos, len(ws))})")
    return "\n".join(lines) + "\n"


def _pct(part: int, whole: int) -> str:
    return f"{100.0 * part / whole:.2f}%" if whole else "n/a"
