"""Point-wise unsupervised outlier detectors used as comparison rows.

Both detectors score one merged sensor record at a time, with no temporal
context, which is exactly why the sequential model exists. HBOS scores a
record by how empty its per-feature histogram bins are; Isolation Forest
scores it by how quickly random axis-aligned splits isolate it.

Models serialize to a documented JSON text schema so fitted fixtures can
be checked into tests.
"""

from __future__ import annotations

import json
import math
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

DENSITY_FLOOR = 1e-9
AUTO_SUBSAMPLE_CAP = 256
EULER_GAMMA = 0.5772156649015329


def matrix_from_records(records) -> np.ndarray:
    """Stack MergedRecord-like objects (anything with .values) into (N,F)."""
    return np.asarray([list(r.values) for r in records], dtype=np.float64)


# ---------------------------------------------------------------------------
# HBOS


@dataclass(frozen=True)
class FeatureHistogram:
    edges: tuple
    densities: tuple

    def __post_init__(self):
        if len(self.edges) != len(self.densities) + 1:
            raise ValueError("edges must be one longer than densities")
        if any(b <= a for a, b in zip(self.edges, self.edges[1:])):
            raise ValueError("edges must be strictly increasing")
        if any(d < 0 for d in self.densities):
            raise ValueError("densities must be non-negative")


@dataclass(frozen=True)
class HbosModel:
    histograms: tuple
    bins: int
    threshold: float = 0.5


def hbos_fit(values: np.ndarray, bins: int | None = None, threshold: float = 0.5) -> HbosModel:
    """Equal-width per-feature histograms, densities scaled to max 1.

    ``bins`` defaults to ceil(sqrt(n)). A constant feature collapses to a
    single bin spanning a unit interval around the value, density 1.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] < 1:
        raise ValueError(f"need a nonempty (n, features) matrix, got shape {values.shape}")
    n, n_features = values.shape
    if bins is None:
        bins = int(math.ceil(math.sqrt(n)))
    if bins < 1:
        raise ValueError(f"bins must be >= 1, got {bins}")
    histograms = []
    for j in range(n_features):
        col = values[:, j]
        lo, hi = float(np.min(col)), float(np.max(col))
        if lo == hi:
            edges = np.asarray([lo - 0.5, hi + 0.5])
        else:
            edges = np.linspace(lo, hi, bins + 1)
        counts, edges = np.histogram(col, bins=edges)
        densities = counts / counts.max()
        histograms.append(
            FeatureHistogram(edges=tuple(map(float, edges)), densities=tuple(map(float, densities)))
        )
    return HbosModel(histograms=tuple(histograms), bins=bins, threshold=threshold)


def _bin_density(hist: FeatureHistogram, value: float) -> float:
    edges = hist.edges
    if value < edges[0] or value > edges[-1]:
        return 0.0  # never observed: the floor density applies
    if value == edges[-1]:
        return hist.densities[-1]
    return hist.densities[bisect_right(edges, value) - 1]


def hbos_score(model: HbosModel, record) -> float:
    """Sum over features of log(1 / max(density at value, floor))."""
    record = np.asarray(record, dtype=np.float64).ravel()
    if record.shape[0] != len(model.histograms):
        raise ValueError(
            f"record has {record.shape[0]} features, model expects {len(model.histograms)}"
        )
    total = 0.0
    for value, hist in zip(record, model.histograms):
        total += math.log(1.0 / max(_bin_density(hist, float(value)), DENSITY_FLOOR))
    return total


def hbos_max_score(model: HbosModel) -> float:
    """Score of a record outside every observed range."""
    return len(model.histograms) * math.log(1.0 / DENSITY_FLOOR)


def hbos_normalized_score(model: HbosModel, record) -> float:
    """Score rescaled to [0,1] by the out-of-range maximum."""
    return hbos_score(model, record) / hbos_max_score(model)


# ---------------------------------------------------------------------------
# Isolation Forest


@dataclass(frozen=True)
class IForestModel:
    trees: tuple  # nested dicts; leaves {"size": s}, nodes add feature/split/left/right
    subsample: int
    n_estimators: int
    max_features: float


def average_path_length(m: int) -> float:
    """c(m), the BST unsuccessful-search normalizer from the iForest paper."""
    if m <= 1:
        return 0.0
    if m == 2:
        return 1.0
    return 2.0 * (math.log(m - 1.0) + EULER_GAMMA) - 2.0 * (m - 1.0) / m


def _grow_tree(
    rows: np.ndarray, features: np.ndarray, depth: int, limit: int, rng: np.random.Generator
) -> dict:
    n = rows.shape[0]
    if n <= 1 or depth >= limit:
        return {"size": int(n)}
    usable = [int(f) for f in features if rows[:, f].min() < rows[:, f].max()]
    if not usable:
        return {"size": int(n)}  # all candidate features constant here
    feature = usable[int(rng.integers(0, len(usable)))]
    lo, hi = float(rows[:, feature].min()), float(rows[:, feature].max())
    split = float(rng.uniform(lo, hi))
    mask = rows[:, feature] < split
    return {
        "feature": feature,
        "split": split,
        "left": _grow_tree(rows[mask], features, depth + 1, limit, rng),
        "right": _grow_tree(rows[~mask], features, depth + 1, limit, rng),
    }


def iforest_fit(
    values: np.ndarray,
    n_estimators: int = 300,
    subsample: int | str = "auto",
    max_features: float = 1.0,
    seed: int = 0,
) -> IForestModel:
    """Grow ``n_estimators`` isolation trees on seeded subsamples.

    ``subsample="auto"`` takes min(256, n). Each tree draws a
    ``max_features`` fraction of the feature set and splits uniformly at
    random within the node's observed range; height is capped at
    ceil(log2(subsample)).
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] < 2:
        raise ValueError(f"need at least 2 records, got shape {values.shape}")
    n, n_features = values.shape
    if n_estimators < 1:
        raise ValueError(f"n_estimators must be >= 1, got {n_estimators}")
    if subsample == "auto":
        subsample = min(AUTO_SUBSAMPLE_CAP, n)
    subsample = int(subsample)
    if not 2 <= subsample <= n:
        raise ValueError(f"subsample must be in [2, {n}], got {subsample}")
    if not 0.0 < max_features <= 1.0:
        raise ValueError(f"max_features must be in (0,1], got {max_features}")
    k = max(1, int(round(max_features * n_features)))
    limit = int(math.ceil(math.log2(subsample)))
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_estimators):
        rng = np.random.default_rng(child)
        idx = rng.choice(n, size=subsample, replace=False)
        features = rng.choice(n_features, size=k, replace=False)
        trees.append(_grow_tree(values[idx], features, 0, limit, rng))
    return IForestModel(
        trees=tuple(trees),
        subsample=subsample,
        n_estimators=n_estimators,
        max_features=max_features,
    )


def _path_length(tree: dict, record: np.ndarray, depth: int = 0) -> float:
    while "feature" in tree:
        tree = tree["left"] if record[tree["feature"]] < tree["split"] else tree["right"]
        depth += 1
    return depth + average_path_length(tree["size"])


def iforest_score(model: IForestModel, record) -> float:
    """s = 2^(-E[h(x)] / c(subsample)); higher means easier to isolate."""
    record = np.asarray(record, dtype=np.float64).ravel()
    mean_path = sum(_path_length(tree, record) for tree in model.trees) / len(model.trees)
    return 2.0 ** (-mean_path / average_path_length(model.subsample))


# ---------------------------------------------------------------------------
# Alert rules and persistence


def calibrate_quantile_threshold(scores, fraction: float) -> float:
    """Cutoff flagging roughly the top ``fraction`` of the given scores."""
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0,1), got {fraction}")
    scores = np.asarray(scores, dtype=np.float64)
    if scores.size == 0:
        raise ValueError("need at least one score to calibrate")
    return float(np.quantile(scores, 1.0 - fraction))


def flag_outliers(scores, threshold: float) -> np.ndarray:
    """1 where score strictly exceeds the threshold."""
    return (np.asarray(scores, dtype=np.float64) > threshold).astype(int)


def save_model(model, path: str) -> None:
    if isinstance(model, HbosModel):
        payload = {
            "kind": "hbos",
            "bins": model.bins,
            "threshold": model.threshold,
            "features": [
                {"edges": list(h.edges), "densities": list(h.densities)}
                for h in model.histograms
            ],
        }
    elif isinstance(model, IForestModel):
        payload = {
            "kind": "iforest",
            "subsample": model.subsample,
            "n_estimators": model.n_estimators,
            "max_features": model.max_features,
            "trees": list(model.trees),
        }
    else:
        raise TypeError(f"cannot save {type(model).__name__}")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")


def load_model(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    kind = payload.get("kind")
    if kind == "hbos":
        return HbosModel(
            histograms=tuple(
                FeatureHistogram(edges=tuple(f["edges"]), densities=tuple(f["densities"]))
                for f in payload["features"]
            ),
            bins=payload["bins"],
            threshold=payload["threshold"],
        )
    if kind == "iforest":
        return IForestModel(
            trees=tuple(payload["trees"]),
            subsample=payload["subsample"],
            n_estimators=payload["n_estimators"],
            max_features=payload["max_features"],
        )
    raise ValueError(f"unrecognized model kind {kind!r} in {path}")
