"""Raw-record ingestion and multi-sensor alignment.

The source format is a comma-separated activity log: one row per sensor
reading with a sequence name (individual letter + sequence number, e.g.
"A01"), the sensor's hardware tag, a timestamp, a wall-clock date string,
three position coordinates, and an activity label.

Alignment merges the three body locations (one ankle, chest, belt) into
9-feature records. Streams of unequal length are cut to the shortest by
seeded random subsampling that preserves temporal order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from fedfall.errors import ConfigError, MissingSensorError

logger = logging.getLogger(__name__)

SENSOR_LOCATIONS = {
    "010-000-024-033": "left_ankle",
    "010-000-030-096": "right_ankle",
    "020-000-033-111": "chest",
    "020-000-032-221": "belt",
}
ANKLE_TAGS = ("010-000-024-033", "010-000-030-096")
CHEST_TAG = "020-000-033-111"
BELT_TAG = "020-000-032-221"

ACTIVITIES = (
    "lying",
    "walking",
    "sitting",
    "standing up from lying",
    "sitting on the ground",
    "lying down",
    "on all fours",
    "falling",
    "standing up from sitting on the ground",
    "sitting down",
    "standing up from sitting",
)
FALL_ACTIVITY = "falling"


@dataclass(frozen=True)
class RawRecord:
    sequence_name: str
    sensor_tag: str
    timestamp: int
    date: str
    x: float
    y: float
    z: float
    activity: str


@dataclass(frozen=True)
class MergedRecord:
    """One aligned time step: ankle, chest, belt position triples."""

    values: tuple[float, ...]  # 9 reals: ankle xyz, chest xyz, belt xyz
    label: int  # 1 iff any contributing sensor reading was a fall

    def __post_init__(self):
        if len(self.values) != 9:
            raise ValueError(f"merged record needs 9 values, got {len(self.values)}")
        if self.label not in (0, 1):
            raise ValueError(f"label must be 0 or 1, got {self.label}")


@dataclass(frozen=True)
class ColumnMap:
    """Zero-based column indices of the 8 fields in the CSV."""

    sequence_name: int = 0
    sensor_tag: int = 1
    timestamp: int = 2
    date: int = 3
    x: int = 4
    y: int = 5
    z: int = 6
    activity: int = 7

    def indices(self) -> dict[str, int]:
        return {
            "sequence_name": self.sequence_name,
            "sensor_tag": self.sensor_tag,
            "timestamp": self.timestamp,
            "date": self.date,
            "x": self.x,
            "y": self.y,
            "z": self.z,
            "activity": self.activity,
        }

    def __post_init__(self):
        idx = self.indices()
        if any(v < 0 for v in idx.values()):
            raise ConfigError("column indices must be non-negative")
        if len(set(idx.values())) != len(idx):
            raise ConfigError("column indices must be distinct")


@dataclass
class ParseResult:
    records: list[RawRecord]
    malformed_count: int


def individual_of(sequence_name: str) -> str:
    """Sequence names are one letter plus a number, e.g. 'B03' -> 'B'."""
    return sequence_name[:1].upper()


def parse_ldpa_csv(path, column_map: ColumnMap | None = None) -> ParseResult:
    """Read raw records in file order; malformed rows are counted, not fatal.

    A first row that does not parse is treated as an optional header. Rows
    with unknown sensor tags or activity labels count as malformed.
    """
    cmap = column_map or ColumnMap()
    needed = max(cmap.indices().values()) + 1
    records: list[RawRecord] = []
    malformed = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh):
            line = line.strip()
            if not line:
                continue
            parts = [p.strip() for p in line.split(",")]
            try:
                if len(parts) < needed:
                    raise ValueError(f"only {len(parts)} columns, need {needed}")
                tag = parts[cmap.sensor_tag]
                if tag not in SENSOR_LOCATIONS:
                    raise ValueError(f"unknown sensor tag {tag!r}")
                activity = parts[cmap.activity]
                if activity not in ACTIVITIES:
                    raise ValueError(f"unknown activity {activity!r}")
                rec = RawRecord(
                    sequence_name=parts[cmap.sequence_name],
                    sensor_tag=tag,
                    timestamp=int(parts[cmap.timestamp]),
                    date=parts[cmap.date],
                    x=float(parts[cmap.x]),
                    y=float(parts[cmap.y]),
                    z=float(parts[cmap.z]),
                    activity=activity,
                )
            except ValueError as err:
                if lineno == 0:
                    continue  # optional header row
                malformed += 1
                logger.debug("skipping malformed row %d: %s", lineno + 1, err)
                continue
            records.append(rec)
    if malformed:
        logger.warning("%s: skipped %d malformed rows", path, malformed)
    return ParseResult(records=records, malformed_count=malformed)


def _subsample_preserving_order(stream: list[RawRecord], length: int, rng: np.random.Generator) -> list[RawRecord]:
    if len(stream) <= length:
        return list(stream)
    keep = np.sort(rng.choice(len(stream), size=length, replace=False))
    return [stream[i] for i in keep]


def align_and_merge(records: list[RawRecord], rng: np.random.Generator) -> list[MergedRecord]:
    """Merge one sequence's sensor streams into 9-feature records.

    Uses whichever ankle stream has more records (ties go to the
    lexicographically smaller tag), requires chest and belt, cuts all three
    streams to the shortest length by order-preserving random subsampling,
    and pairs them up positionally. A merged record is labeled 1 when any
    of its three source readings was a fall.
    """
    by_tag: dict[str, list[RawRecord]] = {}
    for rec in records:
        by_tag.setdefault(rec.sensor_tag, []).append(rec)
    for tag in by_tag:
        by_tag[tag].sort(key=lambda r: r.timestamp)

    ankles = [(tag, by_tag[tag]) for tag in ANKLE_TAGS if by_tag.get(tag)]
    if not ankles:
        raise MissingSensorError("no ankle stream present")
    ankles.sort(key=lambda kv: (-len(kv[1]), kv[0]))
    ankle = ankles[0][1]
    chest = by_tag.get(CHEST_TAG)
    belt = by_tag.get(BELT_TAG)
    if not chest:
        raise MissingSensorError("chest stream missing")
    if not belt:
        raise MissingSensorError("belt stream missing")

    length = min(len(ankle), len(chest), len(belt))
    streams = [_subsample_preserving_order(s, length, rng) for s in (ankle, chest, belt)]

    merged = []
    for a, c, b in zip(*streams):
        label = int(any(r.activity == FALL_ACTIVITY for r in (a, c, b)))
        merged.append(
            MergedRecord(values=(a.x, a.y, a.z, c.x, c.y, c.z, b.x, b.y, b.z), label=label)
        )
    return merged


def group_by_sequence(records: list[RawRecord]) -> dict[str, list[RawRecord]]:
    out: dict[str, list[RawRecord]] = {}
    for rec in records:
        out.setdefault(rec.sequence_name, []).append(rec)
    return out
