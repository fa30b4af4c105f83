"""Time-tag records and their on-disk formats.

Binary format: a flat sequence of 12-byte little-endian records with no
header::

    offset 0  u16  channel
    offset 2  u16  clock_id
    offset 4  u64  timestamp in ps on the local clock of ``clock_id``

The CSV form has the header ``channel,clock_id,timestamp_ps`` and one
decimal record per line.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np

TAG_DTYPE = np.dtype([("channel", "<u2"), ("clock_id", "<u2"), ("timestamp", "<u8")])
assert TAG_DTYPE.itemsize == 12

CSV_HEADER = ("channel", "clock_id", "timestamp_ps")

# channel map of the simulated setup
CH_BSM = (0, 1, 2, 3)  # c_H, c_V, d_H, d_V
CH_HERALD = (4, 5)  # XX2 analyzer: first / second basis vector
CH_PPS_BSM = 6
CH_PPS_HERALD = 7
CLOCK_BSM = 0
CLOCK_HERALD = 1


def make_tags(channel, clock_id, timestamp) -> np.ndarray:
    n = len(timestamp)
    out = np.empty(n, dtype=TAG_DTYPE)
    out["channel"] = channel
    out["clock_id"] = clock_id
    out["timestamp"] = timestamp
    return out


def sort_tags(tags: np.ndarray) -> np.ndarray:
    """Stable order by (clock_id, timestamp, channel)."""
    order = np.lexsort((tags["channel"], tags["timestamp"], tags["clock_id"]))
    return tags[order]


@dataclass
class TimeTagStream:
    """Sorted tag records from one or more taggers."""

    tags: np.ndarray

    def __post_init__(self):
        if self.tags.dtype != TAG_DTYPE:
            raise ValueError("tags must use TAG_DTYPE")

    def __len__(self) -> int:
        return len(self.tags)

    def clock(self, clock_id: int) -> np.ndarray:
        return self.tags[self.tags["clock_id"] == clock_id]

    def channel(self, channel: int) -> np.ndarray:
        """Timestamps (int64 ps) of one channel, ascending."""
        sel = self.tags[self.tags["channel"] == channel]
        return sel["timestamp"].astype(np.int64)

    def channels(self, channels) -> tuple[np.ndarray, np.ndarray]:
        """Merged ``(timestamps, channel)`` of several channels, ordered by time."""
        sel = self.tags[np.isin(self.tags["channel"], channels)]
        order = np.lexsort((sel["channel"], sel["timestamp"]))
        sel = sel[order]
        return sel["timestamp"].astype(np.int64), sel["channel"].astype(np.int64)

    def is_sorted(self) -> bool:
        for ch in np.unique(self.tags["channel"]):
            if np.any(np.diff(self.channel(int(ch))) < 0):
                return False
        return True

    def head(self, max_ps: int) -> "TimeTagStream":
        return TimeTagStream(self.tags[self.tags["timestamp"] < max_ps])


def tags_to_bytes(tags: np.ndarray) -> bytes:
    return np.ascontiguousarray(tags, dtype=TAG_DTYPE).tobytes()


def write_binary(path, tags: np.ndarray) -> None:
    Path(path).write_bytes(tags_to_bytes(tags))


def read_binary(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) % TAG_DTYPE.itemsize:
        raise ValueError(f"{path}: size {len(data)} is not a multiple of {TAG_DTYPE.itemsize}")
    return np.frombuffer(data, dtype=TAG_DTYPE).copy()


def tags_to_csv(tags: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write(",".join(CSV_HEADER) + "\n")
    for ch, ck, ts in zip(tags["channel"].tolist(), tags["clock_id"].tolist(), tags["timestamp"].tolist()):
        buf.write(f"{ch},{ck},{ts}\n")
    return buf.getvalue()


def write_csv(path, tags: np.ndarray) -> None:
    Path(path).write_text(tags_to_csv(tags), newline="")


def read_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if tuple(header or ()) != CSV_HEADER:
            raise ValueError(f"{path}: expected header {','.join(CSV_HEADER)}")
        vals = [(int(a), int(b), int(c)) for a, b, c in rows]
    out = np.empty(len(vals), dtype=TAG_DTYPE)
    if vals:
        arr = np.array(vals, dtype=np.uint64)
        out["channel"], out["clock_id"], out["timestamp"] = arr[:, 0], arr[:, 1], arr[:, 2]
    return out
