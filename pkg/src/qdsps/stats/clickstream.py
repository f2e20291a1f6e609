"""Time-tagged detector events and their CSV/JSON serialisation."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from ..core.rng import stream_rng

SINGLE = "S"
HBT_CHANNELS = ("A", "B")
SPLIT_STREAM = 7
PathLike = Union[str, Path]


@dataclass
class ClickStream:
    """Events sorted by timestamp (ps); channels are "S" or "A"/"B".

    `meta` carries at least `rep_period` when known, plus provenance such as
    the scenario hash and seed.
    """

    timestamps: np.ndarray
    channels: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=float)
        self.channels = np.asarray(self.channels, dtype="<U1")
        if self.timestamps.shape != self.channels.shape or self.timestamps.ndim != 1:
            raise ValueError("timestamps and channels must be 1-D and of equal length")
        if not np.all(np.isfinite(self.timestamps)):
            raise ValueError("timestamps must be finite")
        if np.any(np.diff(self.timestamps) < 0):
            raise ValueError("timestamps must be non-decreasing")
        names = set(np.unique(self.channels).tolist())
        if not (names <= {SINGLE} or names <= set(HBT_CHANNELS)):
            raise ValueError(f"channels {sorted(names)} are neither single nor A/B")

    def __len__(self) -> int:
        return int(self.timestamps.size)

    @property
    def is_two_channel(self) -> bool:
        if self.timestamps.size:
            return bool(self.channels[0] != SINGLE)
        return self.meta.get("layout") == "AB"

    @property
    def rep_period(self):
        return self.meta.get("rep_period")

    def channel(self, name: str) -> np.ndarray:
        return self.timestamps[self.channels == name]

    def shifted(self, offset: float) -> "ClickStream":
        return ClickStream(self.timestamps + offset, self.channels.copy(), dict(self.meta))

    def thinned(self, keep_fraction: float, seed: int) -> "ClickStream":
        """Keep each event independently with probability `keep_fraction`."""
        keep = stream_rng(seed, 11).random(len(self)) < keep_fraction
        return ClickStream(self.timestamps[keep], self.channels[keep], dict(self.meta))

    @classmethod
    def empty(cls, meta=None) -> "ClickStream":
        return cls(np.empty(0), np.empty(0, dtype="<U1"), dict(meta or {}))

    @classmethod
    def from_unsorted(cls, timestamps, channels, meta=None) -> "ClickStream":
        timestamps = np.asarray(timestamps, dtype=float)
        order = np.argsort(timestamps, kind="stable")
        return cls(timestamps[order], np.asarray(channels, dtype="<U1")[order], dict(meta or {}))

    # ---- IO ---------------------------------------------------------------
    def to_csv(self, path: PathLike, sidecar: bool = True) -> None:
        """Write `channel,timestamp_ps` rows; floats use repr so reading back is exact."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["channel", "timestamp_ps"])
            w.writerows(zip(self.channels.tolist(), map(repr, self.timestamps.tolist())))
        if sidecar:
            with open(sidecar_path(path), "w") as fh:
                json.dump(self.meta, fh, indent=2, sort_keys=True)
                fh.write("\n")

    @classmethod
    def from_csv(cls, path: PathLike) -> "ClickStream":
        path = Path(path)
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["channel", "timestamp_ps"]:
            raise ValueError(f"{path}: expected header 'channel,timestamp_ps'")
        body = rows[1:]
        channels = [r[0] for r in body]
        stamps = [float(r[1]) for r in body]
        meta = {}
        side = sidecar_path(path)
        if side.exists():
            meta = json.loads(side.read_text())
        return cls(np.array(stamps, dtype=float), np.array(channels, dtype="<U1"), meta)

    @classmethod
    def from_raw(cls, path: PathLike, rep_period=None) -> "ClickStream":
        """Import a two-column `timestamp_ps,channel` file (header optional)."""
        stamps, channels = [], []
        with open(path, newline="") as fh:
            for i, row in enumerate(csv.reader(fh)):
                if not row or row[0].startswith("#"):
                    continue
                if i == 0 and row[0].strip() == "timestamp_ps":
                    continue
                if len(row) != 2:
                    raise ValueError(f"{path}:{i + 1}: expected two columns")
                stamps.append(float(row[0]))
                channels.append(row[1].strip())
        meta = {"rep_period": rep_period} if rep_period is not None else {}
        return cls.from_unsorted(stamps, channels, meta)


def sidecar_path(path: PathLike) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def split_hbt(stream: ClickStream, seed: int) -> ClickStream:
    """Route each event to A or B with probability 1/2 (50:50 beam splitter)."""
    if stream.is_two_channel:
        raise ValueError("stream is already split into two channels")
    pick = stream_rng(seed, SPLIT_STREAM).random(len(stream)) < 0.5
    channels = np.where(pick, "A", "B").astype("<U1")
    meta = dict(stream.meta)
    meta["split_seed"] = int(seed)
    meta["layout"] = "AB"
    return ClickStream(stream.timestamps.copy(), channels, meta)
