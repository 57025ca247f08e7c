"""Panel ingestion and elementary panel transforms.

A TimePanel is an n x T array of aligned series with labels, timestamps and
optional sector tags. All transforms are pure: they validate their input and
return new panels, so concurrent use is safe.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np
import pandas as pd

from .errors import DataError

__all__ = [
    "TimePanel",
    "SectorMap",
    "PeriodFilter",
    "load_panel",
    "load_sector_map",
    "log_returns",
    "center",
    "slice_period",
    "synthetic_timestamps",
]


@dataclass(frozen=True)
class TimePanel:
    """An n x T panel: rows are series, columns are observation dates.

    Attributes:
        values: (n, T) float array, no missing values.
        labels: n unique series identifiers.
        timestamps: T strictly increasing dates (datetime64[D]).
        sectors: optional n sector tags, one per series.
        row_means: means removed by :func:`center`, None before centering.
    """

    values: np.ndarray
    labels: tuple[str, ...]
    timestamps: np.ndarray
    sectors: tuple[str, ...] | None = None
    row_means: np.ndarray | None = None

    def __post_init__(self) -> None:
        values = np.ascontiguousarray(np.asarray(self.values, dtype=float))
        if values.ndim != 2:
            raise DataError(f"panel values must be 2-d, got shape {values.shape}")
        n, width = values.shape
        if n < 2 or width < 2:
            raise DataError(f"panel needs n >= 2 and T >= 2, got {n} x {width}")
        if not np.all(np.isfinite(values)):
            raise DataError("panel contains missing or non-finite values")
        labels = tuple(str(s) for s in self.labels)
        if len(labels) != n:
            raise DataError(f"{len(labels)} labels for {n} series")
        if len(set(labels)) != n:
            raise DataError("duplicate series labels")
        timestamps = np.asarray(self.timestamps, dtype="datetime64[D]")
        if timestamps.shape != (width,):
            raise DataError(f"{timestamps.size} timestamps for {width} columns")
        if np.any(np.diff(timestamps) <= np.timedelta64(0, "D")):
            raise DataError("timestamps must be strictly increasing")
        sectors = self.sectors
        if sectors is not None:
            sectors = tuple(str(s) for s in sectors)
            if len(sectors) != n:
                raise DataError(f"{len(sectors)} sector tags for {n} series")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "timestamps", timestamps)
        object.__setattr__(self, "sectors", sectors)
        if self.row_means is not None:
            object.__setattr__(
                self, "row_means", np.asarray(self.row_means, dtype=float).reshape(n)
            )

    @property
    def n_series(self) -> int:
        return self.values.shape[0]

    @property
    def n_obs(self) -> int:
        return self.values.shape[1]

    def with_values(self, values: np.ndarray, **changes) -> "TimePanel":
        """Return a copy with new values (and optional field overrides)."""
        return replace(self, values=values, **changes)

    def sector_map(self) -> "SectorMap":
        if self.sectors is None:
            raise DataError("panel has no sector tags")
        return SectorMap(dict(zip(self.labels, self.sectors)))

    def to_frame(self) -> pd.DataFrame:
        """Dates as index, one column per series."""
        return pd.DataFrame(
            self.values.T, index=pd.DatetimeIndex(self.timestamps), columns=list(self.labels)
        )


@dataclass(frozen=True)
class SectorMap:
    """Assignment of series labels to sector names."""

    assignment: Mapping[str, str]

    def __post_init__(self) -> None:
        object.__setattr__(self, "assignment", dict(self.assignment))
        if not self.assignment:
            raise DataError("empty sector map")

    def sizes(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for sec in self.assignment.values():
            out[sec] = out.get(sec, 0) + 1
        return out

    def sector_names(self) -> tuple[str, ...]:
        seen: list[str] = []
        for sec in self.assignment.values():
            if sec not in seen:
                seen.append(sec)
        return tuple(seen)

    def for_labels(self, labels: Iterable[str]) -> tuple[str, ...]:
        labels = tuple(labels)
        missing = [s for s in labels if s not in self.assignment]
        if missing:
            raise DataError(f"labels without sector assignment: {missing}")
        return tuple(self.assignment[s] for s in labels)


@dataclass(frozen=True)
class PeriodFilter:
    """Inclusive [start, end] date window."""

    start: np.datetime64
    end: np.datetime64

    def __post_init__(self) -> None:
        start = np.datetime64(self.start, "D")
        end = np.datetime64(self.end, "D")
        if start > end:
            raise DataError(f"period start {start} is after end {end}")
        object.__setattr__(self, "start", start)
        object.__setattr__(self, "end", end)

    @classmethod
    def parse(cls, text: str) -> "PeriodFilter":
        """Parse 'YYYY-MM-DD:YYYY-MM-DD'."""
        parts = text.split(":")
        if len(parts) != 2:
            raise DataError(f"period must be 'start:end', got {text!r}")
        return cls(np.datetime64(parts[0]), np.datetime64(parts[1]))


def synthetic_timestamps(n_obs: int, start: str = "2000-01-03") -> np.ndarray:
    """Consecutive daily dates, for simulated panels."""
    first = np.datetime64(start, "D")
    return first + np.arange(n_obs)


def load_panel(prices_file: str | Path, sectors_file: str | Path | None = None) -> TimePanel:
    """Load a delimited panel file into a TimePanel.

    The file must be comma-separated UTF-8 with header
    ``date,<label1>,...,<labeln>`` and strictly increasing ISO dates.
    Series with any missing observation are dropped with a warning;
    duplicate headers and fewer than 2 surviving series are errors.
    """
    prices_file = Path(prices_file)
    if not prices_file.is_file():
        raise DataError(f"cannot read panel file: {prices_file}")
    with open(prices_file, "r", encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
    if len(header) < 2 or header[0] != "date":
        raise DataError("panel header must be 'date,<label1>,...'")
    names = header[1:]
    if len(set(names)) != len(names):
        dupes = sorted({s for s in names if names.count(s) > 1})
        raise DataError(f"duplicate column headers: {dupes}")

    frame = pd.read_csv(prices_file, encoding="utf-8")
    try:
        dates = pd.to_datetime(frame["date"], format="%Y-%m-%d")
    except Exception as exc:
        raise DataError(f"unparseable dates in {prices_file}: {exc}") from exc
    if not dates.is_monotonic_increasing or dates.duplicated().any():
        raise DataError("dates must be strictly increasing")

    kept: list[str] = []
    dropped: list[str] = []
    columns: list[np.ndarray] = []
    for name in names:
        col = pd.to_numeric(frame[name], errors="coerce").to_numpy(dtype=float)
        if np.all(np.isfinite(col)):
            kept.append(name)
            columns.append(col)
        else:
            dropped.append(name)
    if dropped:
        warnings.warn(f"dropped series with missing observations: {dropped}")
    if len(kept) < 2:
        raise DataError(f"fewer than 2 complete series survive (dropped {dropped})")

    sectors = None
    if sectors_file is not None:
        smap = load_sector_map(sectors_file)
        sectors = smap.for_labels(kept)

    return TimePanel(
        values=np.vstack(columns),
        labels=tuple(kept),
        timestamps=dates.to_numpy(dtype="datetime64[D]"),
        sectors=sectors,
    )


def load_sector_map(sectors_file: str | Path) -> SectorMap:
    """Load a comma-separated ``label,sector`` file."""
    sectors_file = Path(sectors_file)
    if not sectors_file.is_file():
        raise DataError(f"cannot read sector file: {sectors_file}")
    frame = pd.read_csv(sectors_file, encoding="utf-8")
    if list(frame.columns[:2]) != ["label", "sector"]:
        raise DataError("sector file header must be 'label,sector'")
    if frame["label"].duplicated().any():
        raise DataError("duplicate labels in sector file")
    return SectorMap(dict(zip(frame["label"].astype(str), frame["sector"].astype(str))))


def log_returns(prices: TimePanel) -> TimePanel:
    """Percentage log-returns: 100 * ln(p_t / p_{t-1}), one fewer column."""
    if np.any(prices.values <= 0.0):
        bad = [prices.labels[i] for i in np.unique(np.nonzero(prices.values <= 0.0)[0])]
        raise DataError(f"nonpositive prices in series {bad}")
    rets = 100.0 * np.diff(np.log(prices.values), axis=1)
    return TimePanel(
        values=rets,
        labels=prices.labels,
        timestamps=prices.timestamps[1:],
        sectors=prices.sectors,
    )


def center(panel: TimePanel) -> TimePanel:
    """Remove row means; the removed means are kept as metadata."""
    means = panel.values.mean(axis=1)
    return TimePanel(
        values=panel.values - means[:, None],
        labels=panel.labels,
        timestamps=panel.timestamps,
        sectors=panel.sectors,
        row_means=means,
    )


def slice_period(panel: TimePanel, window: PeriodFilter) -> TimePanel:
    """Restrict columns to the inclusive [start, end] window."""
    mask = (panel.timestamps >= window.start) & (panel.timestamps <= window.end)
    if not mask.any():
        raise DataError(
            f"period {window.start}..{window.end} does not intersect the panel range"
        )
    if mask.sum() < 2:
        raise DataError("period slice leaves fewer than 2 observations")
    return TimePanel(
        values=panel.values[:, mask],
        labels=panel.labels,
        timestamps=panel.timestamps[mask],
        sectors=panel.sectors,
        row_means=panel.row_means,
    )
