"""Dataset ingestion, chronological splits, windowing and synthetic series.

CSV layout: UTF-8, header row whose first column is ``date``, remaining
columns numeric.  Splits follow the hour/minute benchmark convention
(12/4/4 months of 30 days) or floor-proportion ratios.  Standardization
always uses train-range statistics.  Validation/test ranges are extended
backward by T-1 steps so early windows can see their lookback context;
targets never leave their own split.
"""

from __future__ import annotations

import csv
import re
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError, ParseError
from .numeric import SeededRng

SPLITS = ("train", "val", "test")


@dataclass
class WindowSample:
    x: np.ndarray  # [T, C]
    y: np.ndarray  # [P, C]
    origin: int


@dataclass
class TimeSeriesDataset:
    values: np.ndarray          # [T_total, C]
    timestamps: list
    var_names: list
    name: str = "dataset"
    borders: dict | None = None       # split -> (start, end), disjoint
    lookback_pad: int = 0             # backward extension for val/test windows
    mean: np.ndarray | None = None    # train-range statistics, once standardized
    std: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_steps(self) -> int:
        return self.values.shape[0]

    @property
    def n_vars(self) -> int:
        return self.values.shape[1]

    def window_range(self, split: str) -> tuple[int, int]:
        """Index range windows may draw from (with the lookback extension)."""
        if self.borders is None:
            raise DomainError("dataset has no split borders; call chrono_split")
        lo, hi = self.borders[split]
        if split != "train":
            lo = max(0, lo - self.lookback_pad)
        return lo, hi


def load_csv(path, name: str | None = None) -> TimeSeriesDataset:
    """Parse a date-indexed CSV into a float64 value matrix."""
    timestamps, rows = [], []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError("empty file", line=1)
        if not header or header[0].strip().lower() != "date":
            raise ParseError("first column must be the timestamp column 'date'",
                             line=1)
        n_cols = len(header)
        if n_cols < 2:
            raise ParseError("no value columns after 'date'", line=1)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != n_cols:
                raise ParseError(
                    f"expected {n_cols} cells, found {len(row)}", line=lineno)
            try:
                rows.append([float(cell) for cell in row[1:]])
            except ValueError as exc:
                raise ParseError(str(exc), line=lineno) from None
            timestamps.append(row[0])
    if not rows:
        raise ParseError("file has a header but no data rows", line=2)
    values = np.asarray(rows, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        bad = int(np.argwhere(~np.isfinite(values))[0, 0]) + 2
        raise ParseError("non-finite value", line=bad)
    import os
    return TimeSeriesDataset(
        values=values, timestamps=timestamps, var_names=header[1:],
        name=name or os.path.splitext(os.path.basename(str(path)))[0])


def chrono_split(ds: TimeSeriesDataset, profile: str, lookback: int,
                 ratios: tuple = (0.7, 0.1, 0.2)) -> TimeSeriesDataset:
    """Attach chronological borders: ``ett_hour``, ``ett_minute`` or ``ratio``."""
    month_hours = 30 * 24
    if profile == "ett_hour":
        ends = (12 * month_hours, 16 * month_hours, 20 * month_hours)
    elif profile == "ett_minute":
        ends = (12 * month_hours * 4, 16 * month_hours * 4, 20 * month_hours * 4)
    elif profile == "ratio":
        t1 = int(ratios[0] * ds.n_steps)
        t2 = t1 + int(ratios[1] * ds.n_steps)
        ends = (t1, t2, ds.n_steps)
    else:
        raise ConfigError(f"unknown split profile {profile!r}")
    if ds.n_steps < ends[2]:
        raise DomainError(
            f"dataset has {ds.n_steps} steps; profile {profile} needs {ends[2]}")
    borders = {"train": (0, ends[0]), "val": (ends[0], ends[1]),
               "test": (ends[1], ends[2])}
    return replace(ds, borders=borders, lookback_pad=max(0, lookback - 1))


def standardize(ds: TimeSeriesDataset) -> TimeSeriesDataset:
    """Per-variable z-score using train-range statistics only."""
    if ds.borders is None:
        raise DomainError("set split borders before standardizing")
    lo, hi = ds.borders["train"]
    train = ds.values[lo:hi]
    mean = train.mean(axis=0)
    std = np.sqrt(train.var(axis=0))
    zero = np.nonzero(std == 0.0)[0]
    if zero.size:
        raise DomainError(
            f"constant variable(s) in train range: {[ds.var_names[i] for i in zero]}")
    return replace(ds, values=(ds.values - mean) / std, mean=mean, std=std)


class Windows:
    """Exhaustive stride-1 window enumeration over one split."""

    def __init__(self, ds: TimeSeriesDataset, split: str, lookback: int,
                 horizon: int):
        if split not in SPLITS:
            raise ConfigError(f"unknown split {split!r}")
        lo, hi = ds.window_range(split)
        n = (hi - lo) - lookback - horizon + 1
        if n < 1:
            raise DomainError(
                f"split {split} range [{lo}, {hi}) too short for T={lookback}, "
                f"P={horizon}")
        self.ds = ds
        self.split = split
        self.lookback = lookback
        self.horizon = horizon
        self.start = lo
        self.count = n

    def __len__(self):
        return self.count

    def __getitem__(self, i: int) -> WindowSample:
        if not 0 <= i < self.count:
            raise IndexError(i)
        s = self.start + i
        t, p = self.lookback, self.horizon
        return WindowSample(x=self.ds.values[s:s + t],
                            y=self.ds.values[s + t:s + t + p], origin=s)

    def batch(self, indices) -> tuple[np.ndarray, np.ndarray]:
        """Stacked (x [B,T,C], y [B,P,C]) for the given window indices."""
        xs = np.stack([self.ds.values[self.start + i:self.start + i + self.lookback]
                       for i in indices])
        ys = np.stack([self.ds.values[self.start + i + self.lookback:
                                      self.start + i + self.lookback + self.horizon]
                       for i in indices])
        return xs, ys


def make_windows(ds: TimeSeriesDataset, split: str, lookback: int,
                 horizon: int) -> Windows:
    return Windows(ds, split, lookback, horizon)


# -- synthetic generation ----------------------------------------------------

@dataclass
class VarSpec:
    kind: str
    params: dict = field(default_factory=dict)


@dataclass
class SyntheticSpec:
    length: int
    variables: list
    noise: float = 0.0


_GEN_RE = re.compile(r"^\s*([a-z0-9_]+)\s*(?:\(([^)]*)\))?\s*$")


def parse_var_spec(text: str) -> VarSpec:
    """Parse e.g. ``sine(period=24, amp=1, phase=0)``."""
    m = _GEN_RE.match(text)
    if not m:
        raise ConfigError(f"bad generator spec {text!r}")
    kind, arg_s = m.group(1), m.group(2) or ""
    params = {}
    for part in filter(None, (p.strip() for p in arg_s.split(","))):
        key, _, value = part.partition("=")
        if not _:
            raise ConfigError(f"generator argument {part!r} must be key=value")
        params[key.strip()] = float(value)
    return VarSpec(kind=kind, params=params)


def _generate(spec: VarSpec, t: np.ndarray, rng: SeededRng) -> np.ndarray:
    p = spec.params
    if spec.kind == "sine":
        period = p.get("period", 24.0)
        return p.get("amp", 1.0) * np.sin(
            2.0 * np.pi * t / period + p.get("phase", 0.0))
    if spec.kind == "trend":
        return p.get("slope", 0.01) * t
    if spec.kind == "sawtooth":
        period = p.get("period", 24.0)
        return p.get("amp", 1.0) * (2.0 * np.mod(t / period, 1.0) - 1.0)
    if spec.kind == "trend_sawtooth":
        period = p.get("period", 24.0)
        saw = p.get("amp", 1.0) * (2.0 * np.mod(t / period, 1.0) - 1.0)
        return p.get("slope", 0.01) * t + saw
    if spec.kind == "ar1":
        rho = p.get("rho", 0.9)
        innov = rng.normal(t.shape[0], 0.0, p.get("sigma", 1.0))
        out = np.empty(t.shape[0])
        acc = 0.0
        for i in range(t.shape[0]):
            acc = rho * acc + innov[i]
            out[i] = acc
        return out
    raise ConfigError(f"unknown generator {spec.kind!r}")


def gen_synthetic(spec: SyntheticSpec, rng: SeededRng,
                  name: str = "synthetic") -> TimeSeriesDataset:
    """Reproducible synthetic dataset; meta records each variable's regime."""
    t = np.arange(spec.length, dtype=np.float64)
    cols = []
    for var in spec.variables:
        series = _generate(var, t, rng)
        if spec.noise > 0.0:
            series = series + rng.normal(spec.length, 0.0, spec.noise)
        cols.append(series)
    values = np.stack(cols, axis=1)
    return TimeSeriesDataset(
        values=values,
        timestamps=[str(i) for i in range(spec.length)],
        var_names=[f"v{i}" for i in range(len(spec.variables))],
        name=name,
        meta={"generators": [v.kind for v in spec.variables]},
    )
