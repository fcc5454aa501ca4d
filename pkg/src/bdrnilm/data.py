"""Channel-file parsing, alignment, normalization and windowing."""
from __future__ import annotations

import io
import logging
import os
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._validation import check_odd, check_positive_int

logger = logging.getLogger(__name__)

PAD_NONE = "none"
PAD_HALF = "zero-halfwindow"


class ParseError(ValueError):
    def __init__(self, message, line=None, source=None):
        where = ""
        if source is not None:
            where += f"{source}: "
        if line is not None:
            where += f"line {line}: "
        super().__init__(where + message)
        self.line = line
        self.source = source


@dataclass
class RawSeries:
    timestamps: np.ndarray
    watts: np.ndarray
    n_clamped: int = 0

    def __post_init__(self):
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        self.watts = np.asarray(self.watts, dtype=np.float64)
        if self.timestamps.shape != self.watts.shape or self.timestamps.ndim != 1:
            raise ValueError("timestamps and watts must be 1-d arrays of equal length")
        if np.any(np.diff(self.timestamps) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        if not np.all(np.isfinite(self.watts)):
            raise ValueError("watts must be finite")

    def __len__(self):
        return len(self.timestamps)

    @property
    def native_period(self):
        if len(self) < 2:
            return 0
        return int(np.median(np.diff(self.timestamps)))


def _open_text(stream):
    if isinstance(stream, (str, os.PathLike)):
        return open(stream, encoding="utf-8"), os.fspath(stream)
    if isinstance(stream, bytes):
        return io.StringIO(stream.decode("utf-8")), None
    return stream, getattr(stream, "name", None)


def parse_channel_file(stream):
    """Parse ``epoch_seconds watts`` lines into a :class:`RawSeries`.

    Negative readings are clamped to zero and counted in ``n_clamped``.
    """
    fh, source = _open_text(stream)
    stamps, watts = [], []
    clamped = 0
    try:
        last = None
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            parts = text.split()
            if len(parts) != 2:
                raise ParseError(f"expected 'epoch watts', got {text!r}", lineno, source)
            try:
                t = int(parts[0])
                w = float(parts[1])
            except ValueError:
                raise ParseError(f"malformed line {text!r}", lineno, source) from None
            if not np.isfinite(w):
                raise ParseError(f"non-finite reading {parts[1]!r}", lineno, source)
            if last is not None and t <= last:
                raise ParseError(f"timestamp {t} does not increase (previous {last})", lineno, source)
            if w < 0:
                clamped += 1
                w = 0.0
            stamps.append(t)
            watts.append(w)
            last = t
    finally:
        if source is not None and fh is not stream:
            fh.close()
    if not stamps:
        raise ParseError("empty series", source=source)
    if clamped:
        logger.warning("%s: clamped %d negative reading(s) to 0", source or "stream", clamped)
    return RawSeries(np.array(stamps, dtype=np.int64), np.array(watts), clamped)


def format_channel(timestamps, watts):
    """Serialize readings so that parsing them back is loss-free."""
    return "".join(f"{int(t)} {float(w)!r}\n" for t, w in zip(timestamps, watts))


def write_channel_file(path, series):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(format_channel(series.timestamps, series.watts))


def parse_labels(stream):
    """Parse ``channel name`` lines into ``{channel: name}``."""
    fh, source = _open_text(stream)
    labels = {}
    try:
        for lineno, line in enumerate(fh, start=1):
            text = line.strip()
            if not text:
                continue
            parts = text.split(maxsplit=1)
            if len(parts) != 2:
                raise ParseError(f"expected 'channel name', got {text!r}", lineno, source)
            try:
                channel = int(parts[0])
            except ValueError:
                raise ParseError(f"bad channel number {parts[0]!r}", lineno, source) from None
            if channel in labels:
                raise ParseError(f"duplicate channel {channel}", lineno, source)
            labels[channel] = parts[1]
    finally:
        if source is not None and fh is not stream:
            fh.close()
    return labels


def combine_series(series):
    """Sum several channels over their common timestamps (e.g. split-phase mains)."""
    series = list(series)
    if not series:
        raise ValueError("nothing to combine")
    common = series[0].timestamps
    for s in series[1:]:
        common = np.intersect1d(common, s.timestamps, assume_unique=True)
    if common.size == 0:
        raise ValueError("channels share no timestamps")
    total = np.zeros(common.size)
    for s in series:
        total = total + s.watts[np.searchsorted(s.timestamps, common)]
    return RawSeries(common, total, sum(s.n_clamped for s in series))


# ---------------------------------------------------------------------------
# alignment
# ---------------------------------------------------------------------------
@dataclass
class AlignedPair:
    """Mains and appliance readings on one grid.

    ``timestamps`` holds the grid time of every kept sample; excised gaps
    show up as jumps larger than ``period``.
    """

    period: int
    start: int
    aggregate: np.ndarray
    appliance: np.ndarray
    gap_mask: np.ndarray = None
    timestamps: np.ndarray = None

    def __post_init__(self):
        self.aggregate = np.asarray(self.aggregate, dtype=np.float64)
        self.appliance = np.asarray(self.appliance, dtype=np.float64)
        n = len(self.aggregate)
        if self.appliance.shape != (n,):
            raise ValueError("aggregate and appliance must have equal length")
        if self.period <= 0:
            raise ValueError("period must be positive")
        if self.gap_mask is None:
            self.gap_mask = np.zeros(n, dtype=bool)
        if self.timestamps is None:
            self.timestamps = self.start + self.period * np.arange(n, dtype=np.int64)
        self.gap_mask = np.asarray(self.gap_mask, dtype=bool)
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        if self.gap_mask.shape != (n,) or self.timestamps.shape != (n,):
            raise ValueError("gap_mask and timestamps must match the series length")

    def __len__(self):
        return len(self.aggregate)

    def segments(self):
        """``(begin, end)`` index ranges of gap-free stretches."""
        if len(self) == 0:
            return []
        breaks = np.flatnonzero(np.diff(self.timestamps) != self.period) + 1
        bounds = np.concatenate([[0], breaks, [len(self)]])
        return [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]

    @classmethod
    def from_series(cls, aggregate, appliance=None, period=1, start=0):
        aggregate = np.asarray(aggregate, dtype=np.float64)
        if appliance is None:
            appliance = np.zeros_like(aggregate)
        return cls(period, start, aggregate, appliance)


def _resample(series, grid, period):
    idx = np.searchsorted(series.timestamps, grid, side="right") - 1
    values = series.watts[idx]
    observed = series.timestamps[idx] > grid - period
    return values, ~observed


def align_series(mains, appliance, period=6, gap_limit=3):
    """Forward-fill both series onto a common grid of ``period`` seconds.

    A grid point counts as filled when neither series has a reading in the
    preceding ``period`` seconds. Runs of more than ``gap_limit`` filled
    points are removed from both series.
    """
    if len(mains) == 0 or len(appliance) == 0:
        raise ValueError("both series must be nonempty")
    check_positive_int(period, "period")
    native = max(mains.native_period, appliance.native_period)
    if period < native:
        raise ValueError(f"period {period}s is finer than the native sampling period {native}s")
    start = max(mains.timestamps[0], appliance.timestamps[0])
    end = min(mains.timestamps[-1], appliance.timestamps[-1])
    if start > end:
        raise ValueError("series do not overlap in time")
    grid = start + period * np.arange((end - start) // period + 1, dtype=np.int64)
    agg, agg_filled = _resample(mains, grid, period)
    app, app_filled = _resample(appliance, grid, period)
    filled = agg_filled | app_filled

    keep = np.ones(len(grid), dtype=bool)
    run_start = None
    for i, f in enumerate(np.append(filled, False)):
        if f and run_start is None:
            run_start = i
        elif not f and run_start is not None:
            if i - run_start > gap_limit:
                keep[run_start:i] = False
            run_start = None
    excised = int(np.count_nonzero(~keep))
    if excised:
        logger.info("excised %d grid samples in gaps longer than %d", excised, gap_limit)
    return AlignedPair(
        period=period,
        start=int(start),
        aggregate=agg[keep],
        appliance=app[keep],
        gap_mask=filled[keep],
        timestamps=grid[keep],
    )


# ---------------------------------------------------------------------------
# normalization
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class NormStats:
    mean: float
    std: float

    def __post_init__(self):
        if not self.std > 0:
            raise ValueError(f"std must be positive, got {self.std}")

    @classmethod
    def of(cls, values):
        values = np.asarray(values, dtype=np.float64)
        std = float(values.std())
        return cls(float(values.mean()), std if std > 0 else 1.0)


# mean / std of appliance power used for target normalization, window 599
APPLIANCE_STATS = {
    "kettle": NormStats(700.0, 1000.0),
    "microwave": NormStats(500.0, 800.0),
    "fridge": NormStats(200.0, 400.0),
    "dish washer": NormStats(700.0, 1000.0),
    "washing machine": NormStats(400.0, 700.0),
}
DEFAULT_WINDOW = 599


def appliance_stats(name):
    key = name.strip().lower().replace("_", " ")
    if key == "dishwasher":
        key = "dish washer"
    return APPLIANCE_STATS.get(key)


def normalize(values, stats):
    return (np.asarray(values, dtype=np.float64) - stats.mean) / stats.std


def denormalize(values, stats):
    return np.asarray(values, dtype=np.float64) * stats.std + stats.mean


# ---------------------------------------------------------------------------
# windows
# ---------------------------------------------------------------------------
@dataclass
class WindowedDataset:
    """Normalized aggregate windows with their midpoint targets.

    ``starts`` indexes the first aggregate sample of each window in the
    source arrays (negative when the window begins in zero padding), so the
    target of row ``i`` sits at ``starts[i] + window_length // 2``.
    """

    window_length: int
    inputs: np.ndarray
    targets: np.ndarray
    starts: np.ndarray = None
    source_id: str = ""
    timestamps: np.ndarray = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=np.float32)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        n = len(self.inputs)
        if self.inputs.ndim != 2 or self.inputs.shape[1] != self.window_length:
            raise ValueError(f"inputs must have shape (N, {self.window_length}), got {self.inputs.shape}")
        if self.targets.shape != (n,):
            raise ValueError("one target per window is required")
        if self.starts is None:
            self.starts = np.arange(n, dtype=np.int64)
        if self.timestamps is None:
            self.timestamps = self.target_index.copy()

    def __len__(self):
        return len(self.inputs)

    @property
    def target_index(self):
        return np.asarray(self.starts, dtype=np.int64) + self.window_length // 2

    @property
    def provenance(self):
        return [(self.source_id, int(s)) for s in self.starts]

    def subset(self, index):
        return WindowedDataset(
            self.window_length,
            self.inputs[index],
            self.targets[index],
            np.asarray(self.starts)[index],
            self.source_id,
            np.asarray(self.timestamps)[index],
            dict(self.extra),
        )


def make_windows(pair, stats_in, stats_target, window_length=599, stride=1, pad=PAD_NONE, source_id=""):
    """Slide a window over the aggregate; the target is the appliance midpoint.

    Windows never cross an excised gap. With ``pad="zero-halfwindow"`` each
    gap-free stretch is padded with ``window_length // 2`` zero-watt samples
    per side, giving one window per sample.
    """
    check_odd(window_length, "window_length")
    check_positive_int(stride, "stride")
    if pad not in (PAD_NONE, PAD_HALF):
        raise ValueError(f"unknown pad mode {pad!r}")
    half = window_length // 2
    agg = normalize(pair.aggregate, stats_in)
    app = normalize(pair.appliance, stats_target)
    pad_value = (0.0 - stats_in.mean) / stats_in.std

    inputs, targets, starts = [], [], []
    for begin, end in pair.segments():
        seg = agg[begin:end]
        if pad == PAD_HALF:
            seg = np.concatenate([np.full(half, pad_value), seg, np.full(half, pad_value)])
            offset = begin - half
        else:
            offset = begin
        if len(seg) < window_length:
            continue
        views = sliding_window_view(seg, window_length)[::stride]
        local = np.arange(0, len(seg) - window_length + 1, stride, dtype=np.int64)
        inputs.append(views.astype(np.float32))
        starts.append(local + offset)
        targets.append(app[local + offset + half])
    if not inputs:
        raise ValueError(f"series of length {len(pair)} is shorter than window_length {window_length}")
    starts = np.concatenate(starts)
    return WindowedDataset(
        window_length,
        np.concatenate(inputs),
        np.concatenate(targets),
        starts,
        source_id,
        pair.timestamps[starts + half],
    )


def split_dataset(dataset, fraction=0.8):
    """Chronological split at ``floor(N * fraction)``."""
    if not 0 < fraction < 1:
        raise ValueError(f"fraction must lie in (0, 1), got {fraction}")
    cut = int(np.floor(len(dataset) * fraction))
    if cut == 0 or cut == len(dataset):
        raise ValueError(f"splitting {len(dataset)} rows at {fraction} leaves one side empty")
    return dataset.subset(slice(0, cut)), dataset.subset(slice(cut, None))
