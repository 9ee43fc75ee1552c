"""Heart-rate time-series container, missing-data handling and smoothing.

Series are uniformly sampled at 1 Hz. Missing data is carried as a mask of
half-open index ranges; sample values inside those ranges are either NaN
(not yet filled) or linearly interpolated placeholders that downstream code
must exclude from any statistics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    AllMissing,
    CsvFormatError,
    EmptySeries,
    LengthMismatch,
    MaskMismatch,
)

VALID_BPM_RANGE = (20.0, 260.0)

MaskRanges = tuple[tuple[int, int], ...]


def _normalize_mask(mask, n: int) -> MaskRanges:
    ranges = sorted((int(a), int(b)) for a, b in mask)
    prev_stop = -1
    for a, b in ranges:
        if not (0 <= a < b <= n):
            raise MaskMismatch(f"mask range [{a}, {b}) outside series of length {n}")
        if a <= prev_stop:
            raise MaskMismatch(f"mask range [{a}, {b}) overlaps or touches previous range")
        prev_stop = b
    return tuple(ranges)


@dataclass(frozen=True)
class HeartRateSeries:
    """1 Hz heart-rate samples with an explicit missing-data mask.

    ``samples`` may hold NaN only at masked indices. Values are immutable
    after construction and safe to share between threads.
    """

    samples: np.ndarray
    missing_mask: MaskRanges = ()
    start_time: float = 0.0

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise EmptySeries("series needs at least one sample")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "missing_mask", _normalize_mask(self.missing_mask, samples.size))
        missing = self.missing_indicator()
        if np.isnan(samples[~missing]).any():
            raise MaskMismatch("NaN sample outside the missing mask")
        samples.flags.writeable = False

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration_s(self) -> int:
        return self.samples.size

    def missing_indicator(self) -> np.ndarray:
        """Boolean array, True at masked (unrecorded) indices."""
        out = np.zeros(self.samples.size, dtype=bool)
        for a, b in self.missing_mask:
            out[a:b] = True
        return out

    def out_of_range_indices(self, lo: float = VALID_BPM_RANGE[0], hi: float = VALID_BPM_RANGE[1]) -> np.ndarray:
        """Indices of recorded samples outside the plausible bpm range.

        Offending values are flagged for the caller to handle; they are never
        clamped or dropped here.
        """
        bad = (self.samples < lo) | (self.samples > hi)
        bad &= ~self.missing_indicator()
        return np.flatnonzero(bad)

    def segments(self) -> list[tuple[int, int]]:
        """Maximal half-open index ranges of recorded (non-masked) data."""
        out = []
        pos = 0
        for a, b in self.missing_mask:
            if a > pos:
                out.append((pos, a))
            pos = b
        if pos < self.samples.size:
            out.append((pos, self.samples.size))
        return out


@dataclass(frozen=True)
class ResidualSeries:
    """Residuals (original minus smoothed), aligned index-for-index.

    ``excluded`` marks indices whose residuals must not enter percentile,
    mean or deviation statistics (the formerly missing regions).
    """

    values: np.ndarray
    source_smoothed: np.ndarray
    excluded: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        smoothed = np.asarray(self.source_smoothed, dtype=float)
        excluded = self.excluded
        if excluded is None:
            excluded = np.zeros(values.size, dtype=bool)
        excluded = np.asarray(excluded, dtype=bool)
        if not (values.size == smoothed.size == excluded.size):
            raise LengthMismatch("residuals, smoothed and exclusion flags must align")
        for arr, name in ((values, "values"), (smoothed, "source_smoothed"), (excluded, "excluded")):
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return self.values.size

    def valid_values(self) -> np.ndarray:
        return self.values[~self.excluded]


def smooth_array(values: np.ndarray, width: int) -> np.ndarray:
    """Centered moving average with boundary truncation.

    At the edges the window shrinks to the in-range indices and the divisor
    shrinks with it, so no data is fabricated. Even widths take one extra
    sample on the right.
    """
    if width < 1 or int(width) != width:
        raise ValueError(f"window width must be a positive integer, got {width}")
    x = np.asarray(values, dtype=float)
    if x.size == 0:
        raise EmptySeries("cannot smooth an empty sequence")
    width = int(width)
    half_l = (width - 1) // 2
    half_r = width // 2
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(x.size)
    lo = np.maximum(idx - half_l, 0)
    hi = np.minimum(idx + half_r + 1, x.size)
    return (csum[hi] - csum[lo]) / (hi - lo)


def moving_average(series: HeartRateSeries, width: int) -> HeartRateSeries:
    """Moving-average smoothing of a series; mask is carried through."""
    smoothed = smooth_array(series.samples, width)
    return replace(series, samples=smoothed)


def interpolate_missing(series: HeartRateSeries) -> HeartRateSeries:
    """Fill masked regions by straight lines between the neighbouring samples.

    Leading and trailing gaps are filled by extending the edge value. The
    original mask is retained so the fabricated samples can be stripped again
    after smoothing.
    """
    missing = series.missing_indicator()
    recorded = np.flatnonzero(~missing)
    if recorded.size < 2:
        raise AllMissing("need at least two recorded samples to interpolate")
    if not missing.any():
        return series
    filled = np.interp(np.arange(series.samples.size), recorded, series.samples[recorded])
    return replace(series, samples=filled)


def strip_interpolated(
    series: HeartRateSeries, smoothed: HeartRateSeries
) -> tuple[HeartRateSeries, HeartRateSeries]:
    """Re-attach the original mask to a smoothed series so the interpolated
    regions are excluded from every downstream residual or threshold
    computation. Segments separated by a gap stay unrelated."""
    if len(series) != len(smoothed):
        raise MaskMismatch("series and smoothed series differ in length")
    _normalize_mask(series.missing_mask, len(smoothed))
    stripped = replace(smoothed, missing_mask=series.missing_mask)
    return series, stripped


def residuals(series: HeartRateSeries, smoothed: HeartRateSeries) -> ResidualSeries:
    """Original minus smoothed; masked indices are zeroed and flagged."""
    if len(series) != len(smoothed):
        raise LengthMismatch(f"series ({len(series)}) vs smoothed ({len(smoothed)})")
    values = series.samples - smoothed.samples
    excluded = series.missing_indicator() | smoothed.missing_indicator()
    values = np.where(excluded, 0.0, values)
    return ResidualSeries(values=values, source_smoothed=smoothed.samples, excluded=excluded)


# -- CSV ingestion ------------------------------------------------------


def read_activity_csv(path) -> HeartRateSeries:
    """Read the ``t_s,bpm`` activity format.

    Rows with an empty bpm field denote missing samples; absent t_s rows
    become masked gaps. Non-monotonic or duplicate t_s is rejected.
    """
    times: list[int] = []
    values: list[float] = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header[:2]] != ["t_s", "bpm"]:
            raise CsvFormatError(f"{path}: expected header 't_s,bpm'")
        for lineno, row in enumerate(reader, start=2):
            if not row or not row[0].strip():
                raise CsvFormatError(f"{path}:{lineno}: missing t_s")
            try:
                t = int(round(float(row[0])))
            except ValueError as exc:
                raise CsvFormatError(f"{path}:{lineno}: bad t_s {row[0]!r}") from exc
            if times and t <= times[-1]:
                raise CsvFormatError(f"{path}:{lineno}: non-monotonic or duplicate t_s {t}")
            times.append(t)
            raw = row[1].strip() if len(row) > 1 else ""
            if raw == "":
                values.append(np.nan)
            else:
                try:
                    values.append(float(raw))
                except ValueError as exc:
                    raise CsvFormatError(f"{path}:{lineno}: bad bpm {raw!r}") from exc
    if not times:
        raise CsvFormatError(f"{path}: no data rows")
    start = times[0]
    n = times[-1] - start + 1
    samples = np.full(n, np.nan)
    samples[np.asarray(times) - start] = values
    mask_ranges = _runs_of(np.isnan(samples))
    return HeartRateSeries(samples=samples, missing_mask=mask_ranges, start_time=float(start))


def write_activity_csv(series: HeartRateSeries, path) -> None:
    """Write the ``t_s,bpm`` format; masked samples get an empty bpm field."""
    missing = series.missing_indicator()
    start = int(round(series.start_time))
    with open(path, "w", newline="") as fh:
        fh.write("t_s,bpm\n")
        for i, v in enumerate(series.samples):
            if missing[i]:
                fh.write(f"{start + i},\n")
            else:
                text = repr(int(v)) if float(v).is_integer() else repr(float(v))
                fh.write(f"{start + i},{text}\n")


def _runs_of(flags: np.ndarray) -> MaskRanges:
    """Half-open ranges of consecutive True entries."""
    if not flags.any():
        return ()
    padded = np.concatenate([[False], flags, [False]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return tuple((int(a), int(b)) for a, b in zip(edges[::2], edges[1::2]))
