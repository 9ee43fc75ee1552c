"""Spike detection: smoothing/denoising, threshold rules, run collapsing.

Six methods share one skeleton: build a smoothed version of the series
(moving average or DWT denoising), threshold the residuals (constant or
adaptive), and collapse each contiguous exceedance run to a single spike.
The CWT variants threshold the coefficient modulus at a fixed scale
instead of residuals.

Recorded segments separated by missing-data gaps are processed
independently: no smoothing or threshold window ever spans a gap, and no
spike is ever reported inside one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import TooFewSamples
from .series import HeartRateSeries, ResidualSeries, smooth_array
from .wavelet import (
    cwt,
    dwt_decompose,
    dwt_reconstruct,
    get_filter_bank,
    max_decomposition_level,
    shrink_coefficients,
    universal_lambdas,
)

METHODS = (
    "mov_constant",
    "mov_adaptive",
    "dwt_constant",
    "dwt_adaptive",
    "cwt_constant",
    "cwt_adaptive",
)

# Segments shorter than this cannot support a percentile threshold and are
# skipped; they are too short to host a meaningful spike anyway.
MIN_SEGMENT_SAMPLES = 20

CONSTANT_PERCENTILE = 95.0
CWT_MIN_HEIGHT_BPM = 0.1


@dataclass(frozen=True)
class Spike:
    """One detected or ground-truth event."""

    time: float  # seconds from series start
    height: float  # bpm
    base_hr: float  # smoothed heart rate at the spike

    def to_obj(self) -> dict:
        return {"t_s": self.time, "height_bpm": self.height, "base_hr_bpm": self.base_hr}

    @classmethod
    def from_obj(cls, obj: dict) -> "Spike":
        return cls(time=obj["t_s"], height=obj["height_bpm"], base_hr=obj["base_hr_bpm"])


def spikes_to_json(spikes) -> str:
    ordered = sorted(spikes, key=lambda s: s.time)
    return json.dumps([s.to_obj() for s in ordered])


def spikes_from_json(text: str) -> list[Spike]:
    return [Spike.from_obj(obj) for obj in json.loads(text)]


@dataclass(frozen=True)
class DetectorConfig:
    """Method choice plus every tunable knob the grid search may touch."""

    method: str = "mov_constant"
    smoothing_width: int = 200  # s
    threshold_multiplier: float = 2.5
    adaptive_window: int = 200  # s
    offset: float = 0.01  # bpm
    cwt_scale: float = 20.0  # s
    cwt_bandwidth: float = 1.0  # s^2
    cwt_central_freq: float = 1.0  # Hz
    dwt_wavelet: str = "sym5"
    dwt_level: int = 8
    dwt_lambda_multiplier: float = 1.0
    dwt_shrink_rule: str = "garotte"
    dwt_finest_only: bool = False  # restrict shrinkage to the finest level

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")

    def to_obj(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}

    @classmethod
    def from_obj(cls, obj: dict) -> "DetectorConfig":
        known = {k: v for k, v in obj.items() if k in cls.__dataclass_fields__}
        return cls(**known)


def constant_threshold(resid: ResidualSeries, multiplier: float) -> float:
    """Multiplier times the 95th percentile (linear interpolation) of the
    non-excluded residuals."""
    if multiplier <= 0:
        raise ValueError("multiplier must be positive")
    valid = resid.valid_values()
    if valid.size < MIN_SEGMENT_SAMPLES:
        raise TooFewSamples(f"{valid.size} usable residuals (< {MIN_SEGMENT_SAMPLES})")
    return float(multiplier * np.percentile(valid, CONSTANT_PERCENTILE))


def adaptive_threshold(
    resid: ResidualSeries, window_w: int, multiplier: float, offset: float = 0.01
) -> np.ndarray:
    """Thresh(t) = offset + mu(t) + multiplier * sigma(t) over the centered
    (boundary-truncated) window of non-excluded residuals; sigma is the
    population standard deviation."""
    if window_w < 3:
        raise TooFewSamples(f"adaptive window must span >= 3 samples, got {window_w}")
    if multiplier <= 0:
        raise ValueError("multiplier must be positive")
    values = np.where(resid.excluded, 0.0, resid.values)
    counts_in = (~resid.excluded).astype(float)
    half_l = (int(window_w) - 1) // 2
    half_r = int(window_w) // 2
    n = values.size
    idx = np.arange(n)
    lo = np.maximum(idx - half_l, 0)
    hi = np.minimum(idx + half_r + 1, n)

    def windowed_sum(x):
        c = np.concatenate([[0.0], np.cumsum(x)])
        return c[hi] - c[lo]

    count = windowed_sum(counts_in)
    total = windowed_sum(values)
    total_sq = windowed_sum(values**2)
    with np.errstate(invalid="ignore", divide="ignore"):
        mu = np.where(count > 0, total / np.maximum(count, 1.0), 0.0)
        var = np.where(count > 0, total_sq / np.maximum(count, 1.0) - mu**2, 0.0)
    sigma = np.sqrt(np.maximum(var, 0.0))
    return offset + mu + multiplier * sigma


def _exceedance_runs(flags: np.ndarray) -> list[tuple[int, int]]:
    """Half-open index ranges of consecutive True entries."""
    if not flags.any():
        return []
    padded = np.concatenate([[False], flags, [False]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return list(zip(edges[::2], edges[1::2]))


def dwt_smooth_array(x: np.ndarray, config: DetectorConfig) -> np.ndarray:
    """Denoised reconstruction that plays the 'smoothed series' role.

    Details are garotte-shrunk (by default) at per-level universal
    thresholds scaled by the tunable multiplier; the reconstruction of what
    survives is subtracted from the original to form residuals.
    """
    level = min(config.dwt_level, max_decomposition_level(len(x)))
    if level < 1:
        return smooth_array(x, config.smoothing_width)
    bank = get_filter_bank(config.dwt_wavelet)
    decomp = dwt_decompose(x, bank, level)
    lambdas = universal_lambdas(decomp, config.dwt_lambda_multiplier)
    if config.dwt_finest_only:
        lambdas = [lambdas[0]] + [0.0] * (len(lambdas) - 1)
    shrunk = shrink_coefficients(decomp, config.dwt_shrink_rule, lambdas)
    return dwt_reconstruct(shrunk, bank)


def _segment_spikes_residual(
    x: np.ndarray, seg_start: int, config: DetectorConfig
) -> list[Spike]:
    if config.method.startswith("mov"):
        smoothed = smooth_array(x, config.smoothing_width)
    else:
        smoothed = dwt_smooth_array(x, config)
    resid = ResidualSeries(values=x - smoothed, source_smoothed=smoothed)
    if config.method.endswith("constant"):
        thresh = constant_threshold(resid, config.threshold_multiplier)
        exceed = resid.values > thresh
    else:
        thresh = adaptive_threshold(
            resid, config.adaptive_window, config.threshold_multiplier, config.offset
        )
        exceed = resid.values > thresh
    # only upward excursions count as spikes
    exceed &= resid.values > 0
    spikes = []
    for a, b in _exceedance_runs(exceed):
        peak = a + int(np.argmax(resid.values[a:b]))
        spikes.append(
            Spike(
                time=float(seg_start + peak),
                height=float(resid.values[peak]),
                base_hr=float(smoothed[peak]),
            )
        )
    return spikes


def _segment_spikes_cwt(x: np.ndarray, seg_start: int, config: DetectorConfig) -> list[Spike]:
    # center first: the wavelet ignores constants in the interior, and the
    # zero background outside the segment must not look like a giant step
    mat = cwt(x - x.mean(), [config.cwt_scale], config.cwt_bandwidth, config.cwt_central_freq)
    row = np.abs(mat.coefficients[0])
    row_series = ResidualSeries(values=row, source_smoothed=np.zeros_like(row))
    if config.method.endswith("constant"):
        thresh = constant_threshold(row_series, config.threshold_multiplier)
        exceed = row > thresh
    else:
        thresh = adaptive_threshold(
            row_series, config.adaptive_window, config.threshold_multiplier, config.offset
        )
        exceed = row > thresh
    smoothed = smooth_array(x, config.smoothing_width)
    spikes = []
    for a, b in _exceedance_runs(exceed):
        mid = (a + b - 1) // 2
        # |CWT| units are not bpm, so the height is read off the
        # moving-average residual at the region midpoint
        height = max(float(x[mid] - smoothed[mid]), CWT_MIN_HEIGHT_BPM)
        spikes.append(Spike(time=float(seg_start + mid), height=height, base_hr=float(smoothed[mid])))
    return spikes


def detect_spikes(series: HeartRateSeries, config: DetectorConfig) -> list[Spike]:
    """Run one detection method over every recorded segment of a series.

    Missing-data gaps split the series; each segment is interpolation-free
    by construction and is smoothed, thresholded and scanned on its own, so
    sections separated by gaps stay unrelated. Segments too short to
    support a threshold are skipped.
    """
    spikes: list[Spike] = []
    for a, b in series.segments():
        if b - a < MIN_SEGMENT_SAMPLES:
            continue
        x = series.samples[a:b].astype(float)
        if config.method.startswith("cwt"):
            seg = _segment_spikes_cwt(x, a, config)
        else:
            seg = _segment_spikes_residual(x, a, config)
        spikes.extend(seg)
    spikes.sort(key=lambda s: s.time)
    return spikes
