"""Per-athlete aggregation and statistics over detected spikes.

Covers the homogeneous Poisson rate MLE, the likelihood-ratio test for a
heart-rate-dependent intensity, correlation checks against survey labels
(point-biserial and logistic regression), outlier-percentile filtering,
heart-rate threshold sweeps, and the gappy/sticky activity classifier
with its irregular ratio.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .detect import Spike
from .errors import (
    DegenerateLabels,
    NoConvergence,
    Separation,
    TooFewSamples,
    ZeroExposure,
    ZeroVariance,
)
from .series import HeartRateSeries, smooth_array

MIN_ACTIVITY_S = 300
STICKY_RUN_S = 90

REGULAR = "Regular"
IRREGULAR = "Irregular"
UNCLEAR = "Unclear"
CHECK_STRAP = "Check_Strap"

DEFAULT_BIN_EDGES = tuple(float(v) for v in range(40, 221, 10))


def spike_removed_smoothed(series: HeartRateSeries, spikes, width: int = 200) -> np.ndarray:
    """Smoothed heart rate with spike seconds replaced by the smooth value
    before re-smoothing, so spikes do not drag the curve upward."""
    smoothed = smooth_array(series.samples, width)
    cleaned = series.samples.copy()
    for s in spikes:
        t = int(round(s.time - series.start_time))
        if 0 <= t < cleaned.size:
            cleaned[t] = smoothed[t]
    return smooth_array(cleaned, width)


@dataclass(frozen=True)
class ActivityData:
    """One activity: the raw series, its detected spikes and the smoothed
    spike-free heart rate used for exposure bookkeeping."""

    series: HeartRateSeries
    spikes: tuple[Spike, ...]
    smoothed: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "spikes", tuple(self.spikes))
        smoothed = np.asarray(self.smoothed, dtype=float)
        if smoothed.size != len(self.series):
            raise ValueError("smoothed profile must align with the series")
        object.__setattr__(self, "smoothed", smoothed)

    @property
    def duration_s(self) -> int:
        return len(self.series)


@dataclass
class AthleteRecord:
    athlete_id: str
    activities: list[ActivityData]
    survey_response: bool
    lthr: float | None = None

    def modal_hr(self) -> float:
        """Most visited 1 bpm bin over the whole history; ties go high."""
        values = np.concatenate([a.series.samples[~a.series.missing_indicator()] for a in self.activities])
        if values.size == 0:
            raise ZeroExposure(f"athlete {self.athlete_id} has no recorded samples")
        bins = np.round(values).astype(int)
        counts = np.bincount(bins - bins.min())
        # argmax of reversed counts picks the highest bin among ties
        best = counts.size - 1 - int(np.argmax(counts[::-1]))
        return float(best + bins.min())


@dataclass(frozen=True)
class RateBin:
    hr_lo: float
    hr_hi: float
    n_events: int
    hours: float
    rate_per_hour: float


@dataclass(frozen=True)
class AthleteSummary:
    athlete_id: str
    n_spikes: int
    hours: float
    lambda_hat: float
    bins: tuple[RateBin, ...]
    lr_statistic: float
    p_value: float
    irregular_ratio: float
    survey_response: bool


# -- activity classification ----------------------------------------------


def _has_sticky_run(series: HeartRateSeries, run_s: int = STICKY_RUN_S) -> bool:
    samples = series.samples
    missing = series.missing_indicator()
    run = 0
    prev = None
    for i in range(samples.size):
        if missing[i]:
            run, prev = 0, None
            continue
        v = samples[i]
        if prev is not None and v == prev:
            run += 1
        else:
            run = 1
        prev = v
        if run >= run_s:
            return True
    return False


def classify_activity(
    series: HeartRateSeries, lthr: float | None = None, modal_hr: float | None = None
) -> str:
    """Regular / Irregular / Unclear / Check_Strap.

    Sticky (>= 90 s of exactly constant readings) wins outright. Otherwise
    the visited integer heart rates are checked for gaps above and below
    the threshold max(modal HR, LTHR); a high-end-only gap marks the
    activity Irregular, any low-end gap makes it Unclear.
    """
    if _has_sticky_run(series):
        return CHECK_STRAP
    recorded = series.samples[~series.missing_indicator()]
    if recorded.size == 0:
        return UNCLEAR
    visited = set(int(v) for v in np.round(recorded))
    if modal_hr is None:
        vals, counts = np.unique(np.round(recorded).astype(int), return_counts=True)
        modal_hr = float(vals[counts == counts.max()].max())
    threshold = max(modal_hr, lthr) if lthr is not None else modal_hr
    hi, lo = max(visited), min(visited)
    # high gap: unvisited u >= threshold with some visited value above it;
    # low gap is the mirror (unvisited u <= threshold, visited value below)
    high_gap = any(u not in visited for u in range(int(math.ceil(threshold)), hi))
    low_gap = any(u not in visited for u in range(lo + 1, int(math.floor(threshold)) + 1))
    if high_gap and not low_gap:
        return IRREGULAR
    if low_gap:
        return UNCLEAR
    return REGULAR


def eligible_activities(record: AthleteRecord) -> list[ActivityData]:
    """Drop activities shorter than 5 minutes or with a sticky monitor."""
    out = []
    for act in record.activities:
        if act.duration_s < MIN_ACTIVITY_S:
            continue
        if _has_sticky_run(act.series):
            continue
        out.append(act)
    return out


def irregular_ratio(record: AthleteRecord) -> float:
    """Percent of classifiable activities (not Unclear/Check_Strap) that are
    Irregular."""
    modal = record.modal_hr()
    counts = {REGULAR: 0, IRREGULAR: 0}
    for act in record.activities:
        if act.duration_s < MIN_ACTIVITY_S:
            continue
        cls = classify_activity(act.series, record.lthr, modal)
        if cls in counts:
            counts[cls] += 1
    classified = counts[REGULAR] + counts[IRREGULAR]
    if classified == 0:
        return 0.0
    return 100.0 * counts[IRREGULAR] / classified


# -- Poisson rate and LR test ----------------------------------------------


def poisson_rate(record: AthleteRecord) -> float:
    """MLE of the homogeneous spike rate: total spikes over total hours."""
    acts = eligible_activities(record)
    hours = sum(a.duration_s for a in acts) / 3600.0
    if hours <= 0:
        raise ZeroExposure(f"athlete {record.athlete_id} has no eligible activity time")
    n = sum(len(a.spikes) for a in acts)
    return n / hours


def _bin_index(values: np.ndarray, edges: np.ndarray) -> np.ndarray:
    """Bin values into len(edges)-1 intervals; out-of-range values are
    clipped into the first/last bin so every second is counted exactly once."""
    idx = np.searchsorted(edges, values, side="right") - 1
    return np.clip(idx, 0, len(edges) - 2)


def lr_test(
    record: AthleteRecord, bin_edges=DEFAULT_BIN_EDGES
) -> tuple[float, float, tuple[RateBin, ...]]:
    """Likelihood-ratio test of a constant spike intensity against one that
    is piecewise constant in the smoothed heart rate.

    Exposure T_i counts the seconds each activity's spike-free smoothed
    heart rate spends in bin i; N_i counts the spikes that fire there.
    Bins with no exposure are discounted; D = 2 [l(lambda_1..k) - l0] is
    referred to a chi-squared with k-1 degrees of freedom.
    """
    edges = np.asarray(bin_edges, dtype=float)
    if edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("bin edges must be strictly increasing with >= 2 entries")
    k_raw = edges.size - 1
    t_seconds = np.zeros(k_raw)
    n_events = np.zeros(k_raw, dtype=int)
    acts = eligible_activities(record)
    for act in acts:
        sec_bins = _bin_index(act.smoothed, edges)
        t_seconds += np.bincount(sec_bins, minlength=k_raw)
        for s in act.spikes:
            t = int(round(s.time - act.series.start_time))
            t = min(max(t, 0), act.smoothed.size - 1)
            n_events[_bin_index(np.array([act.smoothed[t]]), edges)[0]] += 1
    if t_seconds.sum() <= 0:
        raise ZeroExposure(f"athlete {record.athlete_id} has no eligible activity time")

    keep = t_seconds > 0  # no exposure implies no events; discount those bins
    bins = tuple(
        RateBin(
            hr_lo=float(edges[i]),
            hr_hi=float(edges[i + 1]),
            n_events=int(n_events[i]),
            hours=float(t_seconds[i] / 3600.0),
            rate_per_hour=float(n_events[i] / (t_seconds[i] / 3600.0)),
        )
        for i in range(k_raw)
        if keep[i]
    )
    k = len(bins)
    n_total = int(n_events.sum())
    hours_total = float(t_seconds.sum() / 3600.0)
    if k <= 1 or n_total == 0:
        return 0.0, 1.0, bins
    lam0 = n_total / hours_total
    # D = 2 sum_i N_i log(lambda_i / lambda_0), with 0 log 0 := 0
    d_stat = 0.0
    for b in bins:
        if b.n_events > 0:
            d_stat += 2.0 * b.n_events * math.log(b.rate_per_hour / lam0)
    d_stat = max(d_stat, 0.0)
    p = float(stats.chi2.sf(d_stat, k - 1))
    return d_stat, p, bins


def summarize_athlete(record: AthleteRecord, bin_edges=DEFAULT_BIN_EDGES) -> AthleteSummary:
    acts = eligible_activities(record)
    hours = sum(a.duration_s for a in acts) / 3600.0
    if hours <= 0:
        raise ZeroExposure(f"athlete {record.athlete_id} has no eligible activity time")
    n = sum(len(a.spikes) for a in acts)
    d_stat, p, bins = lr_test(record, bin_edges)
    return AthleteSummary(
        athlete_id=record.athlete_id,
        n_spikes=n,
        hours=hours,
        lambda_hat=n / hours,
        bins=bins,
        lr_statistic=d_stat,
        p_value=p,
        irregular_ratio=irregular_ratio(record),
        survey_response=record.survey_response,
    )


# -- correlation checks ------------------------------------------------------


def point_biserial(values, labels) -> tuple[float, float]:
    """Pearson correlation of a continuous variable against 0/1 labels,
    with a two-sided t test on n-2 degrees of freedom."""
    x = np.asarray(values, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.size != y.size:
        raise ValueError("values and labels must align")
    if x.size < 4:
        raise TooFewSamples(f"need n >= 4, got {x.size}")
    if not (np.any(y == 0) and np.any(y == 1)):
        raise DegenerateLabels("both label classes must be present")
    if np.all(x == x[0]):
        raise ZeroVariance("values are constant")
    r = float(np.corrcoef(x, y)[0, 1])
    n = x.size
    if abs(r) >= 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    p = 2.0 * float(stats.t.sf(abs(t), n - 2))
    return r, p


@dataclass(frozen=True)
class LogisticFit:
    intercept: float
    slope: float
    se_intercept: float
    se_slope: float
    n_iterations: int
    log_likelihood: float


def logistic_fit(values, labels, max_iter: int = 100, tol: float = 1e-10) -> LogisticFit:
    """Maximum-likelihood logistic regression of a binary label on one
    covariate, by iteratively reweighted least squares (Newton steps on the
    log-likelihood). Stops when the log-likelihood moves by less than
    ``tol``; complete separation is detected up front and reported."""
    x = np.asarray(values, dtype=float)
    y = np.asarray(labels, dtype=float)
    if x.size != y.size:
        raise ValueError("values and labels must align")
    if not (np.any(y == 0) and np.any(y == 1)):
        raise DegenerateLabels("both label classes must be present")
    if max(x[y == 0]) < min(x[y == 1]) or max(x[y == 1]) < min(x[y == 0]):
        raise Separation("classes are completely separated; MLE does not exist")
    design = np.column_stack([np.ones_like(x), x])
    beta = np.zeros(2)

    def loglik(b):
        eta = design @ b
        return float(np.sum(y * eta - np.logaddexp(0.0, eta)))

    prev = loglik(beta)
    for it in range(1, max_iter + 1):
        eta = design @ beta
        p = 1.0 / (1.0 + np.exp(-eta))
        w = p * (1.0 - p)
        hessian = design.T @ (design * w[:, None])
        gradient = design.T @ (y - p)
        try:
            beta = beta + np.linalg.solve(hessian, gradient)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence("singular information matrix") from exc
        cur = loglik(beta)
        if abs(cur - prev) < tol:
            eta = design @ beta
            p = 1.0 / (1.0 + np.exp(-eta))
            w = p * (1.0 - p)
            cov = np.linalg.inv(design.T @ (design * w[:, None]))
            return LogisticFit(
                intercept=float(beta[0]),
                slope=float(beta[1]),
                se_intercept=float(math.sqrt(cov[0, 0])),
                se_slope=float(math.sqrt(cov[1, 1])),
                n_iterations=it,
                log_likelihood=cur,
            )
        prev = cur
    raise NoConvergence(f"IRLS did not converge within {max_iter} iterations")


# -- sweeps and filtering ----------------------------------------------------


def rate_above_threshold(record: AthleteRecord, h_thresh: float) -> float:
    """Spike rate counting only spikes whose base heart rate clears h_thresh."""
    acts = eligible_activities(record)
    hours = sum(a.duration_s for a in acts) / 3600.0
    if hours <= 0:
        raise ZeroExposure(f"athlete {record.athlete_id} has no eligible activity time")
    n = sum(sum(1 for s in a.spikes if s.base_hr >= h_thresh) for a in acts)
    return n / hours


@dataclass(frozen=True)
class SweepPoint:
    h_thresh: float
    r: float | None
    p_value: float | None


def threshold_sweep(records, thresholds) -> list[SweepPoint]:
    """Re-estimate each athlete's rate with spikes below h_thresh removed
    and correlate against the survey labels, for each threshold."""
    records = list(records)
    labels = [r.survey_response for r in records]
    if sum(labels) < 2 or sum(not v for v in labels) < 2:
        raise DegenerateLabels("need at least two athletes per survey class")
    out = []
    for h in thresholds:
        rates = [rate_above_threshold(rec, h) for rec in records]
        try:
            r, p = point_biserial(rates, labels)
        except (ZeroVariance, DegenerateLabels, TooFewSamples):
            out.append(SweepPoint(h_thresh=float(h), r=None, p_value=None))
            continue
        out.append(SweepPoint(h_thresh=float(h), r=r, p_value=p))
    return out


def outlier_filter(summaries, percentile: float) -> list[AthleteSummary]:
    """Keep athletes that are not above the given percentile in either the
    spike rate or the irregular ratio."""
    if not 50.0 < percentile <= 100.0:
        raise ValueError("percentile must lie in (50, 100]")
    summaries = list(summaries)
    lam = np.array([s.lambda_hat for s in summaries])
    ratio = np.array([s.irregular_ratio for s in summaries])
    lam_cut = np.percentile(lam, percentile)
    ratio_cut = np.percentile(ratio, percentile)
    return [s for s in summaries if s.lambda_hat <= lam_cut and s.irregular_ratio <= ratio_cut]


# -- cohort histograms --------------------------------------------------------


def averaged_histogram(records, value_fn, bin_edges) -> np.ndarray:
    """Average per-athlete normalised histograms with equal athlete weight."""
    edges = np.asarray(bin_edges, dtype=float)
    acc = np.zeros(edges.size - 1)
    n_athletes = 0
    for rec in records:
        values = np.asarray(value_fn(rec), dtype=float)
        if values.size == 0:
            continue
        hist, _ = np.histogram(values, bins=edges)
        total = hist.sum()
        if total == 0:
            continue
        acc += hist / total
        n_athletes += 1
    return acc / n_athletes if n_athletes else acc


def spike_hr_histogram(records, bin_width: float = 5.0, lo: float = 40.0, hi: float = 220.0):
    edges = np.arange(lo, hi + bin_width, bin_width)
    weights = averaged_histogram(
        records,
        lambda rec: [s.base_hr for a in eligible_activities(rec) for s in a.spikes],
        edges,
    )
    return edges, weights


def spike_time_histogram(records, bin_width_s: float = 60.0, max_time_s: float = 3600.0):
    edges = np.arange(0.0, max_time_s + bin_width_s, bin_width_s)
    weights = averaged_histogram(
        records,
        lambda rec: [
            s.time - a.series.start_time for a in eligible_activities(rec) for s in a.spikes
        ],
        edges,
    )
    return edges, weights
