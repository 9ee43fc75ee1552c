"""Synthetic heart-rate activities with ground-truth spikes.

Three components are simulated in order and then assembled:

1. base heart rate: Euler-Maruyama integration of an SDE whose drift is
   the gradient of an asymmetric two-stiffness potential (upward
   excursions are pulled back harder than downward ones);
2. additional monitor noise: a mean-reverting Ornstein-Uhlenbeck process
   with a time-varying diffusion coefficient (noisy windows);
3. spikes: per-second Bernoulli thinning of an inhomogeneous Poisson
   process whose intensity is a piecewise-constant function of the base
   heart rate, with log-normal jump heights.

The sum is smoothed with a short moving average and rounded to integer
bpm, mimicking what a real monitor records.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import lfilter

from .detect import Spike
from .errors import LengthMismatch, RateTooHigh, UnstableIntegration
from .series import HeartRateSeries, smooth_array

SCENARIOS = ("constant", "interval_training", "step_change", "heteroscedastic", "combined")

DT_S = 1.0
ENVELOPE_BPM = (0.0, 300.0)


@dataclass(frozen=True)
class PotentialSurface:
    """Two-stiffness quadratic potential with its minimum at ``minimum_bpm``.

    V(x) = k_left/2 (x-m)^2 below the minimum and k_right/2 (x-m)^2 above
    it; k_right > k_left penalises upward excursions more, so the simulated
    heart rate seldom exceeds its natural ceiling.
    """

    minimum_bpm: float = 155.0
    k_left: float = 0.002
    k_right: float = 0.01
    ceiling_bpm: float = 185.0

    def __post_init__(self):
        if not (self.k_right > self.k_left > 0):
            raise ValueError("require k_right > k_left > 0 (asymmetric restoring force)")

    def gradient(self, x: float, minimum: float) -> float:
        """V'(x) around a (possibly time-shifted) minimum."""
        k = self.k_right if x > minimum else self.k_left
        return k * (x - minimum)


@dataclass(frozen=True)
class PiecewiseRate:
    """Spike intensity (spikes/hour) as a piecewise-constant map of bpm."""

    edges_bpm: tuple[float, ...] = ()
    rates_per_hour: tuple[float, ...] = (12.0,)

    def __post_init__(self):
        if len(self.rates_per_hour) != len(self.edges_bpm) + 1:
            raise ValueError("need one more rate than edges")
        if any(r < 0 for r in self.rates_per_hour):
            raise ValueError("rates must be non-negative")
        if list(self.edges_bpm) != sorted(self.edges_bpm):
            raise ValueError("edges must be ascending")

    @classmethod
    def constant(cls, rate_per_hour: float) -> "PiecewiseRate":
        return cls(edges_bpm=(), rates_per_hour=(rate_per_hour,))

    @classmethod
    def step(cls, threshold_bpm: float, low: float, high: float) -> "PiecewiseRate":
        return cls(edges_bpm=(threshold_bpm,), rates_per_hour=(low, high))

    def at(self, x) -> np.ndarray:
        """Rate (spikes/hour) for each bpm value."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(np.asarray(self.edges_bpm), x, side="right")
        return np.asarray(self.rates_per_hour, dtype=float)[idx]


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to reproduce one simulated activity.

    All numeric defaults here are calibration choices, not published
    values; they are deliberately exposed so the tuner and tests can see
    and vary them.
    """

    duration_s: int = 3600
    scenario: str = "constant"
    seed: int = 0
    potential: PotentialSurface = field(default_factory=PotentialSurface)
    sigma: float = 0.02  # base diffusion, bpm/sqrt(s)
    ou_alpha: float = 0.9  # mean-reversion rate, 1/s
    ou_beta_quiet: float = 0.26  # diffusion outside noisy windows, bpm/sqrt(s)
    ou_beta_noisy: float = 0.65  # diffusion inside noisy windows
    noisy_window_s: int = 600  # heteroscedastic burst length (activity start)
    rest_level_bpm: float = 144.0
    work_level_bpm: float = 156.0
    interval_period_s: int = 600
    step_fraction: float = 0.5  # step_change: jump point as fraction of duration
    spike_rate: PiecewiseRate = field(default_factory=lambda: PiecewiseRate.constant(12.0))
    spike_log_mu: float = math.log(25.0)
    spike_log_sigma: float = 0.4
    assembly_width: int = 9  # s, the monitor-style smoothing window

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ValueError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.duration_s < 300:
            raise ValueError("activities shorter than 300 s are dropped; refuse to simulate one")

    def minimum_at(self, t: np.ndarray) -> np.ndarray:
        """Potential minimum m(t) for the configured activity pattern."""
        t = np.asarray(t, dtype=float)
        base = np.full(t.shape, self.potential.minimum_bpm)
        if self.scenario in ("interval_training", "combined"):
            # smooth work/rest oscillation, starting from the rest level
            mid = 0.5 * (self.rest_level_bpm + self.work_level_bpm)
            amp = 0.5 * (self.work_level_bpm - self.rest_level_bpm)
            return mid - amp * np.cos(math.pi * t / self.interval_period_s)
        if self.scenario == "step_change":
            t_star = self.step_fraction * self.duration_s
            return np.where(t < t_star, self.rest_level_bpm, self.work_level_bpm)
        return base

    def beta_at(self, t: np.ndarray) -> np.ndarray:
        """OU diffusion beta(t); noisy windows model monitor contact failures."""
        t = np.asarray(t, dtype=float)
        if self.scenario == "heteroscedastic":
            return np.where(t < self.noisy_window_s, self.ou_beta_noisy, self.ou_beta_quiet)
        if self.scenario == "combined":
            block = (t // self.noisy_window_s).astype(int)
            return np.where(block % 2 == 0, self.ou_beta_noisy, self.ou_beta_quiet)
        return np.full(t.shape, self.ou_beta_quiet)

    def rng_for(self, stream: int) -> np.random.Generator:
        """Independent generator per component (0=base, 1=noise, 2=spikes)."""
        return np.random.default_rng([self.seed, stream])


@dataclass(frozen=True)
class SimulatedActivity:
    series: HeartRateSeries
    truth: tuple[Spike, ...]
    config: ScenarioConfig


def simulate_base(config: ScenarioConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Euler-Maruyama integration of dX = -V'(X, t) dt + sigma dW at 1 Hz."""
    rng = rng if rng is not None else config.rng_for(0)
    n = config.duration_s
    t = np.arange(n)
    minimum = config.minimum_at(t)
    noise = config.sigma * math.sqrt(DT_S) * rng.standard_normal(n - 1)
    x = np.empty(n)
    x[0] = minimum[0]
    grad = config.potential.gradient
    for i in range(1, n):
        x[i] = x[i - 1] - grad(x[i - 1], minimum[i - 1]) * DT_S + noise[i - 1]
    if x.min() < ENVELOPE_BPM[0] or x.max() > ENVELOPE_BPM[1]:
        raise UnstableIntegration(
            f"base heart rate left [{ENVELOPE_BPM[0]}, {ENVELOPE_BPM[1]}] bpm"
        )
    return x


def simulate_noise(config: ScenarioConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Mean-reverting OU noise dY = -alpha Y dt + beta(t) dW, Y_0 = 0."""
    rng = rng if rng is not None else config.rng_for(1)
    n = config.duration_s
    beta = config.beta_at(np.arange(n))
    shocks = beta[:-1] * math.sqrt(DT_S) * rng.standard_normal(n - 1)
    phi = 1.0 - config.ou_alpha * DT_S
    if not 0 < phi < 1:
        raise ValueError("ou_alpha * dt must lie in (0, 1) for a stable Euler step")
    # Y_t = phi Y_{t-1} + shock_t is an AR(1) filter
    y = np.empty(n)
    y[0] = 0.0
    y[1:] = lfilter([1.0], [1.0, -phi], shocks)
    return y


def simulate_spikes(
    x_base: np.ndarray, config: ScenarioConfig, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, list[Spike]]:
    """Thinning: each second fires with probability r(X_t) dt; heights are
    i.i.d. log-normal. Returns the spike component and the ground truth."""
    rng = rng if rng is not None else config.rng_for(2)
    x_base = np.asarray(x_base, dtype=float)
    prob = config.spike_rate.at(x_base) / 3600.0 * DT_S
    if prob.max() > 0.5:
        raise RateTooHigh(f"r*dt = {prob.max():.3f} > 0.5 breaks thinning accuracy")
    fired = rng.random(x_base.size) < prob
    z = np.zeros(x_base.size)
    truth: list[Spike] = []
    for t in np.flatnonzero(fired):
        height = float(rng.lognormal(config.spike_log_mu, config.spike_log_sigma))
        z[t] = height
        truth.append(Spike(time=float(t), height=height, base_hr=float(x_base[t])))
    return z, truth


def assemble(
    x_base: np.ndarray, y_noise: np.ndarray, z_spikes: np.ndarray, config: ScenarioConfig,
    truth: list[Spike] | None = None,
) -> SimulatedActivity:
    """Smooth X+Y+Z with a short moving average, round to integer bpm."""
    if not (len(x_base) == len(y_noise) == len(z_spikes)):
        raise LengthMismatch("component series must have equal lengths")
    raw = np.asarray(x_base) + np.asarray(y_noise) + np.asarray(z_spikes)
    h = np.round(smooth_array(raw, config.assembly_width))
    series = HeartRateSeries(samples=h)
    return SimulatedActivity(series=series, truth=tuple(truth or ()), config=config)


def simulate_activity(config: ScenarioConfig) -> SimulatedActivity:
    """Full pipeline with per-component rng streams derived from the seed."""
    x = simulate_base(config)
    y = simulate_noise(config)
    z, truth = simulate_spikes(x, config)
    return assemble(x, y, z, config, truth)


def batch_configs(
    count: int,
    base_seed: int,
    duration_s: int = 3600,
    scenarios: tuple[str, ...] = SCENARIOS,
    template: ScenarioConfig | None = None,
) -> list[ScenarioConfig]:
    """Round-robin scenario mix with per-activity derived seeds."""
    template = template or ScenarioConfig(duration_s=duration_s)
    out = []
    for i in range(count):
        out.append(
            replace(
                template,
                duration_s=duration_s,
                scenario=scenarios[i % len(scenarios)],
                seed=base_seed + i,
            )
        )
    return out


def simulate_batch(configs) -> list[SimulatedActivity]:
    return [simulate_activity(c) for c in configs]


# -- lightweight athlete corpora -----------------------------------------
#
# Inference-scale experiments need hundreds of activity-hours per athlete;
# running the full SDE pipeline for those would be waste. These helpers
# draw the smoothed heart-rate profile directly as an AR(1) wander and
# place spikes by the same Bernoulli thinning.


def synth_profile(
    duration_s: int,
    mean_bpm: float,
    spread_bpm: float,
    rng: np.random.Generator,
    corr_time_s: float = 120.0,
) -> np.ndarray:
    """Stationary AR(1) heart-rate profile with the given sd and
    autocorrelation time."""
    phi = math.exp(-1.0 / corr_time_s)
    innov_sd = spread_bpm * math.sqrt(1.0 - phi * phi)
    shocks = innov_sd * rng.standard_normal(duration_s)
    shocks[0] = spread_bpm * rng.standard_normal()
    wander = lfilter([1.0], [1.0, -phi], shocks)
    return mean_bpm + wander


def synth_activity_spikes(
    profile: np.ndarray,
    rate: PiecewiseRate,
    rng: np.random.Generator,
    log_mu: float = math.log(15.0),
    log_sigma: float = 0.4,
) -> list[Spike]:
    prob = rate.at(profile) / 3600.0
    if prob.max() > 0.5:
        raise RateTooHigh("per-second spike probability above 0.5")
    fired = np.flatnonzero(rng.random(profile.size) < prob)
    return [
        Spike(
            time=float(t),
            height=float(rng.lognormal(log_mu, log_sigma)),
            base_hr=float(profile[t]),
        )
        for t in fired
    ]
