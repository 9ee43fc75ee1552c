"""Discrete and continuous wavelet transforms.

The DWT is a multiresolution filter-bank: at each level the running
approximation is convolved with the analysis pair and decimated by two,
after half-sample symmetric extension to reduce end effects. Orthogonal
filter coefficients are taken from the standard published tables and are
not trusted blindly: the perfect-reconstruction test suite validates them.

The CWT correlates the signal with translated/rescaled complex Morlet
wavelets; moduli of the coefficients form one smooth hump per spike.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import fftconvolve

from .errors import EmptySignal, LevelTooDeep, NonPositiveScale, ShapeMismatch

# Orthogonal scaling filters (reconstruction low-pass), published table values.
# Each sums to sqrt(2) and has unit energy.
_SCALING_FILTERS: dict[str, tuple[float, ...]] = {
    "haar": (0.7071067811865476, 0.7071067811865476),
    "db2": (
        0.48296291314469025,
        0.836516303737469,
        0.22414386804185735,
        -0.12940952255092145,
    ),
    "db4": (
        0.23037781330885523,
        0.7148465705525415,
        0.6308807679295904,
        -0.02798376941698385,
        -0.18703481171888114,
        0.030841381835986965,
        0.032883011666982945,
        -0.010597401784997278,
    ),
    "sym5": (
        0.019538882735286728,
        -0.021101834024758855,
        -0.17532808990845047,
        0.01660210576452232,
        0.6339789634582119,
        0.7234076904024206,
        0.1993975339773936,
        -0.039134249302383094,
        0.029519490925774643,
        0.027333068345077982,
    ),
}

SHIPPED_WAVELETS = tuple(_SCALING_FILTERS)
DEFAULT_WAVELET = "sym5"


@dataclass(frozen=True)
class FilterBank:
    """Analysis/synthesis filter quadruple of an orthogonal wavelet."""

    name: str
    dec_lo: np.ndarray
    dec_hi: np.ndarray
    rec_lo: np.ndarray
    rec_hi: np.ndarray

    def __post_init__(self):
        for attr in ("dec_lo", "dec_hi", "rec_lo", "rec_hi"):
            arr = np.asarray(getattr(self, attr), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, attr, arr)
        if len({len(self.dec_lo), len(self.dec_hi), len(self.rec_lo), len(self.rec_hi)}) != 1:
            raise ShapeMismatch("all four filters must share one length")
        if len(self.dec_lo) % 2:
            raise ShapeMismatch("orthogonal filters have even length")

    @classmethod
    def from_scaling_filter(cls, name: str, rec_lo) -> "FilterBank":
        """Build the quadruple from the scaling filter via the quadrature
        mirror relation g_n = (-1)^n h_{L-1-n}."""
        rec_lo = np.asarray(rec_lo, dtype=float)
        dec_lo = rec_lo[::-1].copy()
        signs = np.where(np.arange(rec_lo.size) % 2 == 0, 1.0, -1.0)
        rec_hi = signs * dec_lo
        dec_hi = rec_hi[::-1].copy()
        return cls(name=name, dec_lo=dec_lo, dec_hi=dec_hi, rec_lo=rec_lo, rec_hi=rec_hi)

    def __len__(self) -> int:
        return len(self.dec_lo)


def get_filter_bank(name: str = DEFAULT_WAVELET) -> FilterBank:
    try:
        taps = _SCALING_FILTERS[name]
    except KeyError:
        raise KeyError(f"unknown wavelet {name!r}; shipped: {', '.join(SHIPPED_WAVELETS)}") from None
    return FilterBank.from_scaling_filter(name, taps)


@dataclass(frozen=True)
class DwtDecomposition:
    """Approximation plus per-level detail coefficients.

    ``details[0]`` is the finest level (m=1). ``level_lengths`` records the
    input length at each analysis step, which the synthesis needs to undo
    the symmetric-extension growth.
    """

    level: int
    approx: np.ndarray
    details: tuple[np.ndarray, ...]
    level_lengths: tuple[int, ...]
    original_length: int
    wavelet: str = DEFAULT_WAVELET
    extension_mode: str = "symmetric"

    def __post_init__(self):
        if self.level != len(self.details) or self.level != len(self.level_lengths):
            raise ShapeMismatch("level does not match detail/length bookkeeping")
        object.__setattr__(self, "approx", np.asarray(self.approx, dtype=float))
        object.__setattr__(
            self, "details", tuple(np.asarray(d, dtype=float) for d in self.details)
        )

    def to_json(self) -> str:
        return json.dumps(
            {
                "level": self.level,
                "approx": self.approx.tolist(),
                "details": [d.tolist() for d in self.details],
                "level_lengths": list(self.level_lengths),
                "original_length": self.original_length,
                "wavelet": self.wavelet,
                "extension_mode": self.extension_mode,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "DwtDecomposition":
        obj = json.loads(text)
        return cls(
            level=obj["level"],
            approx=np.asarray(obj["approx"], dtype=float),
            details=tuple(np.asarray(d, dtype=float) for d in obj["details"]),
            level_lengths=tuple(obj["level_lengths"]),
            original_length=obj["original_length"],
            wavelet=obj.get("wavelet", DEFAULT_WAVELET),
            extension_mode=obj.get("extension_mode", "symmetric"),
        )


def _symmetric_extension(x: np.ndarray, pad: int) -> np.ndarray:
    """Half-sample symmetric extension ( ... x1 x0 | x0 x1 ... ), tiled as
    needed when the pad exceeds the signal length."""
    n = x.size
    tile = np.concatenate([x, x[::-1]])
    idx = np.mod(np.arange(-pad, n + pad), 2 * n)
    return tile[idx]


def _analyze_once(a: np.ndarray, bank: FilterBank) -> tuple[np.ndarray, np.ndarray]:
    L = len(bank)
    ext = _symmetric_extension(a, L - 1)
    out_len = (a.size + L - 1) // 2
    lo = np.convolve(ext, bank.dec_lo, mode="full")[L : L + 2 * out_len : 2]
    hi = np.convolve(ext, bank.dec_hi, mode="full")[L : L + 2 * out_len : 2]
    return lo, hi


def _synthesize_once(
    ca: np.ndarray, cd: np.ndarray, bank: FilterBank, target_len: int
) -> np.ndarray:
    if ca.size != cd.size:
        raise ShapeMismatch(f"approx ({ca.size}) and detail ({cd.size}) coefficient counts differ")
    L = len(bank)
    up_a = np.zeros(2 * ca.size)
    up_a[::2] = ca
    up_d = np.zeros(2 * cd.size)
    up_d[::2] = cd
    full = np.convolve(up_a, bank.rec_lo, mode="full") + np.convolve(up_d, bank.rec_hi, mode="full")
    return full[L - 2 : L - 2 + target_len]


def max_decomposition_level(n: int) -> int:
    """Deepest level allowed for a length-n signal (2^M <= n)."""
    if n < 2:
        return 0
    return int(math.floor(math.log2(n)))


def dwt_decompose(signal, bank: FilterBank, level: int) -> DwtDecomposition:
    """Recursive analysis: convolve with the decomposition pair and decimate
    by two at each level, under symmetric signal extension."""
    x = np.asarray(signal, dtype=float)
    if x.size == 0:
        raise EmptySignal("cannot decompose an empty signal")
    if level < 1:
        raise LevelTooDeep(f"level must be >= 1, got {level}")
    if 2**level > x.size:
        raise LevelTooDeep(f"level {level} too deep for {x.size} samples")
    a = x
    details = []
    lengths = []
    for _ in range(level):
        lengths.append(a.size)
        a, d = _analyze_once(a, bank)
        details.append(d)
    return DwtDecomposition(
        level=level,
        approx=a,
        details=tuple(details),
        level_lengths=tuple(lengths),
        original_length=x.size,
        wavelet=bank.name,
    )


def dwt_reconstruct(decomp: DwtDecomposition, bank: FilterBank) -> np.ndarray:
    """Inverse filter-bank synthesis, truncated to the original length."""
    a = decomp.approx
    for d, target in zip(reversed(decomp.details), reversed(decomp.level_lengths)):
        a = _synthesize_once(a, d, bank, target)
    return a[: decomp.original_length]


def _shrink(values: np.ndarray, rule: str, lam: float) -> np.ndarray:
    out = np.where(np.abs(values) < lam, 0.0, values)
    if rule == "hard":
        return out
    if rule == "soft":
        return np.where(out != 0.0, np.sign(out) * (np.abs(out) - lam), 0.0)
    if rule == "garotte":
        with np.errstate(divide="ignore", invalid="ignore"):
            shrunk = out - lam**2 / out
        return np.where(out != 0.0, shrunk, 0.0)
    raise ValueError(f"unknown shrinkage rule {rule!r}")


def shrink_coefficients(decomp: DwtDecomposition, rule: str, lam) -> DwtDecomposition:
    """Apply hard/soft/garotte shrinkage to the detail coefficients only.

    ``lam`` is either one threshold for every level or a sequence with one
    threshold per level (finest first).
    """
    if np.isscalar(lam):
        lambdas = [float(lam)] * decomp.level
    else:
        lambdas = [float(v) for v in lam]
        if len(lambdas) != decomp.level:
            raise ShapeMismatch(f"{len(lambdas)} thresholds for {decomp.level} levels")
    if any(v < 0 for v in lambdas):
        raise ValueError("shrinkage thresholds must be non-negative")
    details = tuple(_shrink(d, rule, lv) for d, lv in zip(decomp.details, lambdas))
    return replace(decomp, details=details)


def universal_lambdas(decomp: DwtDecomposition, multiplier: float = 1.0) -> list[float]:
    """Per-level universal thresholds sigma_m * sqrt(2 ln n_m) with the noise
    scale estimated by the median absolute coefficient / 0.6745."""
    out = []
    for d in decomp.details:
        if d.size == 0:
            out.append(0.0)
            continue
        sigma = float(np.median(np.abs(d))) / 0.6745
        out.append(multiplier * sigma * math.sqrt(2.0 * math.log(max(d.size, 2))))
    return out


# -- continuous wavelet transform ---------------------------------------


DEFAULT_BANDWIDTH_S2 = 1.0
DEFAULT_CENTRAL_FREQ_HZ = 1.0
_SUPPORT_CUTOFF = 1e-8


@dataclass(frozen=True)
class CwtMatrix:
    """Complex CWT coefficients, one row per scale."""

    scales: tuple[float, ...]
    coefficients: np.ndarray
    bandwidth_s2: float = DEFAULT_BANDWIDTH_S2
    central_freq_hz: float = DEFAULT_CENTRAL_FREQ_HZ

    def __post_init__(self):
        coeff = np.asarray(self.coefficients, dtype=complex)
        if coeff.shape[0] != len(self.scales):
            raise ShapeMismatch("row count must equal number of scales")
        object.__setattr__(self, "coefficients", coeff)

    def row(self, scale: float) -> np.ndarray:
        """Coefficients at the scale nearest the requested one."""
        i = int(np.argmin(np.abs(np.asarray(self.scales) - scale)))
        return self.coefficients[i]


def morlet(t, bandwidth_s2: float = DEFAULT_BANDWIDTH_S2, central_freq_hz: float = DEFAULT_CENTRAL_FREQ_HZ):
    """Complex Morlet mother wavelet (1/sqrt(b pi)) exp(-t^2/b) exp(2 pi i c t)."""
    t = np.asarray(t, dtype=float)
    return (
        1.0
        / math.sqrt(bandwidth_s2 * math.pi)
        * np.exp(-(t**2) / bandwidth_s2)
        * np.exp(2j * math.pi * central_freq_hz * t)
    )


def _support_halfwidth(bandwidth_s2: float) -> float:
    # |psi(u)| falls below the cutoff once u^2/b > ln(peak / cutoff)
    peak = 1.0 / math.sqrt(bandwidth_s2 * math.pi)
    arg = math.log(peak / _SUPPORT_CUTOFF)
    return math.sqrt(bandwidth_s2 * max(arg, 1.0))


def cwt(
    signal,
    scales,
    bandwidth_s2: float = DEFAULT_BANDWIDTH_S2,
    central_freq_hz: float = DEFAULT_CENTRAL_FREQ_HZ,
) -> CwtMatrix:
    """Correlate the signal with child wavelets |a|^-1/2 psi((t - tau)/a).

    The wavelet support is truncated where |psi| < 1e-8 and each row is
    computed by FFT convolution; tests pin the result to direct summation.
    """
    x = np.asarray(signal, dtype=float)
    if x.size == 0:
        raise EmptySignal("cannot transform an empty signal")
    scales = tuple(float(s) for s in scales)
    if any(s <= 0 for s in scales):
        raise NonPositiveScale(f"scales must be positive, got {scales}")
    halfwidth = _support_halfwidth(bandwidth_s2)
    rows = np.empty((len(scales), x.size), dtype=complex)
    for i, a in enumerate(scales):
        half = int(math.ceil(halfwidth * a))
        # correlation with the child wavelet == convolution with this kernel
        j = np.arange(half, -half - 1, -1)
        kernel = np.conj(morlet(j / a, bandwidth_s2, central_freq_hz)) / math.sqrt(a)
        rows[i] = fftconvolve(x, kernel, mode="same")
    return CwtMatrix(
        scales=scales,
        coefficients=rows,
        bandwidth_s2=bandwidth_s2,
        central_freq_hz=central_freq_hz,
    )
