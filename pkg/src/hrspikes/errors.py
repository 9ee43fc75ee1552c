"""Exception types shared across the toolkit."""


class HrSpikesError(Exception):
    """Base class for all toolkit errors."""


# -- series ------------------------------------------------------------


class AllMissing(HrSpikesError):
    """Fewer than two recorded samples; interpolation impossible."""


class MaskMismatch(HrSpikesError):
    """Missing-data mask does not fit the series it is applied to."""


class EmptySeries(HrSpikesError):
    """Operation requires at least one sample."""


class LengthMismatch(HrSpikesError):
    """Two aligned sequences have different lengths."""


class CsvFormatError(HrSpikesError):
    """Activity CSV is malformed (bad header, non-monotonic or duplicate t_s)."""


# -- wavelet -----------------------------------------------------------


class EmptySignal(HrSpikesError):
    """Transform input has no samples."""


class LevelTooDeep(HrSpikesError):
    """Requested decomposition level exceeds what the signal length allows."""


class ShapeMismatch(HrSpikesError):
    """Decomposition pieces are inconsistent with each other."""


class NonPositiveScale(HrSpikesError):
    """CWT scales must be strictly positive."""


# -- detect ------------------------------------------------------------


class TooFewSamples(HrSpikesError):
    """Not enough usable residuals to estimate a threshold."""


# -- simulate ----------------------------------------------------------


class UnstableIntegration(HrSpikesError):
    """SDE integration left the physically plausible envelope."""


class RateTooHigh(HrSpikesError):
    """Per-step event probability too large for Bernoulli thinning."""


# -- evaluate ----------------------------------------------------------


class EmptyGrid(HrSpikesError):
    """Parameter grid for tuning contains no configurations."""


# -- infer -------------------------------------------------------------


class ZeroExposure(HrSpikesError):
    """No activity time available; rates are undefined."""


class DegenerateBins(HrSpikesError):
    """No usable heart-rate bins remain after merging."""


class DegenerateLabels(HrSpikesError):
    """Both label classes must be present (and large enough) for correlation."""


class ZeroVariance(HrSpikesError):
    """Values are constant; correlation is undefined."""


class Separation(HrSpikesError):
    """Logistic regression data are completely separated."""


class NoConvergence(HrSpikesError):
    """Iterative fit failed to converge within the iteration budget."""
