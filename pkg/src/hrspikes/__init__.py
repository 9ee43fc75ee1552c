"""Heart-rate spike detection, simulation, evaluation and inference toolkit."""

__version__ = "0.1.0"

from .detect import DetectorConfig, Spike, detect_spikes  # noqa: F401
from .series import HeartRateSeries, ResidualSeries  # noqa: F401
from .simulate import ScenarioConfig, SimulatedActivity, simulate_activity  # noqa: F401
