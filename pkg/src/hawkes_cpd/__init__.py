"""Change-point detection for event streams on networks modelled as Hawkes processes."""

from .core import (DegenerateModelError, Event, EventLog, ExcitationState, ExponentialKernel,
                   HawkesModel, OrderingError, StabilityError, Topology, excitation_advance,
                   intensity_direct, log_likelihood, log_likelihood_ratio, spectral_radius)
from .detect import (CusumConfig, GlrConfig, StatisticTrace, calibrate_threshold, cusum_run,
                     glr_run)
from .fit import FitConfig, FitReport, fit_em, profile_beta
from .simulate import (ChangeScenario, ScenarioPreset, make_preset, simulate,
                       simulate_with_change)

__version__ = "0.1.0"
