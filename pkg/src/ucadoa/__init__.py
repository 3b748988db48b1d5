"""Joint elevation/azimuth DOA estimation on uniform circular arrays with the
modified propagator method, plus PM and MUSIC baselines."""

from .array_model import (
    Direction,
    UcaGeometry,
    array_response,
    reference_directions,
    reference_geometry,
    steering_element,
    steering_vector,
    validate_assumptions,
)
from .covariance import OpCount, PartialCovariances, partial_covariances, partial_from_exact, sample_covariance
from .errors import (
    BadNoiseCovariance,
    DegenerateDirections,
    DoaError,
    InsufficientElements,
    NumericalFailure,
    ScenarioError,
    SingularBlock,
)
from .estimators import Propagator, SpectrumFn, fit_mpm, fit_music, fit_pm, mpm_spectrum
from .experiments import Scenario, run_experiment, run_trial, sweep
from .signal_sim import NoiseModel, SnapshotMatrix, SourceModel, exact_covariance, synthesize_snapshots
from .spectrum import ScanGrid, SpectrumGrid, find_peaks, refine_peak, scan

__version__ = "0.1.0"
