"""Monte Carlo harness: scenarios, trials, matching and summary statistics."""

from __future__ import annotations

import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Any, Optional, Sequence

import numpy as np

from .array_model import (
    REFERENCE_DIRECTIONS_DEG,
    Direction,
    UcaGeometry,
    validate_assumptions,
)
from .covariance import OpCount, partial_covariances, sample_covariance
from .errors import DoaError, ScenarioError
from .estimators import SpectrumFn, fit_mpm, fit_music, fit_pm, mpm_spectrum
from .signal_sim import (
    NoiseModel,
    SnapshotMatrix,
    SourceModel,
    synthesize_snapshots,
    toeplitz_ramp_first_row,
    toeplitz_step_first_row,
    trial_rng,
)
from .spectrum import PeakSet, ScanGrid, SpectrumGrid, find_peaks, scan

__all__ = [
    "ESTIMATORS",
    "SCHEMA_VERSION",
    "Scenario",
    "TrialResult",
    "EstimatorSummary",
    "ExperimentSummary",
    "SweepResult",
    "great_circle_deg",
    "match_peaks",
    "trial_snapshots",
    "estimate_spectrum",
    "run_trial",
    "run_experiment",
    "sweep",
    "pilot_calibration",
    "reference_awgn_scenario",
    "reference_toeplitz_scenario",
    "coherent_scenario",
]

ESTIMATORS = ("mpm", "pm", "music")
SCHEMA_VERSION = "1"
DEFAULT_SEED = 20260101
MAX_MATCH_SOURCES = 6


@dataclass(frozen=True)
class Scenario:
    """One experiment configuration. Angles in degrees, SI units elsewhere.

    ``snr_db = None`` means noiseless snapshots.  ``toeplitz_first_row`` is
    ``"ramp"`` (1 -> 0.1), ``"step"`` (fixed 0.07 decrement) or explicit values.
    """

    directions_deg: tuple[tuple[float, float], ...] = REFERENCE_DIRECTIONS_DEG
    n_elements: int = 14
    radius_m: float = 0.38
    frequency_hz: float = 900e6
    powers: tuple[float, ...] = ()
    coherent_pairs: tuple[tuple[int, int], ...] = ()
    power_jitter_db: float = 0.0
    noise: str = "awgn"
    toeplitz_first_row: Any = "ramp"
    snr_db: Optional[float] = 10.0
    k_snapshots: int = 100
    n_trials: int = 50
    grid_deg: float = 1.0
    estimators: tuple[str, ...] = ("mpm",)
    seed: int = DEFAULT_SEED
    detection_threshold_deg: float = 2.0

    def __post_init__(self):
        dirs = tuple((float(t), float(p)) for t, p in self.directions_deg)
        object.__setattr__(self, "directions_deg", dirs)
        object.__setattr__(self, "powers", tuple(float(p) for p in self.powers))
        object.__setattr__(
            self, "coherent_pairs", tuple((int(i), int(j)) for i, j in self.coherent_pairs)
        )
        object.__setattr__(self, "estimators", tuple(self.estimators))
        row = self.toeplitz_first_row
        if not isinstance(row, str) and row is not None:
            object.__setattr__(self, "toeplitz_first_row", tuple(float(v) for v in row))

    @property
    def p_sources(self) -> int:
        return len(self.directions_deg)

    def validate(self) -> "Scenario":
        """Raise ScenarioError on any inconsistency; returns self for chaining."""
        try:
            if self.n_trials < 1:
                raise ScenarioError(f"n_trials must be >= 1, got {self.n_trials}")
            if self.k_snapshots < 1:
                raise ScenarioError(f"k_snapshots must be >= 1, got {self.k_snapshots}")
            if not self.estimators:
                raise ScenarioError("at least one estimator is required")
            bad = [e for e in self.estimators if e not in ESTIMATORS]
            if bad:
                raise ScenarioError(f"unknown estimators {bad}; choose from {list(ESTIMATORS)}")
            if len(set(self.estimators)) != len(self.estimators):
                raise ScenarioError("duplicate estimator entries")
            if not 1 <= self.p_sources <= MAX_MATCH_SOURCES:
                raise ScenarioError(f"need 1..{MAX_MATCH_SOURCES} sources, got {self.p_sources}")
            if self.noise not in ("awgn", "toeplitz"):
                raise ScenarioError(f"unknown noise kind {self.noise!r}; use awgn or toeplitz")
            if self.detection_threshold_deg <= 0:
                raise ScenarioError("detection_threshold_deg must be positive")
            if self.power_jitter_db < 0:
                raise ScenarioError("power_jitter_db must be nonnegative")
            if self.snr_db is not None and not math.isfinite(self.snr_db):
                raise ScenarioError("snr_db must be finite (use null for noiseless)")
            geom = self.geometry()
            report = validate_assumptions(geom, self.p_sources)
            if not report.element_count_ok:
                raise ScenarioError("; ".join(report.messages()))
            self.sources()
            self.noise_model().covariance(geom.n_elements, 1.0)
            self.grid()
        except ScenarioError:
            raise
        except (ValueError, DoaError) as exc:
            raise ScenarioError(str(exc)) from exc
        return self

    def geometry(self) -> UcaGeometry:
        return UcaGeometry.from_frequency(self.n_elements, self.radius_m, self.frequency_hz)

    def true_directions(self) -> list[Direction]:
        return [Direction.from_degrees(t, p) for t, p in self.directions_deg]

    def sources(self) -> SourceModel:
        return SourceModel(tuple(self.true_directions()), self.powers, self.coherent_pairs)

    def noise_model(self) -> NoiseModel:
        if self.noise == "awgn":
            return NoiseModel("awgn")
        row = self.toeplitz_first_row
        if row is None or row == "ramp":
            row = toeplitz_ramp_first_row(self.n_elements)
        elif row == "step":
            row = toeplitz_step_first_row(self.n_elements)
        elif isinstance(row, str):
            raise ScenarioError(f"unknown toeplitz_first_row {row!r}")
        return NoiseModel("toeplitz", tuple(row))

    def grid(self) -> ScanGrid:
        return ScanGrid.from_degrees(self.grid_deg)

    def to_dict(self) -> dict:
        row = self.toeplitz_first_row
        return {
            "directions_deg": [list(d) for d in self.directions_deg],
            "n_elements": self.n_elements,
            "radius_m": self.radius_m,
            "frequency_hz": self.frequency_hz,
            "powers": list(self.powers),
            "coherent_pairs": [list(p) for p in self.coherent_pairs],
            "power_jitter_db": self.power_jitter_db,
            "noise": self.noise,
            "toeplitz_first_row": row if isinstance(row, str) or row is None else list(row),
            "snr_db": self.snr_db,
            "k_snapshots": self.k_snapshots,
            "n_trials": self.n_trials,
            "grid_deg": self.grid_deg,
            "estimators": list(self.estimators),
            "seed": self.seed,
            "detection_threshold_deg": self.detection_threshold_deg,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Scenario":
        """Strict constructor: unknown keys are an error."""
        if not isinstance(data, dict):
            raise ScenarioError("scenario must be a mapping")
        known = set(cls.__dataclass_fields__)
        unknown = sorted(set(data) - known)
        if unknown:
            raise ScenarioError(f"unknown scenario keys: {', '.join(unknown)}")
        try:
            return cls(**data).validate()
        except TypeError as exc:
            raise ScenarioError(str(exc)) from exc


def reference_awgn_scenario(**overrides) -> Scenario:
    return replace(Scenario(), **overrides)


def reference_toeplitz_scenario(**overrides) -> Scenario:
    return replace(Scenario(noise="toeplitz", estimators=("mpm", "pm")), **overrides)


def coherent_scenario(**overrides) -> Scenario:
    """Two fully coherent sources taken from the first two reference directions."""
    base = Scenario(directions_deg=REFERENCE_DIRECTIONS_DEG[:2], coherent_pairs=((0, 1),))
    return replace(base, **overrides)


def great_circle_deg(a: Direction, b: Direction) -> float:
    ua, ub = a.unit_vector(), b.unit_vector()
    return math.degrees(math.atan2(np.linalg.norm(np.cross(ua, ub)), float(np.dot(ua, ub))))


def _wrap_deg(d: float) -> float:
    """Wrap an angle difference into (-180, 180]."""
    w = math.fmod(d, 360.0)
    if w <= -180.0:
        w += 360.0
    elif w > 180.0:
        w -= 360.0
    return w


def match_peaks(
    estimates: Sequence[Direction], truth: Sequence[Direction]
) -> tuple[list[Optional[int]], float]:
    """Assign estimates to true directions minimising total great-circle error.

    Returns, for each true direction, the index of its estimate (``None`` when
    there are fewer estimates than sources), and the total distance.
    """
    n_est, n_true = len(estimates), len(truth)
    if n_true > MAX_MATCH_SOURCES:
        raise ValueError(f"exhaustive matching supports at most {MAX_MATCH_SOURCES} sources")
    dist = [[great_circle_deg(e, t) for t in truth] for e in estimates]
    best_total, best = math.inf, None
    if n_est >= n_true:
        # choose which estimate serves each truth
        for perm in itertools.permutations(range(n_est), n_true):
            total = sum(dist[e][t] for t, e in enumerate(perm))
            if total < best_total:
                best_total, best = total, list(perm)
    else:
        for perm in itertools.permutations(range(n_true), n_est):
            total = sum(dist[e][t] for e, t in enumerate(perm))
            if total < best_total:
                best_total, best = total, perm
        if best is not None:
            inv: list[Optional[int]] = [None] * n_true
            for e, t in enumerate(best):
                inv[t] = e
            best = inv
    assignment: list[Optional[int]] = list(best) if best is not None else [None] * n_true
    return assignment, (best_total if best is not None else 0.0)


@dataclass
class TrialResult:
    estimator: str
    trial_index: int
    peaks: PeakSet
    errors_gc_deg: list[float]
    errors_theta_deg: list[float]
    errors_phi_deg: list[float]
    detected: list[bool]
    ops: OpCount
    failure: Optional[str] = None
    spectrum: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def all_detected(self) -> bool:
        return all(self.detected)


def trial_snapshots(scn: Scenario, trial_index: int) -> SnapshotMatrix:
    """Snapshots for one trial, drawn from the (seed, trial_index) stream."""
    rng = trial_rng(scn.seed, trial_index)
    sources = scn.sources().jittered(scn.power_jitter_db, rng)
    return synthesize_snapshots(
        scn.geometry(),
        sources,
        scn.noise_model(),
        scn.k_snapshots,
        scn.snr_db,
        rng,
        noise_variance=0.0 if scn.snr_db is None else None,
    )


def estimate_spectrum(
    x: SnapshotMatrix, p_sources: int, estimator: str, ops: Optional[OpCount] = None
) -> SpectrumFn:
    """Fit one estimator to snapshots; raises SingularBlock/NumericalFailure."""
    g = x.geometry
    if estimator == "mpm":
        return mpm_spectrum(fit_mpm(partial_covariances(x, p_sources, ops), ops), g)
    rxx = sample_covariance(x, ops)
    if estimator == "pm":
        return fit_pm(rxx, p_sources, g, ops)
    if estimator == "music":
        return fit_music(rxx, p_sources, g, ops)
    raise ValueError(f"unknown estimator {estimator!r}")


def _evaluate(scn, truth, grid, trial_index, name, x, keep_spectrum) -> TrialResult:
    p = len(truth)
    ops = OpCount()
    inf = [math.inf] * p
    try:
        fn = estimate_spectrum(x, p, name, ops)
    except DoaError as exc:
        return TrialResult(name, trial_index, PeakSet(), list(inf), list(inf), list(inf),
                           [False] * p, ops, failure=exc.kind)
    sg = scan(fn, grid)
    peaks = find_peaks(sg, p)
    assignment, _ = match_peaks(peaks.directions, truth)
    gc, dth, dph, det = [], [], [], []
    for t, e in zip(truth, assignment):
        if e is None:
            gc.append(math.inf)
            dth.append(math.inf)
            dph.append(math.inf)
            det.append(False)
            continue
        est = peaks[e].direction
        err = great_circle_deg(est, t)
        gc.append(err)
        dth.append(abs(math.degrees(est.elevation - t.elevation)))
        dph.append(abs(_wrap_deg(math.degrees(est.azimuth - t.azimuth))))
        det.append(err <= scn.detection_threshold_deg)
    return TrialResult(name, trial_index, peaks, gc, dth, dph, det, ops,
                       spectrum=sg.values if keep_spectrum else None)


def run_trial(scn: Scenario, trial_index: int, keep_spectrum: bool = False) -> list[TrialResult]:
    """Run every requested estimator on one synthesized snapshot batch.

    Estimator failures are recorded on the result rather than raised.
    """
    x = trial_snapshots(scn, trial_index)
    truth = scn.true_directions()
    grid = scn.grid()
    return [_evaluate(scn, truth, grid, trial_index, name, x, keep_spectrum)
            for name in scn.estimators]


@dataclass
class EstimatorSummary:
    estimator: str
    n_trials: int
    rmse_theta_deg: Optional[float]
    rmse_phi_deg: Optional[float]
    rmse_gc_deg: Optional[float]
    n_detections: int
    detection_rate_per_source: list[float]
    all_detected_rate: float
    mean_ops: dict
    failures: dict
    mean_spectrum_peaks_deg: list[list[float]]

    def as_dict(self) -> dict:
        return {
            "rmse_theta_deg": self.rmse_theta_deg,
            "rmse_phi_deg": self.rmse_phi_deg,
            "rmse_gc_deg": self.rmse_gc_deg,
            "n_detections": self.n_detections,
            "detection_rate_per_source": self.detection_rate_per_source,
            "all_detected_rate": self.all_detected_rate,
            "mean_ops": self.mean_ops,
            "failures": self.failures,
            "mean_spectrum_peaks_deg": self.mean_spectrum_peaks_deg,
            "n_trials": self.n_trials,
        }


@dataclass
class ExperimentSummary:
    scenario: Scenario
    per_estimator: dict[str, EstimatorSummary]

    @property
    def trial_count(self) -> int:
        return self.scenario.n_trials

    def as_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "scenario": self.scenario.to_dict(),
            "per_estimator": {k: v.as_dict() for k, v in self.per_estimator.items()},
            "pilot_calibration": pilot_calibration(),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _rmse(values: list[float]) -> Optional[float]:
    if not values:
        return None
    return math.sqrt(math.fsum(v * v for v in values) / len(values))


def _summarize(name: str, results: list[TrialResult], grid: ScanGrid, p: int) -> EstimatorSummary:
    results = sorted(results, key=lambda r: r.trial_index)
    n = len(results)
    dth, dph, dgc = [], [], []
    per_source = [0] * p
    failures: dict[str, int] = {}
    stage_totals: dict[str, int] = {}
    spec_sum = None
    for r in results:
        for stage, v in r.ops.stages.items():
            stage_totals[stage] = stage_totals.get(stage, 0) + v
        if r.failure:
            failures[r.failure] = failures.get(r.failure, 0) + 1
            continue
        for s in range(p):
            if r.detected[s]:
                per_source[s] += 1
                dth.append(r.errors_theta_deg[s])
                dph.append(r.errors_phi_deg[s])
                dgc.append(r.errors_gc_deg[s])
        if r.spectrum is not None:
            normed = r.spectrum / r.spectrum.max()
            spec_sum = normed if spec_sum is None else spec_sum + normed
    mean_peaks = []
    if spec_sum is not None:
        for pk in find_peaks(SpectrumGrid(spec_sum / n, grid), p):
            mean_peaks.append([round(pk.theta_deg, 6), round(pk.phi_deg, 6)])
    mean_stages = {k: v / n for k, v in sorted(stage_totals.items())}
    return EstimatorSummary(
        estimator=name,
        n_trials=n,
        rmse_theta_deg=_rmse(dth),
        rmse_phi_deg=_rmse(dph),
        rmse_gc_deg=_rmse(dgc),
        n_detections=len(dgc),
        detection_rate_per_source=[c / n for c in per_source],
        all_detected_rate=sum(1 for r in results if not r.failure and r.all_detected) / n,
        mean_ops={"stages": mean_stages, "complex_multiplies": sum(mean_stages.values())},
        failures=dict(sorted(failures.items())),
        mean_spectrum_peaks_deg=mean_peaks,
    )


def run_experiment(scn: Scenario, workers: Optional[int] = None,
                   average_spectra: bool = True) -> ExperimentSummary:
    """Run ``scn.n_trials`` trials and aggregate per-estimator statistics.

    Trials may run on a thread pool; aggregation happens in trial order, so
    the summary does not depend on ``workers``.
    """
    scn.validate()

    def one(t):
        return run_trial(scn, t, keep_spectrum=average_spectra)

    idx = range(scn.n_trials)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            trials = list(pool.map(one, idx))
    else:
        trials = [one(t) for t in idx]
    grid = scn.grid()
    per = {}
    for k, name in enumerate(scn.estimators):
        per[name] = _summarize(name, [tr[k] for tr in trials], grid, scn.p_sources)
    return ExperimentSummary(scn, per)


@dataclass
class SweepResult:
    parameter: str
    value: Any
    summary: Optional[ExperimentSummary] = None
    diagnostic: Optional[str] = None


SWEEP_PARAMETERS = ("snr_db", "k_snapshots", "n_elements")


def sweep(scn: Scenario, parameter: str, values: Sequence, workers: Optional[int] = None,
          average_spectra: bool = False) -> list[SweepResult]:
    """Re-run the experiment for each value of one parameter, in input order.

    Values that produce an invalid scenario are skipped with a diagnostic.
    """
    if parameter not in SWEEP_PARAMETERS:
        raise ValueError(f"cannot sweep {parameter!r}; choose from {list(SWEEP_PARAMETERS)}")
    if not values:
        raise ValueError("sweep needs at least one value")
    out = []
    for v in values:
        try:
            s = replace(scn, **{parameter: v}).validate()
        except ScenarioError as exc:
            out.append(SweepResult(parameter, v, diagnostic=str(exc)))
            continue
        out.append(SweepResult(parameter, v, run_experiment(s, workers, average_spectra)))
    return out


def pilot_calibration() -> dict:
    """Frozen detection thresholds plus the raw pilot numbers they came from."""
    text = resources.files("ucadoa").joinpath("data/pilot_calibration.json").read_text()
    return json.loads(text)
