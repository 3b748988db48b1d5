"""Synthetic narrowband snapshots ``X = A S + N`` for a UCA.

Noise level is set through an SNR in dB relative to the mean source power::

    noise_variance = mean(powers) / 10**(snr_db / 10)

For coloured noise the variance is the average diagonal of the spatial noise
covariance, so a Toeplitz shape with unit diagonal is scaled directly.
``snr_db = inf`` gives noiseless data.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np
from scipy.linalg import toeplitz

from .array_model import Direction, UcaGeometry, array_response, validate_assumptions
from .errors import BadNoiseCovariance, DegenerateDirections

__all__ = [
    "SourceModel",
    "NoiseModel",
    "SnapshotMatrix",
    "toeplitz_ramp_first_row",
    "toeplitz_step_first_row",
    "noise_variance_for_snr",
    "trial_rng",
    "synthesize_snapshots",
    "exact_covariance",
]

SeedLike = Union[int, np.random.SeedSequence, np.random.Generator, None]


def toeplitz_ramp_first_row(n: int) -> list[float]:
    """Linear ramp from 1.0 down to 0.1 over ``n`` lags."""
    if n < 2:
        raise ValueError("ramp needs at least 2 lags")
    return [float(v) for v in np.linspace(1.0, 0.1, n)]


def toeplitz_step_first_row(n: int, step: float = 0.07) -> list[float]:
    """Fixed-step variant ``1, 1-step, 1-2*step, ...`` (ends at 0.09 for n=14)."""
    if n < 2:
        raise ValueError("ramp needs at least 2 lags")
    return [1.0 - step * i for i in range(n)]


@dataclass(frozen=True)
class SourceModel:
    """P narrowband sources.

    ``coherent_pairs`` lists index pairs ``(i, j)`` whose waveforms are the
    same underlying signal (source ``j`` is a scaled copy of source ``i``).
    Without pairs the source covariance is ``diag(powers)``.
    """

    directions: tuple[Direction, ...]
    powers: tuple[float, ...] = ()
    coherent_pairs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        dirs = tuple(self.directions)
        if len(set(dirs)) != len(dirs):
            raise DegenerateDirections("source directions must be pairwise distinct")
        powers = tuple(float(p) for p in self.powers) if self.powers else (1.0,) * len(dirs)
        if len(powers) != len(dirs):
            raise ValueError("powers and directions must have the same length")
        if any(p < 0 or not math.isfinite(p) for p in powers):
            raise ValueError("source powers must be finite and nonnegative")
        pairs = tuple((int(i), int(j)) for i, j in self.coherent_pairs)
        for i, j in pairs:
            if i == j or not (0 <= i < len(dirs) and 0 <= j < len(dirs)):
                raise ValueError(f"bad coherent pair {(i, j)}")
        object.__setattr__(self, "directions", dirs)
        object.__setattr__(self, "powers", powers)
        object.__setattr__(self, "coherent_pairs", pairs)

    @property
    def n_sources(self) -> int:
        return len(self.directions)

    @property
    def independent(self) -> bool:
        return not self.coherent_pairs

    def mixing_matrix(self) -> np.ndarray:
        """P x P matrix M with S = M W for unit-variance independent W."""
        p = self.n_sources
        root = list(range(p))

        def find(i):
            while root[i] != i:
                i = root[i]
            return i

        for i, j in self.coherent_pairs:
            ri, rj = find(i), find(j)
            if ri != rj:
                root[max(ri, rj)] = min(ri, rj)
        m = np.zeros((p, p))
        for k in range(p):
            m[k, find(k)] = math.sqrt(self.powers[k])
        return m

    def covariance(self) -> np.ndarray:
        m = self.mixing_matrix()
        return m @ m.T

    def jittered(self, jitter_db: float, rng: np.random.Generator) -> "SourceModel":
        """Copy with each power scaled by a uniform draw in +-``jitter_db`` dB."""
        if jitter_db == 0:
            return self
        db = rng.uniform(-jitter_db, jitter_db, size=self.n_sources)
        powers = tuple(p * 10 ** (d / 10) for p, d in zip(self.powers, db))
        return SourceModel(self.directions, powers, self.coherent_pairs)


@dataclass(frozen=True)
class NoiseModel:
    """Spatially white or Toeplitz-coloured circular Gaussian noise.

    ``first_row`` applies to the coloured case: ``None`` selects the 1 -> 0.1
    ramp sized to the array; a sequence is used verbatim and must match N.
    """

    kind: str = "awgn"
    first_row: Optional[tuple[float, ...]] = None
    _shape_cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in ("awgn", "toeplitz"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.first_row is not None:
            row = tuple(float(v) for v in self.first_row)
            if len(row) < 2:
                raise ValueError("toeplitz first row needs at least 2 entries")
            object.__setattr__(self, "first_row", row)
            if self.kind == "toeplitz":
                self._factor(len(row))

    def shape(self, n: int) -> np.ndarray:
        """Noise covariance for unit average per-element variance."""
        if self.kind == "awgn":
            return np.eye(n)
        row = self.first_row if self.first_row is not None else toeplitz_ramp_first_row(n)
        if len(row) != n:
            raise BadNoiseCovariance(f"toeplitz first row has {len(row)} entries, array has {n}")
        t = toeplitz(np.asarray(row, float))
        return t / np.mean(np.diag(t))

    def _factor(self, n: int) -> np.ndarray:
        if n not in self._shape_cache:
            try:
                self._shape_cache[n] = np.linalg.cholesky(self.shape(n))
            except np.linalg.LinAlgError as exc:
                raise BadNoiseCovariance("noise covariance is not positive definite") from exc
        return self._shape_cache[n]

    def covariance(self, n: int, variance: float) -> np.ndarray:
        if self.kind == "toeplitz":
            self._factor(n)
        return variance * self.shape(n)

    def sample(self, n: int, k: int, variance: float, rng: np.random.Generator) -> np.ndarray:
        w = (rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k))) / math.sqrt(2)
        sigma = math.sqrt(variance)
        if self.kind == "awgn":
            return sigma * w
        return sigma * (self._factor(n) @ w)


@dataclass(frozen=True)
class SnapshotMatrix:
    samples: np.ndarray
    geometry: UcaGeometry

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=complex)
        if x.ndim != 2 or x.shape[1] < 1:
            raise ValueError("snapshot matrix must be N x K with K >= 1")
        if x.shape[0] != self.geometry.n_elements:
            raise ValueError(
                f"snapshot rows ({x.shape[0]}) differ from element count ({self.geometry.n_elements})"
            )
        object.__setattr__(self, "samples", x)

    @property
    def n_snapshots(self) -> int:
        return self.samples.shape[1]

    @property
    def n_elements(self) -> int:
        return self.samples.shape[0]


def noise_variance_for_snr(sources: SourceModel, snr_db: float) -> float:
    if snr_db == math.inf:
        return 0.0
    ref = float(np.mean(sources.powers)) if sources.n_sources else 1.0
    return ref / 10 ** (snr_db / 10)


def trial_rng(base_seed: int, trial_index: int) -> np.random.Generator:
    """Independent stream for one Monte Carlo trial, stable under reordering."""
    return np.random.default_rng(np.random.SeedSequence(base_seed, spawn_key=(trial_index,)))


def _resolve_variance(sources, snr_db, noise_variance):
    if noise_variance is not None:
        if noise_variance < 0:
            raise ValueError("noise variance must be nonnegative")
        return float(noise_variance)
    if snr_db is None:
        raise ValueError("either snr_db or noise_variance is required")
    return noise_variance_for_snr(sources, snr_db)


def synthesize_snapshots(
    geometry: UcaGeometry,
    sources: SourceModel,
    noise: NoiseModel,
    k: int,
    snr_db: Optional[float] = None,
    seed: SeedLike = None,
    *,
    noise_variance: Optional[float] = None,
) -> SnapshotMatrix:
    """Draw K snapshots. Deterministic for a fixed integer seed or SeedSequence."""
    if k < 1:
        raise ValueError("k must be >= 1")
    var = _resolve_variance(sources, snr_db, noise_variance)
    n = geometry.n_elements
    if sources.n_sources:
        report = validate_assumptions(geometry, sources.n_sources)
        if not report.element_count_ok:
            warnings.warn("; ".join(report.messages()), stacklevel=2)
    if noise.kind == "toeplitz":
        noise._factor(n)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)

    x = np.zeros((n, k), dtype=complex)
    if sources.n_sources:
        p = sources.n_sources
        w = (rng.standard_normal((p, k)) + 1j * rng.standard_normal((p, k))) / math.sqrt(2)
        s = sources.mixing_matrix() @ w
        x += array_response(geometry, sources.directions) @ s
    if var > 0:
        x += noise.sample(n, k, var, rng)
    return SnapshotMatrix(x, geometry)


def exact_covariance(
    geometry: UcaGeometry,
    sources: SourceModel,
    noise: NoiseModel,
    snr_db: Optional[float] = None,
    *,
    noise_variance: Optional[float] = None,
) -> np.ndarray:
    """Asymptotic covariance ``A Rss A^H + Rn`` with no sampling error."""
    var = _resolve_variance(sources, snr_db, noise_variance)
    n = geometry.n_elements
    r = noise.covariance(n, var).astype(complex)
    if sources.n_sources:
        a = array_response(geometry, sources.directions)
        r = r + a @ sources.covariance() @ a.conj().T
    return r
