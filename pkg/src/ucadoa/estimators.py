"""Modified propagator (MPM) and the PM / MUSIC baselines.

Every estimator ends up as a linear operator ``W`` that annihilates steering
vectors of the true sources.  Its spatial spectrum is::

    f(theta, phi) = 1 / (||W a(theta, phi)||^2 + eps)

For MPM, ``W = Q^H = [R32 R12^-1 | R31 R21^-1 | -2 I]``; the two left blocks
each map A1 (resp. A2) onto A3, so ``Q^H A = A3 + A3 - 2 A3 = 0``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .array_model import Direction, UcaGeometry, steering_matrix
from .covariance import OpCount, PartialCovariances
from .errors import NumericalFailure, SingularBlock

__all__ = [
    "SPECTRUM_EPS",
    "RCOND_THRESHOLD",
    "Propagator",
    "SpectrumFn",
    "fit_mpm",
    "mpm_spectrum",
    "fit_pm",
    "fit_music",
]

SPECTRUM_EPS = 1e-12
RCOND_THRESHOLD = 1e-10


class SpectrumFn:
    """Spatial spectrum ``1 / (||W a||^2 + eps)`` for a fixed annihilator ``W``.

    Instances are immutable and side-effect free, so they can be evaluated
    concurrently.
    """

    def __init__(self, annihilator: np.ndarray, geometry: UcaGeometry, name: str = "",
                 eps: float = SPECTRUM_EPS):
        w = np.array(annihilator, dtype=complex)
        if w.ndim != 2 or w.shape[1] != geometry.n_elements:
            raise ValueError(
                f"annihilator has shape {w.shape}, expected (*, {geometry.n_elements})"
            )
        w.setflags(write=False)
        self.annihilator = w
        self.geometry = geometry
        self.name = name
        self.eps = eps

    def __repr__(self):
        return f"SpectrumFn({self.name!r}, rows={self.annihilator.shape[0]})"

    def __call__(self, direction: Direction) -> float:
        return float(self.evaluate(direction.elevation, direction.azimuth))

    def residual(self, steering: np.ndarray) -> np.ndarray:
        """``||W a||^2`` for steering vectors stacked along axis 0."""
        shp = steering.shape
        proj = self.annihilator @ steering.reshape(shp[0], -1)
        res = np.einsum("ij,ij->j", proj.real, proj.real) + np.einsum(
            "ij,ij->j", proj.imag, proj.imag
        )
        return res.reshape(shp[1:])

    def from_steering(self, steering: np.ndarray) -> np.ndarray:
        return 1.0 / (self.residual(steering) + self.eps)

    def evaluate(self, elevations, azimuths) -> np.ndarray:
        """Vectorised evaluation on raw angles in radians (no range checks)."""
        return self.from_steering(steering_matrix(self.geometry, elevations, azimuths))


@dataclass(frozen=True)
class Propagator:
    """MPM annihilator. ``q_hmatrix`` is the (N-2P) x N operator ``Q^H``."""

    q_hmatrix: np.ndarray
    p_sources: int
    rcond_r12: float
    rcond_r21: float
    ops: OpCount = field(default_factory=OpCount)

    @property
    def q_matrix(self) -> np.ndarray:
        return self.q_hmatrix.conj().T

    @property
    def n_elements(self) -> int:
        return self.q_hmatrix.shape[1]

    def annihilation_residual(self, a: np.ndarray) -> np.ndarray:
        """``||Q^H a_k|| / ||Q||`` for each column of ``a``."""
        return np.linalg.norm(self.q_hmatrix @ a, axis=0) / np.linalg.norm(self.q_hmatrix)


def _rcond(m: np.ndarray) -> float:
    s = np.linalg.svd(m, compute_uv=False)
    if s[0] == 0 or not np.isfinite(s[0]):
        return 0.0
    return float(s[-1] / s[0])


def _right_solve(b: np.ndarray, r: np.ndarray) -> np.ndarray:
    """``b @ inv(r)`` without forming the inverse."""
    return np.linalg.solve(r.T, b.T).T


def fit_mpm(pc: PartialCovariances, ops: Optional[OpCount] = None) -> Propagator:
    """Build ``Q^H = [R32 R12^-1 | R31 R21^-1 | -2 I]`` from partial blocks."""
    p, n = pc.p_sources, pc.n_elements
    m = n - 2 * p
    rc12, rc21 = _rcond(pc.r12), _rcond(pc.r21)
    if min(rc12, rc21) < RCOND_THRESHOLD:
        raise SingularBlock(
            f"cross-correlation block is singular (rcond {min(rc12, rc21):.3g} < {RCOND_THRESHOLD:g})"
        )
    b1 = _right_solve(pc.r32, pc.r12)
    b2 = _right_solve(pc.r31, pc.r21)
    qh = np.hstack([b1, b2, -2.0 * np.eye(m)])

    if ops is None:
        ops = OpCount()
    # two LU factorisations of P x P plus m right-hand sides each
    lu = (p ** 3 - p) // 3
    ops.record("solve", 2 * (lu + m * p * p), 2 * (lu + m * p * (p - 1)))
    return Propagator(qh, p, rc12, rc21, ops.copy())


def mpm_spectrum(prop: Propagator, geometry: UcaGeometry) -> SpectrumFn:
    if prop.n_elements != geometry.n_elements:
        raise ValueError(
            f"propagator built for {prop.n_elements} elements, geometry has {geometry.n_elements}"
        )
    return SpectrumFn(prop.q_hmatrix, geometry, name="mpm")


def _check_full(rxx: np.ndarray, p: int) -> int:
    rxx = np.asarray(rxx)
    n = rxx.shape[0]
    if rxx.shape != (n, n):
        raise ValueError("covariance must be square")
    if not 1 <= p < n:
        raise ValueError(f"need 1 <= P < N, got P={p}, N={n}")
    return n


def fit_pm(rxx: np.ndarray, p_sources: int, geometry: UcaGeometry,
           ops: Optional[OpCount] = None) -> SpectrumFn:
    """Classical propagator from the whole covariance.

    Columns split as ``[G1 | G2]`` with G1 the first P columns; the propagator
    is the least-squares solution of ``G1 Pi = G2`` and ``W = [Pi^H | -I]``.
    """
    n = _check_full(rxx, p_sources)
    p = p_sources
    g1, g2 = rxx[:, :p], rxx[:, p:]
    if _rcond(g1) < RCOND_THRESHOLD:
        raise SingularBlock("leading covariance columns are rank deficient")
    pi, *_ = np.linalg.lstsq(g1, g2, rcond=None)
    w = np.hstack([pi.conj().T, -np.eye(n - p)])
    if ops is not None:
        # normal equations G1^H G1, G1^H G2, then a P x P solve with N-P rhs
        mult = n * p * p + n * p * (n - p) + (p ** 3 - p) // 3 + (n - p) * p * p
        ops.record("solve", mult)
    return SpectrumFn(w, geometry, name="pm")


def fit_music(rxx: np.ndarray, p_sources: int, geometry: UcaGeometry,
              ops: Optional[OpCount] = None) -> SpectrumFn:
    """Spectral MUSIC on the N-P smallest-eigenvalue eigenvectors."""
    n = _check_full(rxx, p_sources)
    rxx = np.asarray(rxx, dtype=complex)
    if not np.allclose(rxx, rxx.conj().T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(rxx).max())):
        raise ValueError("covariance must be Hermitian")
    try:
        _, v = np.linalg.eigh(rxx)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"eigendecomposition failed: {exc}") from exc
    if not np.all(np.isfinite(v)):
        raise NumericalFailure("eigendecomposition returned non-finite vectors")
    en = v[:, : n - p_sources]
    if ops is not None:
        ops.record("evd", n ** 3)
    return SpectrumFn(en.conj().T, geometry, name="music")
