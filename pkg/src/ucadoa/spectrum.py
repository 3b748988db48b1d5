"""Grid scanning of a spatial spectrum, peak picking and peak refinement."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .array_model import Direction, UcaGeometry, steering_matrix
from .estimators import SpectrumFn

__all__ = [
    "ScanGrid",
    "SpectrumGrid",
    "Peak",
    "PeakSet",
    "scan",
    "find_peaks",
    "refine_peak",
    "write_spectrum_csv",
]

TWO_PI = 2 * math.pi
_NODE_TOL = 1e-9


@dataclass(frozen=True)
class ScanGrid:
    """Elevation nodes ``i*theta_step`` on [0, pi/2], azimuth ``j*phi_step`` on [0, 2*pi)."""

    theta_step: float = math.pi / 180
    phi_step: float = math.pi / 180

    def __post_init__(self):
        if not (self.theta_step > 0 and self.phi_step > 0):
            raise ValueError("grid steps must be positive")
        if self.n_theta < 3 or self.n_phi < 3:
            raise ValueError("grid needs at least 3 nodes per axis")

    @classmethod
    def from_degrees(cls, theta_step_deg: float = 1.0, phi_step_deg: Optional[float] = None):
        if phi_step_deg is None:
            phi_step_deg = theta_step_deg
        return cls(math.radians(theta_step_deg), math.radians(phi_step_deg))

    @property
    def n_theta(self) -> int:
        return int(math.floor((math.pi / 2) / self.theta_step + _NODE_TOL)) + 1

    @property
    def n_phi(self) -> int:
        return int(math.ceil(TWO_PI / self.phi_step - _NODE_TOL))

    @property
    def periodic(self) -> bool:
        """True when the azimuth nodes tile the full circle evenly."""
        return abs(self.n_phi * self.phi_step - TWO_PI) < 1e-9 * TWO_PI

    @property
    def thetas(self) -> np.ndarray:
        return np.arange(self.n_theta) * self.theta_step

    @property
    def phis(self) -> np.ndarray:
        return np.arange(self.n_phi) * self.phi_step

    def node(self, i: int, j: int) -> Direction:
        return Direction(i * self.theta_step, (j * self.phi_step) % TWO_PI)

    def nearest_index(self, direction: Direction) -> tuple[int, int]:
        i = int(round(direction.elevation / self.theta_step))
        j = int(round(direction.azimuth / self.phi_step))
        return min(i, self.n_theta - 1), j % self.n_phi


@lru_cache(maxsize=8)
def _grid_steering(geometry: UcaGeometry, grid: ScanGrid) -> np.ndarray:
    s = steering_matrix(geometry, grid.thetas[:, None], grid.phis[None, :])
    s.setflags(write=False)
    return s


@dataclass(frozen=True)
class SpectrumGrid:
    values: np.ndarray  # (n_theta, n_phi)
    grid: ScanGrid

    def __post_init__(self):
        if self.values.shape != (self.grid.n_theta, self.grid.n_phi):
            raise ValueError("spectrum values do not match the grid")

    def argmax(self) -> Direction:
        i, j = np.unravel_index(np.argmax(self.values), self.values.shape)
        return self.grid.node(int(i), int(j))

    def to_csv_rows(self) -> list[str]:
        th = np.degrees(self.grid.thetas)
        ph = np.degrees(self.grid.phis)
        lines = ["theta_deg,phi_deg,power"]
        for i, t in enumerate(th):
            row = self.values[i]
            lines.extend(f"{t:.6f},{p:.6f},{v:.8e}" for p, v in zip(ph, row))
        return lines


def write_spectrum_csv(sg: SpectrumGrid, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(sg.to_csv_rows()))
        fh.write("\n")


def scan(
    spec: Union[SpectrumFn, Callable[[Direction], float]],
    grid: ScanGrid,
    workers: Optional[int] = None,
) -> SpectrumGrid:
    """Evaluate ``spec`` on every grid node, row by row.

    Rows are independent, so ``workers > 1`` evaluates them on a thread pool;
    the per-row arithmetic is identical either way, giving bit-identical grids.
    Plain callables are evaluated node by node.
    """
    if isinstance(spec, SpectrumFn):
        steer = _grid_steering(spec.geometry, grid)

        def row(i):
            return spec.from_steering(steer[:, i, :])
    else:
        def row(i):
            return np.array([float(spec(grid.node(i, j))) for j in range(grid.n_phi)])

    idx = range(grid.n_theta)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(row, idx))
    else:
        rows = [row(i) for i in idx]
    return SpectrumGrid(np.vstack(rows).astype(float), grid)


@dataclass(frozen=True)
class Peak:
    direction: Direction
    power: float
    theta_index: int
    phi_index: int

    @property
    def azimuth_indeterminate(self) -> bool:
        # every azimuth aliases at zero elevation
        return self.theta_index == 0

    @property
    def theta_deg(self) -> float:
        return math.degrees(self.direction.elevation)

    @property
    def phi_deg(self) -> float:
        return math.degrees(self.direction.azimuth)


class PeakSet(list):
    """Peaks sorted by descending power."""

    @property
    def directions(self) -> list[Direction]:
        return [p.direction for p in self]


def _local_maxima(v: np.ndarray, periodic: bool) -> np.ndarray:
    nt, npf = v.shape
    padded = np.full((nt + 2, npf + 2), -np.inf)
    padded[1:-1, 1:-1] = v
    if periodic:
        padded[1:-1, 0] = v[:, -1]
        padded[1:-1, -1] = v[:, 0]
    mask = np.ones_like(v, dtype=bool)
    for di in (-1, 0, 1):
        for dj in (-1, 0, 1):
            if di == 0 and dj == 0:
                continue
            mask &= v > padded[1 + di:nt + 1 + di, 1 + dj:npf + 1 + dj]
    return mask


def find_peaks(sg: SpectrumGrid, max_peaks: int) -> PeakSet:
    """Strict 8-neighbour local maxima, azimuth wrapping, top ``max_peaks``."""
    if max_peaks < 1:
        raise ValueError("max_peaks must be >= 1")
    v = sg.values
    ii, jj = np.nonzero(_local_maxima(v, sg.grid.periodic))
    order = sorted(range(len(ii)), key=lambda k: (-v[ii[k], jj[k]], ii[k], jj[k]))
    peaks = PeakSet()
    for k in order[:max_peaks]:
        i, j = int(ii[k]), int(jj[k])
        peaks.append(Peak(sg.grid.node(i, j), float(v[i, j]), i, j))
    return peaks


def _parabolic_offset(lo: float, mid: float, hi: float) -> float:
    """Vertex offset in units of one step; 0 when the samples are not concave."""
    denom = lo - 2 * mid + hi
    if not np.isfinite(denom) or denom >= 0:
        return 0.0
    return float(np.clip(0.5 * (lo - hi) / denom, -0.5, 0.5))


def refine_peak(spec: Union[SpectrumFn, Callable], peak: Direction, grid: ScanGrid) -> Direction:
    """Per-axis parabolic interpolation of log-power around a grid peak."""
    t, p = peak.elevation, peak.azimuth
    ht, hp = grid.theta_step, grid.phi_step
    if isinstance(spec, SpectrumFn):
        def f(el, az):
            return float(spec.evaluate(el, az))
    else:
        def f(el, az):
            # generic callables only see in-range directions
            return float(spec(Direction(min(max(el, 0.0), math.pi / 2), az % TWO_PI)))

    with np.errstate(divide="ignore"):
        c = np.log(f(t, p))
        dt = _parabolic_offset(np.log(f(t - ht, p)), c, np.log(f(t + ht, p)))
        dp = _parabolic_offset(np.log(f(t, p - hp)), c, np.log(f(t, p + hp)))
    el = min(max(t + dt * ht, 0.0), math.pi / 2)
    az = (p + dp * hp) % TWO_PI
    return Direction(el, az if az < TWO_PI else 0.0)
