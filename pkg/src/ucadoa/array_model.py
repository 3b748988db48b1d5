"""Uniform circular array geometry and steering vectors.

Elements sit at azimuths ``phi_n = 2*pi*n/N`` for ``n = 1..N`` (so the last
element is at ``2*pi``).  Element indices in the public API are 1-based to
match that convention; storage is ordinary 0-based numpy arrays.

The elevation ``theta`` is measured from the array axis (zenith), so a wave
arriving at ``theta = 0`` produces the same phase on every element and its
azimuth is unobservable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateDirections

SPEED_OF_LIGHT = 299_792_458.0  # m/s, exact

__all__ = [
    "SPEED_OF_LIGHT",
    "UcaGeometry",
    "Direction",
    "AssumptionReport",
    "steering_element",
    "steering_vector",
    "steering_matrix",
    "array_response",
    "partition_response",
    "validate_assumptions",
    "reference_geometry",
    "REFERENCE_DIRECTIONS_DEG",
    "reference_directions",
]


@dataclass(frozen=True)
class UcaGeometry:
    """N isotropic elements equally spaced on a circle of radius ``radius``."""

    n_elements: int
    radius: float
    wavelength: float
    element_azimuths: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if int(self.n_elements) != self.n_elements or self.n_elements < 3:
            raise ValueError(f"n_elements must be an integer >= 3, got {self.n_elements}")
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError(f"radius must be positive, got {self.radius}")
        if not (self.wavelength > 0 and math.isfinite(self.wavelength)):
            raise ValueError(f"wavelength must be positive, got {self.wavelength}")
        object.__setattr__(self, "n_elements", int(self.n_elements))
        n = np.arange(1, self.n_elements + 1)
        az = 2 * np.pi * n / self.n_elements
        az.setflags(write=False)
        object.__setattr__(self, "element_azimuths", az)

    @classmethod
    def from_frequency(cls, n_elements: int, radius: float, frequency: float) -> "UcaGeometry":
        if not frequency > 0:
            raise ValueError(f"frequency must be positive, got {frequency}")
        return cls(n_elements, radius, SPEED_OF_LIGHT / frequency)

    @property
    def frequency(self) -> float:
        return SPEED_OF_LIGHT / self.wavelength

    @property
    def aperture(self) -> float:
        """Maximal array dimension D (the circle diameter)."""
        return 2.0 * self.radius

    @property
    def radius_in_wavelengths(self) -> float:
        return self.radius / self.wavelength


@dataclass(frozen=True)
class Direction:
    """Arrival direction in radians: elevation in [0, pi/2], azimuth in [0, 2*pi)."""

    elevation: float
    azimuth: float

    def __post_init__(self):
        if not (0.0 <= self.elevation <= math.pi / 2):
            raise ValueError(f"elevation must lie in [0, pi/2], got {self.elevation}")
        if not (0.0 <= self.azimuth < 2 * math.pi):
            raise ValueError(f"azimuth must lie in [0, 2*pi), got {self.azimuth}")

    @classmethod
    def from_degrees(cls, elevation_deg: float, azimuth_deg: float) -> "Direction":
        return cls(math.radians(elevation_deg), math.radians(azimuth_deg % 360.0))

    @property
    def degrees(self) -> tuple[float, float]:
        return math.degrees(self.elevation), math.degrees(self.azimuth)

    def unit_vector(self) -> np.ndarray:
        st = math.sin(self.elevation)
        return np.array(
            [st * math.cos(self.azimuth), st * math.sin(self.azimuth), math.cos(self.elevation)]
        )


def steering_element(geometry: UcaGeometry, direction: Direction, m: int) -> complex:
    """Phase response of element ``m`` (1-based) to a unit plane wave."""
    if not 1 <= m <= geometry.n_elements:
        raise IndexError(f"element index {m} outside 1..{geometry.n_elements}")
    arg = (
        2 * math.pi * geometry.radius_in_wavelengths * math.sin(direction.elevation)
        * math.cos(2 * math.pi * m / geometry.n_elements - direction.azimuth)
    )
    return complex(math.cos(arg), math.sin(arg))


def steering_vector(geometry: UcaGeometry, direction: Direction) -> np.ndarray:
    """Length-N unit-modulus steering vector ``exp(z*cos(phi - phi_n))``."""
    z = 2j * np.pi * geometry.radius_in_wavelengths * np.sin(direction.elevation)
    return np.exp(z * np.cos(direction.azimuth - geometry.element_azimuths))


def steering_matrix(geometry: UcaGeometry, elevations, azimuths) -> np.ndarray:
    """Steering vectors for broadcastable arrays of raw angles.

    No range checks are applied, which lets interpolation routines probe just
    outside the scan range.  Returns shape ``(N, *broadcast_shape)``.
    """
    el, az = np.broadcast_arrays(np.asarray(elevations, float), np.asarray(azimuths, float))
    z = np.asarray(2j * np.pi * geometry.radius_in_wavelengths * np.sin(el))
    phis = geometry.element_azimuths.reshape((-1,) + (1,) * el.ndim)
    return np.exp(z[None] * np.cos(az[None] - phis))


def array_response(geometry: UcaGeometry, directions: Sequence[Direction]) -> np.ndarray:
    """N x P matrix whose columns are the steering vectors of ``directions``."""
    directions = list(directions)
    if not directions:
        raise ValueError("at least one direction is required")
    if len(set(directions)) != len(directions):
        raise DegenerateDirections("directions must be pairwise distinct")
    return np.stack([steering_vector(geometry, d) for d in directions], axis=1)


def partition_response(a: np.ndarray, p_sources: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Row blocks (A1, A2, A3): rows 1..P, P+1..2P and 2P+1..N."""
    p = p_sources
    return a[:p], a[p:2 * p], a[2 * p:]


@dataclass(frozen=True)
class AssumptionReport:
    n_elements: int
    p_sources: int
    required_elements: int
    element_count_ok: bool
    far_field_distance: float
    far_field_ok: Optional[bool] = None
    near_field_sources: tuple[int, ...] = ()

    @property
    def ok(self) -> bool:
        return self.element_count_ok and self.far_field_ok is not False

    def messages(self) -> list[str]:
        out = []
        if not self.element_count_ok:
            out.append(
                f"{self.n_elements} elements cannot resolve {self.p_sources} sources "
                f"(need N >= 2P+2 = {self.required_elements})"
            )
        if self.far_field_ok is False:
            out.append(
                f"sources {list(self.near_field_sources)} closer than the far-field "
                f"distance {self.far_field_distance:.4g} m"
            )
        return out


def validate_assumptions(
    geometry: UcaGeometry,
    p_sources: int,
    source_distances: Optional[Sequence[float]] = None,
) -> AssumptionReport:
    """Check the element-count and far-field conditions without raising."""
    if p_sources < 1:
        raise ValueError("p_sources must be >= 1")
    required = 2 * p_sources + 2
    ff = 2 * geometry.aperture ** 2 / geometry.wavelength
    far_ok = None
    near: tuple[int, ...] = ()
    if source_distances is not None:
        near = tuple(i for i, d in enumerate(source_distances) if d < ff)
        far_ok = not near
    return AssumptionReport(
        n_elements=geometry.n_elements,
        p_sources=p_sources,
        required_elements=required,
        element_count_ok=geometry.n_elements >= required,
        far_field_distance=ff,
        far_field_ok=far_ok,
        near_field_sources=near,
    )


# Experimental setup: 14 elements, 38 cm radius, 900 MHz carrier.
REFERENCE_DIRECTIONS_DEG = ((15.0, 20.0), (30.0, 44.0), (66.0, 69.0))


def reference_geometry() -> UcaGeometry:
    return UcaGeometry.from_frequency(14, 0.38, 900e6)


def reference_directions() -> list[Direction]:
    return [Direction.from_degrees(t, p) for t, p in REFERENCE_DIRECTIONS_DEG]
