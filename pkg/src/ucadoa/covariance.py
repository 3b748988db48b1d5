"""Sample covariance and the partial cross-correlation blocks.

Row blocks follow the fixed partition: block 1 is elements 1..P, block 2 is
P+1..2P and block 3 is 2P+1..N.  The partial estimator only ever forms the
three off-diagonal products it needs, which is where both its speed and its
indifference to spatially white noise come from.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InsufficientElements
from .signal_sim import SnapshotMatrix

__all__ = [
    "OpCount",
    "PartialCovariances",
    "sample_covariance",
    "partial_covariances",
    "partial_from_exact",
]


@dataclass
class OpCount:
    """Complex multiply/add tallies, bucketed by pipeline stage.

    Stages in use: ``covariance`` (data products, the K-proportional term),
    ``solve`` (the small dense linear algebra) and ``evd``.
    """

    stages: dict[str, int] = field(default_factory=dict)
    adds: dict[str, int] = field(default_factory=dict)

    def record(self, stage: str, multiplies: int, adds: int = 0) -> None:
        if multiplies < 0 or adds < 0:
            raise ValueError("operation counts are nonnegative")
        self.stages[stage] = self.stages.get(stage, 0) + int(multiplies)
        self.adds[stage] = self.adds.get(stage, 0) + int(adds)

    @property
    def complex_multiplies(self) -> int:
        return sum(self.stages.values())

    @property
    def complex_adds(self) -> int:
        return sum(self.adds.values())

    def stage(self, name: str) -> int:
        return self.stages.get(name, 0)

    def merge(self, other: "OpCount") -> "OpCount":
        out = OpCount(dict(self.stages), dict(self.adds))
        for k, v in other.stages.items():
            out.record(k, v, other.adds.get(k, 0))
        return out

    def copy(self) -> "OpCount":
        return OpCount(dict(self.stages), dict(self.adds))

    def as_dict(self) -> dict:
        return {
            "complex_multiplies": self.complex_multiplies,
            "complex_adds": self.complex_adds,
            "stages": dict(sorted(self.stages.items())),
        }


@dataclass(frozen=True)
class PartialCovariances:
    r12: np.ndarray
    r21: np.ndarray
    r31: np.ndarray
    r32: np.ndarray
    p_sources: int
    n_elements: int

    def __post_init__(self):
        p, n = self.p_sources, self.n_elements
        m = n - 2 * p
        expected = {"r12": (p, p), "r21": (p, p), "r31": (m, p), "r32": (m, p)}
        for name, shp in expected.items():
            if getattr(self, name).shape != shp:
                raise ValueError(f"{name} has shape {getattr(self, name).shape}, expected {shp}")


def _check_partition(n: int, p: int) -> None:
    if p < 1:
        raise ValueError("p_sources must be >= 1")
    if n < 2 * p + 2:
        raise InsufficientElements(f"{n} elements cannot host {p} sources (need N >= {2 * p + 2})")


def _cov_ops(n_rows: int, n_cols: int, k: int) -> tuple[int, int]:
    return n_rows * n_cols * k, n_rows * n_cols * (k - 1)


def sample_covariance(x: SnapshotMatrix, ops: Optional[OpCount] = None) -> np.ndarray:
    """``(1/K) X X^H``, symmetrised to be exactly Hermitian."""
    s = x.samples
    k = s.shape[1]
    r = (s @ s.conj().T) / k
    r = 0.5 * (r + r.conj().T)
    if ops is not None:
        n = s.shape[0]
        ops.record("covariance", *_cov_ops(n, n, k))
    return r


def partial_covariances(
    x: SnapshotMatrix, p_sources: int, ops: Optional[OpCount] = None
) -> PartialCovariances:
    """Estimate R12, R31, R32 directly from the snapshots; R21 = R12^H."""
    s = x.samples
    n, k = s.shape
    p = p_sources
    _check_partition(n, p)
    x1, x2, x3 = s[:p], s[p:2 * p], s[2 * p:]
    x1h = x1.conj().T
    x2h = x2.conj().T
    r12 = (x1 @ x2h) / k
    r31 = (x3 @ x1h) / k
    r32 = (x3 @ x2h) / k
    if ops is not None:
        m = n - 2 * p
        for rows in (p, m, m):
            ops.record("covariance", *_cov_ops(rows, p, k))
    return PartialCovariances(r12, r12.conj().T, r31, r32, p, n)


def partial_from_exact(rxx: np.ndarray, p_sources: int) -> PartialCovariances:
    """Slice the same blocks out of a full N x N covariance."""
    rxx = np.asarray(rxx)
    n = rxx.shape[0]
    if rxx.shape != (n, n):
        raise ValueError("covariance must be square")
    p = p_sources
    _check_partition(n, p)
    r12 = rxx[:p, p:2 * p].copy()
    return PartialCovariances(
        r12, r12.conj().T, rxx[2 * p:, :p].copy(), rxx[2 * p:, p:2 * p].copy(), p, n
    )
