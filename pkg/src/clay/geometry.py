"""Unit-hypersphere primitives.

Points live on S^(d-1) as plain float64 numpy arrays with unit L2 norm.
Tangent vectors carry their reference point so downstream projections can
check they were mapped at the right base. Storage upstream may be float32;
everything here accumulates in float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import (
    AntipodalMeans,
    AntipodalPoint,
    DegenerateMean,
    DimensionMismatch,
    ZeroVector,
)

ANTIPODE_EPS = 1e-7
_ZERO_NORM = 1e-12
_IDENTITY_REFLECTION = 1e-9


@dataclass(frozen=True)
class TangentVector:
    """A vector in the tangent space of the sphere at ``base``.

    Constructed values must actually be tangent (|coords . base| <= 1e-5)
    and no longer than a geodesic can be (norm <= pi).
    """

    coords: np.ndarray
    base: np.ndarray

    def __post_init__(self):
        if abs(float(np.dot(self.coords, self.base))) > 1e-5:
            raise ValueError("coords are not tangent at base")
        if float(np.linalg.norm(self.coords)) > np.pi + 1e-6:
            raise ValueError("tangent norm exceeds the geodesic bound pi")

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.coords))


@dataclass(frozen=True)
class Rotation:
    """Composition of two Householder reflections, applied u1 first.

    A reflection normal of None marks that reflection as the identity
    (the degenerate already-aligned case). The d-by-d matrix is never
    materialized; application costs O(d) per vector.
    """

    u1: np.ndarray | None
    u2: np.ndarray | None
    dim: int

    @classmethod
    def identity(cls, dim: int) -> "Rotation":
        return cls(u1=None, u2=None, dim=dim)

    @property
    def is_identity(self) -> bool:
        return self.u1 is None and self.u2 is None


def _as_float64(v) -> np.ndarray:
    arr = np.ascontiguousarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"expected a 1-d vector, got shape {arr.shape}")
    return arr


def normalize(v) -> np.ndarray:
    """Scale ``v`` to unit L2 norm; raises ZeroVector on degenerate input."""
    arr = _as_float64(v)
    if arr.shape[0] < 2:
        raise DimensionMismatch("vectors must have dimension >= 2")
    norm = float(np.linalg.norm(arr))
    if norm <= _ZERO_NORM:
        raise ZeroVector(f"cannot normalize vector of norm {norm:.3e}")
    return arr / norm


def normalize_rows(M) -> np.ndarray:
    """Row-wise unit normalization of a 2-d array."""
    arr = np.ascontiguousarray(M, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatch(f"expected a 2-d array, got shape {arr.shape}")
    norms = np.linalg.norm(arr, axis=1)
    bad = np.flatnonzero(norms <= _ZERO_NORM)
    if bad.size:
        raise ZeroVector(f"row {bad[0]} has norm {norms[bad[0]]:.3e}")
    return arr / norms[:, None]


def require_unit(v, tol: float = 1e-6, name: str = "vector") -> np.ndarray:
    """Validate unit norm within ``tol``; returns the float64 view."""
    arr = _as_float64(v)
    norm = float(np.linalg.norm(arr))
    if abs(norm - 1.0) > tol:
        raise ZeroVector(f"{name} is not unit norm (|v| = {norm:.8f})")
    return arr


def spherical_mean(M) -> np.ndarray:
    """Normalized arithmetic mean of unit rows.

    Raises DegenerateMean when the rows cancel (e.g. an antipodal pair).
    """
    arr = np.ascontiguousarray(M, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[0] < 1:
        raise DegenerateMean("need at least one row")
    mean = arr.mean(axis=0)
    norm = float(np.linalg.norm(mean))
    if norm <= _ZERO_NORM:
        raise DegenerateMean(f"mean direction cancelled (|sum| = {norm:.3e})")
    return mean / norm


def log_map(mu: np.ndarray, x: np.ndarray) -> TangentVector:
    """Map the sphere point ``x`` into the tangent space at ``mu``.

    The result points along the geodesic from mu to x with length equal
    to the geodesic distance arccos(x . mu). The antipode of mu is
    outside the domain.
    """
    mu = _as_float64(mu)
    x = _as_float64(x)
    if mu.shape != x.shape:
        raise DimensionMismatch(f"{mu.shape} vs {x.shape}")
    dot = float(np.clip(np.dot(x, mu), -1.0, 1.0))
    if dot <= -1.0 + ANTIPODE_EPS:
        raise AntipodalPoint(f"x . mu = {dot:.9f} is within {ANTIPODE_EPS} of -1")
    coords = _kernels.log_rows(x[None, :], mu)[0]
    return TangentVector(coords=coords, base=mu)


def log_map_rows(mu: np.ndarray, X: np.ndarray) -> np.ndarray:
    """Batch log map; returns an (n, d) array of tangent rows at ``mu``."""
    mu = _as_float64(mu)
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != mu.shape[0]:
        raise DimensionMismatch(f"rows of shape {X.shape} vs mu {mu.shape}")
    dots = X @ mu
    worst = float(dots.min()) if dots.size else 0.0
    if worst <= -1.0 + ANTIPODE_EPS:
        raise AntipodalPoint(f"row with x . mu = {worst:.9f} is antipodal to mu")
    return _kernels.log_rows(X, mu)


def exp_map(mu: np.ndarray, t: TangentVector | np.ndarray) -> np.ndarray:
    """Inverse of ``log_map``: walk from ``mu`` along tangent vector ``t``."""
    mu = _as_float64(mu)
    coords = t.coords if isinstance(t, TangentVector) else _as_float64(t)
    if mu.shape != coords.shape:
        raise DimensionMismatch(f"{mu.shape} vs {coords.shape}")
    theta = float(np.linalg.norm(coords))
    if theta < 1e-12:
        return mu.copy()
    point = np.cos(theta) * mu + np.sin(theta) * (coords / theta)
    # renormalize to absorb float drift on the return to the sphere
    return point / np.linalg.norm(point)


def householder_align(mu_from: np.ndarray, mu_to: np.ndarray) -> Rotation:
    """Orthonormal map sending ``mu_from`` to ``mu_to``.

    Built as two reflections through the hyperplanes orthogonal to
    (mu_from - mid) and (mid - mu_to), where mid is the normalized
    midpoint of the two means. Either reflection degenerates to the
    identity when its normal vanishes (means already aligned).
    """
    mu_from = require_unit(mu_from, name="mu_from")
    mu_to = require_unit(mu_to, name="mu_to")
    if mu_from.shape != mu_to.shape:
        raise DimensionMismatch(f"{mu_from.shape} vs {mu_to.shape}")
    chord = mu_from + mu_to
    chord_norm = float(np.linalg.norm(chord))
    if chord_norm <= ANTIPODE_EPS:
        raise AntipodalMeans(f"means are antipodal (|mu_from + mu_to| = {chord_norm:.3e})")
    mid = chord / chord_norm

    def reflection_normal(a: np.ndarray, b: np.ndarray) -> np.ndarray | None:
        w = a - b
        norm = float(np.linalg.norm(w))
        if norm <= _IDENTITY_REFLECTION:
            return None
        return w / norm

    return Rotation(
        u1=reflection_normal(mu_from, mid),
        u2=reflection_normal(mid, mu_to),
        dim=mu_from.shape[0],
    )


def apply_rotation(rotation: Rotation, x) -> np.ndarray:
    """Apply the two reflections to a vector or to the rows of a matrix."""
    arr = np.ascontiguousarray(x, dtype=np.float64)
    if arr.ndim == 1:
        if arr.shape[0] != rotation.dim:
            raise DimensionMismatch(f"vector dim {arr.shape[0]} vs rotation dim {rotation.dim}")
        out = arr
        if rotation.u1 is not None:
            out = out - 2.0 * np.dot(out, rotation.u1) * rotation.u1
        if rotation.u2 is not None:
            out = out - 2.0 * np.dot(out, rotation.u2) * rotation.u2
        return out.copy() if out is arr else out
    if arr.ndim == 2:
        if arr.shape[1] != rotation.dim:
            raise DimensionMismatch(f"row dim {arr.shape[1]} vs rotation dim {rotation.dim}")
        return _kernels.rotate_rows(arr, rotation.u1, rotation.u2)
    raise DimensionMismatch(f"expected 1-d or 2-d input, got shape {arr.shape}")


def geodesic_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Arc length between two unit vectors."""
    return float(np.arccos(np.clip(np.dot(_as_float64(a), _as_float64(b)), -1.0, 1.0)))
