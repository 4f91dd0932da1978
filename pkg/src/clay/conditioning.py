"""Condition-aware similarity scoring.

The modulator sends a visual embedding through rotation -> log map ->
subspace projection; scores are cosines between modulated vectors.
``csim_sym`` conditions both sides (the default pipeline), ``csim_asym``
conditions the query only, and ``csim_raw`` is the unconditioned cosine
baseline. Ablation switches mirror the rotation / manifold variants.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import AntipodalPoint, DimensionMismatch, ZeroProjection
from .geometry import Rotation, apply_rotation, log_map, require_unit
from .subspace import ConditionSubspace, project

ZERO_NORM_EPS = 1e-10


class ZeroProjectionPolicy(enum.Enum):
    """What to do when a modulated vector has zero norm."""

    ERROR = "error"
    SCORE_ZERO = "score_zero"


@dataclass(frozen=True)
class ModulatorConfig:
    use_rotation: bool = True
    use_manifold: bool = True
    zero_projection_policy: ZeroProjectionPolicy = ZeroProjectionPolicy.SCORE_ZERO

    def __post_init__(self):
        if self.use_rotation and not self.use_manifold:
            raise ValueError(
                "use_rotation=True requires use_manifold=True; the rotation "
                "exists to keep the tangent approximation valid"
            )


def _check_mode(s: ConditionSubspace, cfg: ModulatorConfig) -> None:
    if s.manifold != cfg.use_manifold:
        raise ValueError(
            f"subspace was built with manifold={s.manifold} but config asks "
            f"for use_manifold={cfg.use_manifold}; rebuild the subspace"
        )


def modulate(
    s: ConditionSubspace,
    r: Rotation,
    v: np.ndarray,
    cfg: ModulatorConfig = ModulatorConfig(),
) -> np.ndarray:
    """Condition one unit vector; returns the modulated (non-unit) vector."""
    _check_mode(s, cfg)
    v = require_unit(v, name="input embedding")
    if v.shape[0] != s.dim:
        raise DimensionMismatch(f"embedding dim {v.shape[0]} vs subspace dim {s.dim}")
    if not cfg.use_manifold:
        return s.basis @ (s.basis.T @ v)
    rotated = apply_rotation(r, v) if cfg.use_rotation else v
    return project(s, log_map(s.mu_c, rotated))


def modulate_batch(
    s: ConditionSubspace,
    r: Rotation,
    X: np.ndarray,
    cfg: ModulatorConfig = ModulatorConfig(),
) -> np.ndarray:
    """Condition the rows of an (n, d) unit-row matrix via the hot kernels."""
    _check_mode(s, cfg)
    X = np.ascontiguousarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != s.dim:
        raise DimensionMismatch(f"rows of shape {X.shape} vs subspace dim {s.dim}")
    if not cfg.use_manifold:
        return _kernels.project_rows(X, s.basis)
    u1 = r.u1 if cfg.use_rotation else None
    u2 = r.u2 if cfg.use_rotation else None
    # antipodal screen without rotating X twice: (Hx).mu == x.(H^T mu),
    # and H^T applies the reflections in reverse order
    mu_back = s.mu_c
    if u2 is not None:
        mu_back = mu_back - 2.0 * np.dot(mu_back, u2) * u2
    if u1 is not None:
        mu_back = mu_back - 2.0 * np.dot(mu_back, u1) * u1
    dots = X @ mu_back
    worst = float(dots.min()) if dots.size else 0.0
    if worst <= -1.0 + 1e-7:
        raise AntipodalPoint(f"row with x . mu_c = {worst:.9f} is antipodal to mu_c")
    return _kernels.modulate_rows(X, u1, u2, s.mu_c, s.basis)


def _cosine(a: np.ndarray, b: np.ndarray, policy: ZeroProjectionPolicy) -> float:
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na <= ZERO_NORM_EPS or nb <= ZERO_NORM_EPS:
        if policy is ZeroProjectionPolicy.ERROR:
            raise ZeroProjection(f"modulated norm(s) {na:.3e}, {nb:.3e} below {ZERO_NORM_EPS}")
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def csim_raw(v_q: np.ndarray, v_d: np.ndarray) -> float:
    """Plain cosine between two unit embeddings (no conditioning)."""
    v_q = require_unit(v_q, name="query")
    v_d = require_unit(v_d, name="database item")
    if v_q.shape != v_d.shape:
        raise DimensionMismatch(f"{v_q.shape} vs {v_d.shape}")
    return float(np.clip(np.dot(v_q, v_d), -1.0, 1.0))


def csim_sym(
    s: ConditionSubspace,
    r: Rotation,
    v_q: np.ndarray,
    v_d: np.ndarray,
    cfg: ModulatorConfig = ModulatorConfig(),
) -> float:
    """Symmetric conditional similarity: both sides modulated."""
    return _cosine(
        modulate(s, r, v_q, cfg),
        modulate(s, r, v_d, cfg),
        cfg.zero_projection_policy,
    )


# the symmetric form is the method's own scoring rule
csim_clay = csim_sym


def csim_asym(
    s: ConditionSubspace,
    r: Rotation,
    v_q: np.ndarray,
    v_d: np.ndarray,
    cfg: ModulatorConfig = ModulatorConfig(),
) -> float:
    """Asymmetric conditional similarity: query modulated, database raw."""
    v_d = require_unit(v_d, name="database item")
    return _cosine(modulate(s, r, v_q, cfg), v_d, cfg.zero_projection_policy)
