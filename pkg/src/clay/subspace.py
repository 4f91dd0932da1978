"""Per-condition textual subspaces.

A condition is described by a set of prompt embeddings. Their spherical
mean anchors a tangent space; the top-k right singular vectors of the
tangent-mapped prompt matrix span the condition subspace, and projecting
onto that span is the conditioning step of the retrieval pipeline.

The Euclidean variant (``manifold=False``) skips the tangent mapping and
runs the SVD on the raw prompt rows; it exists for ablation runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BaseMismatch,
    DimensionMismatch,
    EmptyInput,
    IndexOutOfRange,
    RankZero,
)
from .geometry import TangentVector, log_map_rows, normalize_rows, spherical_mean

RANK_REL_TOL = 1e-7
BASE_MATCH_TOL = 1e-4


@dataclass(frozen=True)
class PromptMatrix:
    """Unit-norm prompt embeddings for one or more conditions.

    ``condition_names`` keeps one entry per merged source; ``prompt_texts``
    is provenance only and never feeds the math.
    """

    rows: np.ndarray
    condition_names: tuple[str, ...]
    prompt_texts: tuple[str, ...] | None = None

    def __post_init__(self):
        rows = normalize_rows(self.rows)
        object.__setattr__(self, "rows", rows)
        if rows.shape[0] < 2:
            raise EmptyInput(f"need at least 2 prompt rows, got {rows.shape[0]}")
        if not self.condition_names:
            raise EmptyInput("condition_names must not be empty")
        if self.prompt_texts is not None and len(self.prompt_texts) != rows.shape[0]:
            raise DimensionMismatch("prompt_texts length must match row count")

    @property
    def n(self) -> int:
        return self.rows.shape[0]

    @property
    def dim(self) -> int:
        return self.rows.shape[1]

    @property
    def condition_name(self) -> str:
        return "+".join(self.condition_names)


@dataclass(frozen=True)
class ConditionSubspace:
    """Anchor point, orthonormal basis and singular spectrum of a condition.

    ``basis`` holds the top-k right singular vectors as columns (d, k).
    For manifold subspaces every column is tangent at ``mu_c``. The full
    spectrum is retained for scree/energy reporting.
    """

    mu_c: np.ndarray
    basis: np.ndarray
    singular_values: np.ndarray
    k: int
    condition_names: tuple[str, ...]
    manifold: bool = True
    requested_k: int = field(default=-1, compare=False)

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def condition_name(self) -> str:
        return "+".join(self.condition_names)


def _fix_signs(basis: np.ndarray) -> np.ndarray:
    """Flip each column so its largest-magnitude entry is positive.

    SVD signs are arbitrary; the projector is sign-invariant but the
    serialized basis must be reproducible byte-for-byte.
    """
    idx = np.argmax(np.abs(basis), axis=0)
    signs = np.sign(basis[idx, np.arange(basis.shape[1])])
    signs[signs == 0] = 1.0
    return basis * signs


def build_subspace(prompts: PromptMatrix, k: int, manifold: bool = True) -> ConditionSubspace:
    """Construct the condition subspace from prompt embeddings.

    The prompt rows are tangent-mapped at their spherical mean and the
    stacked (n, d) matrix is decomposed by SVD with no extra centering;
    the basis keeps the first min(k, numerical rank) right singular
    vectors. With ``manifold=False`` the SVD runs on the raw rows.
    """
    if k < 1:
        raise IndexOutOfRange(f"k must be >= 1, got {k}")
    mu_c = spherical_mean(prompts.rows)
    target = log_map_rows(mu_c, prompts.rows) if manifold else prompts.rows
    _, s, vt = np.linalg.svd(target, full_matrices=False)
    if s.size == 0 or s[0] <= 1e-12:
        raise RankZero("all prompt rows map to zero; no singular direction to keep")
    rank = int(np.count_nonzero(s > RANK_REL_TOL * s[0]))
    effective_k = min(k, rank)
    basis = _fix_signs(np.ascontiguousarray(vt[:effective_k].T))
    return ConditionSubspace(
        mu_c=mu_c,
        basis=basis,
        singular_values=s.copy(),
        k=effective_k,
        condition_names=prompts.condition_names,
        manifold=manifold,
        requested_k=k,
    )


def merge_conditions(parts: list[PromptMatrix] | tuple[PromptMatrix, ...],
                     balance: bool = False) -> PromptMatrix:
    """Concatenate prompt sets so one subspace covers several conditions.

    ``balance=True`` truncates every part to the smallest part's row
    count before concatenating (prompt sets of very different sizes
    would otherwise dominate the spectrum); default keeps all rows.
    """
    if len(parts) == 0:
        raise EmptyInput("merge_conditions needs at least one PromptMatrix")
    dim = parts[0].dim
    for p in parts[1:]:
        if p.dim != dim:
            raise DimensionMismatch(f"prompt dims differ: {dim} vs {p.dim}")
    if len(parts) == 1 and not balance:
        return parts[0]
    take = min(p.n for p in parts) if balance else None
    blocks, names, texts = [], [], []
    have_texts = all(p.prompt_texts is not None for p in parts)
    for p in parts:
        stop = take if take is not None else p.n
        blocks.append(p.rows[:stop])
        names.extend(p.condition_names)
        if have_texts:
            texts.extend(p.prompt_texts[:stop])
    return PromptMatrix(
        rows=np.vstack(blocks),
        condition_names=tuple(names),
        prompt_texts=tuple(texts) if have_texts else None,
    )


def project(s: ConditionSubspace, t: TangentVector) -> np.ndarray:
    """Project a tangent vector onto the condition subspace.

    Computed as basis @ (basis.T @ t) in O(d*k); the d-by-d projector is
    never materialized on this path.
    """
    if t.coords.shape[0] != s.dim:
        raise DimensionMismatch(f"tangent dim {t.coords.shape[0]} vs subspace dim {s.dim}")
    if np.max(np.abs(t.base - s.mu_c)) > BASE_MATCH_TOL:
        raise BaseMismatch("tangent vector is anchored at a different reference point")
    return s.basis @ (s.basis.T @ t.coords)


def project_rows(s: ConditionSubspace, T: np.ndarray) -> np.ndarray:
    """Batch form of :func:`project` for pre-validated tangent rows."""
    if T.ndim != 2 or T.shape[1] != s.dim:
        raise DimensionMismatch(f"rows of shape {T.shape} vs subspace dim {s.dim}")
    return (T @ s.basis) @ s.basis.T


def explained_energy(s: ConditionSubspace, j: int) -> float:
    """Cumulative squared-singular-value fraction of the first j components."""
    total = len(s.singular_values)
    if not 1 <= j <= total:
        raise IndexOutOfRange(f"j must be in [1, {total}], got {j}")
    energy = s.singular_values.astype(np.float64) ** 2
    denom = float(energy.sum())
    if denom <= 0.0:
        raise RankZero("spectrum carries no energy")
    return float(energy[:j].sum() / denom)
