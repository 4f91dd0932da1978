"""Exhaustive retrieval index with per-condition modulated caches.

A Database stores fixed unit-norm embeddings (float32, as exported by an
encoder) plus labels. Switching conditions never re-encodes anything:
``prepare_condition`` modulates all rows once against a condition
subspace and caches the result, after which each query costs one
modulation plus one matrix-vector product. ``ENCODER_CALLS`` is a
structural counter proving the no-re-encoding claim; nothing in this
package ever increments it.
"""

from __future__ import annotations

import hashlib
import time
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np

from ._backend import BACKEND
from .conditioning import (
    ModulatorConfig,
    ZeroProjectionPolicy,
    modulate,
    modulate_batch,
)
from .errors import (
    DimensionMismatch,
    DuplicateId,
    IndexOutOfRange,
    LabelCoverage,
    MissingLabel,
    ZeroProjection,
    ZeroVector,
)
from .geometry import Rotation, householder_align, normalize_rows, require_unit, spherical_mean
from .subspace import ConditionSubspace


class InvocationCounter:
    """Counts encoder forward passes. The engine performs none."""

    def __init__(self):
        self.count = 0

    def bump(self):  # pragma: no cover - nothing in the engine calls this
        self.count += 1


ENCODER_CALLS = InvocationCounter()


@dataclass(frozen=True)
class Database:
    """Immutable embedding database with label maps and cached visual mean."""

    ids: tuple[str, ...]
    embeddings: np.ndarray  # (N, d) float32, unit rows
    labels: dict[str, dict[str, str]]  # attribute -> id -> value
    mu_v: np.ndarray  # float64 spherical mean of the rows

    @property
    def size(self) -> int:
        return len(self.ids)

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def label_values(self, attribute: str) -> dict[str, str]:
        if attribute not in self.labels:
            raise MissingLabel(f"attribute {attribute!r} is not labeled on this database")
        return self.labels[attribute]


def build_index(embeddings, ids, labels=None) -> Database:
    """Normalize rows, validate ids/labels and compute the visual mean."""
    ids = tuple(str(i) for i in ids)
    if len(set(ids)) != len(ids):
        seen, dup = set(), None
        for i in ids:
            if i in seen:
                dup = i
                break
            seen.add(i)
        raise DuplicateId(f"duplicate id {dup!r}")
    rows64 = normalize_rows(np.asarray(embeddings))
    if rows64.shape[0] != len(ids):
        raise DimensionMismatch(f"{rows64.shape[0]} rows vs {len(ids)} ids")
    if rows64.shape[0] < 2:
        raise ZeroVector("a database needs at least 2 rows")
    labels = {k: dict(v) for k, v in (labels or {}).items()}
    for attr, mapping in labels.items():
        missing = [i for i in ids if i not in mapping]
        if missing:
            raise LabelCoverage(
                f"attribute {attr!r} missing labels for {len(missing)} ids (first: {missing[0]!r})"
            )
    return Database(
        ids=ids,
        embeddings=rows64.astype(np.float32),
        labels=labels,
        mu_v=spherical_mean(rows64),
    )


@dataclass(frozen=True)
class ConditionedView:
    """A database modulated under one condition, ready for scoring.

    ``cache`` rows equal ``modulate(subspace, rotation, embeddings[i])``;
    it is populated eagerly at prepare time and never mutated after.
    """

    database: Database
    subspace: ConditionSubspace
    rotation: Rotation
    config: ModulatorConfig
    cache: np.ndarray  # (N, d) float64 modulated rows
    cache_norms: np.ndarray  # (N,) float64
    op_counts: dict = field(compare=False, default_factory=dict)

    @property
    def condition_name(self) -> str:
        return self.subspace.condition_name


def prepare_condition(
    db: Database,
    s: ConditionSubspace,
    cfg: ModulatorConfig = ModulatorConfig(),
) -> ConditionedView:
    """Modulate every database row under the condition and cache the result.

    Builds the mean-alignment rotation from the database visual mean
    (queries arrive later and never contribute to it), then runs one
    batch kernel pass: per row one rotation, one log map and two basis
    multiplications. No image is re-read and no encoder runs.
    """
    if s.dim != db.dim:
        raise DimensionMismatch(f"subspace dim {s.dim} vs database dim {db.dim}")
    if cfg.use_rotation:
        rotation = householder_align(db.mu_v, s.mu_c)
    else:
        rotation = Rotation.identity(db.dim)
    rows = db.embeddings.astype(np.float64)
    # float32 storage makes rows unit only to ~1e-7; renormalize for the kernels
    rows /= np.linalg.norm(rows, axis=1)[:, None]
    cache = modulate_batch(s, rotation, rows, cfg)
    n = db.size
    view = ConditionedView(
        database=db,
        subspace=s,
        rotation=rotation,
        config=cfg,
        cache=cache,
        cache_norms=np.linalg.norm(cache, axis=1),
        op_counts={
            "rotations": n if cfg.use_rotation else 0,
            "log_maps": n if cfg.use_manifold else 0,
            "basis_multiplications": 2 * n,
            "encoder_calls": 0,
        },
    )
    view.cache.setflags(write=False)
    view.cache_norms.setflags(write=False)
    return view


def _modulated_query(view: ConditionedView, v_q: np.ndarray) -> np.ndarray:
    v_q = require_unit(v_q, name="query")
    if v_q.shape[0] != view.database.dim:
        raise DimensionMismatch(f"query dim {v_q.shape[0]} vs database dim {view.database.dim}")
    return modulate(view.subspace, view.rotation, v_q, view.config)


def score_all(view: ConditionedView, v_q: np.ndarray) -> np.ndarray:
    """Conditional similarity of the query against every database row."""
    mq = _modulated_query(view, v_q)
    nq = float(np.linalg.norm(mq))
    policy = view.config.zero_projection_policy
    if nq <= 1e-10:
        if policy is ZeroProjectionPolicy.ERROR:
            raise ZeroProjection(f"modulated query norm {nq:.3e}")
        return np.zeros(view.database.size)
    raw = view.cache @ mq
    scores = np.zeros(view.database.size)
    ok = view.cache_norms > 1e-10
    if not ok.all() and policy is ZeroProjectionPolicy.ERROR:
        raise ZeroProjection("database row(s) with zero modulated norm")
    scores[ok] = raw[ok] / (view.cache_norms[ok] * nq)
    return np.clip(scores, -1.0, 1.0)


def rank_all(view: ConditionedView, v_q: np.ndarray) -> np.ndarray:
    """Indices of all rows, best first; score ties break by ascending id."""
    scores = score_all(view, v_q)
    ids_arr = np.asarray(view.database.ids)
    return np.lexsort((ids_arr, -scores))


def query_topk(view: ConditionedView, v_q: np.ndarray, k_ret: int) -> list[tuple[str, float]]:
    """Top-k retrieval under the view's condition."""
    if not 1 <= k_ret <= view.database.size:
        raise IndexOutOfRange(f"k_ret must be in [1, {view.database.size}], got {k_ret}")
    scores = score_all(view, v_q)
    ids_arr = np.asarray(view.database.ids)
    order = np.lexsort((ids_arr, -scores))[:k_ret]
    return [(str(ids_arr[i]), float(scores[i])) for i in order]


def subspace_fingerprint(s: ConditionSubspace) -> str:
    """Content hash identifying a subspace for view caching."""
    h = hashlib.sha1()
    h.update(np.ascontiguousarray(s.mu_c).tobytes())
    h.update(np.ascontiguousarray(s.basis).tobytes())
    h.update(("|".join(s.condition_names) + f"|{s.k}|{s.manifold}").encode())
    return h.hexdigest()


class ViewCache:
    """LRU set of prepared ConditionedViews, bounded by condition count.

    Multi-condition sessions reuse prepared views; unbounded caches
    would exhaust memory on large databases, so the least recently used
    view is dropped beyond ``capacity``.
    """

    def __init__(self, db: Database, capacity: int = 8):
        if capacity < 1:
            raise IndexOutOfRange(f"capacity must be >= 1, got {capacity}")
        self.db = db
        self.capacity = capacity
        self._views: OrderedDict[tuple, ConditionedView] = OrderedDict()

    def __len__(self) -> int:
        return len(self._views)

    def get(self, s: ConditionSubspace, cfg: ModulatorConfig = ModulatorConfig()) -> ConditionedView:
        key = (
            subspace_fingerprint(s),
            cfg.use_rotation,
            cfg.use_manifold,
            cfg.zero_projection_policy.value,
        )
        if key in self._views:
            self._views.move_to_end(key)
            return self._views[key]
        view = prepare_condition(self.db, s, cfg)
        self._views[key] = view
        if len(self._views) > self.capacity:
            self._views.popitem(last=False)
        return view


@dataclass
class ConditionTiming:
    condition_name: str
    prepare_ms: float
    query_ms_mean: float
    query_ms_p95: float
    query_ms_std: float
    encoder_calls: int

    def to_dict(self) -> dict:
        return {
            "condition_name": self.condition_name,
            "prepare_ms": self.prepare_ms,
            "query_ms_mean": self.query_ms_mean,
            "query_ms_p95": self.query_ms_p95,
            "query_ms_std": self.query_ms_std,
            "encoder_calls": self.encoder_calls,
        }


@dataclass
class TimingReport:
    backend: str
    n: int
    dim: int
    runs: int
    n_queries: int
    conditions: list[ConditionTiming]

    @property
    def first_condition_total_ms(self) -> float:
        c = self.conditions[0]
        return c.prepare_ms + c.query_ms_mean

    @property
    def subsequent_condition_total_ms(self) -> float:
        rest = self.conditions[1:]
        return float(np.mean([c.prepare_ms + c.query_ms_mean for c in rest]))

    def to_dict(self) -> dict:
        return {
            "backend": self.backend,
            "n": self.n,
            "dim": self.dim,
            "runs": self.runs,
            "n_queries": self.n_queries,
            "conditions": [c.to_dict() for c in self.conditions],
            "first_condition_total_ms": self.first_condition_total_ms,
            "subsequent_condition_total_ms": self.subsequent_condition_total_ms,
        }


def bench_condition_switch(
    db: Database,
    subspaces: list[ConditionSubspace],
    queries: np.ndarray,
    k_ret: int = 10,
    runs: int = 10,
    cfg: ModulatorConfig = ModulatorConfig(),
) -> TimingReport:
    """Measure prepare and per-query latency for a sequence of conditions.

    Per-query time is averaged over ``runs`` full passes through the
    query set after the condition cache is built; the encoder counter is
    sampled around every condition to document that switching is
    encoder-free.
    """
    if len(subspaces) < 2:
        raise IndexOutOfRange("need at least 2 subspaces to measure a condition switch")
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2:
        raise DimensionMismatch("queries must be a 2-d array")
    timings = []
    for s in subspaces:
        calls_before = ENCODER_CALLS.count
        t0 = time.perf_counter()
        view = prepare_condition(db, s, cfg)
        prepare_ms = (time.perf_counter() - t0) * 1e3
        per_run = []
        for _ in range(runs):
            t0 = time.perf_counter()
            for q in queries:
                query_topk(view, q, k_ret)
            per_run.append((time.perf_counter() - t0) * 1e3 / queries.shape[0])
        timings.append(
            ConditionTiming(
                condition_name=s.condition_name,
                prepare_ms=prepare_ms,
                query_ms_mean=float(np.mean(per_run)),
                query_ms_p95=float(np.percentile(per_run, 95)),
                query_ms_std=float(np.std(per_run)),
                encoder_calls=ENCODER_CALLS.count - calls_before,
            )
        )
    return TimingReport(
        backend=BACKEND,
        n=db.size,
        dim=db.dim,
        runs=runs,
        n_queries=queries.shape[0],
        conditions=timings,
    )
