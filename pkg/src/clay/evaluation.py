"""Retrieval metrics and the query/database evaluation protocol.

Items are split 1:9 into queries and database by a seeded shuffle; each
query ranks the full database (or its group partition) and relevance
means sharing the query's label for the conditioned attribute. mAP is
the unweighted mean of per-query Average Precision at full ranking
depth. Recall@k uses the single-ground-truth convention: 1 when any
relevant item appears in the top k.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from ._backend import thread_cap
from .conditioning import ZeroProjectionPolicy, modulate_batch
from .errors import (
    DimensionMismatch,
    EmptyGroup,
    EmptyInput,
    IndexOutOfRange,
    LabelCoverage,
    MissingLabel,
    TooFewItems,
    ZeroProjection,
)
from .geometry import normalize_rows
from .index import ConditionedView, Database


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint query/database id partition produced by a seeded shuffle."""

    seed: int
    query_fraction: float
    query_ids: tuple[str, ...]
    db_ids: tuple[str, ...]


def split_query_database(ids, seed: int, fraction: float = 0.1) -> SplitSpec:
    """Seeded uniform split; the first round(fraction*N) items are queries."""
    ids = tuple(str(i) for i in ids)
    n = len(ids)
    if not 0.0 < fraction < 1.0:
        raise IndexOutOfRange(f"fraction must be in (0, 1), got {fraction}")
    n_query = max(1, int(round(fraction * n)))
    if n < 2 or n_query >= n:
        raise TooFewItems(f"cannot split {n} items into non-empty query and database sets")
    perm = np.random.default_rng(seed).permutation(n)
    query = tuple(ids[i] for i in perm[:n_query])
    database = tuple(ids[i] for i in perm[n_query:])
    return SplitSpec(seed=seed, query_fraction=fraction, query_ids=query, db_ids=database)


@dataclass(frozen=True)
class QuerySet:
    """Query embeddings with their labels, disjoint from the database."""

    ids: tuple[str, ...]
    embeddings: np.ndarray  # (m, d) float64 unit rows
    labels: dict[str, dict[str, str]]

    def __post_init__(self):
        rows = normalize_rows(self.embeddings)
        object.__setattr__(self, "embeddings", rows)
        if rows.shape[0] != len(self.ids):
            raise DimensionMismatch(f"{rows.shape[0]} rows vs {len(self.ids)} ids")
        for attr, mapping in self.labels.items():
            missing = [i for i in self.ids if i not in mapping]
            if missing:
                raise LabelCoverage(f"query attribute {attr!r} missing for id {missing[0]!r}")

    @property
    def size(self) -> int:
        return len(self.ids)


@dataclass
class MetricsReport:
    """mAP (plus optional Recall@k) for one condition; values all in [0, 1]."""

    condition: str
    map: float
    per_query_ap: dict[str, float]
    recall_at: dict[int, float] = field(default_factory=dict)
    grouping: str | None = None
    group_maps: dict[str, float] | None = None
    no_relevant_queries: int = 0

    def to_dict(self) -> dict:
        out = {
            "condition": self.condition,
            "map": self.map,
            "per_query_ap": dict(self.per_query_ap),
            "recall_at": {str(k): v for k, v in self.recall_at.items()},
            "no_relevant_queries": self.no_relevant_queries,
        }
        if self.grouping is not None:
            out["grouping"] = self.grouping
            out["group_maps"] = dict(self.group_maps or {})
        return out


def average_precision(relevance) -> float:
    """AP of a ranked boolean relevance list; 0.0 when nothing is relevant."""
    rel = np.asarray(relevance, dtype=bool)
    if rel.ndim != 1 or rel.size < 1:
        raise EmptyInput("relevance must be a non-empty 1-d sequence")
    positions = np.flatnonzero(rel) + 1
    if positions.size == 0:
        return 0.0
    return float(np.mean(np.arange(1, positions.size + 1) / positions))


def recall_at_k(ranked_ids, relevant_ids, k: int) -> float:
    """1.0 when any relevant id appears in the top k, else 0.0."""
    if k < 1:
        raise IndexOutOfRange(f"k must be >= 1, got {k}")
    relevant = set(relevant_ids)
    return 1.0 if any(i in relevant for i in list(ranked_ids)[:k]) else 0.0


def _attribute_tuple(attribute) -> tuple[str, ...]:
    if isinstance(attribute, str):
        return (attribute,)
    attrs = tuple(attribute)
    if not attrs:
        raise EmptyInput("need at least one attribute")
    return attrs


def _joint_labels(labels: dict[str, dict[str, str]], ids, attrs: tuple[str, ...]) -> list[tuple]:
    for a in attrs:
        if a not in labels:
            raise MissingLabel(f"attribute {a!r} is not labeled")
    return [tuple(labels[a][i] for a in attrs) for i in ids]


def _worker_count(n_tasks: int) -> int:
    cap = thread_cap()
    if cap is None:
        cap = min(8, os.cpu_count() or 1)
    return max(1, min(cap, n_tasks))


def conditional_score_matrix(view: ConditionedView, query_embeddings: np.ndarray) -> np.ndarray:
    """(m, N) conditional similarity of each query against each database row."""
    q = np.ascontiguousarray(query_embeddings, dtype=np.float64)
    mod = modulate_batch(view.subspace, view.rotation, q, view.config)
    q_norms = np.linalg.norm(mod, axis=1)
    policy = view.config.zero_projection_policy
    zero_q = q_norms <= 1e-10
    zero_d = view.cache_norms <= 1e-10
    if policy is ZeroProjectionPolicy.ERROR and (zero_q.any() or zero_d.any()):
        raise ZeroProjection("zero modulated norm encountered during scoring")
    denom = np.outer(np.where(zero_q, 1.0, q_norms), np.where(zero_d, 1.0, view.cache_norms))
    scores = (mod @ view.cache.T) / denom
    scores[zero_q, :] = 0.0
    scores[:, zero_d] = 0.0
    return np.clip(scores, -1.0, 1.0)


def raw_score_matrix(db: Database, query_embeddings: np.ndarray) -> np.ndarray:
    """(m, N) plain cosine baseline scores."""
    q = normalize_rows(query_embeddings)
    rows = db.embeddings.astype(np.float64)
    rows /= np.linalg.norm(rows, axis=1)[:, None]
    return np.clip(q @ rows.T, -1.0, 1.0)


def _evaluate_rankings(
    scores: np.ndarray,
    db_ids: np.ndarray,
    relevance: np.ndarray,
    query_ids,
    recall_ks: tuple[int, ...],
) -> tuple[dict[str, float], dict[int, float], int]:
    m = scores.shape[0]
    ap = np.zeros(m)
    recall_hits = {k: np.zeros(m) for k in recall_ks}
    no_relevant = 0

    def one(i: int):
        order = np.lexsort((db_ids, -scores[i]))
        rel = relevance[i][order]
        ap[i] = average_precision(rel)
        for k in recall_ks:
            recall_hits[k][i] = 1.0 if rel[:k].any() else 0.0

    workers = _worker_count(m)
    if workers > 1 and m >= 32:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(one, range(m)))
    else:
        for i in range(m):
            one(i)
    no_relevant = int(sum(1 for i in range(m) if not relevance[i].any()))
    per_query = {qid: float(ap[i]) for i, qid in enumerate(query_ids)}
    recall = {k: float(recall_hits[k].mean()) for k in recall_ks}
    return per_query, recall, no_relevant


def mean_ap_from_scores(
    scores: np.ndarray,
    db: Database,
    queries: QuerySet,
    attribute,
    recall_ks: tuple[int, ...] = (),
    condition_name: str | None = None,
) -> MetricsReport:
    """Metric core shared by the conditional and raw-baseline front ends."""
    attrs = _attribute_tuple(attribute)
    db_joint = _joint_labels(db.labels, db.ids, attrs)
    q_joint = _joint_labels(queries.labels, queries.ids, attrs)
    db_arr = np.array([repr(t) for t in db_joint])
    relevance = np.array([db_arr == repr(t) for t in q_joint])
    per_query, recall, no_rel = _evaluate_rankings(
        scores, np.asarray(db.ids), relevance, queries.ids, tuple(recall_ks)
    )
    values = list(per_query.values())
    return MetricsReport(
        condition=condition_name or "+".join(attrs),
        map=float(np.mean(values)) if values else 0.0,
        per_query_ap=per_query,
        recall_at=recall,
        no_relevant_queries=no_rel,
    )


def mean_ap(
    view: ConditionedView,
    queries: QuerySet,
    attribute,
    recall_ks: tuple[int, ...] = (),
) -> MetricsReport:
    """Conditional-retrieval mAP of a query set against a prepared view."""
    scores = conditional_score_matrix(view, queries.embeddings)
    return mean_ap_from_scores(
        scores,
        view.database,
        queries,
        attribute,
        recall_ks,
        condition_name=view.condition_name,
    )


def mean_ap_raw(
    db: Database,
    queries: QuerySet,
    attribute,
    recall_ks: tuple[int, ...] = (),
) -> MetricsReport:
    """Unconditioned cosine-baseline mAP on the same protocol."""
    scores = raw_score_matrix(db, queries.embeddings)
    return mean_ap_from_scores(scores, db, queries, attribute, recall_ks, condition_name="raw")


def grouped_map(
    view: ConditionedView,
    queries: QuerySet,
    group_attribute: str,
    condition_attribute,
) -> MetricsReport:
    """Per-group evaluation: rank only within the query's group partition.

    The database is partitioned by ``group_attribute``; each group's mAP
    is computed independently and the report averages the group mAPs
    without weighting by group size.
    """
    scores = conditional_score_matrix(view, queries.embeddings)
    return grouped_map_from_scores(
        scores,
        view.database,
        queries,
        group_attribute,
        condition_attribute,
        condition_name=view.condition_name,
    )


def grouped_map_from_scores(
    scores: np.ndarray,
    db: Database,
    queries: QuerySet,
    group_attribute: str,
    condition_attribute,
    condition_name: str | None = None,
) -> MetricsReport:
    attrs = _attribute_tuple(condition_attribute)
    db_group = _joint_labels(db.labels, db.ids, (group_attribute,))
    q_group = _joint_labels(queries.labels, queries.ids, (group_attribute,))
    db_cond = _joint_labels(db.labels, db.ids, attrs)
    q_cond = _joint_labels(queries.labels, queries.ids, attrs)

    db_ids_arr = np.asarray(db.ids)
    db_group_arr = np.array([g[0] for g in db_group])
    db_cond_arr = np.array([repr(t) for t in db_cond])

    per_query: dict[str, float] = {}
    group_values: dict[str, list[float]] = {}
    no_relevant = 0
    for i, qid in enumerate(queries.ids):
        group = q_group[i][0]
        member = np.flatnonzero(db_group_arr == group)
        if member.size == 0:
            raise EmptyGroup(f"group {group!r} has queries but no database items")
        sub_scores = scores[i, member]
        order = np.lexsort((db_ids_arr[member], -sub_scores))
        rel = (db_cond_arr[member] == repr(q_cond[i]))[order]
        if not rel.any():
            no_relevant += 1
        ap = average_precision(rel)
        per_query[qid] = ap
        group_values.setdefault(group, []).append(ap)

    group_maps = {g: float(np.mean(v)) for g, v in sorted(group_values.items())}
    return MetricsReport(
        condition=condition_name or "+".join(attrs),
        map=float(np.mean(list(group_maps.values()))) if group_maps else 0.0,
        per_query_ap=per_query,
        grouping=group_attribute,
        group_maps=group_maps,
        no_relevant_queries=no_relevant,
    )


def apply_split(ids, embeddings, labels, split: SplitSpec) -> tuple[QuerySet, Database]:
    """Materialize a split into a QuerySet and a Database."""
    from .index import build_index

    ids = [str(i) for i in ids]
    pos = {i: j for j, i in enumerate(ids)}
    emb = np.asarray(embeddings)

    def subset(id_list):
        idx = [pos[i] for i in id_list]
        sub_labels = {a: {i: m[i] for i in id_list} for a, m in labels.items()}
        return emb[idx], sub_labels

    q_emb, q_labels = subset(split.query_ids)
    d_emb, d_labels = subset(split.db_ids)
    queries = QuerySet(ids=tuple(split.query_ids), embeddings=q_emb, labels=q_labels)
    database = build_index(d_emb, split.db_ids, d_labels)
    return queries, database
