"""Seeded synthetic embedding worlds with known attribute structure.

Stands in for a real encoder + labeled image corpus: images concentrate
in a cone around a global image-mean direction, prompts in a cone around
a text-mean direction separated by a configurable modality gap, and each
attribute value adds a signal along its own direction orthogonal to both
means. Because the ground truth is planted, retrieval gains of the
conditioned pipeline over the raw-cosine baseline are checkable without
any model inference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .conditioning import ModulatorConfig
from .errors import InsufficientDimension, MissingLabel
from .evaluation import QuerySet, SplitSpec, apply_split, mean_ap, split_query_database
from .index import ConditionedView, Database, build_index, prepare_condition
from .subspace import PromptMatrix, build_subspace


@dataclass(frozen=True)
class WorldConfig:
    dim: int = 128
    n_items: int = 2000
    attributes: tuple[tuple[str, int], ...] = (("color", 5), ("shape", 5), ("material", 5))
    image_concentration: float = 2.5
    text_concentration: float = 6.0
    modality_gap_angle: float = 0.6
    attribute_signal: float | tuple[float, ...] = 0.8
    noise_scale: float = 1.2  # expected L2 norm of the perturbation
    prompts_per_value: int = 20
    seed: int = 0

    def signals(self) -> tuple[float, ...]:
        if isinstance(self.attribute_signal, (int, float)):
            return tuple(float(self.attribute_signal) for _ in self.attributes)
        sig = tuple(float(s) for s in self.attribute_signal)
        if len(sig) != len(self.attributes):
            raise ValueError("attribute_signal tuple must match the number of attributes")
        return sig

    def validate(self) -> None:
        if self.n_items < 2 or self.prompts_per_value < 1:
            raise ValueError("n_items must be >= 2 and prompts_per_value >= 1")
        if not 0.0 < self.modality_gap_angle < math.pi:
            raise ValueError("modality_gap_angle must lie in (0, pi)")
        if self.image_concentration <= 0 or self.text_concentration <= 0:
            raise ValueError("concentrations must be positive")
        if any(nv < 1 for _, nv in self.attributes) or not self.attributes:
            raise ValueError("every attribute needs at least one value")
        total_values = sum(nv for _, nv in self.attributes)
        if self.dim < total_values + 2:
            raise InsufficientDimension(
                f"dim={self.dim} too small: need >= {total_values + 2} "
                f"(one direction per attribute value plus the two mean axes)"
            )


@dataclass(frozen=True)
class SyntheticWorld:
    config: WorldConfig
    ids: tuple[str, ...]
    embeddings: np.ndarray  # (n_items, dim) float64 unit rows
    labels: dict[str, dict[str, str]]
    prompts: dict[str, PromptMatrix]
    image_mean: np.ndarray = field(repr=False, default=None)
    text_mean: np.ndarray = field(repr=False, default=None)
    directions: dict[str, np.ndarray] = field(repr=False, default=None)  # diagnostics only

    @property
    def attribute_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.config.attributes)

    def value_name(self, attribute: str, index: int) -> str:
        return f"{attribute}_{index}"

    def as_database(self) -> Database:
        return build_index(self.embeddings, self.ids, self.labels)


def _orthonormal_frame(rng: np.random.Generator, dim: int, count: int) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((dim, count)))
    # canonical column orientation so identical seeds give identical worlds
    return q * np.sign(np.diag(r))


def _balanced_labels(rng: np.random.Generator, n: int, n_values: int) -> np.ndarray:
    base = np.tile(np.arange(n_values), n // n_values + 1)[:n]
    return base[rng.permutation(n)]


def generate_world(cfg: WorldConfig) -> SyntheticWorld:
    """Generate one world, fully determined by ``cfg.seed``.

    Draw order (frame, labels, image noise, prompt noise per attribute)
    is fixed, so identical configs produce byte-identical worlds.
    ``image_concentration=inf`` with ``noise_scale=0`` collapses every
    image onto the image mean (the degenerate cone limit).
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    dim = cfg.dim
    names = [name for name, _ in cfg.attributes]
    counts = [nv for _, nv in cfg.attributes]
    signals = cfg.signals()
    total_values = sum(counts)

    frame = _orthonormal_frame(rng, dim, total_values + 2)
    image_mean = frame[:, 0]
    gap = cfg.modality_gap_angle
    text_mean = math.cos(gap) * frame[:, 0] + math.sin(gap) * frame[:, 1]
    directions: dict[str, np.ndarray] = {}
    offset = 2
    for name, nv in cfg.attributes:
        directions[name] = frame[:, offset:offset + nv].T.copy()
        offset += nv

    value_idx = {name: _balanced_labels(rng, cfg.n_items, nv)
                 for name, nv in cfg.attributes}

    noise = rng.standard_normal((cfg.n_items, dim)) * (cfg.noise_scale / math.sqrt(dim))
    if math.isinf(cfg.image_concentration):
        images = np.tile(image_mean, (cfg.n_items, 1))
        if cfg.noise_scale > 0:
            images = images + noise
            images /= np.linalg.norm(images, axis=1)[:, None]
    else:
        images = cfg.image_concentration * image_mean + noise
        for name, sig in zip(names, signals):
            images += sig * directions[name][value_idx[name]]
        images /= np.linalg.norm(images, axis=1)[:, None]

    prompts: dict[str, PromptMatrix] = {}
    for name, nv, sig in zip(names, counts, signals):
        n_rows = nv * cfg.prompts_per_value
        p_noise = rng.standard_normal((n_rows, dim)) * (cfg.noise_scale / math.sqrt(dim))
        rows = cfg.text_concentration * text_mean + p_noise
        texts = []
        for j in range(nv):
            lo = j * cfg.prompts_per_value
            rows[lo:lo + cfg.prompts_per_value] += sig * directions[name][j]
            texts.extend([f"{name}={name}_{j}"] * cfg.prompts_per_value)
        rows /= np.linalg.norm(rows, axis=1)[:, None]
        prompts[name] = PromptMatrix(
            rows=rows, condition_names=(name,), prompt_texts=tuple(texts)
        )

    width = max(5, len(str(cfg.n_items - 1)))
    ids = tuple(f"item_{i:0{width}d}" for i in range(cfg.n_items))
    labels = {
        name: {ids[i]: f"{name}_{value_idx[name][i]}" for i in range(cfg.n_items)}
        for name in names
    }
    return SyntheticWorld(
        config=cfg,
        ids=ids,
        embeddings=images,
        labels=labels,
        prompts=prompts,
        image_mean=image_mean,
        text_mean=text_mean,
        directions=directions,
    )


def world_split(
    world: SyntheticWorld, seed: int | None = None, fraction: float = 0.1
) -> tuple[QuerySet, Database, SplitSpec]:
    """Standard 1:9 protocol split over the world's items."""
    split = split_query_database(world.ids, world.config.seed if seed is None else seed, fraction)
    queries, db = apply_split(world.ids, world.embeddings, world.labels, split)
    return queries, db, split


def condition_view(
    db: Database,
    world: SyntheticWorld,
    attribute: str,
    k: int = 50,
    cfg: ModulatorConfig = ModulatorConfig(),
) -> ConditionedView:
    """Build the attribute's subspace and prepare the database under it."""
    if attribute not in world.prompts:
        raise MissingLabel(f"world has no prompt set for attribute {attribute!r}")
    s = build_subspace(world.prompts[attribute], k, manifold=cfg.use_manifold)
    return prepare_condition(db, s, cfg)


@dataclass
class CrossConditionMatrix:
    """mAP of every (conditioning attribute, evaluated attribute) pair."""

    attributes: tuple[str, ...]
    values: np.ndarray  # (A, A); rows = conditioning attribute

    def diagonal_dominant(self) -> bool:
        a = len(self.attributes)
        return all(
            self.values[i, i] >= self.values[i, j]
            for i in range(a)
            for j in range(a)
            if j != i
        )

    def to_dict(self) -> dict:
        return {
            "attributes": list(self.attributes),
            "rows_condition_columns_evaluated": [
                [float(v) for v in row] for row in self.values
            ],
            "diagonal_dominant": self.diagonal_dominant(),
        }


def cross_condition_matrix(
    world: SyntheticWorld,
    k: int = 50,
    split_seed: int | None = None,
    fraction: float = 0.1,
    cfg: ModulatorConfig = ModulatorConfig(),
) -> CrossConditionMatrix:
    """Condition on each attribute in turn and score every attribute's mAP.

    Entry (i, j) evaluates attribute j's labels under the subspace of
    attribute i; a healthy world makes each row's diagonal entry the
    largest (conditioning helps the matching attribute most).
    """
    queries, db, _ = world_split(world, seed=split_seed, fraction=fraction)
    names = world.attribute_names
    values = np.zeros((len(names), len(names)))
    for i, cond in enumerate(names):
        view = condition_view(db, world, cond, k=k, cfg=cfg)
        for j, evaluated in enumerate(names):
            values[i, j] = mean_ap(view, queries, evaluated).map
    return CrossConditionMatrix(attributes=names, values=values)


def save_world(world: SyntheticWorld, out_dir) -> dict:
    """Write the world as standard dataset files: embeddings, manifest, prompts.

    Everything downstream (subspace build, evaluation, benchmarks) can
    then run purely from files, exactly as for an exported real dataset.
    """
    import json
    from dataclasses import asdict
    from pathlib import Path

    from .storage import Manifest, write_embeddings, write_manifest

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_embeddings(out / "images.clayemb", world.embeddings)

    attributes = tuple(
        (name, tuple(f"{name}_{j}" for j in range(nv)))
        for name, nv in world.config.attributes
    )
    manifest = Manifest(
        items=tuple(
            (i, {name: world.labels[name][i] for name in world.attribute_names})
            for i in world.ids
        ),
        attributes=attributes,
        source=f"synthbench seed={world.config.seed} dim={world.config.dim}",
    )
    write_manifest(out / "manifest.json", manifest)

    prompt_files = {}
    for name, pm in world.prompts.items():
        fname = f"prompts_{name}.clayemb"
        write_embeddings(out / fname, pm.rows)
        prompt_files[name] = fname

    meta = {
        "config": asdict(world.config),
        "files": {
            "images": "images.clayemb",
            "manifest": "manifest.json",
            "prompts": prompt_files,
        },
    }
    (out / "world.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return meta


def load_world_dir(path) -> SyntheticWorld:
    """Reload a saved world from its directory (diagnostic fields are lost)."""
    import json
    from pathlib import Path

    from .errors import StorageError
    from .geometry import normalize_rows
    from .storage import read_embeddings, read_manifest

    root = Path(path)
    meta_path = root / "world.json"
    if not meta_path.exists():
        raise StorageError(f"{root}: no world.json found")
    meta = json.loads(meta_path.read_text())
    raw_cfg = dict(meta["config"])
    raw_cfg["attributes"] = tuple((str(n), int(v)) for n, v in raw_cfg["attributes"])
    sig = raw_cfg["attribute_signal"]
    raw_cfg["attribute_signal"] = tuple(sig) if isinstance(sig, list) else sig
    cfg = WorldConfig(**raw_cfg)

    files = meta["files"]
    embeddings = normalize_rows(read_embeddings(root / files["images"]))
    manifest = read_manifest(root / files["manifest"])
    prompts = {
        name: PromptMatrix(
            rows=normalize_rows(read_embeddings(root / fname)),
            condition_names=(name,),
        )
        for name, fname in files["prompts"].items()
    }
    return SyntheticWorld(
        config=cfg,
        ids=manifest.ids,
        embeddings=embeddings,
        labels=manifest.labels_by_attribute(),
        prompts=prompts,
        image_mean=None,
        text_mean=None,
        directions=None,
    )
