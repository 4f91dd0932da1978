"""Command-line surface: wires dataset files through the retrieval pipeline.

Every subcommand prints machine-readable JSON on stdout (or to --output)
and a one-line human summary on stderr. Exit codes: 0 success, 1 runtime
error (with a structured JSON error on stdout), 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from ._backend import BACKEND
from ._kernels import compare_backends
from .conditioning import ModulatorConfig
from .errors import ClayError
from .evaluation import grouped_map, mean_ap, mean_ap_raw, split_query_database, apply_split
from .geometry import normalize_rows, spherical_mean, geodesic_distance
from .index import (
    ENCODER_CALLS,
    bench_condition_switch,
    build_index,
    prepare_condition,
    query_topk,
)
from .storage import (
    read_embeddings,
    read_manifest,
    read_subspace,
    write_embeddings,
    write_subspace,
)
from .subspace import PromptMatrix, build_subspace, explained_energy, merge_conditions
from .synthbench import (
    WorldConfig,
    cross_condition_matrix,
    generate_world,
    load_world_dir,
    save_world,
)


def _eprint(*parts) -> None:
    print(*parts, file=sys.stderr)


def _emit(payload: dict, output: str | None) -> None:
    text = json.dumps(payload, indent=2, sort_keys=True)
    if output:
        Path(output).write_text(text + "\n")
        _eprint(f"wrote {output}")
    else:
        print(text)


def _parse_attributes(spec: str) -> tuple[tuple[str, int], ...]:
    out = []
    for chunk in spec.split(","):
        name, _, count = chunk.partition(":")
        if not name or not count:
            raise argparse.ArgumentTypeError(
                f"bad attribute spec {chunk!r}; expected name:count"
            )
        out.append((name.strip(), int(count)))
    return tuple(out)


def _csv(value: str) -> list[str]:
    items = [v.strip() for v in value.split(",") if v.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a non-empty comma-separated list")
    return items


def _modulator_config(args) -> ModulatorConfig:
    return ModulatorConfig(
        use_rotation=not getattr(args, "no_rotation", False)
        and not getattr(args, "euclidean", False),
        use_manifold=not getattr(args, "euclidean", False),
    )


def _load_dataset(args) -> tuple:
    """(ids, float64 unit rows, labels) from --world or --embeddings/--manifest."""
    if getattr(args, "world", None):
        world = load_world_dir(args.world)
        return world.ids, world.embeddings, world.labels, world
    if getattr(args, "embeddings", None) and getattr(args, "manifest", None):
        rows = normalize_rows(read_embeddings(args.embeddings))
        manifest = read_manifest(args.manifest)
        if len(manifest.ids) != rows.shape[0]:
            raise ClayError(
                f"manifest lists {len(manifest.ids)} items but embedding file "
                f"holds {rows.shape[0]} rows"
            )
        return manifest.ids, rows, manifest.labels_by_attribute(), None
    raise ClayError("provide either --world DIR or both --embeddings and --manifest")


def _load_prompt_sets(args, names: list[str], world) -> list[PromptMatrix]:
    if getattr(args, "prompts", None):
        files = args.prompts
        if len(files) != len(names):
            raise ClayError(
                f"{len(files)} prompt file(s) for {len(names)} condition name(s)"
            )
        return [
            PromptMatrix(rows=normalize_rows(read_embeddings(f)), condition_names=(n,))
            for f, n in zip(files, names)
        ]
    if world is not None:
        missing = [n for n in names if n not in world.prompts]
        if missing:
            raise ClayError(f"world has no prompt set for condition(s) {missing}")
        return [world.prompts[n] for n in names]
    raise ClayError("no prompt source: pass --prompts files or use a --world directory")


# --- subcommands -------------------------------------------------------------

def cmd_gen_world(args) -> dict:
    cfg = WorldConfig(
        dim=args.dim,
        n_items=args.n_items,
        attributes=args.attributes,
        image_concentration=args.image_concentration,
        text_concentration=args.text_concentration,
        modality_gap_angle=args.gap,
        attribute_signal=args.signal,
        noise_scale=args.noise,
        prompts_per_value=args.prompts_per_value,
        seed=args.seed,
    )
    world = generate_world(cfg)
    meta = save_world(world, args.out)
    all_prompt_rows = np.vstack([p.rows for p in world.prompts.values()])
    measured_gap = geodesic_distance(
        spherical_mean(world.embeddings), spherical_mean(all_prompt_rows)
    )
    meta["diagnostics"] = {
        "measured_modality_gap_rad": measured_gap,
        "requested_modality_gap_rad": cfg.modality_gap_angle,
    }
    _eprint(
        f"generated world: {cfg.n_items} items, dim={cfg.dim}, "
        f"{len(cfg.attributes)} attributes -> {args.out}"
    )
    return meta


def cmd_build_subspace(args) -> dict:
    if args.euclidean:
        raise ClayError(
            "Euclidean-ablation subspaces are analysis-only (see `clay ablate`); "
            "the subspace file format serializes the tangent-space construction"
        )
    world = load_world_dir(args.world) if args.world else None
    merged = merge_conditions(_load_prompt_sets(args, args.conditions, world))
    sub = build_subspace(merged, args.k)
    clamped = sub.k < args.k
    if clamped:
        _eprint(
            f"warning: requested k={args.k} exceeds the prompt matrix rank; "
            f"clamped to k={sub.k}"
        )
    out = args.output or f"subspace_{'_'.join(args.conditions)}.claysub"
    write_subspace(out, sub)
    _eprint(f"built subspace for {sub.condition_name!r} (k={sub.k}) -> {out}")
    return {
        "condition": sub.condition_name,
        "n_prompts": merged.n,
        "dim": sub.dim,
        "k_requested": args.k,
        "k_effective": sub.k,
        "k_clamped": clamped,
        "explained_energy_at_k": explained_energy(sub, sub.k),
        "spectrum_head": [float(v) for v in sub.singular_values[:10]],
        "output": str(out),
    }


def cmd_prepare(args) -> dict:
    ids, rows, labels, _ = _load_dataset(args)
    db = build_index(rows, ids, labels)
    sub = read_subspace(args.subspace)
    cfg = _modulator_config(args)
    before = ENCODER_CALLS.count
    t0 = time.perf_counter()
    view = prepare_condition(db, sub, cfg)
    prepare_ms = (time.perf_counter() - t0) * 1e3
    _eprint(
        f"prepared condition {sub.condition_name!r} over {db.size} rows "
        f"in {prepare_ms:.2f} ms (backend={BACKEND})"
    )
    return {
        "condition": sub.condition_name,
        "n": db.size,
        "dim": db.dim,
        "k": sub.k,
        "backend": BACKEND,
        "prepare_ms": prepare_ms,
        "encoder_calls": ENCODER_CALLS.count - before,
        "op_counts": view.op_counts,
        "cache_norm_mean": float(view.cache_norms.mean()),
        "cache_norm_min": float(view.cache_norms.min()),
    }


def cmd_retrieve(args) -> dict:
    ids, rows, labels, _ = _load_dataset(args)
    db = build_index(rows, ids, labels)
    sub = read_subspace(args.subspace)
    view = prepare_condition(db, sub, _modulator_config(args))
    queries = normalize_rows(read_embeddings(args.queries))
    results = [
        {
            "query_index": i,
            "results": [{"id": rid, "score": score} for rid, score in query_topk(view, q, args.topk)],
        }
        for i, q in enumerate(queries)
    ]
    _eprint(f"retrieved top-{args.topk} for {len(results)} queries under {sub.condition_name!r}")
    return {"condition": sub.condition_name, "topk": args.topk, "queries": results}


def cmd_evaluate(args) -> dict:
    ids, rows, labels, world = _load_dataset(args)
    names = args.conditions
    for name in names:
        if name not in labels:
            raise ClayError(f"attribute {name!r} is not labeled in the dataset")
    split = split_query_database(ids, args.seed, args.split_fraction)
    queries, db = apply_split(ids, rows, labels, split)
    cfg = _modulator_config(args)
    merged = merge_conditions(_load_prompt_sets(args, names, world))
    sub = build_subspace(merged, args.k, manifold=cfg.use_manifold)
    view = prepare_condition(db, sub, cfg)
    attribute = names[0] if len(names) == 1 else tuple(names)
    recall_ks = tuple(int(k) for k in args.recall_at) if args.recall_at else ()
    if args.grouped_by:
        report = grouped_map(view, queries, args.grouped_by, attribute)
    else:
        report = mean_ap(view, queries, attribute, recall_ks=recall_ks)
    raw = mean_ap_raw(db, queries, attribute, recall_ks=recall_ks)
    if args.per_query_csv:
        import csv as _csv

        with open(args.per_query_csv, "w", newline="") as fh:
            writer = _csv.writer(fh)
            writer.writerow(["query_id", "ap", "raw_ap"])
            for qid in queries.ids:
                writer.writerow([qid, report.per_query_ap[qid], raw.per_query_ap[qid]])
        _eprint(f"wrote per-query AP table -> {args.per_query_csv}")
    payload = report.to_dict()
    payload.update(
        {
            "raw_map": raw.map,
            "k_effective": sub.k,
            "seed": args.seed,
            "split_fraction": args.split_fraction,
            "n_queries": queries.size,
            "n_database": db.size,
            "backend": BACKEND,
            "use_rotation": cfg.use_rotation,
            "use_manifold": cfg.use_manifold,
        }
    )
    _eprint(
        f"condition {report.condition!r}: mAP={report.map:.4f} "
        f"(raw cosine {raw.map:.4f}) over {queries.size} queries"
    )
    return payload


def cmd_ablate(args) -> dict:
    ids, rows, labels, world = _load_dataset(args)
    names = args.conditions
    split = split_query_database(ids, args.seed, args.split_fraction)
    queries, db = apply_split(ids, rows, labels, split)
    prompt_sets = _load_prompt_sets(args, names, world)
    merged = merge_conditions(prompt_sets)
    attribute = names[0] if len(names) == 1 else tuple(names)

    rows_out = []
    variants = (
        (False, False),  # Euclidean subspace on raw features
        (False, True),   # tangent subspace, no mean alignment
        (True, True),    # full pipeline
    )
    for use_rotation, use_manifold in variants:
        cfg = ModulatorConfig(use_rotation=use_rotation, use_manifold=use_manifold)
        sub = build_subspace(merged, args.k, manifold=use_manifold)
        view = prepare_condition(db, sub, cfg)
        report = mean_ap(view, queries, attribute)
        rows_out.append(
            {
                "rotation": use_rotation,
                "manifold": use_manifold,
                "map": report.map,
                "k_effective": sub.k,
            }
        )
    raw = mean_ap_raw(db, queries, attribute)
    _eprint(f"ablation on condition {'+'.join(names)!r} (raw cosine mAP {raw.map:.4f}):")
    _eprint("  rotation manifold      mAP")
    for r in rows_out:
        _eprint(
            f"  {'yes' if r['rotation'] else ' no':>8} "
            f"{'yes' if r['manifold'] else ' no':>8} {r['map']:.4f}"
        )
    return {
        "condition": "+".join(names),
        "seed": args.seed,
        "raw_map": raw.map,
        "rows": rows_out,
    }


def cmd_bench(args) -> dict:
    if args.world:
        world = load_world_dir(args.world)
    else:
        attributes = args.attributes or (("cond_a", 5), ("cond_b", 5))
        world = generate_world(
            WorldConfig(
                dim=args.dim,
                n_items=args.n_items,
                attributes=attributes,
                seed=args.seed,
            )
        )
    names = args.conditions or list(world.attribute_names[: max(2, min(3, len(world.attribute_names)))])
    if len(names) < 2:
        raise ClayError("need at least two conditions to benchmark a switch")
    db = world.as_database()
    subspaces = [build_subspace(world.prompts[n], args.k) for n in names]
    rng = np.random.default_rng(args.seed)
    queries = world.embeddings[rng.choice(world.embeddings.shape[0], size=args.n_queries, replace=False)]
    report = bench_condition_switch(db, subspaces, queries, k_ret=args.topk, runs=args.runs)
    payload = report.to_dict()
    if args.compare_backends:
        payload["kernel_backend_comparison"] = compare_backends(
            n=min(db.size, 4096), d=db.dim, k=args.k, seed=args.seed
        )
    _eprint(
        f"bench (backend={BACKEND}): first condition {report.first_condition_total_ms:.1f} ms, "
        f"subsequent {report.subsequent_condition_total_ms:.1f} ms "
        f"(prepare + one query, N={db.size}, d={db.dim})"
    )
    return payload


def cmd_export_projected(args) -> dict:
    ids, rows, labels, world = _load_dataset(args)
    db = build_index(rows, ids, labels)
    sub = read_subspace(args.subspace)
    view = prepare_condition(db, sub, _modulator_config(args))
    norms = view.cache_norms
    zero = norms <= 1e-10
    if zero.any():
        raise ClayError(
            f"{int(zero.sum())} row(s) project to zero under this condition and "
            "cannot be exported as unit rows (first id: "
            f"{db.ids[int(np.flatnonzero(zero)[0])]!r})"
        )
    write_embeddings(args.output, view.cache / norms[:, None])
    _eprint(f"exported {db.size} modulated rows (unit-normalized) -> {args.output}")
    return {
        "condition": sub.condition_name,
        "output": str(args.output),
        "count": db.size,
        "dim": db.dim,
    }


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clay",
        description="Condition-aware similarity search over fixed unit-norm embeddings.",
    )
    parser.add_argument("--version", action="version", version=f"clay {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_dataset_flags(p, with_world=True):
        if with_world:
            p.add_argument("--world", help="directory written by gen-world")
        p.add_argument("--embeddings", help="EmbeddingFile with database rows")
        p.add_argument("--manifest", help="ManifestFile with labels")

    def add_condition_flags(p):
        p.add_argument(
            "--conditions",
            "--condition",
            type=_csv,
            required=True,
            help="condition name, or comma list for a merged multi-condition subspace",
        )
        p.add_argument(
            "--prompts",
            type=_csv,
            help="prompt EmbeddingFile per condition (defaults to the world's prompt files)",
        )
        p.add_argument("--k", type=int, default=50, help="subspace rank (default 50)")

    defaults = WorldConfig()
    p = sub.add_parser("gen-world", help="generate a synthetic labeled embedding world")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--dim", type=int, default=defaults.dim)
    p.add_argument("--n-items", type=int, default=defaults.n_items)
    p.add_argument(
        "--attributes",
        type=_parse_attributes,
        default=defaults.attributes,
        help="comma list of name:count (default color:5,shape:5,material:5)",
    )
    p.add_argument("--gap", type=float, default=defaults.modality_gap_angle,
                   help="modality gap angle in radians")
    p.add_argument("--noise", type=float, default=defaults.noise_scale)
    p.add_argument("--signal", type=float, default=defaults.attribute_signal)
    p.add_argument("--image-concentration", type=float, default=defaults.image_concentration)
    p.add_argument("--text-concentration", type=float, default=defaults.text_concentration)
    p.add_argument("--prompts-per-value", type=int, default=defaults.prompts_per_value)
    p.add_argument("--output", help="also write the metadata JSON here")
    p.set_defaults(func=cmd_gen_world)

    p = sub.add_parser("build-subspace", help="build and serialize a condition subspace")
    p.add_argument("--world", help="directory written by gen-world")
    add_condition_flags(p)
    p.add_argument("--euclidean", action="store_true", help=argparse.SUPPRESS)
    p.add_argument("--output", help="subspace file path (.claysub)")
    p.set_defaults(func=cmd_build_subspace, output_is_artifact=True)

    p = sub.add_parser("prepare", help="prepare a conditioned view and report timing")
    add_dataset_flags(p)
    p.add_argument("--subspace", required=True)
    p.add_argument("--no-rotation", action="store_true")
    p.add_argument("--output")
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("retrieve", help="rank database items for query embeddings")
    add_dataset_flags(p)
    p.add_argument("--subspace", required=True)
    p.add_argument("--queries", required=True, help="EmbeddingFile with query rows")
    p.add_argument("--topk", type=int, default=10)
    p.add_argument("--no-rotation", action="store_true")
    p.add_argument("--output")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("evaluate", help="split, rank and score mAP under a condition")
    add_dataset_flags(p)
    add_condition_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-fraction", type=float, default=0.1)
    p.add_argument("--no-rotation", action="store_true")
    p.add_argument("--euclidean", action="store_true")
    p.add_argument("--grouped-by", help="evaluate within partitions of this attribute")
    p.add_argument("--recall-at", type=_csv, help="comma list of recall cutoffs")
    p.add_argument("--per-query-csv", help="also dump a query_id,ap,raw_ap CSV for plotting")
    p.add_argument("--output")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("ablate", help="mAP table over rotation/manifold variants")
    add_dataset_flags(p)
    add_condition_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--split-fraction", type=float, default=0.1)
    p.add_argument("--output")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("bench", help="time condition switches (prepare vs per-query)")
    p.add_argument("--world", help="directory written by gen-world")
    p.add_argument("--conditions", type=_csv, help="conditions to cycle through")
    p.add_argument("--attributes", type=_parse_attributes, help="attributes for the ad-hoc world")
    p.add_argument("--n-items", "--n", type=int, default=10000, dest="n_items")
    p.add_argument("--dim", type=int, default=512)
    p.add_argument("--k", type=int, default=50)
    p.add_argument("--n-queries", type=int, default=20)
    p.add_argument("--runs", type=int, default=10)
    p.add_argument("--topk", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--compare-backends", action="store_true",
                   help="also time the numba and numpy kernel builds")
    p.add_argument("--output")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("export-projected", help="dump modulated rows as an EmbeddingFile")
    add_dataset_flags(p)
    p.add_argument("--subspace", required=True)
    p.add_argument("--no-rotation", action="store_true")
    p.add_argument("--output", required=True)
    p.set_defaults(func=cmd_export_projected, output_is_artifact=True)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        payload = args.func(args)
    except ClayError as exc:
        _emit({"error": {"type": type(exc).__name__, "message": str(exc)}}, None)
        _eprint(f"error: {exc}")
        return 1
    except OSError as exc:
        _emit({"error": {"type": "OSError", "message": str(exc)}}, None)
        _eprint(f"error: {exc}")
        return 1
    # --output names the binary artifact for some commands; their JSON
    # report always goes to stdout
    json_target = None if getattr(args, "output_is_artifact", False) else getattr(args, "output", None)
    _emit(payload, json_target)
    return 0


if __name__ == "__main__":
    sys.exit(main())
