"""clay-export: encode images/prompts into the engine's file formats."""

from __future__ import annotations

import argparse
import json
import sys

from .errors import ExporterError
from .jobs import ExportJob, export_images, export_prompts


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clay-export",
        description=(
            "Run a pretrained vision-language encoder over an image folder or "
            "a prompt list and write clay-retrieval embedding/manifest files."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("images", help="encode an image folder + label CSV")
    p.add_argument("--model", required=True,
                   help="hub checkpoint id (e.g. openai/clip-vit-base-patch32) or dev/hash-<dim>")
    p.add_argument("--image-dir", required=True)
    p.add_argument("--labels", required=True, help="CSV: id,attr1,attr2,...")
    p.add_argument("--out-embeddings", default="images.clayemb")
    p.add_argument("--out-manifest", default="manifest.json")
    p.add_argument("--batch-size", type=int, default=16)
    p.set_defaults(kind="images")

    p = sub.add_parser("prompts", help="encode a one-prompt-per-line text file")
    p.add_argument("--model", required=True)
    p.add_argument("--prompt-file", required=True)
    p.add_argument("--out", default="prompts.clayemb")
    p.add_argument("--batch-size", type=int, default=16)
    p.set_defaults(kind="prompts")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.kind == "images":
            job = ExportJob(
                model_id=args.model,
                image_dir=args.image_dir,
                label_csv=args.labels,
                out_embeddings=args.out_embeddings,
                out_manifest=args.out_manifest,
                batch_size=args.batch_size,
            )
            emb, man = export_images(job)
            payload = {
                "embeddings": emb,
                "manifest": man,
                "skipped": job.skipped,
                "model": args.model,
            }
        else:
            job = ExportJob(
                model_id=args.model,
                prompt_file=args.prompt_file,
                out_embeddings=args.out,
                batch_size=args.batch_size,
            )
            payload = {"embeddings": export_prompts(job), "model": args.model}
    except ExporterError as exc:
        print(json.dumps({"error": {"type": type(exc).__name__, "message": str(exc)}}))
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(payload, indent=2, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
