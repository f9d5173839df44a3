"""pal-export --model-hook module:factory --images DIR --out DIR"""

from __future__ import annotations

import argparse
import importlib
import sys
from pathlib import Path

from .export import AdapterSession, CaptureSettings, ExportError, export_detections, export_embeddings

IMAGE_SUFFIXES = {".jpg", ".jpeg", ".png", ".bmp"}


def load_hook(spec: str):
    module, sep, attr = spec.partition(":")
    if not sep or not module or not attr:
        raise ExportError(f"--model-hook {spec!r} must look like module:factory")
    return getattr(importlib.import_module(module), attr)()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="pal-export", description=__doc__)
    ap.add_argument("--model-hook", required=True,
                    help="module:factory returning an object with classes, infer(path), embed(path)")
    ap.add_argument("--images", required=True, type=Path)
    ap.add_argument("--out", required=True, type=Path)
    ap.add_argument("--pre-nms-cap", type=int, default=1000)
    ap.add_argument("--score-threshold", type=float, default=0.3)
    ap.add_argument("--nms-iou", type=float, default=0.5)
    args = ap.parse_args(argv)
    try:
        if not args.images.is_dir():
            raise ExportError(f"--images {args.images} is not a directory")
        model = load_hook(args.model_hook)
        files = sorted(p for p in args.images.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
        ids = {i + 1: p for i, p in enumerate(files)}
        session = AdapterSession(args.images.name, args.out, list(model.classes),
                                 CaptureSettings(args.pre_nms_cap, args.score_threshold, args.nms_iou))
        export_detections(session, {i: model.infer(p) for i, p in ids.items()})
        export_embeddings(session, lambda i: model.embed(ids[i]), ids)
        (args.out / "images.tsv").write_text("".join(f"{i}\t{p.name}\n" for i, p in ids.items()))
    except ExportError as e:
        print(f"pal-export: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
