"""Detection, proposal and embedding writers."""

from __future__ import annotations

import json
import math
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

EMBEDDING_MAGIC = b"PALEMB1\0"
RECORD_VERSION = 1


class ExportError(RuntimeError):
    pass


@dataclass(frozen=True)
class CaptureSettings:
    pre_nms_cap: int = 1000
    score_threshold: float = 0.3
    nms_iou: float = 0.5

    def header(self) -> str:
        return (f"#capture pre_nms_cap={self.pre_nms_cap} "
                f"score_threshold={self.score_threshold} nms_iou={self.nms_iou}\n")


@dataclass
class AdapterSession:
    dataset: str
    out_dir: Path
    classes: Sequence[str]
    capture: CaptureSettings = field(default_factory=CaptureSettings)

    def __post_init__(self) -> None:
        self.out_dir = Path(self.out_dir)
        if not self.classes:
            raise ExportError("class list is empty")
        for name in self.classes:
            if not name or "," in name or any(ch.isspace() for ch in name):
                raise ExportError(f"class name {name!r} must be non-empty without commas or spaces")

    def header(self, schema: str) -> str:
        return (f"#schema {schema} {RECORD_VERSION}\n#classes {','.join(self.classes)}\n"
                f"#dataset {self.dataset}\n" + self.capture.header())


def _line(obj: Mapping) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False) + "\n"


def _box(raw, where: str) -> list[float]:
    box = [float(v) for v in raw]
    if len(box) != 4 or not all(math.isfinite(v) for v in box):
        raise ExportError(f"{where}: bbox must be four finite numbers [x,y,w,h]")
    if box[2] <= 0 or box[3] <= 0:
        raise ExportError(f"{where}: bbox has non-positive width or height")
    return box


def _confidence(raw, where: str) -> float:
    c = float(raw)
    if not math.isfinite(c):
        raise ExportError(f"{where}: confidence is not finite")
    if c > 1.0 or c < 0.0:
        warnings.warn(f"{where}: confidence {c} clamped to [0,1]")
        c = min(1.0, max(0.0, c))
    return c


def export_detections(session: AdapterSession,
                      outputs: Mapping[int, Mapping],
                      stem: str = "detections") -> tuple[Path, Path]:
    """Writes `<stem>.dets` and `<stem>.props` for per-image model outputs.

    outputs maps image id to {"detections": [{"class_id", "bbox", "confidence",
    optional "probs"}], "proposals": [{"bbox", "confidence"}]}.
    """
    nc = len(session.classes)
    session.out_dir.mkdir(parents=True, exist_ok=True)
    dets = [session.header("pal.detections")]
    props = [session.header("pal.proposals")]
    for image_id in sorted(outputs):
        if not isinstance(image_id, int) or image_id < 0:
            raise ExportError(f"image id {image_id!r} must be a non-negative integer")
        out = outputs[image_id]
        if "proposals" not in out:
            raise ExportError(f"image {image_id}: model output has no pre-NMS proposals; "
                              "enable the proposal capture hook before NMS")
        dets.append(_line({"type": "image", "id": image_id}))
        for k, d in enumerate(out.get("detections", [])):
            where = f"image {image_id} detection {k}"
            cls = int(d["class_id"])
            if not 0 <= cls < nc:
                raise ExportError(f"{where}: class_id {cls} outside {nc} classes")
            rec = {"type": "det", "image_id": image_id, "class_id": cls,
                   "bbox": _box(d["bbox"], where), "confidence": _confidence(d["confidence"], where)}
            if d.get("probs") is not None:
                probs = [float(p) for p in d["probs"]]
                total = sum(probs)
                if len(probs) != nc or total <= 0 or any(not math.isfinite(p) or p < 0 for p in probs):
                    raise ExportError(f"{where}: probs must be {nc} non-negative finite values")
                rec["probs"] = [p / total for p in probs]
            dets.append(_line(rec))
        for k, p in enumerate(out["proposals"]):
            where = f"image {image_id} proposal {k}"
            props.append(_line({"type": "prop", "image_id": image_id, "bbox": _box(p["bbox"], where),
                                "confidence": _confidence(p["confidence"], where)}))
    det_path = session.out_dir / f"{stem}.dets"
    prop_path = session.out_dir / f"{stem}.props"
    det_path.write_text("".join(dets))
    prop_path.write_text("".join(props))
    return det_path, prop_path


def export_embeddings(session: AdapterSession,
                      encoder: Callable[[int], Sequence[float]],
                      image_ids: Iterable[int],
                      name: str = "embeddings.bin") -> Path:
    """Writes a PALEMB1 file; the first vector fixes the dimension."""
    rows = []
    dim = None
    for image_id in image_ids:
        vec = [float(v) for v in encoder(image_id)]
        if dim is None:
            if not vec:
                raise ExportError(f"image {image_id}: encoder returned an empty vector")
            dim = len(vec)
        elif len(vec) != dim:
            raise ExportError(f"image {image_id}: embedding dim {len(vec)} differs from {dim}")
        if not all(math.isfinite(v) for v in vec):
            raise ExportError(f"image {image_id}: embedding has non-finite values")
        rows.append((image_id, vec))
    if dim is None:
        raise ExportError("no images to embed")
    blob = bytearray(EMBEDDING_MAGIC)
    blob += struct.pack("<II", dim, len(rows))
    for image_id, vec in rows:
        blob += struct.pack(f"<Q{dim}f", image_id, *vec)
    session.out_dir.mkdir(parents=True, exist_ok=True)
    path = session.out_dir / name
    path.write_bytes(bytes(blob))
    return path
