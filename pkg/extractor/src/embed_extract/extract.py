"""Run an encoder over an image folder and a concept bank, emit matrix files.

Row order is contractual: image rows follow the manifest's instance order
(or sorted filenames without a manifest) and concept rows follow bank id
order. Rows are L2-normalized after the f32 down-cast so the header's
normalized flag is truthful.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .encoders import make_encoder
from .wisemat import write_f32

log = logging.getLogger(__name__)

_IMAGE_SUFFIXES = ("", ".png", ".jpg", ".jpeg", ".bmp", ".gif", ".webp")


@dataclass
class ExtractionJob:
    image_dir: Path
    bank_path: Path
    out_dir: Path
    manifest_path: Path | None = None
    model: str = "openai/clip-vit-large-patch14"
    batch_size: int = 16
    device: str = "cpu"
    class_names: bool = False
    extra: dict = field(default_factory=dict)


def _read_bank_names(path: Path) -> list[str]:
    entries = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                obj = json.loads(line)
                entries.append((int(obj["id"]), str(obj["name"])))
    entries.sort()
    ids = [i for i, _ in entries]
    if ids != list(range(len(ids))):
        raise ValueError(f"{path}: concept ids must be dense 0..{len(ids) - 1}")
    return [name for _, name in entries]


def _read_manifest(path: Path) -> tuple[list[str], list[str]]:
    instance_ids: list[str] = []
    class_names: list[str] = []
    with path.open("r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            obj = json.loads(line)
            if "class_names" in obj:
                class_names = [str(c) for c in obj["class_names"]]
            else:
                instance_ids.append(str(obj["id"]))
    return instance_ids, class_names


def _resolve_image(image_dir: Path, instance_id: str) -> Path | None:
    for suffix in _IMAGE_SUFFIXES:
        candidate = image_dir / f"{instance_id}{suffix}"
        if candidate.is_file():
            return candidate
    return None


def _normalize_f32(rows: np.ndarray) -> np.ndarray:
    rows = np.asarray(rows).astype(np.float32)
    norms = np.linalg.norm(rows.astype(np.float64), axis=1, keepdims=True)
    if np.any(norms == 0.0):
        raise ValueError("cannot normalize a zero embedding row")
    return (rows / norms).astype(np.float32)


def run_extraction(job: ExtractionJob) -> dict[str, Path]:
    """Write image/concept (and optional class-name) matrices plus a manifest
    of emitted row order and skipped images."""
    encoder = make_encoder(job.model, device=job.device,
                           batch_size=job.batch_size)
    names = _read_bank_names(job.bank_path)

    class_names: list[str] = []
    if job.manifest_path is not None:
        instance_ids, class_names = _read_manifest(job.manifest_path)
        pairs = [(iid, _resolve_image(job.image_dir, iid))
                 for iid in instance_ids]
        missing = [iid for iid, p in pairs if p is None]
        if missing:
            raise FileNotFoundError(
                f"{len(missing)} manifest instance(s) have no image file, "
                f"first: {missing[0]!r}")
    else:
        files = sorted(p for p in job.image_dir.iterdir() if p.is_file())
        pairs = [(p.stem, p) for p in files]

    kept_ids: list[str] = []
    skipped: list[str] = []
    image_rows = []
    for iid, path in pairs:
        try:
            image_rows.append(encoder.encode_image(path))
        except Exception as exc:
            log.warning("skipping undecodable image %s (%s)", iid, exc)
            skipped.append(iid)
            continue
        kept_ids.append(iid)
    if not image_rows:
        raise ValueError("no decodable images found")

    job.out_dir.mkdir(parents=True, exist_ok=True)
    out = {
        "images": job.out_dir / "image_embeddings.wmat",
        "concepts": job.out_dir / "concept_embeddings.wmat",
        "manifest": job.out_dir / "extraction_manifest.txt",
    }
    write_f32(out["images"], _normalize_f32(np.asarray(image_rows)),
              normalized=True)
    write_f32(out["concepts"], _normalize_f32(encoder.encode_texts(names)),
              normalized=True)
    if job.class_names:
        if not class_names:
            raise ValueError("--class-names needs a manifest with a header")
        out["class_names"] = job.out_dir / "classname_embeddings.wmat"
        write_f32(out["class_names"], _normalize_f32(
            encoder.encode_texts(class_names)), normalized=True)

    lines = [f"model {job.model}", f"images {len(kept_ids)}",
             f"concepts {len(names)}"]
    lines += [f"row {k} {iid}" for k, iid in enumerate(kept_ids)]
    lines += [f"skipped {iid}" for iid in skipped]
    out["manifest"].write_text("\n".join(lines) + "\n", encoding="utf-8")
    return out
