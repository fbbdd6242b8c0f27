"""Dataset manifest: schema, (de)serialization and validation.

The manifest is a UTF-8 JSON document stored at <root>/manifest; crop
paths inside it are POSIX-style and resolve relative to that root.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .core import CircleParams, Generator, Source

MANIFEST_SCHEMA_VERSION = "1"
MANIFEST_FILENAME = "manifest"

SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ManifestEntry:
    face_id: str
    source: Source
    generator: Generator
    left_path: str
    right_path: str
    left_circle: CircleParams
    right_circle: CircleParams
    occlusion_fractions: tuple[float, float]  # (left, right), pre-fill
    reconstructed: tuple[bool, bool]
    split: str = "train"


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    schema_version: str = MANIFEST_SCHEMA_VERSION
    split_seed: int = 0
    split_fractions: tuple[float, float, float] = (0.7, 0.15, 0.15)


@dataclass(frozen=True)
class Violation:
    face_id: str
    rule: str
    detail: str


def _circle_to_json(c: CircleParams) -> dict:
    return {"cx": c.cx, "cy": c.cy, "r": c.r}


def _circle_from_json(d: dict) -> CircleParams:
    return CircleParams(cx=float(d["cx"]), cy=float(d["cy"]), r=float(d["r"]))


def serialize_manifest(manifest: DatasetManifest) -> str:
    doc = {
        "schema_version": manifest.schema_version,
        "split_seed": manifest.split_seed,
        "split_fractions": list(manifest.split_fractions),
        "entries": [
            {
                "face_id": e.face_id,
                "source": e.source.value,
                "generator": e.generator.value,
                "left_path": e.left_path,
                "right_path": e.right_path,
                "left_circle": _circle_to_json(e.left_circle),
                "right_circle": _circle_to_json(e.right_circle),
                "occlusion_fractions": list(e.occlusion_fractions),
                "reconstructed": list(e.reconstructed),
                "split": e.split,
            }
            for e in manifest.entries
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def parse_manifest(text: str) -> DatasetManifest:
    doc = json.loads(text)
    entries = tuple(
        ManifestEntry(
            face_id=str(d["face_id"]),
            source=Source(d["source"]),
            generator=Generator(d["generator"]),
            left_path=str(d["left_path"]),
            right_path=str(d["right_path"]),
            left_circle=_circle_from_json(d["left_circle"]),
            right_circle=_circle_from_json(d["right_circle"]),
            occlusion_fractions=tuple(float(x) for x in d["occlusion_fractions"]),
            reconstructed=tuple(bool(x) for x in d["reconstructed"]),
            split=str(d.get("split", "train")),
        )
        for d in doc["entries"]
    )
    return DatasetManifest(
        entries=entries,
        schema_version=str(doc["schema_version"]),
        split_seed=int(doc.get("split_seed", 0)),
        split_fractions=tuple(float(x) for x in doc.get("split_fractions", (0.7, 0.15, 0.15))),
    )


def write_manifest(manifest: DatasetManifest, root: Path) -> Path:
    path = Path(root) / MANIFEST_FILENAME
    path.write_text(serialize_manifest(manifest), encoding="utf-8")
    return path


def read_manifest(root: Path) -> DatasetManifest:
    path = Path(root) / MANIFEST_FILENAME
    return parse_manifest(path.read_text(encoding="utf-8"))


def validate_manifest(manifest: DatasetManifest, root) -> list[Violation]:
    """Check manifest invariants against the dataset tree under root.

    Returns an empty list iff every invariant holds and every referenced
    path exists.  An unreadable root raises (IO failure, as opposed to a
    validation failure of the manifest itself).
    """
    root = Path(root)
    if not root.exists():
        raise FileNotFoundError(f"dataset root does not exist: {root}")
    if not root.is_dir():
        raise NotADirectoryError(f"dataset root is not a directory: {root}")

    violations: list[Violation] = []
    seen: dict[str, int] = {}
    for e in manifest.entries:
        seen[e.face_id] = seen.get(e.face_id, 0) + 1
    for face_id, n in seen.items():
        if n > 1:
            violations.append(
                Violation(face_id, "unique_face_id", f"face_id appears {n} times")
            )

    for e in manifest.entries:
        if e.source is Source.REAL and e.generator is not Generator.NONE:
            violations.append(
                Violation(e.face_id, "source_generator", "REAL entry with non-NONE generator")
            )
        if e.source is Source.GAN and e.generator is Generator.NONE:
            violations.append(
                Violation(e.face_id, "source_generator", "GAN entry with generator NONE")
            )
        for side, rel in (("left", e.left_path), ("right", e.right_path)):
            if not (root / rel).is_file():
                violations.append(
                    Violation(e.face_id, "path_resolves", f"{side} crop missing: {rel}")
                )
        for side, frac in zip(("left", "right"), e.occlusion_fractions):
            if not 0.0 <= frac <= 1.0:
                violations.append(
                    Violation(e.face_id, "occlusion_range", f"{side} fraction {frac} outside [0, 1]")
                )
        if e.split not in SPLITS:
            violations.append(
                Violation(e.face_id, "split_name", f"unknown split {e.split!r}")
            )
    return violations
