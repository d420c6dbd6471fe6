"""Dataset plumbing: image manifests, embedding caches, and ablation sampling.

Manifests list pre-rendered views keyed by (object, cell, radius); the
framework never renders anything itself.  Embedding caches store float64
vectors losslessly so cached runs are bit-reproducible.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .camera import ViewConvention

__all__ = [
    "EmbeddingCache",
    "Manifest",
    "ManifestError",
    "ManifestRecord",
    "ablation_subsets",
    "load_manifest",
    "save_manifest",
]

_MANIFEST_FORMAT = "viewsphere-manifest"
_MANIFEST_VERSION = 1

_CACHE_HEADER = b"viewsphere-cache v1"

SPLITS = ("train", "test")


class ManifestError(ValueError):
    """Manifest failed validation; ``problems`` lists every offender."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("manifest validation failed:\n" + "\n".join(f"  - {p}" for p in self.problems))


@dataclass(frozen=True)
class ManifestRecord:
    object_id: str
    category: str
    split: str
    image: str
    cell: int | None = None
    view: str | None = None
    radius: float | None = None

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}, got {self.split!r}")
        if self.cell is None and self.view is None:
            raise ValueError("record needs a cell id or a view label")

    def to_dict(self) -> dict:
        out = {
            "object": self.object_id,
            "category": self.category,
            "split": self.split,
            "image": self.image,
        }
        if self.cell is not None:
            out["cell"] = self.cell
        if self.view is not None:
            out["view"] = self.view
        if self.radius is not None:
            out["radius"] = self.radius
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "ManifestRecord":
        return cls(
            object_id=data["object"],
            category=data["category"],
            split=data["split"],
            image=data["image"],
            cell=data.get("cell"),
            view=data.get("view"),
            radius=data.get("radius"),
        )


@dataclass(frozen=True)
class Manifest:
    records: tuple[ManifestRecord, ...]
    sphere_checksum: str
    view_convention: tuple[str, str] = ("+Y", "-Z")
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "records", tuple(self.records))
        problems = _duplicate_key_problems(self.records)
        if problems:
            raise ManifestError(problems)

    @property
    def convention(self) -> ViewConvention:
        return ViewConvention.from_names(*self.view_convention)

    def split(self, name: str) -> tuple[ManifestRecord, ...]:
        return tuple(r for r in self.records if r.split == name)

    def view_paths(self, object_id: str) -> dict[tuple[int, float], str]:
        """Image path per (cell, radius) for one object's rendered views."""
        out: dict[tuple[int, float], str] = {}
        for r in self.records:
            if r.object_id == object_id and r.cell is not None:
                out[(int(r.cell), float(r.radius) if r.radius is not None else None)] = r.image
        return out

    def to_dict(self) -> dict:
        return {
            "format": _MANIFEST_FORMAT,
            "version": _MANIFEST_VERSION,
            "sphere_checksum": self.sphere_checksum,
            "view_convention": list(self.view_convention),
            "provenance": self.provenance,
            "records": [r.to_dict() for r in self.records],
        }


def save_manifest(manifest: Manifest, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path, sphere=None, *, check_files: bool = True) -> Manifest:
    """Parse and validate a manifest file.

    Validation collects every problem (duplicate keys, missing image files,
    sphere checksum mismatch) before raising.  Image paths are resolved
    relative to the manifest's directory.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError([f"cannot read manifest {path}: {exc}"]) from exc
    if data.get("format") != _MANIFEST_FORMAT or data.get("version") != _MANIFEST_VERSION:
        raise ManifestError([f"unsupported manifest format/version in {path}"])
    problems: list[str] = []
    records: list[ManifestRecord] = []
    for i, raw in enumerate(data.get("records", [])):
        try:
            records.append(ManifestRecord.from_dict(raw))
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"record {i}: {exc}")
    problems.extend(_duplicate_key_problems(records))
    if sphere is not None and data.get("sphere_checksum") != sphere.checksum:
        problems.append(
            f"sphere checksum mismatch: manifest has {data.get('sphere_checksum')!r}"
        )
    if check_files:
        base = path.parent
        for r in records:
            if not (base / r.image).exists():
                problems.append(f"missing image file: {r.image}")
    if problems:
        raise ManifestError(problems)
    convention = tuple(data.get("view_convention", ("+Y", "-Z")))
    return Manifest(
        records=tuple(records),
        sphere_checksum=data.get("sphere_checksum", ""),
        view_convention=convention,
        provenance=data.get("provenance", {}),
    )


def _duplicate_key_problems(records) -> list[str]:
    seen: dict[tuple, int] = {}
    problems = []
    for r in records:
        if r.cell is None:
            continue
        key = (r.object_id, int(r.cell), float(r.radius) if r.radius is not None else None)
        if key in seen:
            problems.append(f"duplicate (object, cell, radius) key: {key}")
        seen[key] = 1
    return problems


def ablation_subsets(manifest: Manifest, sizes, seed: int) -> list[Manifest]:
    """Nested, stratified training subsets of the given sizes per (category, view).

    Each stratum is shuffled once with the seed; a subset of size s takes the
    first s picks, so smaller subsets are always contained in larger ones.
    Record order within each subset follows the original manifest.
    """
    sizes = [int(s) for s in sizes]
    if not sizes or any(s < 1 for s in sizes):
        raise ValueError("subset sizes must be positive")
    train = [r for r in manifest.records if r.split == "train"]
    problems = [
        f"train record without view label: ({r.object_id}, cell={r.cell})"
        for r in train if r.view is None
    ]
    if problems:
        raise ManifestError(problems)
    strata: dict[tuple[str, str], list[ManifestRecord]] = {}
    for r in train:
        strata.setdefault((r.category, r.view), []).append(r)

    shortfalls = [
        f"stratum {key} has {len(recs)} records, need {max(sizes)}"
        for key, recs in sorted(strata.items())
        if len(recs) < max(sizes)
    ]
    if shortfalls:
        raise ManifestError(shortfalls)

    rng = np.random.default_rng(seed)
    shuffled: dict[tuple[str, str], list[ManifestRecord]] = {}
    for key in sorted(strata):
        recs = strata[key]
        order = rng.permutation(len(recs))
        shuffled[key] = [recs[i] for i in order]

    subsets = []
    for s in sizes:
        chosen = set()
        for key in sorted(shuffled):
            chosen.update(id(r) for r in shuffled[key][:s])
        records = tuple(r for r in train if id(r) in chosen)
        subsets.append(replace(manifest, records=records))
    return subsets


class EmbeddingCache:
    """Keyed float64 vectors with a lossless binary file format.

    A lookup miss returns None from :meth:`get` (or raises from indexing);
    it is never a zero vector.
    """

    def __init__(self, dim: int):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = int(dim)
        self._entries: dict[str, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, key: str) -> bool:
        return key in self._entries

    def __getitem__(self, key: str) -> np.ndarray:
        return self._entries[key]

    def get(self, key: str):
        return self._entries.get(key)

    def keys(self):
        return self._entries.keys()

    def put(self, key: str, vector) -> None:
        v = np.ascontiguousarray(vector, dtype="<f8").reshape(-1)
        if v.shape[0] != self.dim:
            raise ValueError(f"vector length {v.shape[0]} != cache dim {self.dim}")
        if not np.all(np.isfinite(v)):
            raise ValueError("vector must be finite")
        self._entries[str(key)] = v

    def merge(self, other: "EmbeddingCache") -> None:
        if other.dim != self.dim:
            raise ValueError(f"cannot merge caches of dims {self.dim} and {other.dim}")
        self._entries.update(other._entries)

    def matrix(self, keys) -> np.ndarray:
        """Stacked vectors for the given keys; missing keys raise KeyError."""
        return np.vstack([self._entries[k] for k in keys])

    def save(self, path) -> None:
        keys = list(self._entries.keys())
        header = [
            _CACHE_HEADER,
            f"dim {self.dim}".encode(),
            f"count {len(keys)}".encode(),
            b"endian little",
            b"keys",
        ]
        header.extend(json.dumps(k, ensure_ascii=False).encode("utf-8") for k in keys)
        header.append(b"data")
        with open(path, "wb") as fh:
            fh.write(b"\n".join(header) + b"\n")
            for k in keys:
                fh.write(self._entries[k].astype("<f8", copy=False).tobytes())

    @classmethod
    def load(cls, path) -> "EmbeddingCache":
        with open(path, "rb") as fh:
            blob = fh.read()
        head, sep, rest = blob.partition(b"\ndata\n")
        if not sep:
            raise ValueError("malformed embedding cache: no data section")
        lines = head.split(b"\n")
        if lines[0] != _CACHE_HEADER:
            raise ValueError("unrecognized embedding-cache header")
        try:
            dim = int(lines[1].split()[1])
            count = int(lines[2].split()[1])
            endian = lines[3].split()[1].decode()
            assert lines[4] == b"keys"
            keys = [json.loads(l.decode("utf-8")) for l in lines[5:5 + count]]
        except (AssertionError, IndexError, ValueError, json.JSONDecodeError) as exc:
            raise ValueError(f"malformed embedding-cache header: {exc}") from exc
        if endian != "little":
            raise ValueError(f"unsupported endianness {endian!r}")
        if len(lines) != 5 + count:
            raise ValueError("embedding-cache key count mismatch")
        expected = count * dim * 8
        if len(rest) != expected:
            raise ValueError(f"embedding-cache data length {len(rest)} != {expected}")
        vectors = np.frombuffer(rest, dtype="<f8").reshape(count, dim)
        cache = cls(dim)
        for k, v in zip(keys, vectors):
            cache._entries[k] = v.copy()
        return cache
