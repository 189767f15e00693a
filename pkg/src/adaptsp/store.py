"""Embedding data model and the bit-exact on-disk layout.

An embedding set is an (n, d) matrix of flattened prompt embeddings plus a
manifest binding each row to its prompt template and token variant. Rows are
kept in 64-bit floats internally regardless of the on-disk precision; d is
always sequence_length * token_dim, with 3-D files flattened row-major so
element (i, l, t) lands at flat column l * token_dim + t.

Manifests are canonical JSON (sorted keys, compact separators, trailing
newline), which makes their SHA-256 digests stable across runs and machines.
Digests of matrices are taken over the canonical f64 array serialization.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from adaptsp.arrayio import array_bytes, read_array, write_array
from adaptsp.errors import ValidationError

TOKEN_PERSONALIZED = "personalized"
TOKEN_CLASS = "class_anchor"
TOKENS = (TOKEN_PERSONALIZED, TOKEN_CLASS)

ENCODER_FINE_TUNED = "fine_tuned"
ENCODER_ORIGINAL = "original"
ENCODERS = (ENCODER_FINE_TUNED, ENCODER_ORIGINAL)

FORMAT_VERSION = 1

_ENTRY_KEYS = {"prompt_id", "context", "token", "encoder"}
_MANIFEST_KEYS = {"entries", "sequence_length", "token_dim", "format_version"}
_MANIFEST_OPTIONAL = {"adjustment", "parent_paths"}


def sha256_hex(data: bytes) -> str:
    return "sha256:" + hashlib.sha256(data).hexdigest()


def canonical_json_bytes(obj) -> bytes:
    return (json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n").encode("ascii")


def default_manifest_path(array_path) -> Path:
    p = Path(array_path)
    stem = p.name[: -len(".npy")] if p.name.endswith(".npy") else p.name
    return p.with_name(stem + ".manifest.json")


@dataclass(frozen=True)
class ManifestEntry:
    prompt_id: str
    context: str
    token: str
    encoder: str

    def validate(self):
        if not self.prompt_id:
            raise ValidationError("manifest entry with empty prompt_id")
        if self.token not in TOKENS:
            raise ValidationError(
                "manifest entry %r: token must be one of %s, got %r"
                % (self.prompt_id, list(TOKENS), self.token)
            )
        if self.encoder not in ENCODERS:
            raise ValidationError(
                "manifest entry %r: encoder must be one of %s, got %r"
                % (self.prompt_id, list(ENCODERS), self.encoder)
            )


@dataclass
class Manifest:
    entries: list[ManifestEntry]
    sequence_length: int
    token_dim: int
    adjustment: dict | None = None
    parent_paths: dict | None = None

    def validate(self):
        if self.sequence_length < 1 or self.token_dim < 1:
            raise ValidationError("sequence_length and token_dim must be positive")
        seen = set()
        for e in self.entries:
            e.validate()
            if e.prompt_id in seen:
                raise ValidationError("duplicate prompt_id %r in manifest" % e.prompt_id)
            seen.add(e.prompt_id)

    @property
    def prompt_ids(self) -> list[str]:
        return [e.prompt_id for e in self.entries]

    def to_json_obj(self) -> dict:
        obj = {
            "entries": [
                {
                    "prompt_id": e.prompt_id,
                    "context": e.context,
                    "token": e.token,
                    "encoder": e.encoder,
                }
                for e in self.entries
            ],
            "sequence_length": self.sequence_length,
            "token_dim": self.token_dim,
            "format_version": FORMAT_VERSION,
        }
        if self.adjustment is not None:
            obj["adjustment"] = self.adjustment
        if self.parent_paths is not None:
            obj["parent_paths"] = self.parent_paths
        return obj

    def canonical_bytes(self) -> bytes:
        return canonical_json_bytes(self.to_json_obj())

    def digest(self) -> str:
        return sha256_hex(self.canonical_bytes())

    @classmethod
    def from_json_obj(cls, obj, source="manifest") -> "Manifest":
        if not isinstance(obj, dict):
            raise ValidationError("%s: malformed manifest (not an object)" % source)
        keys = set(obj)
        if not _MANIFEST_KEYS <= keys or keys - _MANIFEST_KEYS - _MANIFEST_OPTIONAL:
            raise ValidationError(
                "%s: malformed manifest (keys %s)" % (source, sorted(keys))
            )
        if obj["format_version"] != FORMAT_VERSION:
            raise ValidationError(
                "%s: unsupported format_version %r" % (source, obj["format_version"])
            )
        entries = []
        for raw in obj["entries"]:
            if not isinstance(raw, dict) or set(raw) != _ENTRY_KEYS:
                raise ValidationError("%s: malformed manifest entry %r" % (source, raw))
            entries.append(
                ManifestEntry(
                    prompt_id=raw["prompt_id"],
                    context=raw["context"],
                    token=raw["token"],
                    encoder=raw["encoder"],
                )
            )
        m = cls(
            entries=entries,
            sequence_length=int(obj["sequence_length"]),
            token_dim=int(obj["token_dim"]),
            adjustment=obj.get("adjustment"),
            parent_paths=obj.get("parent_paths"),
        )
        m.validate()
        return m


@dataclass
class EmbeddingSet:
    data: np.ndarray  # (n, d) float64, C-contiguous
    manifest: Manifest
    dtype_on_disk: str = "f64"

    def validate(self):
        if self.data.ndim != 2:
            raise ValidationError("embedding data must be 2-D after flattening")
        n, d = self.data.shape
        if n == 0:
            raise ValidationError("empty embedding set")
        if d == 0:
            raise ValidationError("embedding rows must be non-empty")
        self.manifest.validate()
        if len(self.manifest.entries) != n:
            raise ValidationError(
                "manifest has %d entries but matrix has %d rows"
                % (len(self.manifest.entries), n)
            )
        if self.manifest.sequence_length * self.manifest.token_dim != d:
            raise ValidationError(
                "manifest sequence_length*token_dim = %d does not match d = %d"
                % (self.manifest.sequence_length * self.manifest.token_dim, d)
            )
        bad = np.argwhere(~np.isfinite(self.data))
        if bad.size:
            r, c = int(bad[0][0]), int(bad[0][1])
            raise ValidationError("non-finite value at (%d, %d)" % (r, c))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.data[i]

    @property
    def prompt_ids(self) -> list[str]:
        return self.manifest.prompt_ids

    def digest(self) -> str:
        return sha256_hex(array_bytes(self.data, "f64"))

    def manifest_digest(self) -> str:
        return self.manifest.digest()


def load_embedding_set(path, manifest_path=None) -> EmbeddingSet:
    manifest_path = default_manifest_path(path) if manifest_path is None else manifest_path
    raw, disk_dtype = read_array(path)
    if raw.ndim == 3:
        raw = raw.reshape(raw.shape[0], raw.shape[1] * raw.shape[2])
    elif raw.ndim != 2:
        raise ValidationError("%s: expected a 2-D or 3-D array, got %d-D" % (path, raw.ndim))
    data = np.ascontiguousarray(raw, dtype=np.float64)
    try:
        obj = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError("%s: malformed manifest (%s)" % (manifest_path, exc)) from exc
    manifest = Manifest.from_json_obj(obj, source=str(manifest_path))
    es = EmbeddingSet(data=data, manifest=manifest, dtype_on_disk=disk_dtype)
    es.validate()
    return es


def save_embedding_set(es: EmbeddingSet, path, dtype: str = "f64", manifest_path=None) -> None:
    es.validate()
    manifest_path = default_manifest_path(path) if manifest_path is None else manifest_path
    write_array(path, es.data, dtype=dtype)
    Path(manifest_path).write_bytes(es.manifest.canonical_bytes())


def aligned(a: EmbeddingSet, b: EmbeddingSet) -> bool:
    return a.d == b.d and a.prompt_ids == b.prompt_ids


def align(a: EmbeddingSet, b: EmbeddingSet) -> tuple[EmbeddingSet, EmbeddingSet]:
    """Reorder both sets into lexicographic prompt_id order.

    Pure row permutation: no arithmetic touches the data, so alignment is
    idempotent and bitwise faithful.
    """
    if a.d != b.d:
        raise ValidationError("dimension mismatch: %d vs %d" % (a.d, b.d))
    ids_a, ids_b = a.prompt_ids, b.prompt_ids
    if sorted(ids_a) != sorted(ids_b):
        raise ValidationError("prompt-id sets differ")
    return _reorder(a), _reorder(b)


def _reorder(es: EmbeddingSet) -> EmbeddingSet:
    order = sorted(range(es.n), key=lambda i: es.manifest.entries[i].prompt_id)
    if order == list(range(es.n)):
        return es
    manifest = Manifest(
        entries=[es.manifest.entries[i] for i in order],
        sequence_length=es.manifest.sequence_length,
        token_dim=es.manifest.token_dim,
        adjustment=es.manifest.adjustment,
        parent_paths=es.manifest.parent_paths,
    )
    return EmbeddingSet(
        data=np.ascontiguousarray(es.data[order]),
        manifest=manifest,
        dtype_on_disk=es.dtype_on_disk,
    )


@dataclass
class ResidualSet:
    """Per-prompt residual rows with provenance back to both parent sets."""

    data: np.ndarray  # (n, d) float64
    prompt_ids: list[str]
    contexts: list[str]
    sequence_length: int
    token_dim: int
    parents: dict = field(default_factory=dict)
    parent_paths: dict | None = None

    def validate(self):
        if self.data.ndim != 2 or self.data.shape[0] == 0:
            raise ValidationError("empty residual set")
        n, d = self.data.shape
        if len(self.prompt_ids) != n or len(self.contexts) != n:
            raise ValidationError("residual manifest rows do not match matrix rows")
        if len(set(self.prompt_ids)) != n:
            raise ValidationError("duplicate prompt_id in residual set")
        if self.sequence_length * self.token_dim != d:
            raise ValidationError("sequence_length*token_dim does not match d")
        bad = np.argwhere(~np.isfinite(self.data))
        if bad.size:
            r, c = int(bad[0][0]), int(bad[0][1])
            raise ValidationError("non-finite value at (%d, %d)" % (r, c))

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]

    def row(self, i: int) -> np.ndarray:
        return self.data[i]

    def digest(self) -> str:
        return sha256_hex(array_bytes(self.data, "f64"))

    def manifest_json_obj(self) -> dict:
        obj = {
            "kind": "residual",
            "entries": [
                {"prompt_id": pid, "context": ctx}
                for pid, ctx in zip(self.prompt_ids, self.contexts)
            ],
            "sequence_length": self.sequence_length,
            "token_dim": self.token_dim,
            "parents": self.parents,
            "format_version": FORMAT_VERSION,
        }
        if self.parent_paths is not None:
            obj["parent_paths"] = self.parent_paths
        return obj

    def manifest_digest(self) -> str:
        return sha256_hex(canonical_json_bytes(self.manifest_json_obj()))


def save_residual_set(rs: ResidualSet, path, dtype: str = "f64", manifest_path=None) -> None:
    rs.validate()
    manifest_path = default_manifest_path(path) if manifest_path is None else manifest_path
    write_array(path, rs.data, dtype=dtype)
    Path(manifest_path).write_bytes(canonical_json_bytes(rs.manifest_json_obj()))


def load_residual_set(path, manifest_path=None) -> ResidualSet:
    manifest_path = default_manifest_path(path) if manifest_path is None else manifest_path
    raw, _ = read_array(path)
    if raw.ndim == 3:
        raw = raw.reshape(raw.shape[0], raw.shape[1] * raw.shape[2])
    elif raw.ndim != 2:
        raise ValidationError("%s: expected a 2-D or 3-D array, got %d-D" % (path, raw.ndim))
    try:
        obj = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError("%s: malformed manifest (%s)" % (manifest_path, exc)) from exc
    if not isinstance(obj, dict) or obj.get("kind") != "residual":
        raise ValidationError("%s: not a residual-set manifest" % manifest_path)
    if obj.get("format_version") != FORMAT_VERSION:
        raise ValidationError(
            "%s: unsupported format_version %r" % (manifest_path, obj.get("format_version"))
        )
    entries = obj.get("entries", [])
    rs = ResidualSet(
        data=np.ascontiguousarray(raw, dtype=np.float64),
        prompt_ids=[e["prompt_id"] for e in entries],
        contexts=[e.get("context", "") for e in entries],
        sequence_length=int(obj["sequence_length"]),
        token_dim=int(obj["token_dim"]),
        parents=obj.get("parents", {}),
        parent_paths=obj.get("parent_paths"),
    )
    rs.validate()
    return rs
