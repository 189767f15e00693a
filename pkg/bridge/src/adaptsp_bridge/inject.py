"""Inject embedding files into a generation pipeline.

`StubPipeline` is a deterministic stand-in for a diffusion pipeline that
accepts externally supplied prompt embeddings: it renders a small image
whose pixels are a pure function of (embedding row, seed). Real pipelines
plug in behind the same two-method surface (`expected_dim`, `render`).
"""

import hashlib
import json
from pathlib import Path

import numpy as np
from PIL import Image

from adaptsp_bridge.encoders import SEQUENCE_LENGTH, TOKEN_DIM


class InjectionError(RuntimeError):
    pass


class StubPipeline:
    def __init__(self, expected_dim: int = SEQUENCE_LENGTH * TOKEN_DIM, size: int = 64):
        self.expected_dim = expected_dim
        self.size = size

    def render(self, row: np.ndarray, seed: int) -> Image.Image:
        digest = hashlib.sha256(
            np.ascontiguousarray(row, dtype=np.float64).tobytes()
            + seed.to_bytes(8, "little", signed=True)
        ).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        pixels = rng.integers(0, 256, size=(self.size, self.size, 3), dtype=np.uint8)
        return Image.fromarray(pixels, mode="RGB")


def load_embedding_file(path) -> tuple:
    """Array rows plus their prompt ids, straight off the file formats."""
    path = Path(path)
    data = np.load(path)
    if data.ndim == 3:
        data = data.reshape(data.shape[0], -1)
    if data.ndim != 2:
        raise InjectionError("%s: expected a 2-D or 3-D embedding array" % path)
    manifest_path = path.with_name(path.name[: -len(".npy")] + ".manifest.json") \
        if path.name.endswith(".npy") else Path(str(path) + ".manifest.json")
    try:
        obj = json.loads(manifest_path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InjectionError("%s: no manifest at %s" % (path, manifest_path)) from None
    ids = [e["prompt_id"] for e in obj["entries"]]
    if len(ids) != data.shape[0]:
        raise InjectionError(
            "%s: %d manifest entries for %d rows" % (path, len(ids), data.shape[0])
        )
    return data, ids


def inject_and_generate(pipeline, embedding_path, seeds, out_dir) -> list:
    """One image per (row, seed); filenames carry prompt id and seed."""
    data, ids = load_embedding_file(embedding_path)
    if data.shape[1] != pipeline.expected_dim:
        raise InjectionError(
            "embedding dim %d does not match pipeline expectation %d"
            % (data.shape[1], pipeline.expected_dim)
        )
    seeds = list(seeds)
    if not seeds:
        raise InjectionError("no seeds given")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for i, prompt_id in enumerate(ids):
        for seed in seeds:
            img = pipeline.render(data[i], int(seed))
            target = out_dir / ("%s__seed%d.png" % (prompt_id, int(seed)))
            img.save(target)
            written.append(target)
    return written
