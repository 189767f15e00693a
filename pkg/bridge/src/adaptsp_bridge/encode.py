"""Encode prompt batteries into the toolkit's array + manifest files.

The file contract is the toolkit's embedding-set format: a float32/float64
NPY array of shape (n, sequence_length*token_dim) next to a JSON manifest
listing prompt_id, context, token role, and encoder per row. Class and
personalized files emitted by one `encode_pair` call share prompt ids and
row order by construction.
"""

import json
from pathlib import Path

import numpy as np

from adaptsp_bridge.battery import PromptBattery
from adaptsp_bridge.encoders import (
    SEQUENCE_LENGTH,
    TOKEN_DIM,
    EncoderBundle,
    encode_texts,
)

# toolkit manifest enums, pinned by the file format
TOKEN_PERSONALIZED = "personalized"
TOKEN_CLASS = "class_anchor"


def manifest_obj(battery: PromptBattery, token: str, encoder_kind: str) -> dict:
    entries = [
        {
            "prompt_id": battery.prompt_id(i),
            "context": template,
            "token": token,
            "encoder": encoder_kind,
        }
        for i, template in enumerate(battery.templates)
    ]
    return {
        "entries": entries,
        "sequence_length": SEQUENCE_LENGTH,
        "token_dim": TOKEN_DIM,
        "format_version": 1,
    }


def write_embedding_file(path, data: np.ndarray, manifest: dict) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        np.save(fh, data)
    manifest_path = path.with_name(path.name[:-len(".npy")] + ".manifest.json") \
        if path.name.endswith(".npy") else Path(str(path) + ".manifest.json")
    manifest_path.write_text(
        json.dumps(manifest, sort_keys=True, separators=(",", ":")) + "\n",
        encoding="utf-8",
    )


def encode_battery(
    bundle: EncoderBundle,
    battery: PromptBattery,
    token_choice: str,
    encoder_kind: str,
    out_path,
) -> Path:
    """One file: every template filled with the chosen subject token."""
    if token_choice == TOKEN_PERSONALIZED:
        subject = battery.token_personalized
    elif token_choice == TOKEN_CLASS:
        subject = battery.token_class
    else:
        raise ValueError("token_choice must be %r or %r" % (TOKEN_PERSONALIZED, TOKEN_CLASS))
    data = encode_texts(bundle, encoder_kind, battery.prompts(subject))
    write_embedding_file(out_path, data, manifest_obj(battery, token_choice, encoder_kind))
    return Path(out_path)


def encode_pair(
    bundle: EncoderBundle,
    battery: PromptBattery,
    out_dir,
    anchor_encoder: str = "fine_tuned",
    stem: str | None = None,
) -> tuple:
    """Aligned personalized + class files in one call.

    Personalized prompts always go through the fine-tuned encoder; the class
    anchor goes through `anchor_encoder` (fine-tuned or original).
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = stem or battery.battery_id
    pers_path = encode_battery(
        bundle, battery, TOKEN_PERSONALIZED, "fine_tuned",
        out_dir / ("%s.personalized.npy" % stem),
    )
    cls_path = encode_battery(
        bundle, battery, TOKEN_CLASS, anchor_encoder,
        out_dir / ("%s.class.npy" % stem),
    )
    return pers_path, cls_path
