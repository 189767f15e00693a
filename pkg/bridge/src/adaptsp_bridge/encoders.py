"""Deterministic text encoders with the CLIP backbone geometry.

Two reference forms are supported:

- ``seeded:<seed>[,depth=<layers>]`` builds a reduced-depth, randomly
  initialized CLIP text model with the backbone's sequence geometry
  (77 positions x 768 hidden) and a constructed character-level tokenizer.
  Weights are a pure function of the seed, so encodings are reproducible
  without any checkpoint download.
- ``dir:<path>`` loads a saved tokenizer+model checkpoint directory.

"Fine-tuned" encoders are derived from the original by shifting the input
embedding row of the personalized token (a seeded perturbation standing in
for personalization fine-tuning), so personalized and class prompts drift
apart the way the toolkit expects.
"""

import copy
import json
import string
import tempfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import torch
from transformers import CLIPTextConfig, CLIPTextModel, CLIPTokenizer

SEQUENCE_LENGTH = 77
TOKEN_DIM = 768
FINE_TUNE_SHIFT = 0.05  # relative scale of the personalized-row perturbation


class EncoderError(RuntimeError):
    pass


class TokenizerOverflow(EncoderError):
    pass


def _char_vocab() -> dict:
    chars = sorted(set(string.ascii_lowercase + string.digits + string.punctuation))
    vocab = {"<|startoftext|>": 0, "<|endoftext|>": 1}
    for ch in chars:
        vocab[ch] = len(vocab)
        vocab[ch + "</w>"] = len(vocab)
    return vocab


def build_char_tokenizer(extra_tokens=()) -> CLIPTokenizer:
    """Character-level CLIP tokenizer: full vocab, empty merge table."""
    with tempfile.TemporaryDirectory() as tmp:
        vocab_path = Path(tmp) / "vocab.json"
        merges_path = Path(tmp) / "merges.txt"
        vocab_path.write_text(json.dumps(_char_vocab()), encoding="utf-8")
        merges_path.write_text("#version: 0.2\n", encoding="utf-8")
        tok = CLIPTokenizer(str(vocab_path), str(merges_path),
                            pad_token="<|endoftext|>")
    if extra_tokens:
        tok.add_tokens(sorted(set(extra_tokens)))
    return tok


def build_seeded_model(seed: int, depth: int = 2, vocab_size: int = 512) -> CLIPTextModel:
    cfg = CLIPTextConfig(
        vocab_size=vocab_size,
        hidden_size=TOKEN_DIM,
        intermediate_size=2 * TOKEN_DIM,
        num_hidden_layers=depth,
        num_attention_heads=8,
        max_position_embeddings=SEQUENCE_LENGTH,
        bos_token_id=0,
        eos_token_id=1,
    )
    torch.manual_seed(seed)
    model = CLIPTextModel(cfg)
    model.eval()
    return model


@dataclass
class EncoderBundle:
    """Tokenizer plus the original and personalization-shifted models."""

    tokenizer: CLIPTokenizer
    original: CLIPTextModel
    fine_tuned: CLIPTextModel
    personalized_token: str

    def model_for(self, encoder_kind: str) -> CLIPTextModel:
        if encoder_kind == "original":
            return self.original
        if encoder_kind == "fine_tuned":
            return self.fine_tuned
        raise EncoderError("unknown encoder kind %r" % encoder_kind)


def _personalize(model: CLIPTextModel, token_id: int, seed: int) -> CLIPTextModel:
    tuned = copy.deepcopy(model)
    emb = tuned.get_input_embeddings().weight
    gen = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        row = emb[token_id]
        shift = FINE_TUNE_SHIFT * row.norm() * torch.randn(
            row.shape, generator=gen
        ) / (row.numel() ** 0.5)
        emb[token_id] = row + shift
    tuned.eval()
    return tuned


def parse_encoder_ref(ref: str) -> dict:
    if ref.startswith("seeded:"):
        body = ref[len("seeded:"):]
        parts = body.split(",")
        try:
            seed = int(parts[0])
        except ValueError:
            raise EncoderError("bad encoder ref %r: seed must be an integer" % ref) from None
        depth = 2
        for p in parts[1:]:
            key, _, val = p.partition("=")
            if key != "depth":
                raise EncoderError("bad encoder ref %r: unknown option %r" % (ref, key))
            depth = int(val)
        return {"kind": "seeded", "seed": seed, "depth": depth}
    if ref.startswith("dir:"):
        return {"kind": "dir", "path": ref[len("dir:"):]}
    raise EncoderError("bad encoder ref %r: expected seeded:<seed> or dir:<path>" % ref)


def load_encoder(ref: str, personalized_token: str) -> EncoderBundle:
    spec = parse_encoder_ref(ref)
    if spec["kind"] == "seeded":
        tokenizer = build_char_tokenizer(extra_tokens=[personalized_token])
        model = build_seeded_model(spec["seed"], depth=spec["depth"])
        tune_seed = spec["seed"] + 1
    else:
        path = Path(spec["path"])
        if not path.is_dir():
            raise EncoderError("encoder directory %s does not exist" % path)
        try:
            tokenizer = CLIPTokenizer.from_pretrained(str(path))
            model = CLIPTextModel.from_pretrained(str(path))
        except Exception as exc:
            raise EncoderError("failed to load encoder from %s: %s" % (path, exc)) from exc
        if personalized_token not in tokenizer.get_vocab():
            tokenizer.add_tokens([personalized_token])
        model.eval()
        tune_seed = 1
    token_id = tokenizer.convert_tokens_to_ids(personalized_token)
    if token_id >= model.get_input_embeddings().weight.shape[0]:
        raise EncoderError(
            "personalized token id %d exceeds the model vocabulary" % token_id
        )
    return EncoderBundle(
        tokenizer=tokenizer,
        original=model,
        fine_tuned=_personalize(model, token_id, tune_seed),
        personalized_token=personalized_token,
    )


def encode_texts(bundle: EncoderBundle, encoder_kind: str, texts) -> np.ndarray:
    """Rows of flattened (77*768) hidden states, one per input text."""
    texts = list(texts)
    if not texts:
        raise EncoderError("no texts to encode")
    raw = bundle.tokenizer(texts)["input_ids"]
    for text, ids in zip(texts, raw):
        if len(ids) > SEQUENCE_LENGTH:
            raise TokenizerOverflow(
                "prompt needs %d tokens, exceeding the %d-token window: %r"
                % (len(ids), SEQUENCE_LENGTH, text)
            )
    enc = bundle.tokenizer(
        texts, padding="max_length", max_length=SEQUENCE_LENGTH, return_tensors="pt"
    )
    model = bundle.model_for(encoder_kind)
    with torch.no_grad():
        out = model(input_ids=enc.input_ids, attention_mask=enc.attention_mask)
    hidden = out.last_hidden_state.to(torch.float32).numpy()
    n = hidden.shape[0]
    return np.ascontiguousarray(hidden.reshape(n, SEQUENCE_LENGTH * TOKEN_DIM))


def pooled_text_feature(bundle: EncoderBundle, encoder_kind: str, text: str) -> np.ndarray:
    enc = bundle.tokenizer(
        [text], padding="max_length", max_length=SEQUENCE_LENGTH,
        truncation=True, return_tensors="pt",
    )
    model = bundle.model_for(encoder_kind)
    with torch.no_grad():
        out = model(input_ids=enc.input_ids, attention_mask=enc.attention_mask)
    return out.pooler_output[0].to(torch.float32).numpy()
