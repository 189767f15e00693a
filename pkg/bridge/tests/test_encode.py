"""Encoder bundle and battery encoding against the toolkit file contract."""

import json

import numpy as np
import pytest

from adaptsp_bridge.battery import PromptBattery
from adaptsp_bridge.encode import (
    TOKEN_CLASS,
    TOKEN_PERSONALIZED,
    encode_battery,
    encode_pair,
)
from adaptsp_bridge.encoders import (
    SEQUENCE_LENGTH,
    TOKEN_DIM,
    EncoderError,
    TokenizerOverflow,
    encode_texts,
    load_encoder,
    parse_encoder_ref,
)


class TestEncoderRef:
    def test_seeded(self):
        assert parse_encoder_ref("seeded:7") == {"kind": "seeded", "seed": 7, "depth": 2}

    def test_seeded_with_depth(self):
        assert parse_encoder_ref("seeded:3,depth=4")["depth"] == 4

    def test_dir(self):
        assert parse_encoder_ref("dir:/tmp/enc") == {"kind": "dir", "path": "/tmp/enc"}

    def test_bad_seed(self):
        with pytest.raises(EncoderError, match="seed must be an integer"):
            parse_encoder_ref("seeded:x")

    def test_unknown_option(self):
        with pytest.raises(EncoderError, match="unknown option"):
            parse_encoder_ref("seeded:7,width=3")

    def test_unknown_scheme(self):
        with pytest.raises(EncoderError, match="expected seeded"):
            parse_encoder_ref("hub:openai/clip")

    def test_missing_dir(self, tmp_path):
        with pytest.raises(EncoderError, match="does not exist"):
            load_encoder("dir:%s" % (tmp_path / "nope"), "sks")


class TestEncodeTexts:
    def test_row_shape(self, bundle):
        out = encode_texts(bundle, "original", ["a photo of a man"])
        assert out.shape == (1, SEQUENCE_LENGTH * TOKEN_DIM)
        assert out.dtype == np.float32

    def test_empty_input_rejected(self, bundle):
        with pytest.raises(EncoderError, match="no texts"):
            encode_texts(bundle, "original", [])

    def test_unknown_encoder_kind(self, bundle):
        with pytest.raises(EncoderError, match="unknown encoder kind"):
            encode_texts(bundle, "distilled", ["a man"])

    def test_overflow_rejected(self, bundle):
        # char-level tokenizer: one id per character, so 77 chars overflow
        # once bos/eos are added
        with pytest.raises(TokenizerOverflow, match="exceeding"):
            encode_texts(bundle, "original", ["m" * 200])

    def test_deterministic_across_bundles(self, bundle):
        again = load_encoder("seeded:7", bundle.personalized_token)
        a = encode_texts(bundle, "original", ["a photo of a sks man"])
        b = encode_texts(again, "original", ["a photo of a sks man"])
        assert a.tobytes() == b.tobytes()

    def test_fine_tuned_differs_only_through_personalized_token(self, bundle):
        plain = "a photo of a man"
        with_tok = "a photo of a sks man"
        base = encode_texts(bundle, "original", [plain, with_tok])
        tuned = encode_texts(bundle, "fine_tuned", [plain, with_tok])
        # the tuning shifts one vocabulary row; prompts that avoid it are inert
        assert base[0].tobytes() == tuned[0].tobytes()
        assert base[1].tobytes() != tuned[1].tobytes()

    def test_personalized_token_is_single_token(self, bundle):
        ids = bundle.tokenizer(["sks"])["input_ids"][0]
        assert len(ids) == 3  # bos, sks, eos


@pytest.fixture()
def tiny_battery():
    return PromptBattery(
        "tiny",
        ("a photo of a {subject}", "a sketch of a {subject}"),
        token_personalized="sks man",
        token_class="man",
    )


class TestEncodeBattery:
    def test_file_pair_and_shapes(self, bundle, tiny_battery, tmp_path):
        pers, cls = encode_pair(bundle, tiny_battery, tmp_path)
        assert pers.name == "tiny.personalized.npy"
        assert cls.name == "tiny.class.npy"
        for path in (pers, cls):
            arr = np.load(path)
            assert arr.shape == (2, SEQUENCE_LENGTH * TOKEN_DIM)
            assert arr.dtype == np.float32

    def test_manifest_alignment(self, bundle, tiny_battery, tmp_path):
        pers, cls = encode_pair(bundle, tiny_battery, tmp_path)
        mp = json.loads((tmp_path / "tiny.personalized.manifest.json").read_text())
        mc = json.loads((tmp_path / "tiny.class.manifest.json").read_text())
        assert [e["prompt_id"] for e in mp["entries"]] == ["tiny-00", "tiny-01"]
        assert [e["prompt_id"] for e in mp["entries"]] == [
            e["prompt_id"] for e in mc["entries"]
        ]
        assert [e["context"] for e in mp["entries"]] == list(tiny_battery.templates)
        assert {e["token"] for e in mp["entries"]} == {TOKEN_PERSONALIZED}
        assert {e["token"] for e in mc["entries"]} == {TOKEN_CLASS}
        assert mp["sequence_length"] == SEQUENCE_LENGTH
        assert mp["token_dim"] == TOKEN_DIM

    def test_manifest_is_canonical_json(self, bundle, tiny_battery, tmp_path):
        encode_pair(bundle, tiny_battery, tmp_path)
        raw = (tmp_path / "tiny.class.manifest.json").read_text(encoding="utf-8")
        obj = json.loads(raw)
        assert raw == json.dumps(obj, sort_keys=True, separators=(",", ":")) + "\n"

    def test_anchor_encoder_recorded_and_applied(self, bundle, tiny_battery, tmp_path):
        encode_pair(bundle, tiny_battery, tmp_path / "ft", anchor_encoder="fine_tuned")
        encode_pair(bundle, tiny_battery, tmp_path / "orig", anchor_encoder="original")
        m_ft = json.loads((tmp_path / "ft" / "tiny.class.manifest.json").read_text())
        m_or = json.loads((tmp_path / "orig" / "tiny.class.manifest.json").read_text())
        assert {e["encoder"] for e in m_ft["entries"]} == {"fine_tuned"}
        assert {e["encoder"] for e in m_or["entries"]} == {"original"}
        # class prompts avoid the personalized token, so both anchors agree
        a = np.load(tmp_path / "ft" / "tiny.class.npy")
        b = np.load(tmp_path / "orig" / "tiny.class.npy")
        assert a.tobytes() == b.tobytes()

    def test_personalized_rows_always_fine_tuned(self, bundle, tiny_battery, tmp_path):
        encode_pair(bundle, tiny_battery, tmp_path, anchor_encoder="original")
        m = json.loads((tmp_path / "tiny.personalized.manifest.json").read_text())
        assert {e["encoder"] for e in m["entries"]} == {"fine_tuned"}

    def test_pair_rows_differ(self, bundle, tiny_battery, tmp_path):
        pers, cls = encode_pair(bundle, tiny_battery, tmp_path)
        dp = np.load(pers)
        dc = np.load(cls)
        # every row must drift: subject token differs in every prompt
        assert (np.abs(dp - dc).max(axis=1) > 0).all()

    def test_bad_token_choice(self, bundle, tiny_battery, tmp_path):
        with pytest.raises(ValueError, match="token_choice"):
            encode_battery(bundle, tiny_battery, "both", "original", tmp_path / "x.npy")

    def test_custom_stem(self, bundle, tiny_battery, tmp_path):
        pers, _ = encode_pair(bundle, tiny_battery, tmp_path, stem="runA")
        assert pers.name == "runA.personalized.npy"
