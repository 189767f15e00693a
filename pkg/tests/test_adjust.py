import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from adaptsp.adjust import (
    MODE_MEAN_RESIDUAL,
    MODE_SLERP,
    MODE_SUBSPACE,
    AdjustmentRequest,
    adjust_mean_residual,
    adjust_subspace,
    slerp_adjust,
    slerp_row,
    subspace_digest,
)
from adaptsp.errors import UndefinedCosineError, ValidationError
from adaptsp.residuals import compute_residuals, mean_residual
from adaptsp.store import ENCODER_ORIGINAL, TOKEN_PERSONALIZED
from adaptsp.subspace import fit_subspace
from helpers import make_pair, make_residuals, make_set


def random_pipeline(seed=11, n=6, d=10):
    """Class anchors, personalized set, residuals and a fitted subspace."""
    rng = np.random.default_rng(seed)
    cls_data = rng.standard_normal((n, d))
    pers_data = cls_data + rng.standard_normal((n, d))
    pers, cls = make_pair(cls_data, pers_data)
    rs = compute_residuals(pers, cls)
    return cls, pers, rs, fit_subspace(rs)


class TestMeanResidual:
    def test_adds_the_vector_to_every_row(self):
        anchor = make_set([[1.0, 2.0], [3.0, 4.0]])
        out = adjust_mean_residual(anchor, [10.0, -1.0])
        assert out.data.tolist() == [[11.0, 1.0], [13.0, 3.0]]

    def test_zero_vector_is_bitwise_identity(self):
        rng = np.random.default_rng(21)
        anchor = make_set(rng.standard_normal((4, 7)))
        out = adjust_mean_residual(anchor, np.zeros(7))
        assert out.data.tobytes() == anchor.data.tobytes()

    def test_matches_projection_with_k_zero(self):
        cls, _, rs, s = random_pipeline(seed=22)
        via_rm = adjust_mean_residual(cls, mean_residual(rs))
        via_proj = adjust_subspace(cls, rs, s, k=0)
        assert np.max(np.abs(via_rm.data - via_proj.data)) <= 1e-12

    def test_round_trip_within_one_ulp(self):
        rng = np.random.default_rng(23)
        anchor = make_set(rng.standard_normal((5, 6)))
        rm = rng.standard_normal(6)
        back = adjust_mean_residual(adjust_mean_residual(anchor, rm), -rm)
        scale = np.maximum(np.abs(anchor.data), np.abs(rm)[None, :])
        assert np.all(np.abs(back.data - anchor.data) <= np.spacing(scale))

    def test_shape_mismatch(self):
        anchor = make_set([[1.0, 2.0]])
        with pytest.raises(ValidationError, match="shape"):
            adjust_mean_residual(anchor, [1.0, 2.0, 3.0])

    def test_output_manifest(self):
        cls, _, rs, _ = random_pipeline(seed=24)
        rm = mean_residual(rs)
        out = adjust_mean_residual(cls, rm)
        adj = out.manifest.adjustment
        assert adj["mode"] == MODE_MEAN_RESIDUAL
        assert adj["rm_digest"].startswith("sha256:")
        (parent,) = adj["parents"]
        assert parent["role"] == "anchor"
        assert parent["array_digest"] == cls.digest()
        assert parent["manifest_digest"] == cls.manifest_digest()
        assert all(e.token == TOKEN_PERSONALIZED for e in out.manifest.entries)


class TestSubspaceProjection:
    def test_full_rank_restores_personalized(self):
        cls, pers, rs, s = random_pipeline(seed=31)
        out = adjust_subspace(cls, rs, s, k=s.rank)
        assert np.max(np.abs(out.data - pers.data)) <= 1e-9

    def test_keeps_only_leading_direction(self):
        # fit set with a dominant first axis: coefficients +-3 on u1, +-1 on u2
        d = 6
        u1 = np.zeros(d)
        u2 = np.zeros(d)
        u1[:2] = 1.0 / math.sqrt(2.0)
        u2[0], u2[1] = 1.0 / math.sqrt(2.0), -1.0 / math.sqrt(2.0)
        m = np.array([10.0, -5.0, 1.0, 0.0, 2.0, -3.0])
        coef = [(3.0, 1.0), (-3.0, 1.0), (3.0, -1.0), (-3.0, -1.0)]
        fit_rows = np.array([m + a * u1 + b * u2 for a, b in coef])
        s = fit_subspace(make_residuals(fit_rows))
        assert s.rank == 2
        assert abs(abs(float(s.components[0] @ u1)) - 1.0) <= 1e-12

        anchor = make_set(np.zeros((1, d)), ids=["q"])
        query = m + 2.0 * u1 + 5.0 * u2
        rs_q = make_residuals(query[None, :], ids=["q"])
        out = adjust_subspace(anchor, rs_q, s, k=1)
        want = m + 2.0 * u1
        assert np.max(np.abs(out.data[0] - want)) <= 1e-10

    def test_capture_grows_with_k(self):
        cls, _, rs, s = random_pipeline(seed=32)
        base = cls.data + s.mean[None, :]
        prev = np.full(cls.n, -1.0)
        for k in range(s.rank + 1):
            out = adjust_subspace(cls, rs, s, k=k)
            moved = np.linalg.norm(out.data - base, axis=1)
            assert np.all(moved >= prev - 1e-12)
            prev = moved

    def test_k_out_of_range(self):
        cls, _, rs, s = random_pipeline(seed=33)
        with pytest.raises(ValidationError, match="out of range"):
            adjust_subspace(cls, rs, s, k=s.rank + 1)

    def test_misaligned_ids_rejected(self):
        cls, _, rs, s = random_pipeline(seed=34)
        stranger = make_set(cls.data, ids=["x%d" % i for i in range(cls.n)])
        with pytest.raises(ValidationError, match="not aligned"):
            adjust_subspace(stranger, rs, s, k=1)

    def test_manifest_records_k_and_both_parents(self):
        cls, _, rs, s = random_pipeline(seed=35)
        out = adjust_subspace(cls, rs, s, k=2, recenter=False)
        adj = out.manifest.adjustment
        assert adj["mode"] == MODE_SUBSPACE
        assert adj["k"] == 2
        assert adj["subspace_digest"] == subspace_digest(s)
        assert adj["recenter"] is False
        roles = [p["role"] for p in adj["parents"]]
        assert roles == ["anchor", "residuals"]
        assert adj["parents"][1]["array_digest"] == rs.digest()


class TestSlerp:
    def test_endpoints_bitwise(self):
        rng = np.random.default_rng(41)
        a = make_set(rng.standard_normal((4, 8)))
        b = make_set(rng.standard_normal((4, 8)))
        assert slerp_adjust(a, b, 0.0).data.tobytes() == a.data.tobytes()
        assert slerp_adjust(a, b, 1.0).data.tobytes() == b.data.tobytes()

    def test_orthogonal_midpoint(self):
        a = np.array([1.0, 0.0, 0.0])
        b = np.array([0.0, 1.0, 0.0])
        out = slerp_row(a, b, 0.5)
        want = (a + b) / math.sqrt(2.0)
        assert np.max(np.abs(out - want)) <= 1e-12

    def test_preserves_unit_norms(self):
        rng = np.random.default_rng(42)
        rows = rng.standard_normal((5, 16))
        rows /= np.linalg.norm(rows, axis=1, keepdims=True)
        tgt = rng.standard_normal((5, 16))
        tgt /= np.linalg.norm(tgt, axis=1, keepdims=True)
        a = make_set(rows)
        b = make_set(tgt)
        for t in (0.0, 0.25, 0.5, 0.75, 1.0):
            out = slerp_adjust(a, b, t)
            norms = np.linalg.norm(out.data, axis=1)
            assert np.max(np.abs(norms - 1.0)) <= 1e-9

    def test_collinear_rows_fall_back_to_lerp(self):
        # cosine is exactly 1.0 here, so the spherical weights are undefined
        a = np.array([1.0, 2.0, -4.0])
        out = slerp_row(a, 2.0 * a, 0.25)
        assert out.tolist() == (1.25 * a).tolist()

    def test_antiparallel_midpoint_collapses(self):
        a = np.array([1.0, 0.0])
        out = slerp_row(a, -a, 0.5)
        assert np.max(np.abs(out)) <= 1e-15

    def test_zero_row_raises(self):
        with pytest.raises(UndefinedCosineError, match="zero-norm"):
            slerp_row(np.zeros(3), np.ones(3), 0.5)

    def test_t_out_of_range(self):
        a = make_set([[1.0, 0.0]])
        b = make_set([[0.0, 1.0]])
        for t in (-0.1, 1.1):
            with pytest.raises(ValidationError, match="t must lie"):
                slerp_adjust(a, b, t)

    def test_manifest_records_t_and_threshold(self):
        a = make_set([[1.0, 0.0]])
        b = make_set([[0.0, 1.0]])
        adj = slerp_adjust(a, b, 0.5).manifest.adjustment
        assert adj["mode"] == MODE_SLERP
        assert adj["t"] == 0.5
        assert adj["sin_omega_lerp_threshold"] == 1e-7
        assert [p["role"] for p in adj["parents"]] == ["anchor", "target"]

    @given(st.floats(0.0, 1.0), st.integers(0, 2**31 - 1))
    @settings(max_examples=30, deadline=None)
    def test_result_stays_on_the_arc(self, t, seed):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal(6)
        b = rng.standard_normal(6)
        a /= np.linalg.norm(a)
        b /= np.linalg.norm(b)
        out = slerp_row(a, b, t)
        # interpolant norm never exceeds the endpoint norm envelope
        assert np.linalg.norm(out) <= 1.0 + 1e-9


def test_encoder_tag_does_not_change_arithmetic():
    rng = np.random.default_rng(51)
    data = rng.standard_normal((3, 5))
    rm = rng.standard_normal(5)
    out_ft = adjust_mean_residual(make_set(data), rm)
    out_or = adjust_mean_residual(make_set(data, encoder=ENCODER_ORIGINAL), rm)
    assert out_ft.data.tobytes() == out_or.data.tobytes()
    assert out_or.manifest.entries[0].encoder == ENCODER_ORIGINAL


def test_parallel_matches_serial_bitwise():
    cls, pers, rs, s = random_pipeline(seed=52, n=9, d=14)
    rm = mean_residual(rs)
    pairs = [
        (adjust_mean_residual(cls, rm), adjust_mean_residual(cls, rm, parallel=3)),
        (adjust_subspace(cls, rs, s, k=2), adjust_subspace(cls, rs, s, k=2, parallel=3)),
        (slerp_adjust(cls, pers, 0.5), slerp_adjust(cls, pers, 0.5, parallel=3)),
    ]
    for serial, parallel in pairs:
        assert serial.data.tobytes() == parallel.data.tobytes()
        assert serial.manifest.digest() == parallel.manifest.digest()


class TestAdjustmentRequest:
    def test_dispatch_matches_direct_call(self):
        cls, _, rs, s = random_pipeline(seed=53)
        req = AdjustmentRequest(anchor=cls, mode=MODE_SUBSPACE, subspace=s, residuals=rs, k=1)
        direct = adjust_subspace(cls, rs, s, k=1)
        assert req.apply().data.tobytes() == direct.data.tobytes()

    def test_unknown_mode(self):
        cls, _, _, _ = random_pipeline(seed=54)
        with pytest.raises(ValidationError, match="unknown mode"):
            AdjustmentRequest(anchor=cls, mode="nearest").validate()

    @pytest.mark.parametrize(
        "kwargs, message",
        [
            ({"mode": MODE_MEAN_RESIDUAL}, "requires r_m"),
            ({"mode": MODE_SUBSPACE}, "requires subspace"),
            ({"mode": MODE_SLERP}, "requires target"),
        ],
    )
    def test_missing_mode_inputs(self, kwargs, message):
        cls, _, _, _ = random_pipeline(seed=55)
        with pytest.raises(ValidationError, match=message):
            AdjustmentRequest(anchor=cls, **kwargs).validate()
