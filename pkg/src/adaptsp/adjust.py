"""Adjusted prompt embeddings: mean-residual, subspace projection, SLERP.

All three modes are pure row-wise maps over an anchor embedding set. Rows may
be computed by a thread pool; results land in preassigned row slots, so the
output bytes never depend on scheduling. Output manifests carry an
"adjustment" object with the mode, its parameters, and parent digests, which
makes any adjusted file reproducible from its inputs alone.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from adaptsp.errors import UndefinedCosineError, ValidationError
from adaptsp.numerics import cosine_core, fsum_dot, fsum_sqnorm
from adaptsp.store import (
    TOKEN_PERSONALIZED,
    EmbeddingSet,
    Manifest,
    ManifestEntry,
    ResidualSet,
    sha256_hex,
)
from adaptsp.arrayio import array_bytes
from adaptsp.subspace import Subspace, project, spectrum_json_obj
from adaptsp.store import canonical_json_bytes

MODE_MEAN_RESIDUAL = "mean_residual"
MODE_SUBSPACE = "subspace_projection"
MODE_SLERP = "slerp"
MODES = (MODE_MEAN_RESIDUAL, MODE_SUBSPACE, MODE_SLERP)

# below this sin(omega), spherical weights are numerically unstable: use LERP
SLERP_SIN_THRESHOLD = 1e-7


def rm_digest(r_m: np.ndarray) -> str:
    return sha256_hex(array_bytes(np.asarray(r_m, dtype=np.float64), "f64"))


def subspace_digest(s: Subspace) -> str:
    blob = (
        array_bytes(s.mean, "f64")
        + array_bytes(s.components, "f64")
        + canonical_json_bytes(spectrum_json_obj(s))
    )
    return sha256_hex(blob)


def _output_set(anchor: EmbeddingSet, data: np.ndarray, adjustment: dict) -> EmbeddingSet:
    # adjusted rows stand in for personalized embeddings downstream
    entries = [
        ManifestEntry(
            prompt_id=e.prompt_id,
            context=e.context,
            token=TOKEN_PERSONALIZED,
            encoder=e.encoder,
        )
        for e in anchor.manifest.entries
    ]
    manifest = Manifest(
        entries=entries,
        sequence_length=anchor.manifest.sequence_length,
        token_dim=anchor.manifest.token_dim,
        adjustment=adjustment,
    )
    out = EmbeddingSet(
        data=np.ascontiguousarray(data),
        manifest=manifest,
        dtype_on_disk=anchor.dtype_on_disk,
    )
    out.validate()
    return out


def _anchor_parent(anchor: EmbeddingSet) -> dict:
    return {
        "role": "anchor",
        "array_digest": anchor.digest(),
        "manifest_digest": anchor.manifest_digest(),
    }


def _rowmap(fn, n: int, parallel=None) -> list:
    """Apply fn(i) for i in range(n); slot i always receives row i."""
    if parallel is None or parallel <= 1:
        return [fn(i) for i in range(n)]
    with ThreadPoolExecutor(max_workers=parallel) as ex:
        return list(ex.map(fn, range(n)))


def adjust_mean_residual(anchor: EmbeddingSet, r_m, parallel=None) -> EmbeddingSet:
    anchor.validate()
    rm = np.asarray(r_m, dtype=np.float64)
    if rm.shape != (anchor.d,):
        raise ValidationError(
            "mean residual has shape %s, expected (%d,)" % (rm.shape, anchor.d)
        )
    rows = _rowmap(lambda i: anchor.data[i] + rm, anchor.n, parallel)
    adjustment = {
        "mode": MODE_MEAN_RESIDUAL,
        "rm_digest": rm_digest(rm),
        "parents": [_anchor_parent(anchor)],
    }
    return _output_set(anchor, np.vstack(rows), adjustment)


def adjust_subspace(
    anchor: EmbeddingSet,
    residuals: ResidualSet,
    s: Subspace,
    k: int,
    recenter: bool = True,
    parallel=None,
) -> EmbeddingSet:
    """Row i = anchor.row(i) + project(s, residuals.row(i), k)."""
    anchor.validate()
    residuals.validate()
    if anchor.d != residuals.d or anchor.d != s.d:
        raise ValidationError("anchor, residuals and subspace dimensions disagree")
    if anchor.prompt_ids != residuals.prompt_ids:
        raise ValidationError("anchor and residual prompt ids are not aligned")
    if not 0 <= k <= s.rank:
        raise ValidationError("k = %d out of range [0, %d]" % (k, s.rank))
    rows = _rowmap(
        lambda i: anchor.data[i] + project(s, residuals.data[i], k, recenter=recenter),
        anchor.n,
        parallel,
    )
    adjustment = {
        "mode": MODE_SUBSPACE,
        "k": int(k),
        "subspace_digest": subspace_digest(s),
        "parents": [
            _anchor_parent(anchor),
            {
                "role": "residuals",
                "array_digest": residuals.digest(),
                "manifest_digest": residuals.manifest_digest(),
            },
        ],
    }
    if not recenter:
        adjustment["recenter"] = False
    return _output_set(anchor, np.vstack(rows), adjustment)


def slerp_row(a: np.ndarray, b: np.ndarray, t: float) -> np.ndarray:
    na2 = fsum_sqnorm(a)
    nb2 = fsum_sqnorm(b)
    if na2 == 0.0 or nb2 == 0.0:
        raise UndefinedCosineError("undefined cosine: zero-norm row in slerp")
    cos = cosine_core(fsum_dot(a, b), na2, nb2)
    omega = math.acos(cos)
    sin_omega = math.sin(omega)
    if sin_omega > SLERP_SIN_THRESHOLD:
        wa = math.sin((1.0 - t) * omega) / sin_omega
        wb = math.sin(t * omega) / sin_omega
    else:
        wa = 1.0 - t
        wb = t
    return wa * a + wb * b


def slerp_adjust(
    anchor: EmbeddingSet, target: EmbeddingSet, t: float, parallel=None
) -> EmbeddingSet:
    anchor.validate()
    target.validate()
    if anchor.d != target.d:
        raise ValidationError("dimension mismatch: %d vs %d" % (anchor.d, target.d))
    if anchor.prompt_ids != target.prompt_ids:
        raise ValidationError("anchor and target prompt ids are not aligned")
    if not 0.0 <= t <= 1.0:
        raise ValidationError("t must lie in [0, 1], got %r" % (t,))
    rows = _rowmap(
        lambda i: slerp_row(anchor.data[i], target.data[i], t), anchor.n, parallel
    )
    adjustment = {
        "mode": MODE_SLERP,
        "t": float(t),
        "sin_omega_lerp_threshold": SLERP_SIN_THRESHOLD,
        "parents": [
            _anchor_parent(anchor),
            {
                "role": "target",
                "array_digest": target.digest(),
                "manifest_digest": target.manifest_digest(),
            },
        ],
    }
    return _output_set(anchor, np.vstack(rows), adjustment)


@dataclass
class AdjustmentRequest:
    """Bundle of one adjustment call; validates mode-specific requirements."""

    anchor: EmbeddingSet
    mode: str
    r_m: np.ndarray | None = None
    subspace: Subspace | None = None
    residuals: ResidualSet | None = None
    k: int | None = None
    t: float | None = None
    target: EmbeddingSet | None = None
    recenter: bool = True
    parallel: int | None = None

    def validate(self):
        if self.mode not in MODES:
            raise ValidationError("unknown mode %r, expected one of %s" % (self.mode, list(MODES)))
        if self.mode == MODE_MEAN_RESIDUAL and self.r_m is None:
            raise ValidationError("mode mean_residual requires r_m")
        if self.mode == MODE_SUBSPACE:
            if self.subspace is None or self.residuals is None or self.k is None:
                raise ValidationError(
                    "mode subspace_projection requires subspace, residuals and k"
                )
        if self.mode == MODE_SLERP:
            if self.target is None or self.t is None:
                raise ValidationError("mode slerp requires target and t")

    def apply(self) -> EmbeddingSet:
        self.validate()
        if self.mode == MODE_MEAN_RESIDUAL:
            return adjust_mean_residual(self.anchor, self.r_m, parallel=self.parallel)
        if self.mode == MODE_SUBSPACE:
            return adjust_subspace(
                self.anchor,
                self.residuals,
                self.subspace,
                self.k,
                recenter=self.recenter,
                parallel=self.parallel,
            )
        return slerp_adjust(self.anchor, self.target, self.t, parallel=self.parallel)
