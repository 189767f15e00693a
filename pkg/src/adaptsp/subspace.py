"""Principal subspace of a residual set: fit, diagnostics, projection.

The fit uses the Gram (snapshot) method: with n rows of dimension d and
d >> n, eigendecompose the n x n matrix G = Xc Xc^T instead of the d x d
covariance. Eigenvalues are reported under the sample-variance convention
(divided by n - 1); explained-variance ratios are normalized over the
retained spectrum so the cumulative curve ends at 1.

Projection is affine: project(s, r, k) = mean + sum_{j<=k} <r - mean, v_j> v_j,
so k = 0 reduces to adding the mean residual and k = rank reproduces any
vector in the affine row space of the fitted residuals. A raw linear variant
(recenter=False) is kept for comparison.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

from adaptsp.arrayio import read_array, write_array
from adaptsp.errors import DegenerateError, InternalError, ValidationError
from adaptsp.numerics import (
    compensated_mean,
    compensated_weighted_rowsum,
    fsum_dot,
    fsum_norm,
    sym_eigendecomp,
)
from adaptsp.store import ResidualSet, canonical_json_bytes

RANK_TOLERANCE = 1e-10   # relative to the leading Gram eigenvalue
DEGENERATE_VARIANCE = 1e-20
THRESHOLD_SLACK = 1e-9   # cev may undershoot a threshold by rounding only

_SPECTRUM_KEYS = {
    "eigenvalues",
    "ratios",
    "cev",
    "rank",
    "source_digest",
    "divisor",
    "format_version",
}


@dataclass
class Subspace:
    mean: np.ndarray          # (d,)
    components: np.ndarray    # (rank, d), rows orthonormal
    eigenvalues: np.ndarray   # (rank,), descending, sample-variance scale
    ratios: np.ndarray        # (rank,), sums to 1
    cev: np.ndarray           # (rank,), running sums of ratios
    rank: int
    source_digest: str

    @property
    def d(self) -> int:
        return self.mean.shape[0]


class ThresholdCount(NamedTuple):
    k: int
    reached: bool


def fit_subspace(residuals: ResidualSet) -> Subspace:
    residuals.validate()
    n, d = residuals.data.shape
    if n < 2:
        raise ValidationError("subspace fit needs at least 2 residual rows")
    mean = compensated_mean(residuals.data)
    xc = residuals.data - mean
    total_var = math.fsum(np.multiply(xc, xc).ravel().tolist())
    if total_var <= DEGENERATE_VARIANCE:
        raise DegenerateError("all residuals identical: CEV undefined")

    gram = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        for j in range(i, n):
            g = fsum_dot(xc[i], xc[j])
            gram[i, j] = g
            gram[j, i] = g

    eig = sym_eigendecomp(gram)
    lam = eig.eigenvalues
    trace_err = abs(math.fsum(lam.tolist()) - total_var)
    if trace_err > 1e-9 * max(1.0, total_var):
        raise InternalError(
            "eigenvalue trace drifted from total variance by %.3e" % trace_err
        )
    if lam[0] <= 0.0:
        raise InternalError("leading eigenvalue is not positive despite variance > 0")

    # centered rank cannot exceed min(n - 1, d); anything past that is noise
    tau = RANK_TOLERANCE * lam[0]
    rank = min(int(np.sum(lam > tau)), n - 1, d)
    if rank < 1:
        raise DegenerateError("all residuals identical: CEV undefined")
    lam = lam[:rank]

    comps = np.empty((rank, d), dtype=np.float64)
    for j in range(rank):
        v = compensated_weighted_rowsum(eig.eigenvectors[:, j], xc)
        norm = fsum_norm(v)
        if norm == 0.0:
            raise InternalError("retained component %d collapsed to zero" % j)
        v = v / norm
        lead = int(np.argmax(np.abs(v)))
        if v[lead] < 0.0:
            v = -v
        comps[j] = v
    _check_orthonormal(comps)

    lam_sum = math.fsum(lam.tolist())
    ratios = np.array([lv / lam_sum for lv in lam.tolist()], dtype=np.float64)
    cev = np.array(
        [math.fsum(ratios[: k + 1].tolist()) for k in range(rank)], dtype=np.float64
    )
    return Subspace(
        mean=mean,
        components=comps,
        eigenvalues=lam / float(n - 1),
        ratios=ratios,
        cev=cev,
        rank=rank,
        source_digest=residuals.digest(),
    )


def _check_orthonormal(comps: np.ndarray, tol: float = 1e-8) -> None:
    r = comps.shape[0]
    for i in range(r):
        for j in range(i, r):
            g = fsum_dot(comps[i], comps[j])
            if abs(g - (1.0 if i == j else 0.0)) > tol:
                raise InternalError(
                    "components %d,%d lost orthonormality (gram %.3e)" % (i, j, g)
                )


def cev_curve(s: Subspace, k_max: int) -> list[tuple[int, float]]:
    if k_max < 1:
        raise ValidationError("k_max must be at least 1")
    top = min(k_max, s.rank)
    return [(k, float(s.cev[k - 1])) for k in range(1, top + 1)]


def components_to_threshold(s: Subspace, threshold: float) -> ThresholdCount:
    """Smallest k whose cumulative ratio reaches the threshold (non-strict).

    Falls back to (rank, reached=False) when even the full spectrum stays
    below threshold - 1e-9.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValidationError("threshold must lie in (0, 1], got %r" % (threshold,))
    for k in range(1, s.rank + 1):
        if s.cev[k - 1] >= threshold - THRESHOLD_SLACK:
            return ThresholdCount(k=k, reached=True)
    return ThresholdCount(k=s.rank, reached=False)


def project(s: Subspace, r, k: int, recenter: bool = True) -> np.ndarray:
    """Affine projection onto the span of the k leading components.

    k = 0 returns the mean alone. With recenter=False the mean is neither
    subtracted nor re-added (raw linear projection).
    """
    vec = np.asarray(r, dtype=np.float64)
    if vec.shape != (s.d,):
        raise ValidationError("vector has shape %s, expected (%d,)" % (vec.shape, s.d))
    if not 0 <= k <= s.rank:
        raise ValidationError("k = %d out of range [0, %d]" % (k, s.rank))
    if recenter:
        centered = vec - s.mean
        out = s.mean.copy()
    else:
        centered = vec
        out = np.zeros_like(vec)
    for j in range(k):
        out = out + fsum_dot(centered, s.components[j]) * s.components[j]
    return out


def save_subspace(s: Subspace, dirpath) -> None:
    d = Path(dirpath)
    d.mkdir(parents=True, exist_ok=True)
    write_array(d / "mean.npy", s.mean, dtype="f64")
    write_array(d / "components.npy", s.components, dtype="f64")
    (d / "spectrum.json").write_bytes(canonical_json_bytes(spectrum_json_obj(s)))


def spectrum_json_obj(s: Subspace) -> dict:
    return {
        "eigenvalues": [float(x) for x in s.eigenvalues],
        "ratios": [float(x) for x in s.ratios],
        "cev": [float(x) for x in s.cev],
        "rank": s.rank,
        "source_digest": s.source_digest,
        "divisor": "n-1",
        "format_version": 1,
    }


def load_subspace(dirpath) -> Subspace:
    d = Path(dirpath)
    mean, _ = read_array(d / "mean.npy")
    comps, _ = read_array(d / "components.npy")
    try:
        spec_obj = json.loads((d / "spectrum.json").read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ValidationError("%s: malformed spectrum.json (%s)" % (d, exc)) from exc
    if not isinstance(spec_obj, dict) or set(spec_obj) != _SPECTRUM_KEYS:
        raise ValidationError("%s: spectrum.json has unexpected keys" % d)
    if spec_obj["format_version"] != 1:
        raise ValidationError(
            "%s: unsupported format_version %r" % (d, spec_obj["format_version"])
        )
    if mean.ndim != 1 or comps.ndim != 2 or comps.shape[1] != mean.shape[0]:
        raise ValidationError("%s: mean/components shapes disagree" % d)
    rank = int(spec_obj["rank"])
    if comps.shape[0] != rank:
        raise ValidationError("%s: components rows != rank" % d)
    s = Subspace(
        mean=np.asarray(mean, dtype=np.float64),
        components=np.asarray(comps, dtype=np.float64),
        eigenvalues=np.asarray(spec_obj["eigenvalues"], dtype=np.float64),
        ratios=np.asarray(spec_obj["ratios"], dtype=np.float64),
        cev=np.asarray(spec_obj["cev"], dtype=np.float64),
        rank=rank,
        source_digest=spec_obj["source_digest"],
    )
    if not (len(s.eigenvalues) == len(s.ratios) == len(s.cev) == rank):
        raise ValidationError("%s: spectrum arrays disagree with rank" % d)
    return s


def cev_csv(s: Subspace, k_max: int) -> str:
    lines = ["k,cev"]
    for k, value in cev_curve(s, k_max):
        lines.append("%d,%s" % (k, repr(value)))
    return "\n".join(lines) + "\n"
