"""Residual extraction and consistency statistics.

A residual row is the difference between a personalized-prompt embedding and
the class-prompt embedding for the same context. The mean residual estimates
the context-invariant component; pairwise cosine statistics quantify how
consistently the residual direction survives context changes.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass

import numpy as np

from adaptsp.errors import ValidationError
from adaptsp.numerics import compensated_mean, cosine, fsum_norm
from adaptsp.store import TOKEN_CLASS, TOKEN_PERSONALIZED, EmbeddingSet, ResidualSet

# residual rows with norm below this are excluded from cosine statistics
ZERO_NORM_THRESHOLD = 1e-12


def compute_residuals(personalized: EmbeddingSet, class_set: EmbeddingSet) -> ResidualSet:
    """Row i = personalized.row(i) - class_set.row(i), with provenance digests.

    Both sets must already be aligned; this refuses to reorder silently.
    """
    personalized.validate()
    class_set.validate()
    if personalized.d != class_set.d:
        raise ValidationError(
            "dimension mismatch: %d vs %d" % (personalized.d, class_set.d)
        )
    if (
        personalized.manifest.sequence_length != class_set.manifest.sequence_length
        or personalized.manifest.token_dim != class_set.manifest.token_dim
    ):
        raise ValidationError("sequence_length/token_dim mismatch between parents")
    ids_p, ids_c = personalized.prompt_ids, class_set.prompt_ids
    if ids_p != ids_c:
        if sorted(ids_p) != sorted(ids_c):
            raise ValidationError("prompt-id sets differ")
        raise ValidationError("sets are not aligned: same ids, different order")
    for e in personalized.manifest.entries:
        if e.token != TOKEN_PERSONALIZED:
            raise ValidationError(
                "token-role mismatch: entry %r in the personalized set has token %r"
                % (e.prompt_id, e.token)
            )
    for e in class_set.manifest.entries:
        if e.token != TOKEN_CLASS:
            raise ValidationError(
                "token-role mismatch: entry %r in the class set has token %r"
                % (e.prompt_id, e.token)
            )
    rs = ResidualSet(
        data=np.ascontiguousarray(personalized.data - class_set.data),
        prompt_ids=list(ids_p),
        contexts=[e.context for e in personalized.manifest.entries],
        sequence_length=personalized.manifest.sequence_length,
        token_dim=personalized.manifest.token_dim,
        parents={
            "personalized_manifest_digest": personalized.manifest_digest(),
            "class_manifest_digest": class_set.manifest_digest(),
        },
    )
    rs.validate()
    return rs


def mean_residual(residuals: ResidualSet) -> np.ndarray:
    return compensated_mean(residuals.data)


def centered_rows(residuals: ResidualSet) -> np.ndarray:
    return residuals.data - mean_residual(residuals)


@dataclass
class ResidualStats:
    pairwise: list[tuple[int, int, float]]  # (i, j, cos) with i < j, row indices
    min: float
    max: float
    mean: float
    median: float
    n: int
    n_pairs: int
    zero_residual_ids: list[str]

    def to_json_obj(self) -> dict:
        return {
            "n": self.n,
            "n_pairs": self.n_pairs,
            "min": self.min,
            "max": self.max,
            "mean": self.mean,
            "median": self.median,
            "zero_residual_ids": self.zero_residual_ids,
        }


def residual_stats(residuals: ResidualSet) -> ResidualStats:
    """Strictly upper-triangular pairwise cosine statistics.

    Rows with norm below ZERO_NORM_THRESHOLD are excluded from every pair and
    reported in zero_residual_ids; n_pairs counts only pairs where both rows
    survive. The reduction runs in fixed (i, j) row-major order.
    """
    residuals.validate()
    n = residuals.n
    norms = [fsum_norm(residuals.data[i]) for i in range(n)]
    usable = [i for i in range(n) if norms[i] >= ZERO_NORM_THRESHOLD]
    zero_ids = [residuals.prompt_ids[i] for i in range(n) if norms[i] < ZERO_NORM_THRESHOLD]
    if len(usable) < 2:
        raise ValidationError(
            "fewer than 2 usable rows: %d of %d have non-zero norm" % (len(usable), n)
        )
    pairwise = []
    for a in range(len(usable) - 1):
        for b in range(a + 1, len(usable)):
            i, j = usable[a], usable[b]
            pairwise.append((i, j, cosine(residuals.data[i], residuals.data[j])))
    values = [v for _, _, v in pairwise]
    return ResidualStats(
        pairwise=pairwise,
        min=min(values),
        max=max(values),
        mean=math.fsum(values) / len(values),
        median=statistics.median(values),
        n=n,
        n_pairs=len(values),
        zero_residual_ids=zero_ids,
    )
