"""Desk-scale feature extraction feeding the toolkit's report format.

Image features are centered, downsampled pixel vectors; text features come
from the bridge encoder's pooled output. Scores follow the usual
presentation convention, 100 * max(0, cosine), with a single-rounding
denominator so identical inputs score exactly 100.0. Output rows use the
report CSV schema: method,variant,concept,metric,value.
"""

import math
from pathlib import Path

import numpy as np
from PIL import Image

SCORE_CSV_HEADER = "method,variant,concept,metric,value"
FEATURE_SIZE = 16  # image features are FEATURE_SIZE^2 * 3 pixel vectors


class FeatureError(RuntimeError):
    pass


def image_feature(source) -> np.ndarray:
    if isinstance(source, (str, Path)):
        with Image.open(source) as img:
            img = img.convert("RGB").resize((FEATURE_SIZE, FEATURE_SIZE))
            arr = np.asarray(img, dtype=np.float64)
    elif isinstance(source, Image.Image):
        arr = np.asarray(
            source.convert("RGB").resize((FEATURE_SIZE, FEATURE_SIZE)), dtype=np.float64
        )
    else:
        raise FeatureError("image source must be a path or PIL image")
    flat = arr.reshape(-1)
    return flat - flat.mean()


def clip_style(feat_a, feat_b) -> float:
    a = np.asarray(feat_a, dtype=np.float64)
    b = np.asarray(feat_b, dtype=np.float64)
    na2 = float(a @ a)
    nb2 = float(b @ b)
    if na2 == 0.0 or nb2 == 0.0:
        raise FeatureError("zero-norm feature: score undefined")
    denom = math.sqrt(na2 * nb2)
    if denom == 0.0 or math.isinf(denom):
        denom = math.sqrt(na2) * math.sqrt(nb2)
    cos = max(-1.0, min(1.0, float(a @ b) / denom))
    return 100.0 * max(0.0, cos)


def score_rows(method: str, variant: str, entries) -> list:
    """One CSV row per (concept, metric, feat_a, feat_b) entry."""
    rows = []
    for concept, metric, feat_a, feat_b in entries:
        value = clip_style(feat_a, feat_b)
        rows.append("%s,%s,%s,%s,%s" % (method, variant, concept, metric, repr(value)))
    return rows


def image_pair_entries(concept: str, metric: str, pairs):
    for a, b in pairs:
        yield concept, metric, image_feature(a), image_feature(b)


def write_scores_csv(rows, path) -> None:
    Path(path).write_text(
        SCORE_CSV_HEADER + "\n" + "".join(r + "\n" for r in rows), encoding="utf-8"
    )
