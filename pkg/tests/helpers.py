"""Builders shared across test modules."""

import numpy as np

from adaptsp.store import (
    ENCODER_FINE_TUNED,
    TOKEN_CLASS,
    TOKEN_PERSONALIZED,
    EmbeddingSet,
    Manifest,
    ManifestEntry,
    ResidualSet,
)


def make_set(data, token=TOKEN_PERSONALIZED, encoder=ENCODER_FINE_TUNED,
             ids=None, contexts=None, sequence_length=1):
    data = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    n, d = data.shape
    if d % sequence_length:
        raise ValueError("sequence_length must divide d")
    ids = ids or ["p%03d" % i for i in range(n)]
    contexts = contexts or ["context %d with <tok>" % i for i in range(n)]
    entries = [
        ManifestEntry(prompt_id=ids[i], context=contexts[i], token=token, encoder=encoder)
        for i in range(n)
    ]
    return EmbeddingSet(
        data=data,
        manifest=Manifest(entries=entries, sequence_length=sequence_length,
                          token_dim=d // sequence_length),
    )


def make_pair(class_data, personalized_data, encoder=ENCODER_FINE_TUNED, ids=None):
    cls = make_set(class_data, token=TOKEN_CLASS, encoder=encoder, ids=ids)
    pers = make_set(personalized_data, token=TOKEN_PERSONALIZED, encoder=encoder, ids=ids)
    return pers, cls


def make_residuals(data, ids=None):
    data = np.ascontiguousarray(np.asarray(data, dtype=np.float64))
    n, d = data.shape
    ids = ids or ["p%03d" % i for i in range(n)]
    return ResidualSet(
        data=data,
        prompt_ids=ids,
        contexts=["context %d with <tok>" % i for i in range(n)],
        sequence_length=1,
        token_dim=d,
        parents={},
    )
