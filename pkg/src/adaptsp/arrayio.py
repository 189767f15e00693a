"""Bit-exact reader/writer for the on-disk array format.

The format follows the NPY v1.0 convention: 6 magic bytes, 2 version bytes,
a 2-byte little-endian header length, an ASCII literal dict with keys
``descr`` ('<f4' or '<f8'), ``fortran_order`` (False) and ``shape``, padded
with spaces so the full header is a 64-byte multiple and terminated by a
newline, followed by the raw little-endian row-major payload.

We serialize ourselves instead of calling ``np.save`` so the bytes are
canonical by construction (digests and byte-identity checks depend on that),
but the emitted files are readable by ``np.load`` and vice versa.
"""

from __future__ import annotations

import ast
from pathlib import Path

import numpy as np

from adaptsp.errors import ValidationError

MAGIC = b"\x93NUMPY"
VERSION = b"\x01\x00"

_DESCR = {"f32": "<f4", "f64": "<f8"}
_DTYPE = {"<f4": np.dtype("<f4"), "<f8": np.dtype("<f8")}


def _header_bytes(descr: str, shape: tuple[int, ...]) -> bytes:
    # Matches numpy's own formatting, including the trailing ", ".
    dict_str = "{'descr': %r, 'fortran_order': False, 'shape': %s, }" % (
        descr,
        "(%d,)" % shape[0] if len(shape) == 1 else "(%s)" % ", ".join(str(s) for s in shape),
    )
    base = len(MAGIC) + len(VERSION) + 2
    # pad so base + len(dict) + padding + 1 (newline) is a multiple of 64
    unpadded = base + len(dict_str) + 1
    pad = (64 - unpadded % 64) % 64
    header = dict_str + " " * pad + "\n"
    if len(header) > 0xFFFF:
        raise ValidationError("array header too large for the 2-byte length field")
    return MAGIC + VERSION + len(header).to_bytes(2, "little") + header.encode("ascii")


def array_bytes(arr: np.ndarray, dtype: str = "f64") -> bytes:
    """Canonical byte serialization of ``arr``; the digest primitive."""
    if dtype not in _DESCR:
        raise ValidationError("unsupported dtype %r, expected 'f32' or 'f64'" % (dtype,))
    out = np.ascontiguousarray(arr, dtype=_DTYPE[_DESCR[dtype]])
    return _header_bytes(_DESCR[dtype], out.shape) + out.tobytes(order="C")


def write_array(path, arr: np.ndarray, dtype: str = "f64") -> None:
    Path(path).write_bytes(array_bytes(arr, dtype))


def read_array(path) -> tuple[np.ndarray, str]:
    """Read an array file; returns (array in on-disk dtype, 'f32'|'f64')."""
    raw = Path(path).read_bytes()
    if len(raw) < 10 or raw[:6] != MAGIC:
        raise ValidationError("%s: malformed header (bad magic)" % path)
    if raw[6:8] != VERSION:
        raise ValidationError("%s: malformed header (unsupported version)" % path)
    hlen = int.from_bytes(raw[8:10], "little")
    header_end = 10 + hlen
    if len(raw) < header_end or not raw[header_end - 1 : header_end] == b"\n":
        raise ValidationError("%s: malformed header (truncated or unterminated)" % path)
    try:
        meta = ast.literal_eval(raw[10:header_end].decode("ascii").strip())
    except (ValueError, SyntaxError, UnicodeDecodeError) as exc:
        raise ValidationError("%s: malformed header (%s)" % (path, exc)) from exc
    if not isinstance(meta, dict) or set(meta) != {"descr", "fortran_order", "shape"}:
        raise ValidationError("%s: malformed header (unexpected keys)" % path)
    descr = meta["descr"]
    if descr not in _DTYPE:
        raise ValidationError(
            "%s: unsupported descr %r, expected '<f4' or '<f8'" % (path, descr)
        )
    if meta["fortran_order"] is not False:
        raise ValidationError("%s: fortran-order payloads are not supported" % path)
    shape = meta["shape"]
    if not (
        isinstance(shape, tuple)
        and all(isinstance(s, int) and s >= 0 for s in shape)
        and 1 <= len(shape) <= 3
    ):
        raise ValidationError("%s: malformed header (bad shape %r)" % (path, shape))
    dt = _DTYPE[descr]
    expected = int(np.prod(shape, dtype=np.int64)) * dt.itemsize
    payload = raw[header_end:]
    if len(payload) != expected:
        raise ValidationError(
            "%s: payload is %d bytes, header promises %d" % (path, len(payload), expected)
        )
    arr = np.frombuffer(payload, dtype=dt).reshape(shape).copy()
    return arr, "f32" if descr == "<f4" else "f64"
