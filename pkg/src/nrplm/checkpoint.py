"""Self-contained binary model checkpoints.

Layout (little-endian)::

    magic "NRPLMCKP" | u32 version | u8 kind | u32 |V| | u32 m | u32 h | u32 n
    | u8 len + activation | u8 itemsize | u8 dropout_output | u32 tensor count
    per tensor: u8 len + name | u32 ndim | u32 dims... | raw row-major values
    nrp only: u64 len + random index lookup blob
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .energy import PARAM_NAMES, EnergyLM
from .errors import FormatError
from .model_baseline import BaselineLM
from .model_nrp import NRPLM
from .random_index import RandomIndexLookup

MAGIC = b"NRPLMCKP"
VERSION = 1
_KINDS = ("baseline", "nrp")
_HEADER = "<IBIIII"


def _short_str(s: str) -> bytes:
    raw = s.encode("ascii")
    return struct.pack("<B", len(raw)) + raw


def dumps(model: EnergyLM) -> bytes:
    parts = [MAGIC,
             struct.pack(_HEADER, VERSION, _KINDS.index(model.kind), model.vocab_size,
                         model.m, model.h, model.n),
             _short_str(model.activation),
             struct.pack("<BBI", model.dtype.itemsize, int(model.dropout_output), len(PARAM_NAMES))]
    for name in PARAM_NAMES:
        arr = np.ascontiguousarray(model.params[name])
        parts.append(_short_str(name))
        parts.append(struct.pack("<I", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype(arr.dtype.newbyteorder("<"), copy=False).tobytes())
    if isinstance(model, NRPLM):
        blob = model.lookup.to_bytes()
        parts.append(struct.pack("<Q", len(blob)) + blob)
    return b"".join(parts)


def loads(data: bytes) -> EnergyLM:
    try:
        return _loads(data)
    except FormatError:
        raise
    except (struct.error, ValueError, KeyError, IndexError, UnicodeDecodeError) as exc:
        raise FormatError(f"corrupt checkpoint ({exc})") from None


def _loads(data: bytes) -> EnergyLM:
    if data[:8] != MAGIC:
        raise FormatError("not a model checkpoint")
    off = 8
    version, kind, vocab, m, h, n = struct.unpack_from(_HEADER, data, off)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    off += struct.calcsize(_HEADER)

    def short_str():
        nonlocal off
        (ln,) = struct.unpack_from("<B", data, off)
        s = data[off + 1:off + 1 + ln].decode("ascii")
        off += 1 + ln
        return s

    activation = short_str()
    itemsize, dropout_output, count = struct.unpack_from("<BBI", data, off)
    off += 6
    dtype = np.dtype({4: "<f4", 8: "<f8"}[itemsize])
    params = {}
    for _ in range(count):
        name = short_str()
        (ndim,) = struct.unpack_from("<I", data, off)
        off += 4
        shape = struct.unpack_from(f"<{ndim}I", data, off)
        off += 4 * ndim
        size = int(np.prod(shape))
        params[name] = np.frombuffer(data, dtype=dtype, count=size, offset=off).reshape(shape) \
            .astype(dtype.newbyteorder("="), copy=True)
        off += size * itemsize
    kind_name = _KINDS[kind]
    if kind_name == "baseline":
        model = BaselineLM(params, n, activation, bool(dropout_output))
    else:
        (ln,) = struct.unpack_from("<Q", data, off)
        off += 8
        lookup = RandomIndexLookup.from_bytes(data[off:off + ln])
        off += ln
        model = NRPLM(params, n, lookup, vocab, activation, bool(dropout_output))
    if off != len(data):
        raise FormatError("trailing bytes in checkpoint")
    if model.vocab_size != vocab or model.m != m or model.h != h:
        raise FormatError("checkpoint header disagrees with tensor shapes")
    return model


def save(model: EnergyLM, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(dumps(model))
    os.replace(tmp, path)


def load(path: str | Path) -> EnergyLM:
    return loads(Path(path).read_bytes())
