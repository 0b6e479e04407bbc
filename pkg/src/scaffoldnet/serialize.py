"""Binary model files.

Layout (all integers little-endian)::

    b"SCFN"                      magic
    u32 version                  currently 1
    u32 layer_count
    layer_count x {
        u8  kind                 1 conv, 2 relu, 3 gap, 4 dropout, 5 dense, 6 sigmoid
        u8  rank                 rank of the weight tensor, 0 for parameter-free layers
        u32 extent * rank
    }
    f32 payload                  per parameterised layer: weights then bias
                                 (bias length = last weight extent), row-major
    u32 crc32(payload)
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .network import CONV, DENSE, DROPOUT_RATE, TOPOLOGY, ConvParams, DenseParams, Network

MAGIC = b"SCFN"
VERSION = 1


class ModelFileError(ValueError):
    """Base class for unreadable model files."""


class ModelFormatError(ModelFileError):
    """Bad magic, unknown version, truncation or checksum failure."""


class ModelShapeError(ModelFileError):
    """The shape table is inconsistent with the payload or the layer stack."""


def encode_network(net: Network) -> bytes:
    params = {CONV: iter(net.convs), DENSE: iter(net.denses)}
    table = [MAGIC, struct.pack("<II", VERSION, len(TOPOLOGY))]
    payload = []
    for kind in TOPOLOGY:
        if kind in params:
            p = next(params[kind])
            shape = p.weights.shape
            table.append(struct.pack(f"<BB{len(shape)}I", kind, len(shape), *shape))
            payload.append(np.ascontiguousarray(p.weights, dtype="<f4").tobytes())
            payload.append(np.ascontiguousarray(p.bias, dtype="<f4").tobytes())
        else:
            table.append(struct.pack("<BB", kind, 0))
    body = b"".join(payload)
    return b"".join(table) + body + struct.pack("<I", zlib.crc32(body))


def save_network(net: Network, path) -> None:
    Path(path).write_bytes(encode_network(net))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise ModelFormatError(f"file truncated at byte {self.pos} (needed {size} more bytes)")
        out = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return out


def decode_network(data: bytes) -> Network:
    if data[:4] != MAGIC:
        raise ModelFormatError(f"bad magic {data[:4]!r}, expected {MAGIC!r}")
    r = _Reader(data)
    r.pos = 4
    version, count = r.take("<II")
    if version != VERSION:
        raise ModelFormatError(f"unsupported model format version {version}")

    table = []
    for _ in range(count):
        kind, rank = r.take("<BB")
        if kind not in (1, 2, 3, 4, 5, 6):
            raise ModelFormatError(f"unknown layer kind {kind}")
        table.append((kind, r.take(f"<{rank}I") if rank else ()))

    rest = data[r.pos:]
    if len(rest) < 4:
        raise ModelFormatError("file truncated before the checksum")
    body, (crc,) = rest[:-4], struct.unpack("<I", rest[-4:])
    if zlib.crc32(body) != crc:
        raise ModelFormatError("payload checksum mismatch (file truncated or corrupted)")

    if tuple(k for k, _ in table) != TOPOLOGY:
        raise ModelShapeError(f"layer stack {[k for k, _ in table]} differs from the expected {list(TOPOLOGY)}")
    for kind, shape in table:
        want_rank = {CONV: 4, DENSE: 2}.get(kind, 0)
        if len(shape) != want_rank:
            raise ModelShapeError(f"layer kind {kind} declares rank {len(shape)}, expected {want_rank}")
    expected = sum(int(np.prod(s)) + s[-1] for _, s in table if s)
    if len(body) != 4 * expected:
        raise ModelShapeError(f"shape table declares {expected} parameters but payload holds {len(body) / 4:g}")

    flat = np.frombuffer(body, dtype="<f4").astype(np.float32)
    convs, denses, off = [], [], 0
    for kind, shape in table:
        if not shape:
            continue
        size = int(np.prod(shape))
        w = flat[off:off + size].reshape(shape).copy()
        off += size
        b = flat[off:off + shape[-1]].copy()
        off += shape[-1]
        (convs if kind == CONV else denses).append((ConvParams if kind == CONV else DenseParams)(w, b))

    try:
        return Network(convs, denses, dropout_rate=DROPOUT_RATE)
    except ValueError as exc:
        raise ModelShapeError(str(exc)) from exc


def load_network(path, input_size: int | None = None) -> Network:
    net = decode_network(Path(path).read_bytes())
    if input_size is not None:
        net.input_size = input_size
    return net
