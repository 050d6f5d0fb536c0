"""Framed binary protocol between the server and its clients.

Frame layout (all integers little-endian)::

    magic   4 bytes  b"FDTP"
    version 1 byte   0x01
    type    1 byte   see MSG_* constants
    length  4 bytes  unsigned payload length
    payload length bytes

Reals are IEEE-754 float64 little-endian. A vector is a ``u32`` length
followed by that many reals.

Payloads:

* ``GlobalBroadcast``: ``u32 round, vector theta``
* ``ClientUpdate``: ``u32 client_id, u32 round, vector update,
  u32 n_samples, f64 train_seconds``
* ``Shutdown``: empty
* ``SparseClientUpdate``: ``u32 client_id, u32 round, u32 dim, u32 nnz,
  nnz x u32 indices (strictly ascending), nnz x f64 values,
  u32 n_samples, f64 train_seconds``
"""

from __future__ import annotations

import socket
import struct
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .compression import SparseUpdate, decompress

MAGIC = b"FDTP"
VERSION = 0x01
HEADER = struct.Struct("<4sBBI")
HEADER_SIZE = HEADER.size  # 10

MSG_BROADCAST = 0x01
MSG_UPDATE = 0x02
MSG_SHUTDOWN = 0x03
MSG_SPARSE_UPDATE = 0x04

MAX_PAYLOAD = 1 << 26

_U32 = struct.Struct("<I")
_F64 = struct.Struct("<d")
_F64_ARRAY = np.dtype("<f8")
_U32_ARRAY = np.dtype("<u4")


class ProtocolError(Exception):
    """A peer broke the round protocol (stale round, wrong dimension, ...)."""


class DecodeError(ValueError):
    """Base class for malformed frames."""


class BadMagicError(DecodeError):
    pass


class UnsupportedVersionError(DecodeError):
    pass


class UnknownTypeError(DecodeError):
    pass


class TruncatedError(DecodeError):
    pass


class MalformedPayloadError(DecodeError):
    pass


def _same_bits(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and a.astype(_F64_ARRAY).tobytes() == b.astype(_F64_ARRAY).tobytes()


@dataclass(frozen=True, eq=False)
class GlobalBroadcast:
    round: int
    theta: np.ndarray = field(repr=False)

    def __eq__(self, other):
        return (
            isinstance(other, GlobalBroadcast)
            and self.round == other.round
            and _same_bits(self.theta, other.theta)
        )


@dataclass(frozen=True, eq=False)
class ClientUpdate:
    client_id: int
    round: int
    update: np.ndarray = field(repr=False)
    n_samples: int
    train_seconds: float = 0.0

    def __eq__(self, other):
        return (
            isinstance(other, ClientUpdate)
            and (self.client_id, self.round, self.n_samples) == (other.client_id, other.round, other.n_samples)
            and _F64.pack(self.train_seconds) == _F64.pack(other.train_seconds)
            and _same_bits(self.update, other.update)
        )

    def dense(self) -> np.ndarray:
        return self.update


@dataclass(frozen=True, eq=False)
class SparseClientUpdate:
    client_id: int
    round: int
    sparse: SparseUpdate = field(repr=False)
    n_samples: int
    train_seconds: float = 0.0

    def __eq__(self, other):
        return (
            isinstance(other, SparseClientUpdate)
            and (self.client_id, self.round, self.n_samples) == (other.client_id, other.round, other.n_samples)
            and _F64.pack(self.train_seconds) == _F64.pack(other.train_seconds)
            and self.sparse.dim == other.sparse.dim
            and np.array_equal(self.sparse.indices, other.sparse.indices)
            and _same_bits(self.sparse.values, other.sparse.values)
        )

    def dense(self) -> np.ndarray:
        return decompress(self.sparse)


@dataclass(frozen=True)
class Shutdown:
    pass


RoundMessage = Union[GlobalBroadcast, ClientUpdate, SparseClientUpdate, Shutdown]


def _u32(value: int, name: str) -> bytes:
    if not 0 <= value <= 0xFFFFFFFF:
        raise ValueError(f"{name}={value} does not fit in an unsigned 32-bit field")
    return _U32.pack(value)


def _vector(v: np.ndarray) -> bytes:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ValueError("vectors must be 1-D")
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot encode a vector with NaN or Inf")
    return _u32(v.shape[0], "dim") + v.astype(_F64_ARRAY).tobytes()


def _seconds(value: float) -> bytes:
    if not np.isfinite(value):
        raise ValueError("train_seconds must be finite")
    return _F64.pack(value)


def _payload(msg: RoundMessage) -> tuple[int, bytes]:
    if isinstance(msg, GlobalBroadcast):
        return MSG_BROADCAST, _u32(msg.round, "round") + _vector(msg.theta)
    if isinstance(msg, ClientUpdate):
        return MSG_UPDATE, b"".join(
            [
                _u32(msg.client_id, "client_id"),
                _u32(msg.round, "round"),
                _vector(msg.update),
                _u32(msg.n_samples, "n_samples"),
                _seconds(msg.train_seconds),
            ]
        )
    if isinstance(msg, SparseClientUpdate):
        sp = msg.sparse
        idx = np.asarray(sp.indices).astype(_U32_ARRAY)
        vals = np.asarray(sp.values, dtype=np.float64).astype(_F64_ARRAY)
        if not np.all(np.isfinite(vals)):
            raise ValueError("cannot encode sparse values with NaN or Inf")
        if idx.shape != vals.shape:
            raise ValueError("sparse indices and values differ in length")
        return MSG_SPARSE_UPDATE, b"".join(
            [
                _u32(msg.client_id, "client_id"),
                _u32(msg.round, "round"),
                _u32(sp.dim, "dim"),
                _u32(idx.shape[0], "nnz"),
                idx.tobytes(),
                vals.tobytes(),
                _u32(msg.n_samples, "n_samples"),
                _seconds(msg.train_seconds),
            ]
        )
    if isinstance(msg, Shutdown):
        return MSG_SHUTDOWN, b""
    raise TypeError(f"not a round message: {type(msg).__name__}")


def encode_message(msg: RoundMessage) -> bytes:
    kind, payload = _payload(msg)
    return HEADER.pack(MAGIC, VERSION, kind, len(payload)) + payload


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.buf):
            raise MalformedPayloadError(f"payload too short for {what}")
        out = self.buf[self.pos : self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]

    def f64(self, what: str) -> float:
        value = _F64.unpack(self.take(8, what))[0]
        if not np.isfinite(value):
            raise MalformedPayloadError(f"{what} is not finite")
        return value

    def reals(self, n: int, what: str) -> np.ndarray:
        if n * 8 > len(self.buf) - self.pos:
            raise MalformedPayloadError(f"payload too short for {what}")
        arr = np.frombuffer(self.take(n * 8, what), dtype=_F64_ARRAY).astype(np.float64)
        if not np.all(np.isfinite(arr)):
            raise MalformedPayloadError(f"{what} contains NaN or Inf")
        return arr

    def done(self):
        if self.pos != len(self.buf):
            raise MalformedPayloadError(f"{len(self.buf) - self.pos} unexpected trailing payload bytes")


def _parse_payload(kind: int, payload: bytes) -> RoundMessage:
    r = _Reader(payload)
    if kind == MSG_BROADCAST:
        rnd = r.u32("round")
        theta = r.reals(r.u32("dim"), "theta")
        r.done()
        return GlobalBroadcast(rnd, theta)
    if kind == MSG_UPDATE:
        cid = r.u32("client_id")
        rnd = r.u32("round")
        upd = r.reals(r.u32("dim"), "update")
        n = r.u32("n_samples")
        secs = r.f64("train_seconds")
        r.done()
        return ClientUpdate(cid, rnd, upd, n, secs)
    if kind == MSG_SPARSE_UPDATE:
        cid = r.u32("client_id")
        rnd = r.u32("round")
        dim = r.u32("dim")
        nnz = r.u32("nnz")
        if nnz > dim:
            raise MalformedPayloadError(f"nnz {nnz} exceeds dim {dim}")
        if nnz * 12 > len(payload) - r.pos:
            raise MalformedPayloadError("payload too short for sparse entries")
        idx = np.frombuffer(r.take(nnz * 4, "indices"), dtype=_U32_ARRAY).astype(np.uint32)
        if nnz and (idx[-1] >= dim or np.any(np.diff(idx.astype(np.int64)) <= 0)):
            raise MalformedPayloadError("sparse indices must be strictly ascending and below dim")
        vals = r.reals(nnz, "values")
        n = r.u32("n_samples")
        secs = r.f64("train_seconds")
        r.done()
        return SparseClientUpdate(cid, rnd, SparseUpdate(dim, idx, vals), n, secs)
    if kind == MSG_SHUTDOWN:
        r.done()
        return Shutdown()
    raise UnknownTypeError(f"unknown message type 0x{kind:02x}")


def _parse_header(header: bytes) -> tuple[int, int]:
    magic, version, kind, length = HEADER.unpack(header)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version 0x{version:02x}")
    if kind not in (MSG_BROADCAST, MSG_UPDATE, MSG_SHUTDOWN, MSG_SPARSE_UPDATE):
        raise UnknownTypeError(f"unknown message type 0x{kind:02x}")
    if length > MAX_PAYLOAD:
        raise MalformedPayloadError(f"payload length {length} exceeds limit {MAX_PAYLOAD}")
    return kind, length


def decode_message(data: bytes) -> RoundMessage:
    """Decode exactly one frame; raises a :class:`DecodeError` subclass otherwise."""
    data = bytes(data)
    if len(data) < 4:
        if MAGIC.startswith(data):
            raise TruncatedError(f"frame is {len(data)} bytes, header needs {HEADER_SIZE}")
        raise BadMagicError(f"bad magic {data!r}")
    if data[:4] != MAGIC:
        raise BadMagicError(f"bad magic {data[:4]!r}")
    if len(data) < HEADER_SIZE:
        raise TruncatedError(f"frame is {len(data)} bytes, header needs {HEADER_SIZE}")
    kind, length = _parse_header(data[:HEADER_SIZE])
    body = data[HEADER_SIZE:]
    if len(body) < length:
        raise TruncatedError(f"payload declares {length} bytes, only {len(body)} present")
    if len(body) > length:
        raise MalformedPayloadError(f"{len(body) - length} bytes after the frame")
    return _parse_payload(kind, body)


def _recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    while n:
        chunk = sock.recv(n)
        if not chunk:
            raise ConnectionError("peer closed the connection mid-frame")
        chunks.append(chunk)
        n -= len(chunk)
    return b"".join(chunks)


def send_message(sock: socket.socket, msg: RoundMessage) -> None:
    sock.sendall(encode_message(msg))


def recv_message(sock: socket.socket) -> RoundMessage:
    header = _recv_exact(sock, HEADER_SIZE)
    kind, length = _parse_header(header)
    return _parse_payload(kind, _recv_exact(sock, length))
