"""Clients, server, aggregation, compression and the wire protocol."""

from .aggregation import aggregate, node_weights, sync_error
from .client import ClientState, LocalTraining, sgd_epochs
from .compression import CompressionSpec, SparseUpdate, compress, decompress
from .protocol import (
    BadMagicError,
    ClientUpdate,
    DecodeError,
    GlobalBroadcast,
    MalformedPayloadError,
    ProtocolError,
    Shutdown,
    SparseClientUpdate,
    TruncatedError,
    UnknownTypeError,
    UnsupportedVersionError,
    decode_message,
    encode_message,
)
from .server import (
    AsyncFederation,
    AsyncServer,
    GlobalState,
    RoundStats,
    apply_sync,
    default_staleness,
    run_round_sync,
)
from .transport import SocketCluster

__all__ = [
    "AsyncFederation",
    "AsyncServer",
    "BadMagicError",
    "ClientState",
    "ClientUpdate",
    "CompressionSpec",
    "DecodeError",
    "GlobalBroadcast",
    "GlobalState",
    "LocalTraining",
    "MalformedPayloadError",
    "ProtocolError",
    "RoundStats",
    "Shutdown",
    "SocketCluster",
    "SparseClientUpdate",
    "SparseUpdate",
    "TruncatedError",
    "UnknownTypeError",
    "UnsupportedVersionError",
    "aggregate",
    "apply_sync",
    "compress",
    "decode_message",
    "decompress",
    "default_staleness",
    "encode_message",
    "node_weights",
    "run_round_sync",
    "sgd_epochs",
    "sync_error",
]
