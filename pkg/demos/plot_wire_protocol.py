"""
The framed wire protocol
========================

Every message is a 10-byte header (magic, version, type, payload length)
followed by a little-endian payload. Decoding either returns a message or
raises a typed error.
"""

import numpy as np

from fedthreat.federation import (
    ClientUpdate,
    CompressionSpec,
    DecodeError,
    GlobalBroadcast,
    Shutdown,
    SparseClientUpdate,
    compress,
    decode_message,
    encode_message,
)

print(encode_message(Shutdown()).hex(" "))

frame = encode_message(GlobalBroadcast(3, np.array([0.5, -1.0])))
print(len(frame), "bytes:", frame[:10].hex(" "), "|", frame[10:].hex(" "))

update = ClientUpdate(client_id=2, round=3, update=np.array([0.1, -5.0, 3.0]), n_samples=700, train_seconds=0.01)
assert decode_message(encode_message(update)) == update

# Top-k compression keeps the largest coordinates and ships indices + values
small = SparseClientUpdate(2, 3, compress(update.update, CompressionSpec("topk", 2)), 700)
print("top-2 of [0.1, -5, 3]:", decode_message(encode_message(small)).dense())

big = ClientUpdate(2, 3, np.random.default_rng(0).normal(size=64), 700)
sparse = SparseClientUpdate(2, 3, compress(big.update, CompressionSpec("topk", 8)), 700)
print("dim 64 dense", len(encode_message(big)), "bytes; top-8", len(encode_message(sparse)), "bytes")

# Damaged frames are rejected with a specific error
for bad in (frame[:7], b"HTTP" + frame[4:], frame[:5] + b"\x09" + frame[6:], frame + b"\x00"):
    try:
        decode_message(bad)
    except DecodeError as exc:
        print(f"{type(exc).__name__:24s} {exc}")
