"""Random valid protocol messages for round-trip and fuzz tests."""

import numpy as np

from fedthreat.federation import (
    ClientUpdate,
    GlobalBroadcast,
    Shutdown,
    SparseClientUpdate,
    SparseUpdate,
)

U32_MAX = 2**32 - 1


def _reals(rng, n):
    # mix ordinary values with awkward bit patterns
    v = rng.normal(scale=10.0 ** rng.integers(-300, 300), size=n)
    specials = np.array([0.0, -0.0, 5e-324, -1.7976931348623157e308, 1.0])
    mask = rng.random(n) < 0.1
    v[mask] = rng.choice(specials, size=int(mask.sum()))
    return v


def random_message(rng):
    kind = int(rng.integers(4))
    u32 = lambda: int(rng.integers(0, U32_MAX, endpoint=True))
    if kind == 0:
        return GlobalBroadcast(u32(), _reals(rng, int(rng.integers(0, 40))))
    if kind == 1:
        return ClientUpdate(u32(), u32(), _reals(rng, int(rng.integers(0, 40))), u32(), float(_reals(rng, 1)[0]))
    if kind == 2:
        dim = int(rng.integers(1, 60))
        nnz = int(rng.integers(0, dim + 1))
        idx = np.sort(rng.choice(dim, size=nnz, replace=False)).astype(np.uint32)
        sp = SparseUpdate(dim, idx, _reals(rng, nnz))
        return SparseClientUpdate(u32(), u32(), sp, u32(), float(rng.random()))
    return Shutdown()
