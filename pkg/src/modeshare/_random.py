"""SplitMix64 streams usable from numba kernels.

A stream is a single uint64 state held in a length-1 array so kernels can
advance it in place. Streams for independent tasks are derived by hashing
the task coordinates, which keeps results independent of scheduling.
"""

import hashlib

import numba
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


@numba.njit(inline="always")
def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


@numba.njit(inline="always")
def next_u64(state):
    state[0] += _GOLDEN
    return _mix(state[0])


@numba.njit(inline="always")
def next_double(state):
    return np.float64(next_u64(state) >> np.uint64(11)) * (1.0 / 9007199254740992.0)


@numba.njit(inline="always")
def derive(seed, a, b):
    """Stream seed for task ``(a, b)`` under master ``seed``."""
    z = _mix(np.uint64(seed) + _GOLDEN)
    z = _mix(z ^ (np.uint64(a) * _M1 + _GOLDEN))
    return _mix(z ^ (np.uint64(b) * _M2 + _GOLDEN))


def to_seed(value: int) -> int:
    return int(value) & _MASK64


def stage_seed(master: int, stage: str) -> int:
    """Deterministic 64-bit seed for a named pipeline stage."""
    digest = hashlib.sha256(f"{to_seed(master)}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def spawn(seed: int, *coords: int) -> int:
    """Python-side counterpart of :func:`derive` for arbitrary coordinates."""
    digest = hashlib.sha256(":".join(str(to_seed(c)) for c in (seed, *coords)).encode()).digest()
    return int.from_bytes(digest[:8], "little")
