"""Counter-based random streams.

Every variate is a pure function of ``(seed, index, slot)`` where ``index`` is
the flattened pixel index and ``slot`` numbers the draws consumed by that
pixel.  Sampling therefore does not depend on evaluation order, and any subset
of pixels can be regenerated on its own.

The mixing function is SplitMix64 (Steele, Lea & Flood 2014), applied twice so
that neighbouring counters land in unrelated parts of the output space.
"""
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_SLOT_KEY = np.uint64(0xD1B54A32D192ED03)
_MASK64 = (1 << 64) - 1


def _mix64(x):
    x = np.asarray(x, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = x + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
        return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, *keys: int) -> int:
    """Derive a child seed from ``seed`` and a path of integer keys."""
    h = np.uint64(int(seed) & _MASK64)
    for k in keys:
        h = _mix64(h ^ _mix64(np.uint64(int(k) & _MASK64)))
    return int(h)


def random_bits(seed: int, index, slot) -> np.ndarray:
    """64 random bits per (index, slot) pair; arrays broadcast."""
    key = _mix64(np.uint64(int(seed) & _MASK64))
    index = np.asarray(index, dtype=np.uint64)
    slot = np.asarray(slot, dtype=np.uint64)
    with np.errstate(over="ignore"):
        ctr = _mix64(index ^ key) + slot * _SLOT_KEY
    return _mix64(ctr ^ key)


def uniform(seed: int, index, slot) -> np.ndarray:
    """Uniform doubles in the open interval (0, 1)."""
    bits = random_bits(seed, index, slot) >> np.uint64(11)
    return (bits.astype(np.float64) + 0.5) * 2.0**-53


def standard_normal(seed: int, index, slot) -> np.ndarray:
    """Box-Muller normals; consumes slots ``2*slot`` and ``2*slot + 1``."""
    slot = np.asarray(slot, dtype=np.uint64)
    u1 = uniform(seed, index, slot * np.uint64(2))
    u2 = uniform(seed, index, slot * np.uint64(2) + np.uint64(1))
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
