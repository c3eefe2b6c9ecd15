"""Counter-based random streams.

Every uniform variate is a pure function of ``(seed, key, counter)``, so any
lattice cell can be (re)generated in isolation and in any order.  The mixer is
the SplitMix64 finalizer applied to uint64 arrays, vectorized over many keys.
"""

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_MASK64 = (1 << 64) - 1


def mix64(x):
    """SplitMix64 finalizer on a uint64 array (wrapping arithmetic)."""
    x = np.array(x, dtype=np.uint64, copy=True, ndmin=1)
    x ^= x >> _S30
    x *= _M1
    x ^= x >> _S27
    x *= _M2
    x ^= x >> _S31
    return x


def _mix_int(x):
    x &= _MASK64
    x ^= x >> 30
    x = (x * 0xBF58476D1CE4E5B9) & _MASK64
    x ^= x >> 27
    x = (x * 0x94D049BB133111EB) & _MASK64
    x ^= x >> 31
    return x


def seed_key(seed):
    """Fold an arbitrary (possibly negative or huge) int into a 64-bit key."""
    seed = int(seed)
    sign = 1 if seed < 0 else 0
    seed = abs(seed)
    key = _mix_int(0x243F6A8885A308D3 ^ sign)
    while True:
        key = _mix_int(key ^ _mix_int((seed & _MASK64) + 0x9E3779B97F4A7C15))
        seed >>= 64
        if not seed:
            return np.uint64(key)


def derive_seed(seed, *labels):
    """Child seed for a named substream, e.g. ``derive_seed(42, 'resample', 3)``."""
    key = int(seed_key(seed))
    for lab in labels:
        if isinstance(lab, str):
            lab = int.from_bytes(lab.encode(), "little")
        key = _mix_int(key ^ int(seed_key(lab)) ^ 0x9E3779B97F4A7C15)
    return key


def cell_keys(seed, cells):
    """One 64-bit key per integer cell coordinate row of ``cells`` (m, d).

    ``seed`` may be an int or an already folded ``np.uint64`` key.
    """
    cells = np.asarray(cells, dtype=np.int64)
    root = seed if isinstance(seed, np.uint64) else seed_key(seed)
    key = np.full(cells.shape[0], root, dtype=np.uint64)
    for j in range(cells.shape[1]):
        salt = np.uint64((0x9E3779B97F4A7C15 * (j + 1)) & _MASK64)
        key = mix64(key ^ mix64(cells[:, j].astype(np.uint64) + salt))
    return key


def uniforms(keys, counters):
    """Uniform doubles in [0, 1) for paired arrays of keys and counters."""
    keys = np.asarray(keys, dtype=np.uint64)
    counters = np.asarray(counters, dtype=np.uint64)
    bits = mix64(mix64(keys ^ (counters * _GOLDEN)) + counters)
    return (bits >> _S11).astype(np.float64) * (1.0 / 9007199254740992.0)
