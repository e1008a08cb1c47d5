"""Counter-based random streams.

Draw ``i`` of a stream with key ``k`` is ``splitmix64(k + (i + 1) * GAMMA)``
(all arithmetic mod 2**64). Uniforms take the top 53 bits; normals use
Box-Muller on consecutive uniform pairs. The byte-level definition keeps
every generated dataset identical across platforms and thread counts.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_TWO_M53 = 1.0 / (1 << 53)


def splitmix64(x):
    x &= MASK64
    x = ((x ^ (x >> 30)) * _M1) & MASK64
    x = ((x ^ (x >> 27)) * _M2) & MASK64
    return x ^ (x >> 31)


def derive_key(*parts):
    """Fold integers into one 64-bit stream key."""
    h = splitmix64(len(parts))
    for p in parts:
        h = splitmix64((h + GAMMA) ^ (int(p) & MASK64))
    return h


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


class CounterRNG:
    """Stateful cursor over a counter-based stream."""

    def __init__(self, key):
        self.key = int(key) & MASK64
        self.pos = 0

    @classmethod
    def from_parts(cls, *parts):
        return cls(derive_key(*parts))

    def spawn(self, *parts):
        return CounterRNG(derive_key(self.key, *parts))

    def bits(self, n):
        ctr = np.arange(self.pos + 1, self.pos + 1 + n, dtype=np.uint64)
        self.pos += n
        return _mix(np.uint64(self.key) + ctr * np.uint64(GAMMA))

    def uniform(self, n=None, low=0.0, high=1.0):
        """Uniform on [low, high)."""
        m = 1 if n is None else int(np.prod(n))
        u = (self.bits(m) >> np.uint64(11)).astype(np.float64) * _TWO_M53
        u = low + (high - low) * u
        if n is None:
            return float(u[0])
        return u.reshape(n)

    def normal(self, n=None):
        """Standard normals via Box-Muller."""
        m = 1 if n is None else int(np.prod(n))
        pairs = (m + 1) // 2
        u = (self.bits(2 * pairs) >> np.uint64(11)).astype(np.float64)
        u1 = (u[0::2] + 1.0) * _TWO_M53  # (0, 1], keeps log finite
        u2 = u[1::2] * _TWO_M53
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.empty(2 * pairs)
        z[0::2] = r * np.cos(2.0 * np.pi * u2)
        z[1::2] = r * np.sin(2.0 * np.pi * u2)
        if n is None:
            return float(z[0])
        return z[:m].reshape(n)

    def integers(self, low, high, n=None):
        """Integers in [low, high)."""
        if high <= low:
            raise ValueError("empty integer range")
        u = self.uniform(n)
        out = low + np.floor(np.asarray(u) * (high - low)).astype(np.int64)
        out = np.minimum(out, high - 1)
        if n is None:
            return int(out)
        return out

    def permutation(self, n):
        return np.argsort(self.uniform(n), kind="stable")

    def choice(self, seq):
        return seq[self.integers(0, len(seq))]
