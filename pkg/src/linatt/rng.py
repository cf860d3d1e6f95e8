"""Counter-based reproducible random numbers.

The generator is fixed and fully documented so that any implementation, in
any language, can reproduce the exact same streams:

* A stream is identified by ``(seed, stream_index)``, both unsigned 64-bit.
* The stream key is ``key = mix64(seed + GAMMA * stream_index)`` (wrapping
  arithmetic mod 2**64), with ``GAMMA = 0x9E3779B97F4A7C15``.
* The i-th raw word (counting from i = 1) is
  ``word_i = mix64(key + GAMMA * i)``, where ``mix64`` is the SplitMix64
  finalizer::

      z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
      z ^= z >> 27;  z *= 0x94D049BB133111EB
      z ^= z >> 31

  Because words are a pure function of (key, i), any subsequence can be
  generated independently of the rest — the generator is counter-based.
* Uniform doubles take the top 53 bits: ``u = (word >> 11) * 2**-53``.
* Normals come from Box-Muller on consecutive word pairs.  A batch of
  ``c`` normals consumes ``2 * ceil(c / 2)`` words ``w_1 .. w_2p``; with
  ``u1_j`` built from the first half (offset by one ulp into (0, 1]) and
  ``u2_j`` from the second half, the batch is::

      r_j = sqrt(-2 ln u1_j),  theta_j = 2 pi u2_j
      batch = [r_1 cos(theta_1), .., r_p cos(theta_p),
               r_1 sin(theta_1), .., r_p sin(theta_p)][:c]

Identical ``(seed, stream_index)`` therefore reproduce identical sequences;
distinct stream indices give statistically independent streams.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["RngStream", "gaussian_matrix"]

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_GAMMA2 = np.uint64(0xD1B54A32D192ED03)  # domain separation for substreams
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64 = np.uint64(0xFFFFFFFFFFFFFFFF)
_TWO_NEG53 = 2.0**-53


def _mix64(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer, vectorized over uint64 arrays (wrapping)."""
    z = z ^ (z >> np.uint64(30))
    z = z * _MIX1
    z = z ^ (z >> np.uint64(27))
    z = z * _MIX2
    return z ^ (z >> np.uint64(31))


@dataclass
class RngStream:
    """A deterministic stream of random values, addressed by (seed, stream).

    The internal counter advances as values are drawn; constructing a new
    stream with the same ``(seed, stream_index)`` replays the sequence from
    the start, bit for bit.
    """

    seed: int
    stream_index: int = 0
    _counter: int = field(default=0, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.seed = int(self.seed) & 0xFFFFFFFFFFFFFFFF
        self.stream_index = int(self.stream_index) & 0xFFFFFFFFFFFFFFFF
        # Stay in array space: numpy scalar uint64 arithmetic warns on
        # overflow, array arithmetic wraps silently as intended.
        key = np.array([self.stream_index], dtype=np.uint64)
        key *= _GAMMA
        key += np.uint64(self.seed)
        self._key = _mix64(key)[0]

    def words(self, count: int) -> np.ndarray:
        """The next ``count`` raw 64-bit words, advancing the counter."""
        if count < 0:
            raise ValueError(f"words: count must be nonnegative, got {count}")
        start = self._counter
        self._counter += count
        z = np.arange(start + 1, start + count + 1, dtype=np.uint64)
        z *= _GAMMA
        z += self._key
        return _mix64(z)

    def uniforms(self, count: int) -> np.ndarray:
        """Uniform doubles in [0, 1)."""
        return (self.words(count) >> np.uint64(11)).astype(np.float64) * _TWO_NEG53

    def normals(self, count: int) -> np.ndarray:
        """Standard normal doubles via Box-Muller on word pairs."""
        if count == 0:
            return np.empty(0)
        pairs = (count + 1) // 2
        w = self.words(2 * pairs)
        u1 = (w[:pairs] >> np.uint64(11)).astype(np.float64)
        u1 += 1.0  # shift into (0, 1] so the logarithm is finite
        u1 *= _TWO_NEG53
        u2 = (w[pairs:] >> np.uint64(11)).astype(np.float64)
        u2 *= _TWO_NEG53 * 2.0 * np.pi
        np.log(u1, out=u1)
        u1 *= -2.0
        np.sqrt(u1, out=u1)
        out = np.empty(2 * pairs)
        np.cos(u2, out=out[:pairs])
        np.sin(u2, out=out[pairs:])
        out[:pairs] *= u1
        out[pairs:] *= u1
        return out[:count]

    def randint(self, bound: int) -> int:
        """An integer in [0, bound) (modulo reduction; bias is negligible
        for the desk-scale bounds used here)."""
        if bound <= 0:
            raise ValueError(f"randint: bound must be positive, got {bound}")
        return int(self.words(1)[0] % np.uint64(bound))

    def substream(self, index: int) -> "RngStream":
        """A statistically independent stream derived from this one.

        Used to give each Monte-Carlo trial its own stream so that results
        do not depend on trial execution order.
        """
        z = np.array([int(index) + 1], dtype=np.uint64)
        z *= _GAMMA2
        z += np.uint64(self.stream_index)
        derived = int(_mix64(z)[0])
        return RngStream(self.seed, derived)


def gaussian_matrix(rows: int, cols: int, variance: float, rng: RngStream) -> np.ndarray:
    """A ``rows x cols`` matrix with i.i.d. N(0, variance) entries.

    Entries are drawn in row-major order from ``rng``, so the result is a
    pure function of the stream state.
    """
    if rows < 1 or cols < 1:
        raise ValueError(f"gaussian_matrix: shape must be positive, got {rows}x{cols}")
    variance = float(variance)
    if not variance > 0.0:
        raise ValueError(f"gaussian_matrix: variance must be > 0, got {variance!r}")
    out = rng.normals(rows * cols).reshape(rows, cols)
    if variance != 1.0:
        out *= np.sqrt(variance)
    return out
