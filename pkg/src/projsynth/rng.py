"""Counter-based random streams.

Every stochastic routine in the package takes an explicit :class:`RngState`.
Draws come from numpy's Philox generator keyed by ``(seed, stream)``; the
``counter`` selects an independent block of the Philox counter space per draw,
so identical states give identical numbers on every platform.
"""

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


def _key(seed, stream):
    words = np.random.SeedSequence([seed & _MASK64, stream & _MASK64]).generate_state(2, np.uint64)
    return words


@dataclass
class RngState:
    seed: int
    stream: int = 0
    counter: int = 0

    def generator(self):
        """Return a generator for the current draw and advance the counter."""
        bitgen = np.random.Philox(key=_key(self.seed, self.stream), counter=[0, self.counter, 0, 0])
        self.counter += 1
        return np.random.Generator(bitgen)

    def child(self, index):
        """Independent sub-stream, e.g. one per batch item."""
        sub = int(np.random.SeedSequence([self.seed & _MASK64, self.stream & _MASK64, int(index)])
                  .generate_state(1, np.uint64)[0])
        return RngState(self.seed, sub, 0)

    def randint(self, high):
        return int(self.generator().integers(0, 2**31 - 1 if high is None else high))

    def copy(self):
        return RngState(self.seed, self.stream, self.counter)


def as_rng(rng):
    if isinstance(rng, RngState):
        return rng
    if rng is None:
        return RngState(0)
    return RngState(int(rng))


def gaussian_sample(rng, shape, dtype=np.float64):
    """Standard normal draw of ``shape`` from the explicit stream."""
    return rng.generator().standard_normal(size=shape).astype(dtype, copy=False)


def uniform_sample(rng, shape, low=0.0, high=1.0):
    return rng.generator().uniform(low, high, size=shape)
