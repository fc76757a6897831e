"""
Small numerical building blocks shared by the lab modules: compensated
summation, least-squares slopes, lacunary grids and the counter-based random
number plumbing that makes every seeded quantity replayable.
"""
import math
from fractions import Fraction
from typing import Iterable, List, Sequence, Union

import numpy as np

Number = Union[int, float, complex, Fraction]

# Generator block length. Part of the replay contract: changing it changes every
# seeded stream, so it is a constant and not a setting.
GENERATOR_BLOCK = 1 << 16

# Stream identifiers keep the counter spaces of different consumers of one seed apart.
STREAM_DIGITS = 1
STREAM_BERNOULLI = 2
STREAM_MARKOV = 3
STREAM_TABLE = 4
STREAM_SUITE = 5

_MASK64 = (1 << 64) - 1


def philox_generator(seed: int, stream_id: int, block: int) -> np.random.Generator:
    """
    Generator for one block of one stream. The block index sits in the high
    counter words, so draws inside a block never reach the next block's counters.
    """
    if seed < 0 or seed > _MASK64:
        raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
    key = (stream_id << 64) | seed
    return np.random.Generator(np.random.Philox(key=key, counter=block << 128))


def counter_uniforms(seed: int, stream_id: int, start: int, stop: int) -> np.ndarray:
    """
    Uniform draws u_start, ..., u_{stop-1} (0-based addresses) of a counter-based
    stream. Any window is produced without replaying the prefix.
    """
    if stop <= start:
        return np.empty(0, dtype=np.float64)
    first, last = start // GENERATOR_BLOCK, (stop - 1) // GENERATOR_BLOCK
    chunks = [
        philox_generator(seed, stream_id, block).random(GENERATOR_BLOCK)
        for block in range(first, last + 1)
    ]
    joined = np.concatenate(chunks)
    offset = first * GENERATOR_BLOCK
    return joined[start - offset:stop - offset]


def derive_seed(seed: int, index: int) -> int:
    """Independent 64-bit child seed for task ``index`` of a run seeded with ``seed``."""
    state = np.random.SeedSequence([seed & _MASK64, index]).generate_state(1, dtype=np.uint64)
    return int(state[0])


class CompensatedSum:
    """
    Neumaier summation for real or complex terms (real and imaginary parts are
    compensated separately).
    """

    __slots__ = ("_re", "_re_c", "_im", "_im_c", "count")

    def __init__(self):
        self._re = 0.0
        self._re_c = 0.0
        self._im = 0.0
        self._im_c = 0.0
        self.count = 0

    @staticmethod
    def _step(total: float, comp: float, x: float):
        t = total + x
        if abs(total) >= abs(x):
            comp += (total - t) + x
        else:
            comp += (x - t) + total
        return t, comp

    def add(self, value: Number) -> None:
        z = complex(value)
        self._re, self._re_c = self._step(self._re, self._re_c, z.real)
        if z.imag:
            self._im, self._im_c = self._step(self._im, self._im_c, z.imag)
        self.count += 1

    def extend(self, values: Iterable[Number]) -> None:
        for value in values:
            self.add(value)

    @property
    def real(self) -> float:
        return self._re + self._re_c

    @property
    def value(self) -> complex:
        return complex(self._re + self._re_c, self._im + self._im_c)


def least_squares_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    x = np.asarray(xs, dtype=np.float64)
    y = np.asarray(ys, dtype=np.float64)
    if x.size < 2:
        raise ValueError("at least two points are needed for a slope")
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)


def loglog_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    return least_squares_slope(np.log(np.asarray(xs, dtype=np.float64)),
                               np.log(np.asarray(ys, dtype=np.float64)))


def lacunary_checkpoints(gamma: Union[Fraction, float, str], upper: int) -> List[int]:
    """
    The grid floor(gamma**i) <= upper, deduplicated, with ``upper`` appended.
    Powers are exact rationals, so the grid does not depend on float rounding.
    """
    gamma = Fraction(gamma)
    if gamma <= 1:
        raise ValueError(f"lacunary base must exceed 1, got {gamma}")
    if upper < 1:
        raise ValueError("upper must be >= 1")
    points = []
    power = Fraction(1)
    while True:
        k = math.floor(power)
        if k > upper:
            break
        if not points or points[-1] != k:
            points.append(k)
        power *= gamma
    if points[-1] != upper:
        points.append(upper)
    return points


def log_grid(lower: int, upper: int, per_decade: int = 4) -> List[int]:
    if lower < 1 or upper < lower:
        raise ValueError(f"invalid grid range [{lower}, {upper}]")
    count = max(2, int(round(per_decade * math.log10(upper / lower))) + 1)
    raw = np.unique(np.round(np.geomspace(lower, upper, count)).astype(np.int64))
    return [int(v) for v in raw]
