"""
Target systems (X, mu, T), observables, exact projections onto the invariant
sigma-algebra and averages (1/K) sum f(T^{r_n} x) along a sequence.
"""
import cmath
import inspect
import logging
import math
import sys
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction
from typing import List, Sequence, Tuple, Type, Union

import numpy as np

from ergodic.errors import IncompatibleTarget
from ergodic.exact_arith import (
    CFStream,
    DigitSource,
    DigitStream,
    RealPoint,
    Threshold,
    make_digit_stream,
    rotation_in_interval,
    tail_in_interval,
)
from ergodic.numerics import STREAM_TABLE, CompensatedSum, counter_uniforms, lacunary_checkpoints
from ergodic.return_sequences import ReturnSequence
from ergodic.source_dynamics import ROTATION_FAST_LIMIT, rotation_bounds

logger = logging.getLogger(__name__)

Value = Union[Fraction, float, complex]

INDICATOR_TOLERANCE = 2.0 ** -40


# ---------------------------------------------------------------------------
# Observables


@dataclass(frozen=True)
class IndicatorInterval:
    """1 on the closed interval [lo, hi] of [0, 1)."""

    lo: Fraction
    hi: Fraction

    def __post_init__(self):
        object.__setattr__(self, "lo", Fraction(self.lo))
        object.__setattr__(self, "hi", Fraction(self.hi))
        if not 0 <= self.lo <= self.hi <= 1:
            raise ValueError(f"[{self.lo}, {self.hi}] is not an interval of [0, 1]")

    @property
    def sup_norm(self) -> float:
        return 1.0


@dataclass(frozen=True)
class Character:
    """x -> exp(2 pi i m x)."""

    m: int

    @property
    def sup_norm(self) -> float:
        return 1.0


@dataclass(frozen=True)
class Table:
    """Values f(0), ..., f(k-1) on Z_k."""

    values: Tuple[Fraction, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(Fraction(v) for v in self.values))
        if not self.values:
            raise ValueError("a table needs at least one value")

    @classmethod
    def random(cls, k: int, seed: int) -> "Table":
        """k values in [0, 1] with denominator 1000, from the table stream of ``seed``."""
        draws = counter_uniforms(seed, STREAM_TABLE, 0, k)
        return cls(tuple(Fraction(int(u * 1000), 1000) for u in draws))

    @property
    def sup_norm(self) -> float:
        return float(max(abs(v) for v in self.values))


@dataclass(frozen=True)
class Coordinate:
    """An observable of one factor of a product system."""

    observable: object
    index: int

    @property
    def sup_norm(self) -> float:
        return self.observable.sup_norm


Observable = Union[IndicatorInterval, Character, Table, Coordinate]


def _character_values(m: int, positions: np.ndarray) -> np.ndarray:
    return np.exp(2j * np.pi * m * positions)


def _indicator_fast(f: IndicatorInterval, low: np.ndarray, high: np.ndarray):
    """(decided, value) masks for 1_[lo, hi] at values known to lie in [low, high]."""
    lo, hi = float(f.lo), float(f.hi)
    inside = (low > lo + INDICATOR_TOLERANCE) & (high < hi - INDICATOR_TOLERANCE)
    outside = (high < lo - INDICATOR_TOLERANCE) | (low > hi + INDICATOR_TOLERANCE)
    return inside | outside, inside


# ---------------------------------------------------------------------------
# Test systems


class TestSystem(ABC):
    """A measure-preserving system (X, mu, T) with an exact projection oracle."""

    ergodic = True

    @property
    def name(self) -> str:
        return self.key

    @abstractmethod
    def evaluate(self, f: Observable, x, r: int) -> Value:
        """f(T^r x), with T^r x computed exactly."""
        raise NotImplementedError

    @abstractmethod
    def orbit_values(self, f: Observable, x, rs: Sequence[int]) -> np.ndarray:
        """f(T^r x) for every r, vectorised; complex for characters, float otherwise."""
        raise NotImplementedError

    @abstractmethod
    def project(self, f: Observable, x) -> Value:
        """E(f | I(T))(x)."""
        raise NotImplementedError

    @abstractmethod
    def sample_point(self, seed: int):
        raise NotImplementedError

    def _unsupported(self, f) -> IncompatibleTarget:
        return IncompatibleTarget(f"{type(f).__name__} is not an observable of {self!r}")


class CyclicRotation(TestSystem):
    """T x = x + j mod k on Z_k with counting measure."""

    key = "cyclic"

    def __init__(self, k: int, j: int = 1):
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        self.k = k
        self.j = j % k if k > 1 else 0
        self.orbit_step = math.gcd(self.j, k)
        self.ergodic = self.orbit_step == 1

    def __repr__(self):
        return f"CyclicRotation(k={self.k}, j={self.j})"

    def _position(self, x: int, r: int) -> int:
        return (x + r * self.j) % self.k

    def _table(self, f) -> Tuple[Fraction, ...]:
        if isinstance(f, Table):
            if len(f.values) != self.k:
                raise IncompatibleTarget(f"table has {len(f.values)} values, Z_{self.k} needs {self.k}")
            return f.values
        raise self._unsupported(f)

    def evaluate(self, f, x: int, r: int) -> Value:
        y = self._position(x, r)
        if isinstance(f, Character):
            return cmath.exp(2j * math.pi * f.m * y / self.k)
        return self._table(f)[y]

    def orbit_values(self, f, x: int, rs) -> np.ndarray:
        positions = (x + np.asarray(rs, dtype=np.int64) * self.j) % self.k
        if isinstance(f, Character):
            return _character_values(f.m, positions / self.k)
        table = np.array([float(v) for v in self._table(f)])
        return table[positions]

    def orbit(self, x: int) -> List[int]:
        """The T-orbit of x: x, x + g, x + 2g, ... with g = gcd(j, k)."""
        return [(x + t * self.orbit_step) % self.k for t in range(self.k // self.orbit_step)]

    def project(self, f, x: int) -> Value:
        orbit = self.orbit(x)
        if isinstance(f, Character):
            return sum(cmath.exp(2j * math.pi * f.m * y / self.k) for y in orbit) / len(orbit)
        table = self._table(f)
        return sum((table[y] for y in orbit), Fraction(0)) / len(orbit)

    def sample_point(self, seed: int) -> int:
        return int(counter_uniforms(seed, STREAM_TABLE, 1 << 32, (1 << 32) + 1)[0] * self.k)


class IrrationalRotation(TestSystem):
    """T x = x + beta mod 1 on [0, 1) with Lebesgue measure."""

    key = "rotation"

    def __init__(self, beta: CFStream):
        self.beta = beta

    def __repr__(self):
        return f"IrrationalRotation(beta={self.beta.source})"

    def evaluate(self, f, x: RealPoint, r: int) -> Value:
        if isinstance(f, IndicatorInterval):
            inside = rotation_in_interval(x, self.beta, r, Threshold.constant(f.lo),
                                          Threshold.constant(f.hi), closed=True)
            return Fraction(int(inside))
        if isinstance(f, Character):
            position = float(self.position(x, r))
            return cmath.exp(2j * math.pi * f.m * position)
        raise self._unsupported(f)

    def position(self, x: RealPoint, r: int, bits: int = 96) -> Fraction:
        """frac(x + r*beta) to within about 2**-bits."""
        x_lo, _ = x.enclosure(bits)
        b_lo, _ = self.beta.enclosure(bits + max(r, 1).bit_length())
        value = x_lo + r * b_lo
        return value - math.floor(value)

    def orbit_values(self, f, x: RealPoint, rs) -> np.ndarray:
        rs = np.asarray(rs, dtype=np.int64)
        if rs.size == 0:
            return np.zeros(0, dtype=complex if isinstance(f, Character) else float)
        if int(rs.max()) >= ROTATION_FAST_LIMIT:
            cast = complex if isinstance(f, Character) else float
            return np.array([cast(self.evaluate(f, x, int(r))) for r in rs])
        low, high = rotation_bounds(x, self.beta, rs)
        if isinstance(f, Character):
            positions = np.where(np.isfinite(low), low, 0.0)
            return _character_values(f.m, positions)
        if not isinstance(f, IndicatorInterval):
            raise self._unsupported(f)
        decided, inside = _indicator_fast(f, low, high)
        values = inside.astype(np.float64)
        for i in np.flatnonzero(~decided):
            values[i] = float(self.evaluate(f, x, int(rs[i])))
        return values

    def project(self, f, x) -> Value:
        if isinstance(f, Character):
            return Fraction(int(f.m == 0))
        if isinstance(f, IndicatorInterval):
            return f.hi - f.lo
        raise self._unsupported(f)

    def sample_point(self, seed: int) -> RealPoint:
        return RealPoint(make_digit_stream(2, DigitSource.seeded(), seed))


class PowerTarget(TestSystem):
    """T x = p x mod 1 on [0, 1) with Lebesgue measure; points are base-p DigitStreams."""

    key = "power"

    def __init__(self, p: int = 2):
        if p < 2:
            raise ValueError(f"p must be >= 2, got {p}")
        self.p = p
        self._width = int(52 / math.log2(p))

    def __repr__(self):
        return f"PowerTarget(p={self.p})"

    def _check_point(self, x: DigitStream) -> None:
        if x.base != self.p:
            raise IncompatibleTarget(f"point has base {x.base}, PowerTarget expects {self.p}")

    def evaluate(self, f, x: DigitStream, r: int) -> Value:
        self._check_point(x)
        if isinstance(f, IndicatorInterval):
            inside = tail_in_interval(x, r, Threshold.constant(f.lo), Threshold.constant(f.hi), closed=True)
            return Fraction(int(inside))
        if isinstance(f, Character):
            return cmath.exp(2j * math.pi * f.m * x.leading_float(r))
        raise self._unsupported(f)

    def orbit_values(self, f, x: DigitStream, rs) -> np.ndarray:
        self._check_point(x)
        rs = np.asarray(rs, dtype=np.int64)
        if rs.size == 0:
            return np.zeros(0, dtype=complex if isinstance(f, Character) else float)
        digits = x.window(0, int(rs.max()) + self._width)
        m = np.zeros(rs.size, dtype=np.int64)
        for j in range(self._width):
            m = m * self.p + digits[rs + j]
        scale = float(self.p ** self._width)
        low, high = m / scale, (m + 1) / scale
        if isinstance(f, Character):
            return _character_values(f.m, low)
        if not isinstance(f, IndicatorInterval):
            raise self._unsupported(f)
        decided, inside = _indicator_fast(f, low, high)
        values = inside.astype(np.float64)
        for i in np.flatnonzero(~decided):
            values[i] = float(self.evaluate(f, x, int(rs[i])))
        return values

    def project(self, f, x) -> Value:
        if isinstance(f, Character):
            return Fraction(int(f.m == 0))
        if isinstance(f, IndicatorInterval):
            return f.hi - f.lo
        raise self._unsupported(f)

    def sample_point(self, seed: int) -> DigitStream:
        return make_digit_stream(self.p, DigitSource.seeded(), seed)


class Product(TestSystem):
    """
    Product of systems acting coordinatewise; points are tuples. Ergodicity of
    a product is declared by the caller, not inferred.
    """

    key = "product"

    def __init__(self, factors: Sequence[TestSystem], ergodic: bool = False):
        if len(factors) < 2:
            raise ValueError("a product needs at least two factors")
        self.factors = tuple(factors)
        self.ergodic = ergodic

    def __repr__(self):
        return f"Product({', '.join(repr(f) for f in self.factors)}, ergodic={self.ergodic})"

    def _coordinate(self, f) -> Tuple[TestSystem, Observable, int]:
        if not isinstance(f, Coordinate):
            raise IncompatibleTarget("product systems evaluate only Coordinate observables")
        if not 0 <= f.index < len(self.factors):
            raise IncompatibleTarget(f"coordinate {f.index} outside the {len(self.factors)} factors")
        return self.factors[f.index], f.observable, f.index

    def evaluate(self, f, x, r: int) -> Value:
        factor, inner, index = self._coordinate(f)
        return factor.evaluate(inner, x[index], r)

    def orbit_values(self, f, x, rs) -> np.ndarray:
        factor, inner, index = self._coordinate(f)
        return factor.orbit_values(inner, x[index], rs)

    def project(self, f, x) -> Value:
        factor, inner, index = self._coordinate(f)
        return factor.project(inner, x[index])

    def sample_point(self, seed: int) -> tuple:
        return tuple(factor.sample_point(seed + i) for i, factor in enumerate(self.factors))


def get_test_system(name: str) -> Type[TestSystem]:
    current_module = sys.modules[__name__]
    for _, cls in inspect.getmembers(current_module, inspect.isclass):
        if issubclass(cls, TestSystem) and getattr(cls, "key", None) == name:
            return cls
    raise ValueError(f"No test system found for {name}")


# ---------------------------------------------------------------------------
# Averages


@dataclass
class AverageTrace:
    checkpoints: List[int]
    values: List[complex]
    projection: Value
    sequence: str = ""
    system: str = ""
    point: str = ""
    sup_norm: float = 1.0
    terms: List[int] = field(default_factory=list, repr=False)

    def gaps(self) -> List[float]:
        target = complex(self.projection)
        return [abs(v - target) for v in self.values]

    def rows(self) -> List[Tuple[int, float, float, float, float]]:
        target = complex(self.projection)
        return [
            (k, v.real, v.imag, target.real, abs(v - target))
            for k, v in zip(self.checkpoints, self.values)
        ]

    @property
    def final(self) -> complex:
        return self.values[-1]


def project_invariant(system: TestSystem, f: Observable, x) -> Value:
    return system.project(f, x)


def average_along(seq: ReturnSequence, system: TestSystem, f: Observable, x, K_max: int,
                  gamma=Fraction(11, 10)) -> AverageTrace:
    """
    A_K = (1/K) sum_{n <= K} f(T^{r_n} x) at the lacunary checkpoints
    floor(gamma**i) <= K_max and at K_max.
    """
    gamma = Fraction(gamma)
    if K_max < 1:
        raise ValueError("K_max must be >= 1")
    if not 1 < gamma <= 2:
        raise ValueError(f"gamma must lie in (1, 2], got {gamma}")
    terms = seq.first_terms(K_max)
    return average_of_terms(terms, system, f, x, gamma, sequence=repr(seq))


def average_of_terms(terms: Sequence[int], system: TestSystem, f: Observable, x, gamma,
                     sequence: str = "") -> AverageTrace:
    """The averaging step of ``average_along`` for an explicit prefix of terms."""
    K_max = len(terms)
    if K_max < 1:
        raise ValueError("no terms to average")
    checkpoints = lacunary_checkpoints(gamma, K_max)
    values = system.orbit_values(f, x, terms)
    total = CompensatedSum()
    averages = []
    done = 0
    for K in checkpoints:
        chunk = values[done:K]
        total.add(complex(math.fsum(np.real(chunk)), math.fsum(np.imag(chunk))))
        done = K
        averages.append(total.value / K)
    return AverageTrace(
        checkpoints=checkpoints,
        values=averages,
        projection=system.project(f, x),
        sequence=sequence,
        system=repr(system),
        point=describe_point(x),
        sup_norm=f.sup_norm,
        terms=list(terms),
    )


def describe_point(x) -> str:
    if isinstance(x, RealPoint):
        if x.stream is None:
            return str(x.offset)
        return f"seeded({x.stream.seed})+{x.offset}"
    if isinstance(x, DigitStream):
        return f"{x.generator.value}({x.seed})"
    if isinstance(x, tuple):
        return "(" + ", ".join(describe_point(p) for p in x) + ")"
    return str(x)


def residue_distribution(seq: ReturnSequence, m: int, K: int) -> List[Fraction]:
    """Frequencies of r_n mod m among the first K terms."""
    if m < 1 or K < 1:
        raise ValueError("m and K must be >= 1")
    counts = np.bincount(np.asarray(seq.first_terms(K), dtype=np.int64) % m, minlength=m)
    return [Fraction(int(c), K) for c in counts]
