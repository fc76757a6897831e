"""
Shrinking target families E_1, E_2, ... with exact set geometry and closed-form measures.
"""
import inspect
import logging
import math
import sys
from abc import ABC, abstractmethod
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple, Type, Union

import numpy as np

from ergodic.conf import lab_setting
from ergodic.errors import IncompatibleTarget
from ergodic.exact_arith import Interval, IntervalSet, Threshold
from ergodic.numerics import CompensatedSum
from ergodic.source_dynamics import SourceSystem

logger = logging.getLogger(__name__)

Measure = Union[Fraction, float]


def _check_exponent(a) -> Fraction:
    a = Fraction(a)
    if not 0 < a < Fraction(1, 2):
        raise ValueError(f"a must lie in (0, 1/2), got {a}")
    return a


def _clipped_power(n: int, a: Fraction, c: Fraction) -> Threshold:
    """min(1, c * n**-a) as a Threshold."""
    if c ** a.denominator >= Fraction(n) ** a.numerator:
        return Threshold.constant(1)
    return Threshold.power(n, a, c)


def _as_measure(value: Threshold) -> Measure:
    exact = value.exact()
    return exact if exact is not None else float(value)


class TargetFamily(ABC):
    """A sequence of targets E_n, each a union of at most ``component_bound`` open intervals."""

    shrinking = True
    component_bound = 1
    a = Fraction(0)

    @property
    def name(self) -> str:
        return self.key

    @property
    def measure_constant(self) -> Optional[Fraction]:
        """c in nu(E_n) = c * n**-a, when the family has one."""
        return None

    @abstractmethod
    def target_set(self, n: int) -> IntervalSet:
        raise NotImplementedError

    @abstractmethod
    def endpoint_arrays(self, ns: np.ndarray) -> List[Tuple[np.ndarray, np.ndarray]]:
        """Float endpoints (lo, hi) per component for each n, accurate to a few ulps."""
        raise NotImplementedError

    def check_compatible(self, system: SourceSystem) -> None:
        if system.measure_name != "lebesgue":
            raise IncompatibleTarget(
                f"{self.key} targets are defined against Lebesgue measure, not {system.measure_name}"
            )

    def target_measure(self, n: int, system: SourceSystem) -> Measure:
        self.check_compatible(system)
        if n < 1:
            raise ValueError("targets are indexed from 1")
        return self._measure(n, system)

    def _measure(self, n: int, system: SourceSystem) -> Measure:
        return system.measure(self.target_set(n))

    @abstractmethod
    def measure_array(self, ns: np.ndarray, system: SourceSystem) -> np.ndarray:
        raise NotImplementedError

    def cumulative(self, system: SourceSystem) -> "CumulativeMeasure":
        return CumulativeMeasure(self, system)


class ShrinkingInterval(TargetFamily):
    """E_n = (0, min(1, c * n**-a))."""

    key = "shrinking"

    def __init__(self, c=1, a=Fraction(2, 5)):
        self.c = Fraction(c)
        if self.c <= 0:
            raise ValueError(f"c must be positive, got {self.c}")
        self.a = _check_exponent(a)

    def __repr__(self):
        return f"ShrinkingInterval(c={self.c}, a={self.a})"

    @property
    def measure_constant(self) -> Fraction:
        return self.c

    def target_set(self, n: int) -> IntervalSet:
        return IntervalSet((Interval(Threshold.constant(0), _clipped_power(n, self.a, self.c)),))

    def _measure(self, n: int, system: SourceSystem) -> Measure:
        return _as_measure(_clipped_power(n, self.a, self.c))

    def measure_array(self, ns: np.ndarray, system: SourceSystem) -> np.ndarray:
        self.check_compatible(system)
        return np.minimum(1.0, float(self.c) * np.asarray(ns, dtype=np.float64) ** -float(self.a))

    def endpoint_arrays(self, ns):
        hi = np.minimum(1.0, float(self.c) * np.asarray(ns, dtype=np.float64) ** -float(self.a))
        return [(np.zeros_like(hi), hi)]


class GaussShrinking(TargetFamily):
    """
    E_n = (0, b**(n**-a) - 1), whose Gauss measure is n**-a * log2(b).
    b is restricted to (1, 2] so that every E_n lies in (0, 1).
    """

    key = "gauss_shrinking"

    def __init__(self, b=2, a=Fraction(2, 5)):
        self.b = Fraction(b)
        if not 1 < self.b <= 2:
            raise ValueError(f"b must lie in (1, 2], got {self.b}")
        self.a = _check_exponent(a)

    def __repr__(self):
        return f"GaussShrinking(b={self.b}, a={self.a})"

    @property
    def measure_constant(self) -> float:
        return math.log2(self.b)

    def check_compatible(self, system: SourceSystem) -> None:
        if system.measure_name != "gauss":
            raise IncompatibleTarget(
                f"gauss_shrinking targets have measure n^-a*log2(b) only under the Gauss measure, "
                f"not {system.measure_name}"
            )

    def target_set(self, n: int) -> IntervalSet:
        return IntervalSet((Interval(Threshold.constant(0), Threshold.gauss(n, self.a, self.b)),))

    def measure_array(self, ns, system):
        self.check_compatible(system)
        return np.asarray(ns, dtype=np.float64) ** -float(self.a) * math.log2(self.b)

    def endpoint_arrays(self, ns):
        hi = np.expm1(np.asarray(ns, dtype=np.float64) ** -float(self.a) * math.log(self.b))
        return [(np.zeros_like(hi), hi)]


class CenteredBall(TargetFamily):
    """E_n = B(0, n**-a / 2) mod 1, i.e. (0, r) and (1 - r, 1) with r = n**-a / 2."""

    key = "ball"
    component_bound = 2

    def __init__(self, a=Fraction(2, 5)):
        self.a = _check_exponent(a)

    def __repr__(self):
        return f"CenteredBall(a={self.a})"

    @property
    def measure_constant(self) -> Fraction:
        return Fraction(1)

    def target_set(self, n: int) -> IntervalSet:
        radius = Threshold.half_power(n, self.a)
        return IntervalSet((
            Interval(Threshold.constant(0), radius),
            Interval(radius.affine(-1, 1), Threshold.constant(1)),
        ))

    def _measure(self, n: int, system: SourceSystem) -> Measure:
        return _as_measure(Threshold.power(n, self.a))

    def measure_array(self, ns, system):
        self.check_compatible(system)
        return np.asarray(ns, dtype=np.float64) ** -float(self.a)

    def endpoint_arrays(self, ns):
        r = np.asarray(ns, dtype=np.float64) ** -float(self.a) / 2
        return [(np.zeros_like(r), r), (1.0 - r, np.ones_like(r))]


class ConstantSet(TargetFamily):
    """E_n = E for every n, a fixed finite union of rational open intervals."""

    key = "constant"
    shrinking = False

    def __init__(self, intervals: Sequence[Tuple] = ((0, 1),)):
        parts = sorted((Fraction(lo), Fraction(hi)) for lo, hi in intervals)
        if not parts:
            raise ValueError("a constant target needs at least one interval")
        for lo, hi in parts:
            if not 0 <= lo < hi <= 1:
                raise ValueError(f"interval ({lo}, {hi}) is not a non-empty subinterval of [0, 1]")
        for (_, first_hi), (second_lo, _) in zip(parts, parts[1:]):
            if second_lo < first_hi:
                raise ValueError("constant target intervals overlap")
        self.intervals = tuple(parts)
        self.component_bound = len(parts)
        self._set = IntervalSet.of(*parts)

    def __repr__(self):
        return f"ConstantSet({', '.join(f'({lo}, {hi})' for lo, hi in self.intervals)})"

    def check_compatible(self, system: SourceSystem) -> None:
        return None

    def target_set(self, n: int) -> IntervalSet:
        return self._set

    def measure_array(self, ns, system):
        return np.full(np.asarray(ns).shape, float(system.measure(self._set)))

    def endpoint_arrays(self, ns):
        shape = np.asarray(ns).shape
        return [(np.full(shape, float(lo)), np.full(shape, float(hi))) for lo, hi in self.intervals]


class FiniteUnion(TargetFamily):
    """
    E_n = union of (s_i, s_i + c_i * n**-a): several shrinking intervals
    anchored at fixed left endpoints. The anchors must keep the pieces
    disjoint at n = 1, hence for every n.
    """

    key = "union"

    def __init__(self, components: Sequence[Tuple], a=Fraction(2, 5)):
        parts = sorted((Fraction(s), Fraction(c)) for s, c in components)
        if not parts:
            raise ValueError("a finite union needs at least one component")
        for s, c in parts:
            if c <= 0 or s < 0 or s + c > 1:
                raise ValueError(f"component ({s}, {s} + {c}) does not fit in [0, 1]")
        for (s1, c1), (s2, _) in zip(parts, parts[1:]):
            if s1 + c1 > s2:
                raise ValueError("finite-union components overlap")
        self.components = tuple(parts)
        self.component_bound = len(parts)
        self.a = _check_exponent(a)

    def __repr__(self):
        return f"FiniteUnion({list(self.components)}, a={self.a})"

    @property
    def measure_constant(self) -> Fraction:
        return sum((c for _, c in self.components), Fraction(0))

    def target_set(self, n: int) -> IntervalSet:
        return IntervalSet(tuple(
            Interval(Threshold.constant(s), Threshold.power(n, self.a, c).affine(1, s))
            for s, c in self.components
        ))

    def _measure(self, n: int, system: SourceSystem) -> Measure:
        return _as_measure(Threshold.power(n, self.a, self.measure_constant))

    def measure_array(self, ns, system):
        self.check_compatible(system)
        return float(self.measure_constant) * np.asarray(ns, dtype=np.float64) ** -float(self.a)

    def endpoint_arrays(self, ns):
        decay = np.asarray(ns, dtype=np.float64) ** -float(self.a)
        return [(np.full(decay.shape, float(s)), float(s) + float(c) * decay) for s, c in self.components]


def get_family(name: str) -> Type[TargetFamily]:
    current_module = sys.modules[__name__]
    for _, cls in inspect.getmembers(current_module, inspect.isclass):
        if issubclass(cls, TargetFamily) and getattr(cls, "key", None) == name:
            return cls
    raise ValueError(f"No target family found for {name}")


class CumulativeMeasure:
    """
    W_N = sum of nu(E_n) for n <= N, extended incrementally. Queries at
    increasing N only add the new terms; a smaller N restarts the sum.
    """

    def __init__(self, family: TargetFamily, system: SourceSystem):
        family.check_compatible(system)
        self.family = family
        self.system = system
        self._upto = 0
        self._total = CompensatedSum()

    def value(self, N: int) -> float:
        if N < 1:
            raise ValueError("N must be >= 1")
        if N < self._upto:
            logger.debug("W_N queried at %s below %s, restarting the sum", N, self._upto)
            self._upto = 0
            self._total = CompensatedSum()
        block = lab_setting("BLOCK_SIZE")
        while self._upto < N:
            stop = min(N, self._upto + block)
            ns = np.arange(self._upto + 1, stop + 1, dtype=np.float64)
            self._total.add(math.fsum(self.family.measure_array(ns, self.system)))
            self._upto = stop
        return self._total.real

    def values_at(self, checkpoints: Sequence[int]) -> List[float]:
        return [self.value(N) for N in sorted(checkpoints)]


def target_set(family: TargetFamily, n: int) -> IntervalSet:
    if n < 1:
        raise ValueError("targets are indexed from 1")
    return family.target_set(n)


def target_measure(family: TargetFamily, n: int, system: SourceSystem) -> Measure:
    return family.target_measure(n, system)


def cumulative_expected(family: TargetFamily, N: int, system: SourceSystem) -> float:
    return CumulativeMeasure(family, system).value(N)
