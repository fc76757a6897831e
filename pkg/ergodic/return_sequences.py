"""
Streaming sparse integer sequences: return times r_n(y, E), the independent
Bernoulli baseline and deterministic comparison sequences.

Every sequence scans n = 1, 2, 3, ... in blocks, keeps the hits it has found
(strictly increasing) and the depth it has scanned, and answers prefix queries
from that cache.
"""
import bisect
import logging
from abc import ABC, abstractmethod
from enum import Enum
from fractions import Fraction
from typing import List, Optional, Tuple

import numpy as np

from ergodic.conf import lab_setting
from ergodic.errors import InsufficientTerms, ScanLimitExceeded
from ergodic.exact_arith import iroot
from ergodic.numerics import STREAM_BERNOULLI, counter_uniforms, loglog_slope
from ergodic.source_dynamics import PowerMap, SourceSystem
from ergodic.target_families import TargetFamily

logger = logging.getLogger(__name__)

FIRST_BLOCK = 64


class SequenceKind(str, Enum):
    RETURN_TIMES = "returns"
    BERNOULLI = "bernoulli"
    DETERMINISTIC = "deterministic"


class ReturnSequence(ABC):
    """
    Base class of the streamed sequences. ``counter`` is the number of hits
    among the scanned indices; ``emitted`` counts the terms handed out by
    ``next_return``.
    """

    kind: SequenceKind

    def __init__(self, horizon: Optional[int] = None):
        self.horizon = horizon if horizon is not None else lab_setting("SCAN_HORIZON")
        self._terms: List[int] = []
        self._scanned = 0
        self._emitted = 0
        self._block = FIRST_BLOCK

    @abstractmethod
    def _scan(self, start: int, stop: int) -> List[int]:
        """Hits in [start, stop), increasing."""
        raise NotImplementedError

    @property
    def reference_system(self) -> Optional[SourceSystem]:
        """The system whose measure defines W_N for this sequence."""
        return None

    @property
    def scanned(self) -> int:
        return self._scanned

    @property
    def counter(self) -> int:
        return len(self._terms)

    @property
    def emitted(self) -> int:
        return self._emitted

    @property
    def last_term(self) -> int:
        return self._terms[self._emitted - 1] if self._emitted else 0

    def _scan_to(self, stop: int) -> None:
        """Scan every n <= stop."""
        block_cap = lab_setting("BLOCK_SIZE")
        while self._scanned < stop:
            upper = min(stop, self._scanned + self._block)
            self._terms.extend(self._scan(self._scanned + 1, upper + 1))
            self._scanned = upper
            self._block = min(2 * self._block, block_cap)

    def _find_terms(self, count: int) -> None:
        """Scan until ``count`` terms are known, bounded by the scan horizon."""
        while len(self._terms) < count:
            if self._scanned >= self.horizon:
                logger.warning("%s: only %s terms below the scan horizon %s",
                               self, len(self._terms), self.horizon)
                raise ScanLimitExceeded(
                    f"found {len(self._terms)} of {count} terms below the scan horizon {self.horizon}",
                    terms=self._terms,
                    scanned=self._scanned,
                )
            self._scan_to(min(self.horizon, self._scanned + self._block))

    def next_return(self) -> int:
        self._find_terms(self._emitted + 1)
        self._emitted += 1
        return self._terms[self._emitted - 1]

    def term(self, i: int) -> int:
        """r_i, 1-based."""
        if i < 1:
            raise ValueError("terms are indexed from 1")
        self._find_terms(i)
        return self._terms[i - 1]

    def first_terms(self, count: int) -> List[int]:
        self._find_terms(count)
        return self._terms[:count]

    def returns_up_to(self, N: int) -> Tuple[List[int], int]:
        """All hits <= N and their count W_N(omega); N past the scan horizon raises ScanLimitExceeded."""
        if N < 1:
            raise ValueError("N must be >= 1")
        if N > self.horizon:
            self._scan_to(self.horizon)
            logger.warning("%s: hits up to %s requested past the scan horizon %s", self, N, self.horizon)
            raise ScanLimitExceeded(
                f"hits up to {N} requested, the scan horizon is {self.horizon}",
                terms=self._terms,
                scanned=self._scanned,
            )
        self._scan_to(N)
        end = bisect.bisect_right(self._terms, N)
        return self._terms[:end], end

    def count_up_to(self, N: int) -> int:
        return self.returns_up_to(N)[1]

    def indicator_array(self, N: int) -> np.ndarray:
        """X_n for n = 1..N as a float array (X_n at index n - 1)."""
        terms, _ = self.returns_up_to(N)
        out = np.zeros(N, dtype=np.float64)
        out[np.asarray(terms, dtype=np.int64) - 1] = 1.0
        return out


class ReturnTimes(ReturnSequence):
    """r_n(y, E): the n-th index k with S^k y in E_k."""

    kind = SequenceKind.RETURN_TIMES

    def __init__(self, system: SourceSystem, family: TargetFamily, point, seed: Optional[int] = None,
                 horizon: Optional[int] = None):
        super().__init__(horizon)
        family.check_compatible(system)
        self.system = system
        self.family = family
        self.point = point
        self.seed = seed

    @classmethod
    def from_seed(cls, system: SourceSystem, family: TargetFamily, seed: int,
                  horizon: Optional[int] = None) -> "ReturnTimes":
        return cls(system, family, system.sample_point(seed), seed=seed, horizon=horizon)

    def __repr__(self):
        return f"ReturnTimes({self.system!r}, {self.family!r}, seed={self.seed})"

    @property
    def reference_system(self) -> SourceSystem:
        return self.system

    def _scan(self, start: int, stop: int) -> List[int]:
        return self.system.scan_block(self.point, self.family, start, stop)

    def is_hit(self, n: int) -> bool:
        """Independent exact re-check of S^n y in E_n."""
        return self.system.contains(self.point, n, self.family.target_set(n))


class BernoulliSequence(ReturnSequence):
    """
    a_n(omega): the n-th index k with X_k = 1, where the X_k are independent
    with P(X_k = 1) = min(1, c * k**-a). X_k reads the k-th draw of a
    counter-based stream, so any window is addressable.
    """

    kind = SequenceKind.BERNOULLI

    def __init__(self, a, c=1, seed: int = 0, horizon: Optional[int] = None):
        super().__init__(horizon)
        self.a = Fraction(a)
        self.c = Fraction(c)
        if not 0 < self.a < 1:
            raise ValueError(f"a must lie in (0, 1), got {self.a}")
        if self.c <= 0:
            raise ValueError(f"c must be positive, got {self.c}")
        self.seed = seed

    def __repr__(self):
        return f"BernoulliSequence(a={self.a}, c={self.c}, seed={self.seed})"

    @property
    def reference_system(self) -> SourceSystem:
        return PowerMap(2)

    def probabilities(self, ns) -> np.ndarray:
        return np.minimum(1.0, float(self.c) * np.asarray(ns, dtype=np.float64) ** -float(self.a))

    def _scan(self, start: int, stop: int) -> List[int]:
        ns = np.arange(start, stop, dtype=np.int64)
        draws = counter_uniforms(self.seed, STREAM_BERNOULLI, start - 1, stop - 1)
        return ns[draws < self.probabilities(ns)].tolist()


class Formula(str, Enum):
    POWER = "power"
    SQUARE = "square"
    IDENTITY = "identity"


class DeterministicSequence(ReturnSequence):
    """floor(n ** (1 / (1 - a))), n**2 or n."""

    kind = SequenceKind.DETERMINISTIC

    def __init__(self, formula: Formula = Formula.IDENTITY, a=None, horizon: Optional[int] = None):
        super().__init__(horizon)
        self.formula = Formula(formula)
        if self.formula == Formula.POWER:
            if a is None or not 0 < Fraction(a) < 1:
                raise ValueError("the power formula needs a in (0, 1)")
            self.a = Fraction(a)
        else:
            self.a = None
        self._index = 1

    def __repr__(self):
        return f"DeterministicSequence({self.formula.value}, a={self.a})"

    def value(self, i: int) -> int:
        if self.formula == Formula.IDENTITY:
            return i
        if self.formula == Formula.SQUARE:
            return i * i
        u, v = self.a.numerator, self.a.denominator
        return iroot(i ** v, v - u)

    def _scan(self, start: int, stop: int) -> List[int]:
        out = []
        while True:
            r = self.value(self._index)
            if r >= stop:
                return out
            if r >= start:
                out.append(r)
            self._index += 1


def next_return(seq: ReturnSequence) -> int:
    return seq.next_return()


def returns_up_to(seq: ReturnSequence, N: int) -> Tuple[List[int], int]:
    return seq.returns_up_to(N)


def growth_exponent(seq: ReturnSequence, n_min: int, n_max: int) -> float:
    """Least-squares slope of log r_n against log n for n in [n_min, n_max]."""
    if n_min < 1 or n_max < 2 * n_min:
        raise ValueError(f"need 1 <= n_min and n_max >= 2 * n_min, got [{n_min}, {n_max}]")
    if n_max - n_min + 1 < 100:
        raise InsufficientTerms(f"[{n_min}, {n_max}] holds fewer than 100 terms")
    terms = seq.first_terms(n_max)[n_min - 1:]
    indices = np.arange(n_min, n_max + 1, dtype=np.float64)
    return loglog_slope(indices, np.asarray(terms, dtype=np.float64))
