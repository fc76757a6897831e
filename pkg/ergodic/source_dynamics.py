"""
Source systems (Y, nu, S) whose orbits generate return times.

Each SourceSystem knows how to sample a point, decide S^n y in E exactly
(``contains``), measure sets under its invariant measure, and scan a block
of indices for hits. Scans use a vectorised approximation with a certified
margin and fall back to the exact decision procedures of exact_arith for
the indices the approximation cannot settle.
"""
import bisect
import inspect
import logging
import math
import sys
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import TYPE_CHECKING, FrozenSet, List, Optional, Sequence, Tuple, Type, Union

import mpmath
import numpy as np
import sympy

from ergodic.errors import PrecisionExhausted
from ergodic.exact_arith import (
    CFKind,
    CFSource,
    CFStream,
    DigitSource,
    DigitStream,
    MP_LOCK,
    IntervalSet,
    RealPoint,
    Threshold,
    ThresholdKind,
    cf_tail_in_interval,
    decide_membership,
    make_digit_stream,
    rotation_in_interval,
    tail_in_interval,
)
from ergodic.conf import lab_setting
from ergodic.numerics import STREAM_MARKOV, counter_uniforms

if TYPE_CHECKING:
    from ergodic.target_families import TargetFamily

logger = logging.getLogger(__name__)

# certified margins of the vectorised paths
DIGIT_WINDOW_TOLERANCE = 2.0 ** -40
ROTATION_TOLERANCE = 2.0 ** -36
ROTATION_FAST_LIMIT = 1 << 27


def _certified_block(low: np.ndarray, high: np.ndarray, components, tol: float):
    """
    Decide value in union of (lo, hi) components for values known to lie in
    [low, high]. Returns (decided, member) masks; undecided entries need the
    exact path.
    """
    member = np.zeros(low.shape, dtype=bool)
    outside = np.ones(low.shape, dtype=bool)
    for lo, hi in components:
        member |= (low > lo + tol) & (high < hi - tol)
        outside &= (high < lo - tol) | (low > hi + tol)
    return member | outside, member


class SourceSystem(ABC):
    """
    Abstract source system. Descriptors are immutable; orbit state lives in
    the point (a stream or a sampled path).
    """

    measure_name = "lebesgue"

    @property
    def name(self) -> str:
        return getattr(self, "key", self.__class__.__name__.lower())

    @abstractmethod
    def sample_point(self, seed: int):
        """A point drawn from (a measure equivalent to) the invariant measure."""
        raise NotImplementedError

    @abstractmethod
    def contains(self, point, n: int, target: Optional[IntervalSet]) -> bool:
        """Exact truth of S^n point in target."""
        raise NotImplementedError

    @abstractmethod
    def measure(self, target: IntervalSet) -> Union[Fraction, float]:
        raise NotImplementedError

    def _value_bounds(self, point, ns: np.ndarray):
        """Float bounds [low, high] of the orbit values at ns, or None when no fast path applies."""
        return None

    _tolerance = DIGIT_WINDOW_TOLERANCE

    def scan_block(self, point, family: "TargetFamily", start: int, stop: int) -> List[int]:
        """Hits n in [start, stop) of S^n point in E_n, in increasing order."""
        if stop <= start:
            return []
        ns = np.arange(start, stop, dtype=np.int64)
        bounds = None
        try:
            bounds = self._value_bounds(point, ns)
        except PrecisionExhausted:
            bounds = None
        if bounds is None:
            return [n for n in range(start, stop) if self.contains(point, n, family.target_set(n))]
        low, high = bounds
        decided, member = _certified_block(low, high, family.endpoint_arrays(ns), self._tolerance)
        hits = ns[decided & member].tolist()
        pending = ns[~decided].tolist()
        if pending:
            logger.debug("%s: %s of %s indices in [%s, %s) need the exact path",
                         self.name, len(pending), stop - start, start, stop)
            hits.extend(n for n in pending if self.contains(point, n, family.target_set(n)))
            hits.sort()
        return hits


class PowerMap(SourceSystem):
    """S(y) = p*y mod 1 with Lebesgue measure; points are base-p DigitStreams."""

    key = "power"

    def __init__(self, p: int = 2):
        if p < 2:
            raise ValueError(f"PowerMap needs p >= 2, got {p}")
        self.p = p

    def __repr__(self):
        return f"PowerMap(p={self.p})"

    def sample_point(self, seed: int) -> DigitStream:
        return make_digit_stream(self.p, DigitSource.seeded(), seed)

    def contains(self, point: DigitStream, n: int, target: Optional[IntervalSet]) -> bool:
        if target is None:
            raise ValueError("PowerMap membership needs an interval set")
        return any(tail_in_interval(point, n, part.lo, part.hi) for part in target)

    def measure(self, target: IntervalSet) -> Union[Fraction, float]:
        return _lebesgue_measure(target)

    def _value_bounds(self, point: DigitStream, ns: np.ndarray):
        if point.base != self.p:
            raise ValueError(f"point has base {point.base}, system expects {self.p}")
        width = int(52 / math.log2(self.p))
        start, count = int(ns[0]), ns.size
        digits = point.window(start, start + count + width)
        m = np.zeros(count, dtype=np.int64)
        for j in range(width):
            m = m * self.p + digits[j:j + count]
        scale = float(self.p ** width)
        return m / scale, (m + 1) / scale


class GaussMap(SourceSystem):
    """G(y) = 1/y mod 1 with the Gauss measure dx / ((1 + x) ln 2); points are CFStreams."""

    key = "gauss"
    measure_name = "gauss"

    def __repr__(self):
        return "GaussMap()"

    def sample_point(self, seed: int) -> CFStream:
        return CFStream(CFSource.seeded(), seed)

    def contains(self, point: CFStream, n: int, target: Optional[IntervalSet]) -> bool:
        if target is None:
            raise ValueError("GaussMap membership needs an interval set")
        return any(cf_tail_in_interval(point, n, part.lo, part.hi) for part in target)

    def measure(self, target: IntervalSet) -> float:
        target.check_disjoint()
        with MP_LOCK, mpmath.workdps(40):
            total = mpmath.mpf(0)
            for part in target:
                total += _log2_one_plus(part.hi) - _log2_one_plus(part.lo)
            return float(total)


def _fraction_mpf(value: Fraction):
    return mpmath.mpf(value.numerator) / value.denominator


def _log2_one_plus(t: Threshold):
    """log2(1 + t), with the closed form s*log2(b) for t = b^s - 1."""
    if t.kind == ThresholdKind.GAUSS and t.scale == 1 and t.shift == 0:
        s = mpmath.power(t.n, -_fraction_mpf(t.a))
        return s * mpmath.log(_fraction_mpf(t.b), 2)
    exact = t.exact()
    if exact is None:
        lo, hi = t.enclosure(160)
        exact = (lo + hi) / 2
    return mpmath.log(1 + _fraction_mpf(exact), 2)


def _lebesgue_measure(target: IntervalSet) -> Union[Fraction, float]:
    target.check_disjoint()
    total = Fraction(0)
    inexact = None
    for part in target:
        lo, hi = part.lo.exact(), part.hi.exact()
        if lo is not None and hi is not None:
            total += hi - lo
        else:
            lo_lo, lo_hi = part.lo.enclosure(80)
            hi_lo, hi_hi = part.hi.enclosure(80)
            inexact = (inexact or 0.0) + float((hi_lo + hi_hi) / 2 - (lo_lo + lo_hi) / 2)
    return total if inexact is None else float(total) + inexact


class RotationMap(SourceSystem):
    """R(y) = y + alpha mod 1 with Lebesgue measure; points are RealPoints."""

    key = "rotation"

    def __init__(self, alpha: CFStream, quotient_bound: Optional[int] = None):
        if alpha.generator == CFKind.FIXED_LIST:
            raise ValueError("rotation number must be irrational (infinite continued fraction)")
        if quotient_bound is not None:
            source = alpha.source
            if source.kind != CFKind.PERIODIC or max(source.quotients + source.period) > quotient_bound:
                raise ValueError(f"partial quotients of alpha are not bounded by {quotient_bound}")
        self.alpha = alpha
        self.quotient_bound = quotient_bound

    def __repr__(self):
        return f"RotationMap(alpha={self.alpha.source})"

    @property
    def badly_approximable(self) -> bool:
        return self.quotient_bound is not None

    def sample_point(self, seed: int) -> RealPoint:
        return RealPoint(make_digit_stream(2, DigitSource.seeded(), seed))

    def contains(self, point: RealPoint, n: int, target: Optional[IntervalSet]) -> bool:
        if target is None:
            raise ValueError("RotationMap membership needs an interval set")
        return any(rotation_in_interval(point, self.alpha, n, part.lo, part.hi) for part in target)

    def measure(self, target: IntervalSet) -> Union[Fraction, float]:
        return _lebesgue_measure(target)

    _tolerance = ROTATION_TOLERANCE

    def _value_bounds(self, point: RealPoint, ns: np.ndarray):
        if int(ns[-1]) >= ROTATION_FAST_LIMIT:
            return None
        return rotation_bounds(point, self.alpha, ns)


def rotation_bounds(point: RealPoint, alpha: CFStream, ns: np.ndarray):
    """
    Float bounds on frac(x + n*alpha) from 64-bit fixed-point arithmetic,
    valid for n < 2**27. Both operands are rounded down, so the true value
    lies above the computed one by less than (n + 4) / 2**64; entries close
    enough to 1 to wrap past 0 get infinite bounds and stay undecided.
    """
    ns = np.asarray(ns, dtype=np.int64)
    low, _ = alpha.enclosure(130)
    alpha64 = math.floor(low * (1 << 64)) % (1 << 64)
    with np.errstate(over="ignore"):
        v = np.uint64(point.fixed64()) + ns.astype(np.uint64) * np.uint64(alpha64)
    base = v.astype(np.float64) / 2.0 ** 64
    high = base + (ns + 4) / 2.0 ** 64
    near_wrap = high > 1.0 - ROTATION_TOLERANCE
    return np.where(near_wrap, -np.inf, base), np.where(near_wrap, np.inf, high)


# ---------------------------------------------------------------------------
# Markov chains


def _as_fraction(value) -> Fraction:
    if isinstance(value, sympy.Basic):
        value = sympy.Rational(value)
        return Fraction(int(value.p), int(value.q))
    return Fraction(value)


@dataclass(frozen=True)
class MarkovChain:
    """
    Finite stationary Markov chain with an exact rational transition matrix.
    The stationary vector is the exact left null vector of P - I; the
    second-eigenvalue modulus is a float diagnostic.
    """

    transition_matrix: Tuple[Tuple[Fraction, ...], ...]
    require_spectral_gap: bool = True
    stationary: Tuple[Fraction, ...] = field(init=False, compare=False)
    second_eigenvalue_modulus: float = field(init=False, compare=False)

    def __post_init__(self):
        rows = tuple(tuple(_as_fraction(x) for x in row) for row in self.transition_matrix)
        object.__setattr__(self, "transition_matrix", rows)
        k = len(rows)
        if k < 2:
            raise ValueError("a Markov chain needs at least two states")
        if any(len(row) != k for row in rows):
            raise ValueError("transition matrix must be square")
        for i, row in enumerate(rows):
            if any(x < 0 for x in row):
                raise ValueError(f"row {i} has a negative entry")
            if sum(row) != 1:
                raise ValueError(f"row {i} sums to {sum(row)}, not 1")

        matrix = sympy.Matrix(k, k, lambda i, j: sympy.Rational(rows[i][j].numerator, rows[i][j].denominator))
        null = (matrix.T - sympy.eye(k)).nullspace()
        if len(null) != 1:
            raise ValueError("chain is not irreducible (stationary law is not unique)")
        vector = null[0]
        total = sum(vector)
        stationary = tuple(_as_fraction(x / total) for x in vector)
        if any(x < 0 for x in stationary):
            raise ValueError("stationary vector has negative entries")
        object.__setattr__(self, "stationary", stationary)

        floats = np.array([[float(x) for x in row] for row in rows])
        moduli = sorted(np.abs(np.linalg.eigvals(floats)), reverse=True)
        lam = float(moduli[1])
        object.__setattr__(self, "second_eigenvalue_modulus", lam)
        if self.require_spectral_gap and lam >= 1 - 1e-12:
            raise ValueError(
                "chain has no spectral gap (periodic or reducible); pass require_spectral_gap=False"
            )

    @classmethod
    def from_text(cls, text: str, require_spectral_gap: bool = True) -> "MarkovChain":
        """Parse ``"3/4,1/4;1/4,3/4"`` (rows separated by ';' or newlines)."""
        lines = [line.strip() for line in text.replace(";", "\n").splitlines()]
        rows = [tuple(Fraction(x.strip()) for x in line.split(",")) for line in lines if line and not line.startswith("#")]
        return cls(tuple(rows), require_spectral_gap)

    @property
    def state_count(self) -> int:
        return len(self.transition_matrix)

    def event_mass(self, event: FrozenSet[int]) -> Fraction:
        return sum((self.stationary[i] for i in event), Fraction(0))

    def to_text(self) -> str:
        return ";".join(",".join(str(x) for x in row) for row in self.transition_matrix)


def _matmul(left, right):
    k = len(right)
    return tuple(
        tuple(sum((row[t] * right[t][j] for t in range(k)), Fraction(0)) for j in range(k))
        for row in left
    )


@lru_cache(maxsize=4096)
def matrix_power(chain: MarkovChain, d: int) -> Tuple[Tuple[Fraction, ...], ...]:
    """P^d, exactly, cached per chain."""
    k = chain.state_count
    if d == 0:
        return tuple(tuple(Fraction(int(i == j)) for j in range(k)) for i in range(k))
    if d == 1:
        return chain.transition_matrix
    half = matrix_power(chain, d // 2)
    square = _matmul(half, half)
    return _matmul(square, chain.transition_matrix) if d % 2 else square


def check_event(chain: MarkovChain, event) -> FrozenSet[int]:
    event = frozenset(int(s) for s in event)
    if not event <= set(range(chain.state_count)):
        raise ValueError(f"event {sorted(event)} has states outside 0..{chain.state_count - 1}")
    return event


def joint_event_probability(chain: MarkovChain, times: Sequence[int], event) -> Fraction:
    """
    P(state_{n_1} in event, ..., state_{n_k} in event) for the stationary
    chain: the stationary row vector restricted to the event, then alternately
    multiplied by P^(gap) and restricted again.
    """
    times = list(times)
    if not times:
        raise ValueError("at least one time is needed")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ValueError(f"times must be strictly increasing, got {times}")
    event = check_event(chain, event)
    k = chain.state_count
    vector = [chain.stationary[i] if i in event else Fraction(0) for i in range(k)]
    for gap in (b - a for a, b in zip(times, times[1:])):
        power = matrix_power(chain, gap)
        vector = [
            sum((vector[t] * power[t][j] for t in range(k)), Fraction(0)) if j in event else Fraction(0)
            for j in range(k)
        ]
    return sum(vector, Fraction(0))


class MarkovPath:
    """
    Lazily sampled stationary path state_0, state_1, ...; state_0 is drawn
    from the stationary law unless ``start_state`` is given.
    """

    def __init__(self, chain: MarkovChain, seed: int, start_state: Optional[int] = None):
        if start_state is not None and not 0 <= start_state < chain.state_count:
            raise ValueError(f"start state {start_state} outside 0..{chain.state_count - 1}")
        self.chain = chain
        self.seed = seed
        self.start_state = start_state
        self._states = np.empty(0, dtype=np.int64)
        self._initial = np.cumsum([float(x) for x in chain.stationary]).tolist()
        self._rows = [np.cumsum([float(x) for x in row]).tolist() for row in chain.transition_matrix]

    @staticmethod
    def _pick(cumulative: List[float], u: float) -> int:
        return min(bisect.bisect_right(cumulative, u), len(cumulative) - 1)

    def ensure(self, length: int) -> None:
        have = self._states.size
        if length <= have:
            return
        target = max(length, 2 * have, 1024)
        draws = counter_uniforms(self.seed, STREAM_MARKOV, have, target).tolist()
        out = []
        previous = int(self._states[-1]) if have else None
        for u in draws:
            if previous is None:
                state = self.start_state if self.start_state is not None else self._pick(self._initial, u)
            else:
                state = self._pick(self._rows[previous], u)
            out.append(state)
            previous = state
        self._states = np.concatenate([self._states, np.asarray(out, dtype=np.int64)])

    def state(self, n: int) -> int:
        if n < 0:
            raise ValueError("path times start at 0")
        self.ensure(n + 1)
        return int(self._states[n])

    def states(self, start: int, stop: int) -> np.ndarray:
        self.ensure(stop)
        return self._states[start:stop]


class MarkovShift(SourceSystem):
    """
    Shift on paths of a stationary Markov chain. Interval targets are read
    through the symbol coding: state i sits at the midpoint (2i + 1) / (2k).
    """

    key = "markov"
    measure_name = "stationary"

    def __init__(self, chain: MarkovChain, symbol_event=frozenset({0}), start_state: Optional[int] = None):
        self.chain = chain
        self.symbol_event = check_event(chain, symbol_event)
        self.start_state = start_state

    def __repr__(self):
        return f"MarkovShift(chain={self.chain.to_text()}, event={sorted(self.symbol_event)})"

    def coding_point(self, state: int) -> Fraction:
        return Fraction(2 * state + 1, 2 * self.chain.state_count)

    def sample_point(self, seed: int) -> MarkovPath:
        return MarkovPath(self.chain, seed, self.start_state)

    def _state_in(self, state: int, target: Optional[IntervalSet]) -> bool:
        if target is None:
            return state in self.symbol_event
        mid = self.coding_point(state)
        return any(
            decide_membership(lambda _: (mid, mid), part.lo, part.hi, start=1,
                              cap=lab_setting("DIGIT_CAP"), label=f"state {state}")
            for part in target
        )

    def contains(self, point: MarkovPath, n: int, target: Optional[IntervalSet]) -> bool:
        return self._state_in(point.state(n), target)

    def measure(self, target: Optional[IntervalSet]) -> Fraction:
        if target is not None:
            target.check_disjoint()
        states = [s for s in range(self.chain.state_count) if self._state_in(s, target)]
        return self.chain.event_mass(frozenset(states))

    def _value_bounds(self, point: MarkovPath, ns: np.ndarray):
        mids = (2 * point.states(int(ns[0]), int(ns[-1]) + 1) + 1) / (2.0 * self.chain.state_count)
        return mids, mids


def get_source(name: str) -> Type[SourceSystem]:
    """
    Return the SourceSystem class registered under ``name`` (its ``key``).
    The class is returned, not an instance.
    """
    current_module = sys.modules[__name__]
    for _, cls in inspect.getmembers(current_module, inspect.isclass):
        if issubclass(cls, SourceSystem) and getattr(cls, "key", None) == name:
            return cls
    raise ValueError(f"No source system found for {name}")


def orbit_membership(system: SourceSystem, y, n: int, target: Optional[IntervalSet]) -> bool:
    """Exact truth of S^n y in target."""
    if n < 0:
        raise ValueError("orbit index must be non-negative")
    return system.contains(y, n, target)


def invariant_measure_of(system: SourceSystem, target: IntervalSet) -> Union[Fraction, float]:
    return system.measure(target)
