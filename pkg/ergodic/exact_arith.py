"""
Lazy, precision-escalating exact arithmetic for points of [0, 1].

A point of the doubling (or x p) map is a DigitStream: S^n y is the tail
d_{n+1} d_{n+2} ... of its digits. A point of the Gauss map is a CFStream:
G^n y is the tail [0; a_{n+1}, a_{n+2}, ...] of its partial quotients. Rotation
orbits are handled through RealPoint enclosures. Membership of an orbit point
in an open interval with Threshold endpoints is decided by extending digits
and threshold precision until the enclosures separate; undecided comparisons
past the configured cap raise PrecisionExhausted.
"""
import logging
import math
import threading
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterator, List, Optional, Sequence, Tuple

import mpmath
import numpy as np
from mpmath import libmp

from ergodic.conf import lab_setting
from ergodic.errors import PrecisionExhausted
from ergodic.numerics import GENERATOR_BLOCK, STREAM_DIGITS, philox_generator

logger = logging.getLogger(__name__)

Enclosure = Tuple[Fraction, Fraction]

# mpmath keeps its working precision in process-wide contexts
MP_LOCK = threading.RLock()

# mean number of bits consumed per partial quotient (Levy's constant / ln 2)
BITS_PER_QUOTIENT = 3.42


def iroot(m: int, k: int) -> int:
    """floor(m ** (1/k)) for integers m >= 0, k >= 1."""
    if m < 0 or k < 1:
        raise ValueError("iroot needs m >= 0 and k >= 1")
    if m < 2 or k == 1:
        return m
    x = 1 << -(-m.bit_length() // k)
    while True:
        y = ((k - 1) * x + m // x ** (k - 1)) // k
        if y >= x:
            return x
        x = y


def _exact_root(r: Fraction, k: int) -> Optional[Fraction]:
    """r ** (1/k) when it is rational, else None."""
    num, den = iroot(r.numerator, k), iroot(r.denominator, k)
    if num ** k == r.numerator and den ** k == r.denominator:
        return Fraction(num, den)
    return None


def _width_bits(lo: Fraction, hi: Fraction, fallback: int) -> int:
    width = hi - lo
    if width <= 0:
        return fallback
    return max(32, (width.denominator // max(width.numerator, 1)).bit_length() + 2)


# ---------------------------------------------------------------------------
# Thresholds


class ThresholdKind(str, Enum):
    POWER = "c*n^-a"
    GAUSS = "b^(n^-a)-1"
    HALF_POWER = "n^-a/2"
    CONSTANT = "constant"


@lru_cache(maxsize=65536)
def _power_exact(c: Fraction, n: int, a: Fraction) -> Optional[Fraction]:
    u, v = a.numerator, a.denominator
    return _exact_root(c ** v / Fraction(n) ** u, v)


@lru_cache(maxsize=65536)
def _power_floor(c: Fraction, n: int, a: Fraction, bits: int) -> int:
    """floor(c * n**-a * 2**bits), exactly."""
    u, v = a.numerator, a.denominator
    r = c ** v / Fraction(n) ** u
    return iroot((r.numerator << (bits * v)) // r.denominator, v)


@lru_cache(maxsize=65536)
def _gauss_exact(b: Fraction, n: int, a: Fraction) -> Optional[Fraction]:
    s = _power_exact(Fraction(1), n, a)
    if s is None:
        return None
    root = _exact_root(b ** s.numerator, s.denominator)
    return None if root is None else root - 1


def _iv_bounds(x) -> Enclosure:
    a, b = x._mpi_
    return Fraction(*libmp.to_rational(a)), Fraction(*libmp.to_rational(b))


@lru_cache(maxsize=65536)
def _gauss_floor(b: Fraction, n: int, a: Fraction, bits: int) -> int:
    """
    floor((b ** n**-a - 1) * 2**bits). The value is irrational here (the
    rational case is caught by _gauss_exact), so refinement terminates.
    """
    iv = mpmath.iv
    prec = bits + 32
    limit = bits + lab_setting("DIGIT_CAP")
    with MP_LOCK:
        saved = iv.prec
        try:
            while prec <= limit:
                iv.prec = prec
                k = _power_floor(Fraction(1), n, a, prec)
                log_b = iv.ln(iv.mpf(b.numerator) / b.denominator)
                low = iv.exp((iv.mpf(k) / iv.mpf(2) ** prec) * log_b) - 1
                high = iv.exp((iv.mpf(k + 1) / iv.mpf(2) ** prec) * log_b) - 1
                lo, _ = _iv_bounds(low)
                _, hi = _iv_bounds(high)
                k_lo, k_hi = math.floor(lo * 2 ** bits), math.floor(hi * 2 ** bits)
                if k_lo == k_hi:
                    return k_lo
                logger.debug("gauss threshold b=%s n=%s a=%s: raising precision past %s", b, n, a, prec)
                prec *= 2
        finally:
            iv.prec = saved
    raise PrecisionExhausted(f"b^(n^-a)-1 undecided at {bits} bits (b={b}, n={n}, a={a})")


@dataclass(frozen=True)
class Threshold:
    """
    shift + scale * base, where base is one of c*n^-a, b^(n^-a)-1, n^-a/2 or a
    rational constant. Enclosures at precision P are the dyadic cells
    [k, k+1] / 2**P around the base value (or the exact value when it is
    rational), pushed through the affine map; cells at higher precision sit
    inside cells at lower precision.
    """

    kind: ThresholdKind
    n: int = 1
    a: Fraction = Fraction(0)
    c: Fraction = Fraction(1)
    b: Fraction = Fraction(2)
    value: Fraction = Fraction(0)
    scale: Fraction = Fraction(1)
    shift: Fraction = Fraction(0)
    precision_bits: int = 64

    def __post_init__(self):
        for name in ("a", "c", "b", "value", "scale", "shift"):
            object.__setattr__(self, name, Fraction(getattr(self, name)))
        if self.kind == ThresholdKind.CONSTANT:
            return
        if self.n < 1:
            raise ValueError(f"threshold index n must be >= 1, got {self.n}")
        if not 0 < self.a < 1:
            raise ValueError(f"exponent a must lie in (0, 1), got {self.a}")
        if self.kind == ThresholdKind.POWER and self.c <= 0:
            raise ValueError(f"c must be positive, got {self.c}")
        if self.kind == ThresholdKind.GAUSS and self.b <= 1:
            raise ValueError(f"b must exceed 1, got {self.b}")
        if self.scale == 0:
            raise ValueError("scale must be non-zero")

    @classmethod
    def constant(cls, value) -> "Threshold":
        return cls(ThresholdKind.CONSTANT, value=Fraction(value))

    @classmethod
    def power(cls, n: int, a, c=1) -> "Threshold":
        return cls(ThresholdKind.POWER, n=n, a=Fraction(a), c=Fraction(c))

    @classmethod
    def gauss(cls, n: int, a, b) -> "Threshold":
        return cls(ThresholdKind.GAUSS, n=n, a=Fraction(a), b=Fraction(b))

    @classmethod
    def half_power(cls, n: int, a) -> "Threshold":
        return cls(ThresholdKind.HALF_POWER, n=n, a=Fraction(a))

    def affine(self, scale, shift) -> "Threshold":
        """shift + scale * self, composed with the existing affine part."""
        scale, shift = Fraction(scale), Fraction(shift)
        return Threshold(self.kind, self.n, self.a, self.c, self.b, self.value,
                         scale * self.scale, shift + scale * self.shift, self.precision_bits)

    def _base_exact(self) -> Optional[Fraction]:
        if self.kind == ThresholdKind.CONSTANT:
            return self.value
        if self.kind == ThresholdKind.POWER:
            return _power_exact(self.c, self.n, self.a)
        if self.kind == ThresholdKind.HALF_POWER:
            return _power_exact(Fraction(1, 2), self.n, self.a)
        return _gauss_exact(self.b, self.n, self.a)

    def _base_floor(self, bits: int) -> int:
        if self.kind == ThresholdKind.POWER:
            return _power_floor(self.c, self.n, self.a, bits)
        if self.kind == ThresholdKind.HALF_POWER:
            return _power_floor(Fraction(1, 2), self.n, self.a, bits)
        return _gauss_floor(self.b, self.n, self.a, bits)

    def exact(self) -> Optional[Fraction]:
        base = self._base_exact()
        return None if base is None else self.shift + self.scale * base

    def enclosure(self, precision_bits: Optional[int] = None) -> Enclosure:
        bits = self.precision_bits if precision_bits is None else precision_bits
        if bits < 1:
            raise ValueError("precision must be at least one bit")
        exact = self.exact()
        if exact is not None:
            return exact, exact
        magnitude = abs(self.scale)
        extra = max(0, (magnitude.numerator // magnitude.denominator).bit_length() + 1)
        q = bits + extra
        k = self._base_floor(q)
        lo = self.shift + self.scale * Fraction(k, 1 << q)
        hi = self.shift + self.scale * Fraction(k + 1, 1 << q)
        return (lo, hi) if lo <= hi else (hi, lo)

    def __float__(self) -> float:
        lo, hi = self.enclosure(64)
        return float((lo + hi) / 2)


def threshold_eval(expr: Threshold, precision_bits: int) -> Enclosure:
    """Rational enclosure of ``expr`` of width <= 2**-precision_bits."""
    return expr.enclosure(precision_bits)


def threshold_less(left: Threshold, right: Threshold) -> bool:
    """left < right, decided exactly; equal expressions compare as not less."""
    if left == right:
        return False
    le, re = left.exact(), right.exact()
    if le is not None and re is not None:
        return le < re
    bits = 64
    while bits <= lab_setting("DIGIT_CAP"):
        l_lo, l_hi = left.enclosure(bits)
        r_lo, r_hi = right.enclosure(bits)
        if l_hi < r_lo:
            return True
        if l_lo >= r_hi:
            return False
        bits *= 2
    raise PrecisionExhausted(f"could not order thresholds {left} and {right}")


@dataclass(frozen=True)
class Interval:
    """Open interval (lo, hi) with Threshold endpoints."""

    lo: Threshold
    hi: Threshold

    @classmethod
    def of(cls, lo, hi) -> "Interval":
        lo = lo if isinstance(lo, Threshold) else Threshold.constant(lo)
        hi = hi if isinstance(hi, Threshold) else Threshold.constant(hi)
        return cls(lo, hi)


@dataclass(frozen=True)
class IntervalSet:
    components: Tuple[Interval, ...] = ()

    @classmethod
    def of(cls, *pairs) -> "IntervalSet":
        return cls(tuple(p if isinstance(p, Interval) else Interval.of(*p) for p in pairs))

    def __iter__(self) -> Iterator[Interval]:
        return iter(self.components)

    def __len__(self) -> int:
        return len(self.components)

    def check_disjoint(self) -> None:
        items = list(self.components)
        for i, first in enumerate(items):
            for second in items[i + 1:]:
                if threshold_less(first.lo, second.hi) and threshold_less(second.lo, first.hi):
                    raise ValueError(f"interval components overlap: {first} and {second}")


# ---------------------------------------------------------------------------
# Membership decisions


def decide_membership(
    enclose: Callable[[int], Enclosure],
    lo: Threshold,
    hi: Threshold,
    start: int,
    cap: int,
    closed: bool = False,
    label: str = "",
) -> bool:
    """
    Decide lo < v < hi (or lo <= v <= hi when ``closed``) for a value v known
    through ``enclose(budget)``, a closed enclosure that tightens as the budget
    grows. The budget doubles per retry up to ``cap``.
    """
    budget = max(1, min(start, cap))
    while True:
        low, high = enclose(budget)
        bits = _width_bits(low, high, fallback=64 + 4 * budget)
        lo_l, lo_h = lo.enclosure(bits)
        hi_l, hi_h = hi.enclosure(bits)
        if closed:
            if high < lo_l or low > hi_h:
                return False
            if low >= lo_h and high <= hi_l:
                return True
        else:
            if high <= lo_l or low >= hi_h:
                return False
            if low > lo_h and high < hi_l:
                return True
        if budget >= cap:
            raise PrecisionExhausted(
                f"membership of {label or 'value'} in ({lo}, {hi}) undecided at budget {budget}"
            )
        logger.debug("escalating %s from budget %s", label or "membership", budget)
        budget = min(2 * budget, cap)


# ---------------------------------------------------------------------------
# Digit streams


class DigitKind(str, Enum):
    SEEDED_RANDOM = "seeded-random"
    FIXED_LIST = "fixed-list"
    EVENTUALLY_PERIODIC = "eventually-periodic"
    BIG_REAL = "big-real"


@dataclass(frozen=True)
class DigitSource:
    kind: DigitKind
    digits: Tuple[int, ...] = ()
    period: Tuple[int, ...] = ()
    value: Optional[Fraction] = None

    @classmethod
    def seeded(cls) -> "DigitSource":
        return cls(DigitKind.SEEDED_RANDOM)

    @classmethod
    def fixed(cls, digits: Sequence[int]) -> "DigitSource":
        return cls(DigitKind.FIXED_LIST, digits=tuple(int(d) for d in digits))

    @classmethod
    def periodic(cls, prefix: Sequence[int], period: Sequence[int]) -> "DigitSource":
        if not period:
            raise ValueError("an eventually periodic source needs a non-empty period")
        return cls(DigitKind.EVENTUALLY_PERIODIC, digits=tuple(prefix), period=tuple(period))

    @classmethod
    def big_real(cls, value) -> "DigitSource":
        value = Fraction(value)
        if not 0 <= value < 1:
            raise ValueError(f"big-real value must lie in [0, 1), got {value}")
        return cls(DigitKind.BIG_REAL, value=value)


def thue_morse_digits(length: int) -> List[int]:
    return [bin(k).count("1") % 2 for k in range(length)]


class _DigitCache:
    """Materialized digits d_1, d_2, ... shared by a stream and its shifted views."""

    def __init__(self, base: int, source: DigitSource, seed: int):
        self.base = base
        self.source = source
        self.seed = seed
        self.array = np.empty(0, dtype=np.int64)
        self._remainder = source.value if source.kind == DigitKind.BIG_REAL else None

    def ensure(self, length: int) -> None:
        have = self.array.size
        if length <= have:
            return
        kind = self.source.kind
        target = max(length, 2 * have, 64)
        if kind == DigitKind.FIXED_LIST:
            # a finite list is the finite expansion: zeros follow
            listed = self.source.digits
            fresh = np.zeros(target - have, dtype=np.int64)
            if have < len(listed):
                head = np.asarray(listed[have:target], dtype=np.int64)
                fresh[:head.size] = head
        elif kind == DigitKind.SEEDED_RANDOM:
            first = have // GENERATOR_BLOCK
            last = (target - 1) // GENERATOR_BLOCK
            blocks = [
                philox_generator(self.seed, STREAM_DIGITS, block).integers(
                    0, self.base, GENERATOR_BLOCK, dtype=np.int64
                )
                for block in range(first, last + 1)
            ]
            fresh = np.concatenate(blocks)[have - first * GENERATOR_BLOCK:]
        elif kind == DigitKind.EVENTUALLY_PERIODIC:
            prefix, period = self.source.digits, self.source.period
            fresh = np.fromiter(
                (prefix[k] if k < len(prefix) else period[(k - len(prefix)) % len(period)]
                 for k in range(have, target)),
                dtype=np.int64,
                count=target - have,
            )
        else:
            out = []
            r = self._remainder
            for _ in range(target - have):
                r *= self.base
                d = r.numerator // r.denominator
                out.append(d)
                r -= d
            self._remainder = r
            fresh = np.asarray(out, dtype=np.int64)
        self.array = np.concatenate([self.array, fresh])


class DigitStream:
    """
    Base-p digits of a point y of [0, 1]. Digits are materialized lazily; a
    stream is single-writer, and ``shifted`` views share the parent's cache.
    """

    def __init__(self, base: int, source: DigitSource, seed: int = 0):
        if base < 2:
            raise ValueError(f"base must be at least 2, got {base}")
        if seed < 0 or seed >= 1 << 64:
            raise ValueError(f"seed must be an unsigned 64-bit integer, got {seed}")
        bad = [d for d in source.digits + source.period if not 0 <= d < base]
        if bad:
            raise ValueError(f"digits {bad[:5]} out of range for base {base}")
        self._cache = _DigitCache(base, source, seed)
        self.offset = 0

    @property
    def base(self) -> int:
        return self._cache.base

    @property
    def source(self) -> DigitSource:
        return self._cache.source

    @property
    def seed(self) -> int:
        return self._cache.seed

    @property
    def generator(self) -> DigitKind:
        return self._cache.source.kind

    @property
    def materialized_len(self) -> int:
        return max(0, self._cache.array.size - self.offset)

    def shifted(self, m: int) -> "DigitStream":
        if m < 0:
            raise ValueError("shift must be non-negative")
        view = object.__new__(DigitStream)
        view._cache = self._cache
        view.offset = self.offset + m
        return view

    def ensure(self, length: int) -> None:
        self._cache.ensure(self.offset + length)

    def digit(self, k: int) -> int:
        """d_k, 1-based."""
        if k < 1:
            raise ValueError("digits are indexed from 1")
        self.ensure(k)
        return int(self._cache.array[self.offset + k - 1])

    def window(self, start: int, stop: int) -> np.ndarray:
        """Digits d_{start+1}, ..., d_stop as an int64 array (read-only view)."""
        self.ensure(stop)
        view = self._cache.array[self.offset + start:self.offset + stop]
        view.flags.writeable = False
        return view

    def prefix(self, count: int) -> List[int]:
        return [int(d) for d in self.window(0, count)]

    def tail_integer(self, shift: int, count: int) -> int:
        digits = self.window(shift, shift + count)
        if self.base == 2:
            pad = -count % 8
            packed = np.packbits(digits.astype(np.uint8))
            return int.from_bytes(packed.tobytes(), "big") >> pad
        m = 0
        base = self.base
        for d in digits.tolist():
            m = m * base + d
        return m

    def value_enclosure(self, shift: int, count: int) -> Enclosure:
        """Closed enclosure of the tail real 0.d_{shift+1} d_{shift+2} ... from ``count`` digits."""
        m = self.tail_integer(shift, count)
        scale = self.base ** count
        return Fraction(m, scale), Fraction(m + 1, scale)

    def exact_tail(self, shift: int) -> Optional[Fraction]:
        """The tail real exactly, when the stream describes a rational number."""
        source = self.source
        shift += self.offset
        if source.kind == DigitKind.BIG_REAL:
            scaled = source.value * self.base ** shift
            return scaled - (scaled.numerator // scaled.denominator)
        if source.kind == DigitKind.FIXED_LIST:
            value = Fraction(0)
            for d in reversed(source.digits[shift:]):
                value = (d + value) / self.base
            return value
        if source.kind == DigitKind.EVENTUALLY_PERIODIC:
            prefix, period = source.digits, source.period
            base = self.base
            if shift >= len(prefix):
                phase = (shift - len(prefix)) % len(period)
                rotated = period[phase:] + period[:phase]
                head = []
            else:
                head = list(prefix[shift:])
                rotated = period
            repeat = 0
            for d in rotated:
                repeat = repeat * base + d
            value = Fraction(repeat, base ** len(rotated) - 1)
            for d in reversed(head):
                value = (d + value) / base
            return value
        return None

    def leading_float(self, shift: int = 0) -> float:
        count = max(1, int(52 / math.log2(self.base)))
        low, _ = self.value_enclosure(shift, count)
        return float(low)


def make_digit_stream(base: int, source: DigitSource, seed: int = 0) -> DigitStream:
    return DigitStream(base, source, seed)


def tail_in_interval(stream: DigitStream, shift: int, lo: Threshold, hi: Threshold,
                     closed: bool = False) -> bool:
    """
    True iff the tail real 0.d_{shift+1} d_{shift+2} ... lies in (lo, hi).
    Exact endpoint hits count as outside the open interval.
    """
    if shift < 0:
        raise ValueError("shift must be non-negative")
    exact = stream.exact_tail(shift)

    def enclose(count: int) -> Enclosure:
        if exact is not None:
            return exact, exact
        return stream.value_enclosure(shift, count)

    return decide_membership(enclose, lo, hi, start=64, cap=lab_setting("DIGIT_CAP"),
                             closed=closed, label=f"digit tail at shift {shift}")


# ---------------------------------------------------------------------------
# Continued-fraction streams


class CFKind(str, Enum):
    SEEDED = "seeded-from-uniform-real"
    FIXED_LIST = "fixed-list"
    PERIODIC = "periodic"


@dataclass(frozen=True)
class CFSource:
    kind: CFKind
    quotients: Tuple[int, ...] = ()
    period: Tuple[int, ...] = ()

    @classmethod
    def seeded(cls) -> "CFSource":
        return cls(CFKind.SEEDED)

    @classmethod
    def fixed(cls, quotients: Sequence[int]) -> "CFSource":
        return cls(CFKind.FIXED_LIST, quotients=tuple(int(q) for q in quotients))

    @classmethod
    def periodic(cls, prefix: Sequence[int], period: Sequence[int]) -> "CFSource":
        if not period:
            raise ValueError("a periodic continued fraction needs a non-empty period")
        return cls(CFKind.PERIODIC, quotients=tuple(prefix), period=tuple(period))

    @classmethod
    def golden(cls) -> "CFSource":
        """[0; 1, 1, 1, ...] = (sqrt(5) - 1) / 2."""
        return cls.periodic((), (1,))


def _quotients_of_interval(low: Tuple[int, int], high: Tuple[int, int]) -> List[int]:
    """
    Partial quotients shared by every real of [x1/y1, x2/y2]: each step keeps
    a quotient only when both endpoints sit in the same cylinder.
    """
    (x1, y1), (x2, y2) = low, high
    out = []
    while x1 > 0 and x2 > 0:
        a = y2 // x2
        if y1 // x1 != a:
            break
        out.append(a)
        x1, y1, x2, y2 = y2 - a * x2, x2, y1 - a * x1, x1
    return out


class CFStream:
    """
    Partial quotients a_1, a_2, ... of y = [0; a_1, a_2, ...], extended lazily,
    with cached convergents p_k / q_k.
    """

    def __init__(self, source: CFSource, seed: int = 0):
        bad = [q for q in source.quotients + source.period if q < 1]
        if bad:
            raise ValueError(f"partial quotients must be >= 1, got {bad[:5]}")
        self.source = source
        self.seed = seed
        self._quotients: List[int] = []
        self._p = [1, 0]
        self._q = [0, 1]
        self._bits = None
        self._digits = make_digit_stream(2, DigitSource.seeded(), seed) if source.kind == CFKind.SEEDED else None

    @property
    def generator(self) -> CFKind:
        return self.source.kind

    @property
    def partial_quotients(self) -> Tuple[int, ...]:
        return tuple(self._quotients)

    @property
    def materialized_len(self) -> int:
        return len(self._quotients)

    @property
    def convergents(self) -> List[Tuple[int, int]]:
        return list(zip(self._p[2:], self._q[2:]))

    def _sample(self, count: int) -> List[int]:
        bits = max(lab_setting("CF_SAMPLER_BITS"), math.ceil(2 * BITS_PER_QUOTIENT * count))
        if self._bits is not None:
            bits = max(bits, 2 * self._bits)
        cap = lab_setting("CF_SAMPLER_MAX_BITS")
        while True:
            if bits > cap:
                raise PrecisionExhausted(f"{count} partial quotients need more than {cap} sample bits")
            u = self._digits.tail_integer(0, bits)
            found = _quotients_of_interval((u, 1 << bits), (u + 1, 1 << bits))
            self._bits = bits
            if len(found) >= count:
                return found
            logger.debug("CF sampler: %s quotients from %s bits, doubling", len(found), bits)
            bits *= 2

    def ensure(self, count: int) -> None:
        have = len(self._quotients)
        if count <= have:
            return
        source = self.source
        if source.kind == CFKind.FIXED_LIST:
            if count > len(source.quotients):
                raise PrecisionExhausted(
                    f"fixed-list continued fraction holds {len(source.quotients)} quotients, {count} requested"
                )
            fresh = list(source.quotients[have:count])
        elif source.kind == CFKind.PERIODIC:
            prefix, period = source.quotients, source.period
            fresh = [
                prefix[k] if k < len(prefix) else period[(k - len(prefix)) % len(period)]
                for k in range(have, max(count, 2 * have))
            ]
        else:
            fresh = self._sample(max(count, 2 * have))[have:]
        for a in fresh:
            self._quotients.append(a)
            self._p.append(a * self._p[-1] + self._p[-2])
            self._q.append(a * self._q[-1] + self._q[-2])

    def quotient(self, k: int) -> int:
        """a_k, 1-based."""
        if k < 1:
            raise ValueError("partial quotients are indexed from 1")
        self.ensure(k)
        return self._quotients[k - 1]

    def convergent(self, k: int) -> Tuple[int, int]:
        """(p_k, q_k); k = 0 gives 0/1."""
        if k > 0:
            self.ensure(k)
        return self._p[k + 1], self._q[k + 1]

    def enclosure(self, bits: int) -> Enclosure:
        """Rational bounds strictly around y, of width <= 2**-bits."""
        k = 1
        while True:
            self.ensure(k)
            p, q = self._p[k + 1], self._q[k + 1]
            p_prev, q_prev = self._p[k], self._q[k]
            if q * (q + q_prev) >= 1 << bits:
                first, second = Fraction(p, q), Fraction(p + p_prev, q + q_prev)
                return (first, second) if first < second else (second, first)
            k += 1

    def tail_enclosure(self, shift: int, count: int) -> Enclosure:
        """Bounds strictly around [0; a_{shift+1}, a_{shift+2}, ...] from ``count`` quotients."""
        self.ensure(shift + count)
        p_prev, p, q_prev, q = 1, 0, 0, 1
        for a in self._quotients[shift:shift + count]:
            p_prev, p = p, a * p + p_prev
            q_prev, q = q, a * q + q_prev
        first, second = Fraction(p, q), Fraction(p + p_prev, q + q_prev)
        return (first, second) if first < second else (second, first)

    def tail_float(self, shift: int = 0) -> float:
        low, high = self.tail_enclosure(shift, 40)
        return float((low + high) / 2)

    def __float__(self) -> float:
        low, high = self.enclosure(64)
        return float((low + high) / 2)


def make_cf_stream(source: CFSource, seed: int = 0) -> CFStream:
    return CFStream(source, seed)


def cf_tail_in_interval(stream: CFStream, shift: int, lo: Threshold, hi: Threshold,
                        closed: bool = False) -> bool:
    """True iff [0; a_{shift+1}, a_{shift+2}, ...] lies in (lo, hi)."""
    if shift < 0:
        raise ValueError("shift must be non-negative")
    return decide_membership(
        lambda count: stream.tail_enclosure(shift, count),
        lo, hi, start=8, cap=lab_setting("CF_QUOTIENT_CAP"), closed=closed,
        label=f"continued-fraction tail at shift {shift}",
    )


# ---------------------------------------------------------------------------
# Points of the circle


@dataclass(frozen=True)
class RealPoint:
    """
    The real frac(value(stream) + offset): a (possibly random) digit stream
    plus an exact rational offset. ``stream=None`` is the rational point offset.
    """

    stream: Optional[DigitStream] = None
    offset: Fraction = field(default=Fraction(0))

    def __post_init__(self):
        object.__setattr__(self, "offset", Fraction(self.offset))

    def moved(self, offset) -> "RealPoint":
        return RealPoint(self.stream, self.offset + Fraction(offset))

    def enclosure(self, bits: int) -> Enclosure:
        """Enclosure of value(stream) + offset (not reduced mod 1)."""
        if self.stream is None:
            return self.offset, self.offset
        count = max(1, math.ceil(bits / math.log2(self.stream.base)))
        low, high = self.stream.value_enclosure(0, count)
        return low + self.offset, high + self.offset

    def fixed64(self) -> int:
        """floor(frac(x) * 2**64) up to an error of a few units."""
        low, _ = self.enclosure(72)
        return math.floor(low * (1 << 64)) % (1 << 64)


def rotation_enclosure(point: RealPoint, alpha: CFStream, n: int, bits: int) -> Enclosure:
    """
    Enclosure of frac(x + n*alpha). When the enclosure straddles an integer the
    conservative answer [0, 1] is returned and callers refine.
    """
    x_lo, x_hi = point.enclosure(bits)
    a_lo, a_hi = alpha.enclosure(bits + max(n, 1).bit_length())
    low, high = x_lo + n * a_lo, x_hi + n * a_hi
    k = math.floor(low)
    if math.floor(high) != k or high == k + 1:
        return Fraction(0), Fraction(1)
    return low - k, high - k


def rotation_in_interval(point: RealPoint, alpha: CFStream, n: int, lo: Threshold, hi: Threshold,
                         closed: bool = False) -> bool:
    """Decide frac(x + n*alpha) in (lo, hi) (or [lo, hi] when ``closed``)."""
    start = max(n, 1).bit_length() + lab_setting("ROTATION_GUARD_BITS")
    return decide_membership(
        lambda bits: rotation_enclosure(point, alpha, n, bits),
        lo, hi, start=start, cap=start + lab_setting("DIGIT_CAP"), closed=closed,
        label=f"rotation orbit point {n}",
    )
