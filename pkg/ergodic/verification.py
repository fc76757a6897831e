"""
Executable checks of the quantitative inequalities and identities behind return-time averages.

Probability-space checks (property (P), the fourfold covariance expansion,
covariance sums of Markov chains) run in exact rational arithmetic. Floating
point appears only in the Monte Carlo diagnostics (LLN ratio, V_N decay)
and in the Van der Corput inequality.
"""
import itertools
import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Any, Dict, List, Optional, Sequence, Tuple, TypedDict

import numpy as np
import sympy

from ergodic.conf import lab_setting
from ergodic.errors import BudgetExceeded
from ergodic.exact_arith import iroot
from ergodic.numerics import (
    STREAM_SUITE,
    derive_seed,
    lacunary_checkpoints,
    log_grid,
    loglog_slope,
    philox_generator,
)
from ergodic.reporting import to_jsonable
from ergodic.return_sequences import BernoulliSequence, ReturnSequence
from ergodic.source_dynamics import MarkovChain, SourceSystem, check_event, joint_event_probability
from ergodic.target_families import CumulativeMeasure, TargetFamily

logger = logging.getLogger(__name__)

# "pass" is a keyword, hence the functional form
VerificationRecord = TypedDict(
    "VerificationRecord",
    {
        "check_name": str,
        "parameters": Dict[str, Any],
        "pass": bool,
        "measured": Any,
        "bound": Any,
        "witness": Any,
    },
)


def make_record(check_name: str, parameters: dict, passed: bool, measured=None, bound=None,
                witness=None) -> VerificationRecord:
    return {
        "check_name": check_name,
        "parameters": to_jsonable(parameters),
        "pass": bool(passed),
        "measured": to_jsonable(measured),
        "bound": to_jsonable(bound),
        "witness": to_jsonable(witness),
    }


@dataclass
class VerificationReport:
    records: List[VerificationRecord] = field(default_factory=list)

    def add(self, record: VerificationRecord) -> None:
        self.records.append(record)

    def merge(self, other: "VerificationReport") -> "VerificationReport":
        return VerificationReport(self.records + other.records)

    @property
    def passed(self) -> bool:
        return all(r["pass"] for r in self.records)

    def failures(self) -> List[VerificationRecord]:
        return [r for r in self.records if not r["pass"]]


# ---------------------------------------------------------------------------
# Property (P)


class RateShape(str, Enum):
    GEOMETRIC = "geometric"
    HARMONIC = "harmonic"


@dataclass(frozen=True)
class RateModel:
    """rho(m) = C * lam**m (geometric) or C / m (harmonic)."""

    shape: RateShape
    C: Fraction
    lam: Optional[Fraction] = None

    def __post_init__(self):
        object.__setattr__(self, "shape", RateShape(self.shape))
        object.__setattr__(self, "C", Fraction(self.C))
        if self.C <= 0:
            raise ValueError(f"rate constant must be positive, got {self.C}")
        if self.shape == RateShape.GEOMETRIC:
            if self.lam is None or not 0 < Fraction(self.lam) < 1:
                raise ValueError(f"geometric rate needs lam in (0, 1), got {self.lam}")
            object.__setattr__(self, "lam", Fraction(self.lam))

    @classmethod
    def geometric(cls, C, lam) -> "RateModel":
        return cls(RateShape.GEOMETRIC, Fraction(C), Fraction(lam))

    @classmethod
    def harmonic(cls, C) -> "RateModel":
        return cls(RateShape.HARMONIC, Fraction(C))

    @classmethod
    def for_chain(cls, chain: MarkovChain, C=2) -> "RateModel":
        """Geometric rate with lam a rational approximation of the chain's second-eigenvalue modulus."""
        lam = Fraction(chain.second_eigenvalue_modulus).limit_denominator(1 << 20)
        if not 0 < lam < 1:
            # rank-one or gapless chains: fall back to 1/2
            lam = Fraction(1, 2)
        return cls.geometric(C, lam)

    def shape_value(self, m: int) -> Fraction:
        if self.shape == RateShape.GEOMETRIC:
            return self.lam ** m
        return Fraction(1, m)

    def __call__(self, m: int) -> Fraction:
        return self.C * self.shape_value(m)

    def describe(self) -> str:
        if self.shape == RateShape.GEOMETRIC:
            return f"{self.C}*{self.lam}^m"
        return f"{self.C}/m"


@dataclass
class PropertyPReport:
    chain: str
    event: Tuple[int, ...]
    rate: RateModel
    checked_tuples: List[Tuple[int, ...]]
    max_violation: Fraction
    witness: Optional[Tuple[int, ...]]
    smallest_C: Fraction

    @property
    def passed(self) -> bool:
        return self.max_violation <= 0

    def record(self) -> VerificationRecord:
        return make_record(
            "property_P",
            {"chain": self.chain, "event": list(self.event), "rate": self.rate.describe(),
             "tuples": len(self.checked_tuples)},
            self.passed,
            measured={"max_violation": self.max_violation, "smallest_C": self.smallest_C},
            bound=self.rate.C,
            witness=self.witness,
        )


def check_property_P(chain: MarkovChain, event, n_max: int, k_max: int, rate: RateModel) -> PropertyPReport:
    """
    Check |P(E_{n1} ... E_{nk}) - P(E_{n1}) P(E_{n2} ... E_{nk})| <= rho(n2 - n1) P(E_{n2} ... E_{nk})
    for every tuple n1 < ... < nk <= n_max with 2 <= k <= k_max, exactly.
    By stationarity the probabilities depend on the gaps only and are memoised per gap tuple.
    """
    if k_max > lab_setting("PROPERTY_P_MAX_K") or n_max > lab_setting("PROPERTY_P_MAX_N"):
        raise BudgetExceeded(
            f"property (P) enumeration limited to k <= {lab_setting('PROPERTY_P_MAX_K')}, "
            f"n <= {lab_setting('PROPERTY_P_MAX_N')}; got k={k_max}, n={n_max}"
        )
    if k_max < 2 or n_max < 2:
        raise ValueError("property (P) needs k_max >= 2 and n_max >= 2")
    event = check_event(chain, event)
    first = chain.event_mass(event)
    joint: Dict[Tuple[int, ...], Fraction] = {}

    def probability(gaps: Tuple[int, ...]) -> Fraction:
        if gaps not in joint:
            times = list(itertools.accumulate((0,) + gaps))
            joint[gaps] = joint_event_probability(chain, times, event)
        return joint[gaps]

    checked = []
    worst, witness, smallest = None, None, Fraction(0)
    for k in range(2, k_max + 1):
        for times in itertools.combinations(range(1, n_max + 1), k):
            gaps = tuple(b - a for a, b in zip(times, times[1:]))
            rest = probability(gaps[1:])
            lhs = abs(probability(gaps) - first * rest)
            violation = lhs - rate(gaps[0]) * rest
            checked.append(times)
            if worst is None or violation > worst:
                worst, witness = violation, times
            if rest > 0:
                smallest = max(smallest, lhs / (rate.shape_value(gaps[0]) * rest))
    logger.info("property (P): %s tuples, max violation %s", len(checked), worst)
    return PropertyPReport(
        chain=chain.to_text(),
        event=tuple(sorted(event)),
        rate=rate,
        checked_tuples=checked,
        max_violation=worst,
        witness=witness,
        smallest_C=smallest,
    )


# ---------------------------------------------------------------------------
# Fourfold covariance expansion


def _expectation(weights: Sequence[Fraction], values) -> Fraction:
    return sum((w * v for w, v in zip(weights, values)), Fraction(0))


def fourfold_identity(weights: Sequence[Fraction], sets: Sequence[Sequence[int]],
                      roles: Optional[Sequence[int]] = None) -> Tuple[Fraction, Fraction]:
    """
    For X_i = 1_{E_i}, p_i = P(E_i), Y_i = X_i - p_i on a finite probability
    space: lhs = E(Y1 Y2 Y3 Y4) by direct expectation, rhs = the expansion
        Cov(X1, X2X3X4) - p2 Cov(X1, X3X4) - p3 Cov(X1, X2X4) - p4 Cov(X1, X2X3)
        + p3p4 Cov(X1, X2) + p2p4 Cov(X1, X3) + p2p3 Cov(X1, X4).
    ``roles`` are the times n1 <= n2 <= n3 <= n4 the sets stand for; they only
    fix the order of the sets and are checked for it.
    """
    weights = [Fraction(w) for w in weights]
    if len(sets) != 4:
        raise ValueError("exactly four sets are needed")
    if roles is not None and (len(roles) != 4 or any(b < a for a, b in zip(roles, roles[1:]))):
        raise ValueError(f"roles must be four non-decreasing times, got {roles}")
    if len(weights) > 1 << 16:
        raise ValueError("finite space limited to 2**16 atoms")
    if any(w < 0 for w in weights) or sum(weights) != 1:
        raise ValueError("weights must be a probability vector")
    atoms = range(len(weights))
    members = [frozenset(s) for s in sets]
    X = [[int(i in e) for i in atoms] for e in members]
    p = [_expectation(weights, x) for x in X]

    lhs = _expectation(weights, [
        (X[0][i] - p[0]) * (X[1][i] - p[1]) * (X[2][i] - p[2]) * (X[3][i] - p[3]) for i in atoms
    ])

    def cov_first(*others: int) -> Fraction:
        product = [math.prod(X[j][i] for j in others) for i in atoms]
        return _expectation(weights, [X[0][i] * product[i] for i in atoms]) - p[0] * _expectation(weights, product)

    rhs = (
        cov_first(1, 2, 3)
        - p[1] * cov_first(2, 3)
        - p[2] * cov_first(1, 3)
        - p[3] * cov_first(1, 2)
        + p[2] * p[3] * cov_first(1)
        + p[1] * p[3] * cov_first(2)
        + p[1] * p[2] * cov_first(3)
    )
    return lhs, rhs


def random_finite_space(rng: np.random.Generator, max_atoms: int = 16):
    atoms = int(rng.integers(1, max_atoms + 1))
    raw = rng.integers(1, 21, size=atoms)
    total = int(raw.sum())
    weights = [Fraction(int(w), total) for w in raw]
    sets = [[i for i in range(atoms) if rng.random() < 0.5] for _ in range(4)]
    return weights, sets


def fourfold_suite(cases: int = 100, seed: int = 0) -> VerificationRecord:
    rng = philox_generator(seed, STREAM_SUITE, 0)
    failures = []
    for case in range(cases):
        weights, sets = random_finite_space(rng)
        lhs, rhs = fourfold_identity(weights, sets)
        if lhs != rhs:
            failures.append({"case": case, "lhs": lhs, "rhs": rhs})
    return make_record("fourfold_identity", {"cases": cases, "seed": seed}, not failures,
                       measured=len(failures), bound=0, witness=failures[0] if failures else None)


# ---------------------------------------------------------------------------
# Van der Corput


def _lag_sums(vectors: np.ndarray, M: int) -> np.ndarray:
    """R(m) = sum_{n} <v_{n+m}, v_n> for m = 1..M."""
    N = vectors.shape[0]
    if N * M <= 1 << 20:
        return np.array([np.vdot(vectors[:N - m], vectors[m:]) for m in range(1, M + 1)])
    size = 1 << (2 * N - 1).bit_length()
    spectrum = np.fft.fft(vectors, n=size, axis=0)
    correlation = np.fft.ifft(spectrum * np.conj(spectrum), axis=0).sum(axis=1)
    # correlation[m] = sum_n v_{n+m} conj(v_n); the padding keeps the circular wrap out
    return correlation[1:M + 1]


def vdc_check(vectors, M: int) -> Tuple[float, float]:
    """
    lhs = ||sum v_n||**2, rhs = (2N/M) sum ||v_n||**2 + (4N/M) sum_{m=1}^{M} |sum_{n=1}^{N-m} <v_{n+m}, v_n>|.
    """
    vectors = np.asarray(vectors, dtype=np.complex128)
    if vectors.ndim == 1:
        vectors = vectors[:, None]
    N = vectors.shape[0]
    if not 1 <= M <= N:
        raise ValueError(f"M must lie in [1, {N}], got {M}")
    total = vectors.sum(axis=0)
    lhs = float(np.vdot(total, total).real)
    energy = float(np.sum(np.abs(vectors) ** 2))
    lags = _lag_sums(vectors, M)
    rhs = 2 * N / M * energy + 4 * N / M * float(np.sum(np.abs(lags)))
    return lhs, rhs


def vdc_suite(instances: int = 1000, seed: int = 0, slack: float = 1e-12) -> VerificationRecord:
    rng = philox_generator(seed, STREAM_SUITE, 1)
    failures = []
    worst = -math.inf
    for case in range(instances):
        N = int(rng.integers(1, 65))
        dim = int(rng.integers(1, 9))
        vectors = rng.standard_normal((N, dim)) + 1j * rng.standard_normal((N, dim))
        for M in range(1, N + 1):
            lhs, rhs = vdc_check(vectors, M)
            worst = max(worst, lhs / rhs if rhs else 0.0)
            if lhs > rhs * (1 + slack) + slack:
                failures.append({"case": case, "N": N, "M": M, "lhs": lhs, "rhs": rhs})
    return make_record("van_der_corput", {"instances": instances, "seed": seed}, not failures,
                       measured=worst, bound=1.0, witness=failures[0] if failures else None)


# ---------------------------------------------------------------------------
# LLN ratio


@dataclass
class RatioTrace:
    checkpoints: List[int]
    hits: List[int]
    expected: List[float]

    @property
    def ratios(self) -> List[float]:
        return [h / w for h, w in zip(self.hits, self.expected)]

    @property
    def final_ratio(self) -> float:
        return self.ratios[-1]

    def record(self, parameters: dict, tolerance: float) -> VerificationRecord:
        deviation = abs(self.final_ratio - 1)
        return make_record("lln_ratio", parameters, deviation <= tolerance,
                           measured=self.final_ratio, bound=tolerance,
                           witness={"N": self.checkpoints[-1], "hits": self.hits[-1]})


def lln_ratio_trace(seq: ReturnSequence, family: TargetFamily, system: SourceSystem, N_max: int,
                    gamma=Fraction(11, 10)) -> RatioTrace:
    """W_N(omega) / W_N at the lacunary N <= N_max (and at N_max)."""
    if N_max < 1000:
        raise ValueError("the LLN ratio trace needs N_max >= 1000")
    checkpoints = lacunary_checkpoints(gamma, N_max)
    cumulative = CumulativeMeasure(family, system)
    hits, expected = [], []
    for N in checkpoints:
        hits.append(seq.count_up_to(N))
        expected.append(cumulative.value(N))
    return RatioTrace(checkpoints, hits, expected)


def lln_ensemble_record(traces: Dict[int, RatioTrace], tolerance: float, quorum=Fraction(9, 10)) -> VerificationRecord:
    """The ratio check over several seeds: at least ``quorum`` of them end within ``tolerance`` of 1."""
    finals = {seed: trace.final_ratio for seed, trace in traces.items()}
    within = [seed for seed, ratio in finals.items() if abs(ratio - 1) <= tolerance]
    outside = sorted(set(finals) - set(within))
    passed = bool(finals) and len(within) >= quorum * len(finals)
    return make_record("lln_ratio", {"seeds": sorted(finals), "tolerance": tolerance, "quorum": quorum},
                       passed, measured=finals, bound=tolerance, witness=outside or None)


# ---------------------------------------------------------------------------
# Covariance sums of Markov chains


@dataclass
class CovarianceBoundReport:
    grid: List[int]
    sums: List[Fraction]
    exponent: Fraction
    C: float
    slope: float
    trend_tolerance: float = 0.05

    @property
    def ratios(self) -> List[float]:
        return [float(s) / float(N) ** float(self.exponent) for N, s in zip(self.grid, self.sums)]

    @property
    def passed(self) -> bool:
        return self.slope <= self.trend_tolerance

    def record(self, parameters: dict) -> VerificationRecord:
        return make_record("covariance_sum_bound", parameters, self.passed,
                           measured={"slope": self.slope, "final_sum": self.sums[-1]},
                           bound={"C": self.C, "exponent": self.exponent, "slope_tolerance": self.trend_tolerance})


def _restricted_vector(chain: MarkovChain, event) -> List[Fraction]:
    return [chain.stationary[i] if i in event else Fraction(0) for i in range(chain.state_count)]


def covariance_sums_exact(chain: MarkovChain, event, grid: Sequence[int]) -> List[Fraction]:
    """S(N) = sum_{d=1}^{N-1} (N - d) Cov_d through prefix sums of Cov_d = P(X_0 X_d) - p**2."""
    event = check_event(chain, event)
    p = chain.event_mass(event)
    k = chain.state_count
    top = max(grid)
    vector = _restricted_vector(chain, event)
    plain, weighted = [Fraction(0)], [Fraction(0)]
    for d in range(1, top):
        vector = [sum((vector[t] * chain.transition_matrix[t][j] for t in range(k)), Fraction(0)) for j in range(k)]
        cov = sum((vector[j] for j in event), Fraction(0)) - p * p
        plain.append(plain[-1] + cov)
        weighted.append(weighted[-1] + d * cov)
    return [N * plain[N - 1] - weighted[N - 1] for N in grid]


def covariance_sum_closed_form(chain: MarkovChain, event, N: int) -> Fraction:
    """
    S(N) from A = P - 1 pi: sum_{d=1}^{N-1} (N - d) A**d
    = A (I - A)^-1 [(N - 1) I - A (I - A)^-1 (I - A**(N-1))].
    """
    event = check_event(chain, event)
    k = chain.state_count
    P = sympy.Matrix(k, k, lambda i, j: sympy.Rational(chain.transition_matrix[i][j].numerator,
                                                       chain.transition_matrix[i][j].denominator))
    pi = sympy.Matrix(1, k, lambda _, j: sympy.Rational(chain.stationary[j].numerator, chain.stationary[j].denominator))
    A = P - sympy.ones(k, 1) * pi
    identity = sympy.eye(k)
    resolvent = (identity - A).inv()
    total = A * resolvent * ((N - 1) * identity - A * resolvent * (identity - A ** (N - 1)))
    left = sympy.Matrix(1, k, lambda _, j: pi[j] if j in event else 0)
    right = sympy.Matrix(k, 1, lambda i, _: 1 if i in event else 0)
    value = sympy.Rational((left * total * right)[0, 0])
    return Fraction(int(value.p), int(value.q))


def covariance_sum_bound(chain: MarkovChain, event, N: int, a, epsilon,
                         grid: Optional[Sequence[int]] = None,
                         trend_tolerance: Optional[float] = None) -> CovarianceBoundReport:
    """
    Sum of Cov(X_n, X_m) over n < m <= N' for N' on a log grid up to N, against
    C * N'**(2 - 2a - epsilon) with C the largest ratio on the grid. The bound
    holds trendwise when the log-log slope of |sum| / N'**exponent is at most
    ``trend_tolerance`` (TREND_TOLERANCE when not given; 0 asks for no growth at all).
    """
    a, epsilon = Fraction(a), Fraction(epsilon)
    if not 0 < a < Fraction(1, 2) or not 0 < epsilon < 1 - 2 * a:
        raise ValueError(f"need 0 < a < 1/2 and 0 < epsilon < 1 - 2a, got a={a}, epsilon={epsilon}")
    if N < 2:
        raise ValueError("covariance sums need N >= 2")
    grid = sorted(set(int(g) for g in grid)) if grid else log_grid(2, N)
    limit = lab_setting("EXACT_COVARIANCE_LIMIT")
    small = [g for g in grid if g <= limit]
    sums = covariance_sums_exact(chain, event, small) if small else []
    for g in grid[len(small):]:
        logger.debug("covariance sum at N=%s from the closed form", g)
        sums.append(covariance_sum_closed_form(chain, event, g))
    exponent = 2 - 2 * a - epsilon
    ratios = [abs(float(s)) / float(g) ** float(exponent) for g, s in zip(grid, sums)]
    C = max(ratios)
    positive = [(g, r) for g, r in zip(grid, ratios) if r > 0]
    slope = loglog_slope(*zip(*positive)) if len(positive) >= 2 else 0.0
    if trend_tolerance is None:
        trend_tolerance = lab_setting("TREND_TOLERANCE")
    return CovarianceBoundReport(grid=list(grid), sums=sums, exponent=exponent, C=C, slope=slope,
                                 trend_tolerance=float(trend_tolerance))


# ---------------------------------------------------------------------------
# V_N decay


@dataclass(frozen=True)
class DiagnosticConfig:
    """Parameters of the V_N diagnostic: b = 2a + epsilon and M(N) = floor(N**b)."""

    a: Fraction
    c: Fraction = Fraction(1)
    epsilon: Fraction = Fraction(1, 10)
    gamma: Fraction = Fraction(11, 10)

    def __post_init__(self):
        for name in ("a", "c", "epsilon", "gamma"):
            object.__setattr__(self, name, Fraction(getattr(self, name)))
        if not 0 < self.a < Fraction(1, 2):
            raise ValueError(f"a must lie in (0, 1/2), got {self.a}")
        if not 0 < self.epsilon < 1 - 2 * self.a:
            raise ValueError(f"epsilon must lie in (0, {1 - 2 * self.a}), got {self.epsilon}")
        if not 1 < self.gamma <= 2:
            raise ValueError(f"gamma must lie in (1, 2], got {self.gamma}")

    @property
    def b_exponent(self) -> Fraction:
        return 2 * self.a + self.epsilon

    def M(self, N: int) -> int:
        b = self.b_exponent
        return max(1, iroot(N ** b.numerator, b.denominator))


@dataclass
class VNDecayReport:
    grid: List[int]
    values: List[float]
    slope: Optional[float]
    vdc: List[Tuple[int, float, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.slope is None or self.slope < 0

    def vdc_holds(self) -> bool:
        return all(lhs <= rhs * (1 + 1e-12) + 1e-12 for _, lhs, rhs in self.vdc)

    def records(self, parameters: dict) -> List[VerificationRecord]:
        worst = max(self.vdc, key=lambda row: row[1] / row[2] if row[2] else 0.0)
        return [
            make_record("vn_decay", parameters, self.passed, measured=self.slope, bound=0.0,
                        witness=dict(zip(map(str, self.grid), self.values))),
            make_record("van_der_corput_vn", parameters, self.vdc_holds(),
                        measured=worst[1], bound=worst[2], witness={"N": worst[0]}),
        ]


def vn_decay_diagnostic(seq: ReturnSequence, family: TargetFamily, system, f, x_samples: int,
                        grid: Sequence[int], config: DiagnosticConfig, seed: int = 0,
                        source: Optional[SourceSystem] = None) -> VNDecayReport:
    """
    V_N = mean over sampled x of |N**(a - 1) sum_{n <= N} (X_n - sigma_n) f(T^n x)|**2
    with sigma_n = nu(E_n). The Van der Corput inequality is checked at every
    grid point with M(N) = floor(N**(2a + epsilon)) for the vectors
    v_n = (X_n - sigma_n) f(T^n x) in L2 of the x samples.
    """
    if x_samples < 32:
        raise ValueError("the V_N diagnostic needs at least 32 x samples")
    grid = sorted(set(int(g) for g in grid))
    reference = source or seq.reference_system
    if reference is None and not isinstance(seq, BernoulliSequence):
        raise ValueError(f"{seq!r} has no source measure to centre against")
    top = grid[-1]
    ns = np.arange(1, top + 1, dtype=np.int64)
    X = seq.indicator_array(top)
    if isinstance(seq, BernoulliSequence):
        sigma = seq.probabilities(ns)
    else:
        sigma = family.measure_array(ns, reference)
    weights = X - sigma
    scale = np.asarray(grid, dtype=np.float64) ** (float(config.a) - 1)
    columns = []
    for j in range(x_samples):
        x = system.sample_point(derive_seed(seed, j))
        columns.append(weights * system.orbit_values(f, x, ns))
    matrix = np.column_stack(columns) / math.sqrt(x_samples)
    partial = np.cumsum(matrix, axis=0)[np.asarray(grid) - 1]
    values = (np.sum(np.abs(partial) ** 2, axis=1) * scale ** 2).tolist()
    vdc = []
    for N in grid:
        lhs, rhs = vdc_check(matrix[:N], min(config.M(N), N))
        vdc.append((N, lhs, rhs))
    positive = [(g, v) for g, v in zip(grid, values) if v > 0]
    slope = loglog_slope(*zip(*positive)) if len(positive) >= 2 else None
    return VNDecayReport(grid=grid, values=values, slope=slope, vdc=vdc)
