"""
Experiment configuration: flat ``key = value`` files with ``#`` comments.

The file is cleaned into a dict of raw strings first (unknown or repeated keys
are rejected), then every field is parsed by the parser attached to it in the
dataclass metadata. The builders turn a config into the lab objects a command
needs, one seed at a time.
"""
import hashlib
import logging
import os
from dataclasses import dataclass, field, fields, replace
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Tuple

from ergodic.errors import ConfigError
from ergodic.ergodic_averaging import (
    Character,
    Coordinate,
    IndicatorInterval,
    Table,
    TestSystem,
    get_test_system,
)
from ergodic.exact_arith import (
    CFSource,
    DigitSource,
    RealPoint,
    make_cf_stream,
    make_digit_stream,
    thue_morse_digits,
)
from ergodic.conf import lab_setting
from ergodic.numerics import derive_seed
from ergodic.return_sequences import BernoulliSequence, DeterministicSequence, ReturnSequence, ReturnTimes
from ergodic.source_dynamics import MarkovChain, SourceSystem, get_source
from ergodic.target_families import TargetFamily, get_family

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Value parsers


def _fraction(text: str) -> Fraction:
    return Fraction(text.strip())


def _optional(parser: Callable) -> Callable:
    def parse(text: str):
        return None if text.strip().lower() in ("", "none") else parser(text)

    return parse


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> Tuple[int, ...]:
    return tuple(int(part) for part in text.split(",") if part.strip())


def _pairs(text: str) -> Tuple[Tuple[Fraction, Fraction], ...]:
    """``0:1/2, 3/4:1`` -> ((0, 1/2), (3/4, 1))."""
    out = []
    for part in text.split(","):
        if not part.strip():
            continue
        left, sep, right = part.partition(":")
        if not sep:
            raise ValueError(f"expected lo:hi, got {part.strip()!r}")
        out.append((_fraction(left), _fraction(right)))
    return tuple(out)


def _words(text: str) -> Tuple[str, ...]:
    return tuple(part.strip() for part in text.split(",") if part.strip())


def _choice(*options: str) -> Callable:
    def parse(text: str) -> str:
        value = text.strip()
        if value not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {value!r}")
        return value

    return parse


def _setting(parser: Callable, default, help_text: str):
    return field(default=default, metadata={"parser": parser, "help": help_text})


# ---------------------------------------------------------------------------
# Config


@dataclass(frozen=True)
class ExperimentConfig:
    # source system
    source: str = _setting(_choice("power", "gauss", "rotation", "markov"), "power", "source system S")
    p: int = _setting(int, 2, "base of the power map")
    alpha_cf: str = _setting(str.strip, "golden", "rotation number: golden | sqrt2 | seeded:SEED | periodic:PREFIX|PERIOD")
    quotient_bound: Optional[int] = _setting(_optional(int), None, "claimed bound on the partial quotients of alpha")
    chain: Optional[str] = _setting(_optional(str.strip), None, "transition matrix '3/4,1/4;1/4,3/4' or a file path")
    spectral_gap: bool = _setting(_bool, True, "refuse chains without a spectral gap")
    symbol_event: Tuple[int, ...] = _setting(_int_list, (0,), "states forming the Markov symbol event")
    start_state: Optional[int] = _setting(_optional(int), None, "fixed initial Markov state")
    y: str = _setting(str.strip, "seeded", "source point: seeded | thue_morse | digits:0,1,1 | rational | cf:1,2,3")
    # sequence
    sequence: str = _setting(_choice("returns", "bernoulli", "deterministic"), "returns", "sequence kind")
    formula: str = _setting(_choice("power", "square", "identity"), "power", "deterministic sequence formula")
    # targets
    target: str = _setting(_choice("shrinking", "gauss_shrinking", "ball", "constant", "union"), "shrinking",
                           "target family")
    a: Fraction = _setting(_fraction, Fraction(2, 5), "decay exponent a in (0, 1/2)")
    c: Fraction = _setting(_fraction, Fraction(1), "measure constant c")
    b: Fraction = _setting(_fraction, Fraction(2), "Gauss target base b in (1, 2]")
    intervals: Tuple[Tuple[Fraction, Fraction], ...] = _setting(_pairs, ((Fraction(0), Fraction(1)),),
                                                                "constant target intervals lo:hi,...")
    components: Tuple[Tuple[Fraction, Fraction], ...] = _setting(_pairs, (), "union components s:c,...")
    # target system and observable
    test_system: str = _setting(_choice("cyclic", "rotation", "power", "product"), "cyclic", "target system T")
    k: int = _setting(int, 6, "cyclic group order")
    j: int = _setting(int, 1, "cyclic step")
    beta_cf: str = _setting(str.strip, "golden", "rotation number of the target rotation")
    target_p: int = _setting(int, 2, "base of the target power map")
    factors: Tuple[str, ...] = _setting(_words, (), "product factors, e.g. cyclic:6:2,rotation:golden")
    product_ergodic: bool = _setting(_bool, False, "declared ergodicity of the product")
    observable: str = _setting(_choice("indicator", "character", "table"), "character", "observable f")
    lo: Fraction = _setting(_fraction, Fraction(0), "indicator lower end")
    hi: Fraction = _setting(_fraction, Fraction(1, 4), "indicator upper end")
    m: int = _setting(int, 1, "character frequency")
    table: str = _setting(str.strip, "random", "table values: random | v0,v1,... | file path")
    coordinate: int = _setting(int, 0, "product factor the observable reads")
    x: Optional[str] = _setting(_optional(str.strip), None,
                                "target point: rational | seeded | y+OFFSET | per-factor list with ';' (unset: 0)")
    # seeds
    seeds: Tuple[int, ...] = _setting(_int_list, (), "explicit seed list")
    seed_count: int = _setting(int, 1, "number of seeds when no list is given")
    seed_base: int = _setting(int, 0, "first seed when no list is given")
    # sizes
    n_max: int = _setting(int, 10**4, "scan depth N")
    k_max: int = _setting(int, 1000, "number of averaged terms K")
    growth_n_min: int = _setting(int, 100, "first index of the growth-exponent fit")
    gamma: Fraction = _setting(_fraction, Fraction(11, 10), "lacunary checkpoint base in (1, 2]")
    epsilon: Fraction = _setting(_fraction, Fraction(1, 10), "epsilon in (0, 1 - 2a)")
    m_max: int = _setting(int, 6, "largest modulus of the residue table")
    x_samples: int = _setting(int, 32, "points x sampled by the V_N diagnostic")
    # verification
    checks: Tuple[str, ...] = _setting(
        _words, ("property_P", "fourfold", "vdc", "lln", "covariance", "vn_decay"), "checks run by verify"
    )
    event: Tuple[int, ...] = _setting(_int_list, (0,), "Markov event E for property (P) and covariance sums")
    property_n_max: int = _setting(int, 30, "largest time of property (P) tuples")
    property_k_max: int = _setting(int, 3, "longest property (P) tuple")
    rate_model: str = _setting(_choice("geometric", "harmonic"), "geometric", "shape of rho(m)")
    rate_c: Fraction = _setting(_fraction, Fraction(2), "rate constant C")
    rate_lambda: Optional[Fraction] = _setting(_optional(_fraction), None, "geometric rate base")
    covariance_n_max: int = _setting(int, 10**6, "largest N of the covariance-sum grid")
    suite_cases: int = _setting(int, 100, "random finite spaces for the fourfold identity")
    vdc_instances: int = _setting(int, 1000, "random instances for the Van der Corput suite")
    tolerance: float = _setting(float, 0.05, "allowed deviation of W_N(omega)/W_N from 1")
    scan_horizon: Optional[int] = _setting(_optional(int), None, "largest n scanned for a term")
    # output
    out: str = _setting(str.strip, ".", "output directory")

    # not a key: where relative paths are resolved and what the hash covers
    base_dir: str = field(default=".", compare=False)
    config_hash: str = field(default="", compare=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0 < self.a < Fraction(1, 2):
            raise ConfigError(f"a must lie in (0, 1/2), got {self.a}")
        if not 1 < self.gamma <= 2:
            raise ConfigError(f"gamma must lie in (1, 2], got {self.gamma}")
        if not 0 < self.epsilon < 1 - 2 * self.a:
            raise ConfigError(f"epsilon must lie in (0, {1 - 2 * self.a}), got {self.epsilon}")
        for name in ("n_max", "k_max", "seed_count", "m_max", "x_samples"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.source == "markov" and self.chain is None:
            raise ConfigError("a markov source needs a chain")
        if self.test_system == "product" and not self.factors:
            raise ConfigError("a product target system needs factors")
        if self.test_system == "product" and not 0 <= self.coordinate < len(self.factors):
            raise ConfigError(f"coordinate {self.coordinate} outside the {len(self.factors)} factors")
        if any(seed < 0 for seed in self.seed_list):
            raise ConfigError("seeds must be unsigned")

    @classmethod
    def keys(cls) -> Dict[str, str]:
        """Documented key table: key -> help text."""
        return {f.name: f.metadata["help"] for f in fields(cls) if "parser" in f.metadata}

    @property
    def seed_list(self) -> List[int]:
        if self.seeds:
            return list(self.seeds)
        return list(range(self.seed_base, self.seed_base + self.seed_count))

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return replace(self, seeds=(seed,))

    def with_out(self, out: str) -> "ExperimentConfig":
        return replace(self, out=out)

    def resolve(self, path: str) -> str:
        return path if os.path.isabs(path) else os.path.join(self.base_dir, path)

    # -- builders ----------------------------------------------------------

    def build_chain(self) -> MarkovChain:
        text = self.chain
        if text is None:
            raise ConfigError("no chain configured")
        if not any(ch in text for ch in ",;") and os.path.exists(self.resolve(text)):
            with open(self.resolve(text), encoding="utf-8") as handle:
                text = handle.read()
        return MarkovChain.from_text(text, require_spectral_gap=self.spectral_gap)

    def build_source(self) -> SourceSystem:
        source_cls = get_source(self.source)
        if self.source == "power":
            return source_cls(self.p)
        if self.source == "rotation":
            source, seed = parse_cf(self.alpha_cf)
            return source_cls(make_cf_stream(source, seed), quotient_bound=self.quotient_bound)
        if self.source == "markov":
            return source_cls(self.build_chain(), frozenset(self.symbol_event), self.start_state)
        return source_cls()

    def build_family(self) -> TargetFamily:
        family_cls = get_family(self.target)
        if self.target == "shrinking":
            return family_cls(c=self.c, a=self.a)
        if self.target == "gauss_shrinking":
            return family_cls(b=self.b, a=self.a)
        if self.target == "ball":
            return family_cls(a=self.a)
        if self.target == "constant":
            return family_cls(self.intervals)
        return family_cls(self.components, a=self.a)

    def build_point(self, system: SourceSystem, seed: int):
        """The source point y for one seed."""
        spec = self.y
        if spec == "seeded":
            return system.sample_point(seed)
        kind, _, rest = spec.partition(":")
        if self.source == "power":
            if kind == "thue_morse":
                length = self.n_max + 2 * lab_setting("DIGIT_CAP")
                return make_digit_stream(self.p, DigitSource.fixed(thue_morse_digits(length)))
            if kind == "digits":
                return make_digit_stream(self.p, DigitSource.fixed(_int_list(rest)))
            return make_digit_stream(self.p, DigitSource.big_real(_fraction(spec)))
        if self.source == "gauss":
            if kind == "cf":
                return make_cf_stream(CFSource.fixed(_int_list(rest)))
            source, cf_seed = parse_cf(spec)
            return make_cf_stream(source, cf_seed)
        if self.source == "rotation":
            return RealPoint(None, _fraction(spec))
        raise ConfigError(f"source {self.source} only supports y = seeded")

    def build_sequence(self, seed: int, system: Optional[SourceSystem] = None,
                       family: Optional[TargetFamily] = None, point=None) -> ReturnSequence:
        if self.sequence == "bernoulli":
            return BernoulliSequence(self.a, self.c, seed=seed, horizon=self.scan_horizon)
        if self.sequence == "deterministic":
            return DeterministicSequence(self.formula, self.a if self.formula == "power" else None,
                                         horizon=self.scan_horizon)
        system = system or self.build_source()
        family = family or self.build_family()
        if point is None:
            point = self.build_point(system, seed)
        return ReturnTimes(system, family, point, seed=seed, horizon=self.scan_horizon)

    def build_test_system(self) -> TestSystem:
        if self.test_system == "product":
            return get_test_system("product")([build_factor(spec) for spec in self.factors],
                                              ergodic=self.product_ergodic)
        return build_factor(self._factor_spec())

    def _factor_spec(self) -> str:
        if self.test_system == "cyclic":
            return f"cyclic:{self.k}:{self.j}"
        if self.test_system == "rotation":
            return f"rotation:{self.beta_cf}"
        return f"power:{self.target_p}"

    def build_table(self, seed: int, size: int) -> Table:
        spec = self.table
        if spec == "random":
            return Table.random(size, derive_seed(seed, 2))
        if "," not in spec and os.path.exists(self.resolve(spec)):
            with open(self.resolve(spec), encoding="utf-8") as handle:
                spec = handle.read().replace("\n", ",")
        return Table(tuple(_fraction(v) for v in spec.split(",") if v.strip()))

    def build_observable(self, seed: int, system: TestSystem):
        factor = system.factors[self.coordinate] if self.test_system == "product" else system
        if self.observable == "indicator":
            base = IndicatorInterval(self.lo, self.hi)
        elif self.observable == "character":
            base = Character(self.m)
        else:
            base = self.build_table(seed, getattr(factor, "k", self.k))
        if self.test_system == "product":
            return Coordinate(base, self.coordinate)
        return base

    def build_x(self, system: TestSystem, seed: int, y=None):
        """The target point x for one seed; ``y`` is needed for ``x = y+OFFSET``. Unset x is 0 in every factor."""
        if self.test_system == "product":
            if self.x is None:
                specs = ["0"] * len(system.factors)
            else:
                specs = [s.strip() for s in self.x.split(";")]
            if len(specs) != len(system.factors):
                raise ConfigError("product x needs one entry per factor, separated by ';'")
            return tuple(_factor_point(spec, factor, seed, y, i) for i, (spec, factor)
                         in enumerate(zip(specs, system.factors)))
        return _factor_point(self.x or "0", system, seed, y, 0)

    def offset_from_y(self, default=Fraction(3, 5)) -> Fraction:
        """The rational offset of ``x = y+OFFSET`` (``x = y`` is offset 0); unset x gives ``default``."""
        if self.x is None:
            return Fraction(default)
        if self.x == "y":
            return Fraction(0)
        if not self.x.startswith("y+"):
            raise ConfigError(f"x must be y or y+OFFSET here, got {self.x!r}")
        try:
            return Fraction(self.x[2:].strip())
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"invalid offset in x = {self.x!r}") from exc


def _factor_point(spec: str, system: TestSystem, seed: int, y, index: int):
    if spec == "seeded":
        return system.sample_point(derive_seed(seed, 1 + index))
    if spec.startswith("y+") or spec == "y":
        if not isinstance(y, RealPoint):
            raise ConfigError("x = y+OFFSET needs a rotation source point")
        return y.moved(_fraction(spec[2:]) if spec != "y" else 0)
    value = _fraction(spec)
    if system.key == "cyclic":
        return int(value) % system.k
    if system.key == "rotation":
        return RealPoint(None, value)
    if system.key == "power":
        return make_digit_stream(system.p, DigitSource.big_real(value))
    raise ConfigError(f"cannot place x = {spec} in {system!r}")


def parse_cf(spec: str) -> Tuple[CFSource, int]:
    """Continued-fraction source and seed from ``golden``, ``sqrt2``, ``seeded:SEED`` or ``periodic:P|Q``.

    Rotation numbers must be irrational, so finite expansions such as ``list:1,2`` are rejected.
    """
    kind, _, rest = spec.strip().partition(":")
    if kind == "golden":
        return CFSource.golden(), 0
    if kind == "sqrt2":
        return CFSource.periodic((), (2,)), 0
    if kind == "seeded":
        return CFSource.seeded(), int(rest or 0)
    if kind == "periodic":
        prefix, _, period = rest.partition("|")
        try:
            return CFSource.periodic(_int_list(prefix), _int_list(period)), 0
        except ValueError as exc:
            raise ConfigError(f"{spec!r}: {exc}") from exc
    if kind == "list":
        raise ConfigError(f"{spec!r} is a finite continued fraction; a rotation number must be irrational")
    raise ConfigError(f"unknown continued fraction {spec!r}")


def build_factor(spec: str) -> TestSystem:
    """``cyclic:K:J``, ``rotation:CF`` or ``power:P``."""
    kind, _, rest = spec.partition(":")
    try:
        system_cls = get_test_system(kind)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if kind == "cyclic":
        k, _, j = rest.partition(":")
        return system_cls(int(k), int(j or 1))
    if kind == "rotation":
        source, seed = parse_cf(rest or "golden")
        return system_cls(make_cf_stream(source, seed))
    if kind == "power":
        return system_cls(int(rest or 2))
    raise ConfigError(f"{kind} cannot be a product factor")


# ---------------------------------------------------------------------------
# Reading


def clean_config_text(text: str) -> Dict[str, str]:
    """Raw ``key -> value`` strings; comments and blank lines dropped."""
    known = ExperimentConfig.keys()
    cleaned: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"line {number}: expected key = value, got {raw.strip()!r}")
        if key not in known:
            raise ConfigError(f"line {number}: unknown key {key!r}")
        if key in cleaned:
            raise ConfigError(f"line {number}: key {key!r} given twice")
        cleaned[key] = value.strip()
    return cleaned


def config_hash(cleaned: Dict[str, str]) -> str:
    normalized = "\n".join(f"{key}={cleaned[key]}" for key in sorted(cleaned))
    return hashlib.sha256(normalized.encode("utf-8")).hexdigest()


def parse_config(text: str, base_dir: str = ".") -> ExperimentConfig:
    cleaned = clean_config_text(text)
    parsers = {f.name: f.metadata["parser"] for f in fields(ExperimentConfig) if "parser" in f.metadata}
    values = {}
    for key, raw in cleaned.items():
        try:
            values[key] = parsers[key](raw)
        except (ValueError, ZeroDivisionError) as exc:
            raise ConfigError(f"invalid value for {key}: {raw!r} ({exc})") from exc
    try:
        config = ExperimentConfig(base_dir=base_dir, config_hash=config_hash(cleaned), **values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    logger.debug("parsed config %s with %s keys", config.config_hash[:12], len(cleaned))
    return config


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as handle:
            text = handle.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config(text, base_dir=os.path.dirname(os.path.abspath(path)))
