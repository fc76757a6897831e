"""
Batch experiments behind the management commands.

Each ``run_*`` function takes a parsed ExperimentConfig, runs one task per seed
(optionally on a thread pool; results are collected and written in seed order)
and writes its CSV/JSON files to ``config.out``. ``LabCommand`` is the
management-command base that parses the shared flags, keeps the run ledger
and turns the outcome into the process exit code.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import IntEnum
from fractions import Fraction
from typing import Callable, List, Optional

from django.core.management.base import BaseCommand, CommandError
from django.db import DatabaseError

from ergodic.conf import lab_setting
from ergodic.config import ExperimentConfig, load_config
from ergodic.ergodic_averaging import (
    IndicatorInterval,
    IrrationalRotation,
    average_along,
    average_of_terms,
    residue_distribution,
)
from ergodic.errors import (
    BudgetExceeded,
    ConfigError,
    IncompatibleTarget,
    InsufficientTerms,
    LabError,
    PrecisionExhausted,
    ScanLimitExceeded,
)
from ergodic.exact_arith import Threshold, threshold_less
from ergodic.models import CheckRecord, ExperimentRun
from ergodic.numerics import log_grid
from ergodic.reporting import CsvWriter, output_path, write_csv, write_json
from ergodic.return_sequences import growth_exponent
from ergodic.verification import (
    DiagnosticConfig,
    RateModel,
    VerificationRecord,
    VerificationReport,
    check_property_P,
    covariance_sum_bound,
    fourfold_suite,
    lln_ensemble_record,
    lln_ratio_trace,
    vdc_suite,
    vn_decay_diagnostic,
)

logger = logging.getLogger(__name__)

COUNTEREXAMPLE_HORIZON = 10**7
COUNTEREXAMPLE_MIN_TERMS = 50
COUNTEREXAMPLE_OFFSET = Fraction(3, 5)


class ExitCode(IntEnum):
    OK = 0
    VERIFICATION_FAILED = 1
    CONFIG_ERROR = 2
    EXHAUSTED = 3


@dataclass
class RunOutcome:
    command: str
    files: List[str] = field(default_factory=list)
    passed: bool = True
    exhausted: bool = False
    messages: List[str] = field(default_factory=list)
    records: List[VerificationRecord] = field(default_factory=list)

    @property
    def exit_code(self) -> ExitCode:
        if not self.passed:
            return ExitCode.VERIFICATION_FAILED
        if self.exhausted:
            return ExitCode.EXHAUSTED
        return ExitCode.OK


@dataclass
class SeedResult:
    seed: int
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    error: Optional[str] = None
    passed: bool = True

    @property
    def exhausted(self) -> bool:
        return self.error is not None


def map_seeds(task: Callable[[int], SeedResult], seeds: List[int], threads: int = 1) -> List[SeedResult]:
    """Run ``task`` for every seed; results come back in seed-list order whatever the thread count."""
    if threads <= 1 or len(seeds) <= 1:
        return [task(seed) for seed in seeds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(task, seeds))


def _sequence_and_point(config: ExperimentConfig, seed: int):
    """The sequence of one seed and, for return-time sequences, its source point y."""
    if config.sequence != "returns":
        return config.build_sequence(seed), None
    system = config.build_source()
    family = config.build_family()
    y = config.build_point(system, seed)
    return config.build_sequence(seed, system, family, y), y


def _finish(outcome: RunOutcome, results: List[SeedResult]) -> RunOutcome:
    for result in results:
        if result.error:
            outcome.exhausted = True
            outcome.messages.append(f"seed {result.seed}: {result.error}")
        outcome.passed = outcome.passed and result.passed
    return outcome


# ---------------------------------------------------------------------------
# returns


def run_returns(config: ExperimentConfig, threads: int = 1) -> RunOutcome:
    """CSV of (n, r_n) per seed for all hits n <= n_max, plus a JSON summary."""

    def task(seed: int) -> SeedResult:
        seq, _ = _sequence_and_point(config, seed)
        limit = min(config.n_max, seq.horizon)
        result = SeedResult(seed)
        try:
            terms, _ = seq.returns_up_to(limit)
            if limit < config.n_max:
                result.error = f"scan horizon {seq.horizon} is below n_max {config.n_max}"
        except PrecisionExhausted as exc:
            terms = seq.returns_up_to(seq.scanned)[0] if seq.scanned else []
            result.error = str(exc)
        result.rows = [(i, r) for i, r in enumerate(terms, start=1)]
        exponent = None
        if len(terms) >= 2 * config.growth_n_min:
            try:
                exponent = growth_exponent(seq, config.growth_n_min, len(terms))
            except InsufficientTerms:
                exponent = None
        result.summary = {
            "count": len(terms),
            "scanned": seq.scanned,
            "growth_exponent": exponent,
            "sequence": repr(seq),
        }
        return result

    results = map_seeds(task, config.seed_list, threads)
    outcome = RunOutcome("returns")
    for result in results:
        path = output_path(config.out, f"returns_seed{result.seed}.csv")
        outcome.files.append(write_csv(path, ("n", "r_n"), result.rows, config.config_hash, result.seed))
    summary = {
        "n_max": config.n_max,
        "seeds": {str(r.seed): dict(r.summary, status=r.error or "ok") for r in results},
    }
    outcome.files.append(write_json(output_path(config.out, "returns_summary.json"), summary,
                                    config.config_hash, config.seed_list))
    return _finish(outcome, results)


# ---------------------------------------------------------------------------
# average


def _decreasing_tail(values, count: int = 3) -> bool:
    tail = [abs(v) for v in values[-count:]]
    return len(tail) == count and all(b < a for a, b in zip(tail, tail[1:]))


def run_average(config: ExperimentConfig, threads: int = 1) -> RunOutcome:
    """Trace of A_K against the invariant projection at lacunary K, per seed."""

    def task(seed: int) -> SeedResult:
        seq, y = _sequence_and_point(config, seed)
        system = config.build_test_system()
        f = config.build_observable(seed, system)
        x = config.build_x(system, seed, y)
        result = SeedResult(seed)
        try:
            trace = average_along(seq, system, f, x, config.k_max, config.gamma)
        except ScanLimitExceeded as exc:
            result.error = str(exc)
            if not exc.terms:
                return result
            trace = average_of_terms(exc.terms, system, f, x, config.gamma, sequence=repr(seq))
        result.rows = trace.rows()
        result.summary = {
            "terms": len(trace.terms),
            "final": trace.final,
            "projection": trace.projection,
            "gap": trace.gaps()[-1],
            "decreasing": _decreasing_tail(trace.values),
            "point": trace.point,
        }
        return result

    results = map_seeds(task, config.seed_list, threads)
    outcome = RunOutcome("average")
    for result in results:
        path = output_path(config.out, f"average_seed{result.seed}.csv")
        outcome.files.append(write_csv(path, ("K", "re", "im", "projection", "gap"), result.rows,
                                       config.config_hash, result.seed))
    summary = {"k_max": config.k_max, "seeds": {str(r.seed): dict(r.summary, status=r.error or "ok")
                                                for r in results}}
    outcome.files.append(write_json(output_path(config.out, "average_summary.json"), summary,
                                    config.config_hash, config.seed_list))
    return _finish(outcome, results)


# ---------------------------------------------------------------------------
# bc_ratio


def run_bc_ratio(config: ExperimentConfig, threads: int = 1) -> RunOutcome:
    """W_N(omega) / W_N at lacunary N for every seed."""
    family = config.build_family()

    def task(seed: int) -> SeedResult:
        seq, _ = _sequence_and_point(config, seed)
        system = seq.reference_system
        if system is None:
            raise ConfigError(f"{seq!r} has no source measure, so W_N is undefined")
        result = SeedResult(seed)
        try:
            trace = lln_ratio_trace(seq, family, system, config.n_max, config.gamma)
        except (PrecisionExhausted, ScanLimitExceeded) as exc:
            result.error = str(exc)
            return result
        result.rows = [(seed, N, hits, w, hits / w)
                       for N, hits, w in zip(trace.checkpoints, trace.hits, trace.expected)]
        result.summary = {"final_ratio": trace.final_ratio, "hits": trace.hits[-1], "W_N": trace.expected[-1]}
        return result

    results = map_seeds(task, config.seed_list, threads)
    outcome = RunOutcome("bc_ratio")
    seeds_label = ",".join(str(s) for s in config.seed_list)
    with CsvWriter(output_path(config.out, "bc_ratio.csv"), ("seed", "N", "hits", "W_N", "ratio"),
                   config.config_hash, seeds_label) as writer:
        for result in results:
            writer.write(result.rows)
        outcome.files.append(writer.path)
    finished = [r for r in results if not r.error]
    within = [r.seed for r in finished if abs(r.summary["final_ratio"] - 1) <= config.tolerance]
    summary = {
        "n_max": config.n_max,
        "tolerance": config.tolerance,
        "seeds_within": len(within),
        "seeds_total": len(results),
        "seeds": {str(r.seed): dict(r.summary, status=r.error or "ok") for r in results},
    }
    outcome.files.append(write_json(output_path(config.out, "bc_ratio_summary.json"), summary,
                                    config.config_hash, config.seed_list))
    return _finish(outcome, results)


# ---------------------------------------------------------------------------
# residues


def run_residues(config: ExperimentConfig, threads: int = 1) -> RunOutcome:
    """Frequencies of r_n mod m among the first k_max terms, for m = 1..m_max."""

    def task(seed: int) -> SeedResult:
        seq, _ = _sequence_and_point(config, seed)
        result = SeedResult(seed)
        deviations = {}
        try:
            for m in range(1, config.m_max + 1):
                frequencies = residue_distribution(seq, m, config.k_max)
                result.rows.extend((seed, m, residue, freq) for residue, freq in enumerate(frequencies))
                deviations[str(m)] = max(abs(freq - Fraction(1, m)) for freq in frequencies)
        except ScanLimitExceeded as exc:
            result.error = str(exc)
        result.summary = {
            "max_deviation": deviations,
            "worst": max(deviations.values()) if deviations else None,
        }
        return result

    results = map_seeds(task, config.seed_list, threads)
    outcome = RunOutcome("residues")
    seeds_label = ",".join(str(s) for s in config.seed_list)
    with CsvWriter(output_path(config.out, "residues.csv"), ("seed", "m", "residue", "frequency"),
                   config.config_hash, seeds_label) as writer:
        for result in results:
            writer.write(result.rows)
        outcome.files.append(writer.path)
    summary = {"k_max": config.k_max, "m_max": config.m_max,
               "seeds": {str(r.seed): dict(r.summary, status=r.error or "ok") for r in results}}
    outcome.files.append(write_json(output_path(config.out, "residues_summary.json"), summary,
                                    config.config_hash, config.seed_list))
    return _finish(outcome, results)


# ---------------------------------------------------------------------------
# counterexample


def _containment_margin(f: IndicatorInterval, offset: Fraction) -> Fraction:
    """Largest radius rho with B(offset, rho) mod 1 disjoint from [lo, hi]."""
    margin = min(offset - f.hi, 1 + f.lo - offset)
    if margin <= 0:
        raise ConfigError(f"x = y + {offset} is not separated from [{f.lo}, {f.hi}]")
    return margin


def run_counterexample(config: ExperimentConfig, threads: int = 1) -> RunOutcome:
    """
    Rotation source, centered-ball targets, f the indicator of [lo, hi] and
    x = y + offset. Every return r whose ball radius r**-a / 2 is below the
    separation margin puts T^r x outside [lo, hi], so only the first few terms
    can contribute and A_K stays far from the projection hi - lo.
    """
    if config.source != "rotation" or config.target != "ball" or config.sequence != "returns":
        raise ConfigError("the counterexample needs source = rotation, target = ball, sequence = returns")
    offset = config.offset_from_y(COUNTEREXAMPLE_OFFSET)
    f = IndicatorInterval(config.lo, config.hi)
    margin = _containment_margin(f, offset)
    horizon = config.scan_horizon or COUNTEREXAMPLE_HORIZON

    def task(seed: int) -> SeedResult:
        source = config.build_source()
        family = config.build_family()
        y = config.build_point(source, seed)
        seq = config.build_sequence(seed, source, family, y)
        seq.horizon = horizon
        system = IrrationalRotation(source.alpha)
        x = y.moved(offset)
        result = SeedResult(seed)
        try:
            terms = seq.first_terms(config.k_max)
        except ScanLimitExceeded as exc:
            terms = exc.terms
            result.error = str(exc)
        radius_bound = Threshold.constant(margin)
        late = [r for r in terms if threshold_less(Threshold.half_power(r, config.a), radius_bound)]
        uncovered = terms[:len(terms) - len(late)]
        contributions = [r for r in late if system.evaluate(f, x, r) != 0]
        early = len(uncovered)
        bound_ok, gap_at_50 = True, None
        if terms:
            trace = average_of_terms(terms, system, f, x, config.gamma, sequence=repr(seq))
            result.rows = trace.rows()
            for K, value in zip(trace.checkpoints, trace.values):
                if value.real > early / K + 1e-12:
                    bound_ok = False
            late_gaps = [g for K, g in zip(trace.checkpoints, trace.gaps()) if K >= COUNTEREXAMPLE_MIN_TERMS]
            gap_at_50 = min(late_gaps) if late_gaps else None
        result.passed = not contributions and bound_ok
        result.summary = {
            "terms": len(terms),
            "uncontained_terms": uncovered,
            "nonzero_contributions": contributions,
            "average_bound_holds": bound_ok,
            "min_gap_from_K50": gap_at_50,
            "projection": f.hi - f.lo,
        }
        if len(terms) < COUNTEREXAMPLE_MIN_TERMS:
            result.summary["note"] = (
                f"only {len(terms)} returns below the scan horizon; passing on exact containment alone"
            )
        elif gap_at_50 is not None and gap_at_50 < Fraction(1, 5):
            result.passed = False
        return result

    results = map_seeds(task, config.seed_list, threads)
    outcome = RunOutcome("counterexample")
    for result in results:
        path = output_path(config.out, f"counterexample_seed{result.seed}.csv")
        outcome.files.append(write_csv(path, ("K", "re", "im", "projection", "gap"), result.rows,
                                       config.config_hash, result.seed))
    summary = {
        "offset": offset,
        "margin": margin,
        "seeds": {str(r.seed): dict(r.summary, passed=r.passed, status=r.error or "ok") for r in results},
    }
    outcome.files.append(write_json(output_path(config.out, "counterexample_summary.json"), summary,
                                    config.config_hash, config.seed_list))
    outcome = _finish(outcome, results)
    # a short scan is an expected outcome here, not an exhaustion
    outcome.exhausted = False
    return outcome


# ---------------------------------------------------------------------------
# verify


def _rate_model(config: ExperimentConfig, chain) -> RateModel:
    if config.rate_model == "harmonic":
        return RateModel.harmonic(config.rate_c)
    if config.rate_lambda is None:
        return RateModel.for_chain(chain, config.rate_c)
    return RateModel.geometric(config.rate_c, config.rate_lambda)


def run_verify(config: ExperimentConfig, threads: int = 1) -> RunOutcome:
    """Run the configured checks and write one JSON report of verification records."""
    report = VerificationReport()
    seed = config.seed_list[0]
    checks = set(config.checks)
    unknown = checks - {"property_P", "fourfold", "vdc", "lln", "covariance", "vn_decay"}
    if unknown:
        raise ConfigError(f"unknown checks: {', '.join(sorted(unknown))}")
    exhausted = []

    if "property_P" in checks:
        chain = config.build_chain()
        p_report = check_property_P(chain, config.event, config.property_n_max, config.property_k_max,
                                    _rate_model(config, chain))
        report.add(p_report.record())
    if "fourfold" in checks:
        report.add(fourfold_suite(config.suite_cases, seed))
    if "vdc" in checks:
        report.add(vdc_suite(config.vdc_instances, seed))
    if "covariance" in checks:
        chain = config.build_chain()
        top = config.covariance_n_max
        bound = covariance_sum_bound(chain, config.event, top, config.a, config.epsilon,
                                     grid=log_grid(min(100, top), top))
        report.add(bound.record({"chain": chain.to_text(), "event": list(config.event), "a": config.a,
                                 "epsilon": config.epsilon, "N_max": top}))
    if "lln" in checks:
        family = config.build_family()

        def lln_task(task_seed: int):
            seq, _ = _sequence_and_point(config, task_seed)
            if seq.reference_system is None:
                raise ConfigError(f"{seq!r} has no source measure, so W_N is undefined")
            try:
                return lln_ratio_trace(seq, family, seq.reference_system, config.n_max, config.gamma)
            except (PrecisionExhausted, ScanLimitExceeded) as exc:
                exhausted.append(f"lln seed {task_seed}: {exc}")
                return None

        traces = map_seeds(lln_task, config.seed_list, threads)
        report.add(lln_ensemble_record(
            {s: t for s, t in zip(config.seed_list, traces) if t is not None}, config.tolerance
        ))
    if "vn_decay" in checks:
        seq, _ = _sequence_and_point(config, seed)
        system = config.build_test_system()
        f = config.build_observable(seed, system)
        diagnostic = DiagnosticConfig(config.a, config.c, config.epsilon, config.gamma)
        grid = log_grid(min(64, config.n_max), config.n_max)
        vn = vn_decay_diagnostic(seq, config.build_family(), system, f, config.x_samples, grid, diagnostic, seed)
        for record in vn.records({"a": config.a, "epsilon": config.epsilon, "n_max": config.n_max,
                                       "x_samples": config.x_samples, "sequence": repr(seq)}):
            report.add(record)

    outcome = RunOutcome("verify", records=report.records, passed=report.passed)
    outcome.exhausted = bool(exhausted)
    outcome.messages.extend(exhausted)
    outcome.messages.extend(f"{r['check_name']} failed" for r in report.failures())
    document = {"passed": report.passed, "records": report.records}
    outcome.files.append(write_json(output_path(config.out, "verify_report.json"), document,
                                    config.config_hash, config.seed_list))
    return outcome


# ---------------------------------------------------------------------------
# Management command base


class LabCommand(BaseCommand):
    """
    Shared flags and bookkeeping of the lab commands. Subclasses set
    ``runner`` to one of the ``run_*`` functions.
    """

    runner: Callable[[ExperimentConfig, int], RunOutcome]
    requires_migrations_checks = False

    def add_arguments(self, parser):
        parser.add_argument("--config", required=True, help="experiment config file (key = value lines)")
        parser.add_argument("--out", help="output directory, overrides the config's out key")
        parser.add_argument("--seed-override", type=int, help="run this single unsigned 64-bit seed")
        parser.add_argument("--threads", type=int, default=1, help="parallel seeds")

    def handle(self, *args, **options):
        try:
            config = load_config(options["config"])
            if options.get("out"):
                config = config.with_out(options["out"])
            if options.get("seed_override") is not None:
                if not 0 <= options["seed_override"] < 1 << 64:
                    raise ConfigError("--seed-override must be an unsigned 64-bit integer")
                config = config.with_seed(options["seed_override"])
        except ConfigError as exc:
            raise CommandError(f"configuration error: {exc}", returncode=ExitCode.CONFIG_ERROR) from exc

        run = self._open_run(config, options["config"])
        started = time.monotonic()
        self.stdout.write(f"{self.name}: config {config.config_hash[:12]}, seeds {config.seed_list}")
        try:
            outcome = type(self).runner(config, max(1, options["threads"]))
        except (ConfigError, IncompatibleTarget, BudgetExceeded, ValueError) as exc:
            self._close_run(run, ExperimentRun.Status.CONFIG_ERROR, ExitCode.CONFIG_ERROR, str(exc))
            raise CommandError(f"configuration error: {exc}", returncode=ExitCode.CONFIG_ERROR) from exc
        except LabError as exc:
            self._close_run(run, ExperimentRun.Status.EXHAUSTED, ExitCode.EXHAUSTED, str(exc))
            raise CommandError(str(exc), returncode=ExitCode.EXHAUSTED) from exc

        for path in outcome.files:
            self.stdout.write(f"  wrote {path}")
        for message in outcome.messages:
            self.stderr.write(self.style.WARNING(message))
        if run is not None and outcome.records:
            CheckRecord.objects.bulk_create([CheckRecord.from_record(run, r) for r in outcome.records])
        elapsed = time.monotonic() - started
        logger.info("%s finished in %.1fs with exit code %s", self.name, elapsed, int(outcome.exit_code))

        code = outcome.exit_code
        status = {
            ExitCode.OK: ExperimentRun.Status.PASSED,
            ExitCode.VERIFICATION_FAILED: ExperimentRun.Status.FAILED,
            ExitCode.EXHAUSTED: ExperimentRun.Status.EXHAUSTED,
        }[code]
        self._close_run(run, status, code, "; ".join(outcome.messages))
        if code == ExitCode.VERIFICATION_FAILED:
            raise CommandError("verification failed", returncode=code)
        if code == ExitCode.EXHAUSTED:
            raise CommandError("precision cap or scan horizon reached; partial output written", returncode=code)
        self.stdout.write(self.style.SUCCESS(f"{self.name}: ok"))

    @property
    def name(self) -> str:
        return type(self).__module__.rsplit(".", 1)[-1]

    def _open_run(self, config: ExperimentConfig, path: str) -> Optional[ExperimentRun]:
        try:
            return ExperimentRun.objects.create(
                command=self.name,
                config_hash=config.config_hash,
                config_path=path,
                seeds=config.seed_list,
                version=lab_setting("VERSION"),
                out_dir=config.out,
            )
        except DatabaseError as exc:
            logger.warning("run ledger unavailable (%s); run `manage.py migrate` to enable it", exc)
            return None

    def _close_run(self, run: Optional[ExperimentRun], status: str, code: int, message: str) -> None:
        if run is not None:
            run.finish(status, int(code), message)
