import json
import os
import tempfile
from fractions import Fraction
from io import StringIO

import django.test
from django.core.management import call_command
from django.core.management.base import CommandError

from ergodic.config import load_config
from ergodic.models import CheckRecord, ExperimentRun
from ergodic.reporting import provenance_line, read_csv

from ergodic.tests import fixture_path


class CommandTestCase(django.test.TestCase):
    def setUp(self) -> None:
        tmp = tempfile.TemporaryDirectory()
        self.addCleanup(tmp.cleanup)
        self.out = tmp.name

    def run_command(self, name: str, fixture: str, **options):
        stdout, stderr = StringIO(), StringIO()
        call_command(name, config=fixture_path(fixture), out=self.out, stdout=stdout, stderr=stderr, **options)
        return stdout.getvalue()

    def assertExitCode(self, code: int, name: str, fixture: str, **options):
        with self.assertRaises(CommandError) as ctx:
            self.run_command(name, fixture, **options)
        self.assertEqual(ctx.exception.returncode, code)
        return ctx.exception

    def rows(self, filename: str) -> list:
        return read_csv(os.path.join(self.out, filename))[1:]

    def summary(self, filename: str) -> dict:
        with open(os.path.join(self.out, filename), encoding="utf-8") as handle:
            return json.load(handle)


class ReturnsCommandTest(CommandTestCase):
    def test_thue_morse_returns(self):
        output = self.run_command("returns", "thue_morse.cfg")
        self.assertIn("returns: ok", output)
        rows = self.rows("returns_seed0.csv")
        self.assertEqual([int(r) for _, r in rows], [3, 5, 6, 9, 10, 12, 15])
        self.assertEqual([int(i) for i, _ in rows], list(range(1, 8)))
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, ExperimentRun.Status.PASSED)
        self.assertEqual(run.exit_code, 0)
        self.assertEqual(run.command, "returns")

    def test_provenance_header(self):
        self.run_command("returns", "thue_morse.cfg")
        config = load_config(fixture_path("thue_morse.cfg"))
        with open(os.path.join(self.out, "returns_seed0.csv"), encoding="utf-8") as handle:
            self.assertEqual(handle.readline().strip(), provenance_line(config.config_hash, 0))
        summary = self.summary("returns_summary.json")
        self.assertEqual(summary["provenance"]["config_hash"], config.config_hash)
        self.assertEqual(summary["seeds"]["0"]["count"], 7)
        self.assertEqual(summary["seeds"]["0"]["status"], "ok")

    def test_full_constant_target_hits_every_time(self):
        self.run_command("returns", "constant_full.cfg")
        self.assertEqual([int(r) for _, r in self.rows("returns_seed3.csv")], list(range(1, 21)))

    def test_seed_override(self):
        self.run_command("returns", "constant_full.cfg", seed_override=42)
        self.assertTrue(os.path.exists(os.path.join(self.out, "returns_seed42.csv")))
        self.assertFalse(os.path.exists(os.path.join(self.out, "returns_seed3.csv")))
        self.assertEqual(ExperimentRun.objects.get().seeds, [42])

    def test_scan_horizon_exit_code(self):
        self.assertExitCode(3, "returns", "horizon_short.cfg")
        rows = self.rows("returns_seed2.csv")
        self.assertTrue(rows)
        self.assertTrue(all(int(r) <= 200 for _, r in rows))
        self.assertEqual(ExperimentRun.objects.get().status, ExperimentRun.Status.EXHAUSTED)

    def test_config_errors(self):
        for fixture in ("bad_key.cfg", "bad_epsilon.cfg"):
            with self.subTest(fixture=fixture):
                error = self.assertExitCode(2, "returns", fixture)
                self.assertIn("configuration error", str(error))
        self.assertFalse(ExperimentRun.objects.exists())

    def test_missing_config(self):
        self.assertExitCode(2, "returns", "missing.cfg")

    def test_seed_override_range(self):
        self.assertExitCode(2, "returns", "thue_morse.cfg", seed_override=-1)


class AverageCommandTest(CommandTestCase):
    def test_cyclic_projection(self):
        self.run_command("average", "cyclic_average.cfg")
        rows = self.rows("average_seed5.csv")
        self.assertEqual(int(rows[-1][0]), 2000)
        self.assertLess(float(rows[-1][4]), 0.1)
        summary = self.summary("average_summary.json")["seeds"]["5"]
        self.assertEqual(summary["terms"], 2000)
        self.assertEqual(summary["status"], "ok")

    def test_explicit_table(self):
        self.run_command("average", "text_table.cfg")
        rows = self.rows("average_seed0.csv")
        self.assertEqual([int(row[0]) for row in rows], [1, 2, 4, 8, 16, 30])
        K, re, im, projection, gap = rows[-1]
        self.assertAlmostEqual(float(re), 0.5)
        self.assertAlmostEqual(float(im), 0.0)
        self.assertEqual(Fraction(projection), Fraction(1, 2))
        self.assertAlmostEqual(float(gap), 0.0)


class BcRatioCommandTest(CommandTestCase):
    def test_ratio_rows_and_summary(self):
        self.run_command("bc_ratio", "bc_ratio.cfg")
        rows = self.rows("bc_ratio.csv")
        self.assertEqual({row[0] for row in rows}, {"0", "1"})
        self.assertTrue(all(int(row[1]) <= 20000 for row in rows))
        summary = self.summary("bc_ratio_summary.json")
        self.assertEqual(summary["seeds_total"], 2)
        self.assertLessEqual(summary["seeds_within"], 2)
        for seed in ("0", "1"):
            self.assertAlmostEqual(summary["seeds"][seed]["final_ratio"], 1.0, delta=0.3)

    def test_deterministic_sequence_has_no_measure(self):
        self.assertExitCode(2, "bc_ratio", "text_table.cfg")


class ResiduesCommandTest(CommandTestCase):
    def test_residue_table(self):
        self.run_command("residues", "bernoulli_residues.cfg")
        rows = self.rows("residues.csv")
        self.assertEqual(len(rows), 20)
        for seed in ("7", "8"):
            ones = [row for row in rows if row[0] == seed and row[1] == "1"]
            self.assertEqual(ones, [[seed, "1", "0", "1"]])
        summary = self.summary("residues_summary.json")
        self.assertLess(Fraction(summary["seeds"]["7"]["worst"]), Fraction(1, 20))

    def test_threads_do_not_change_output(self):
        self.run_command("residues", "bernoulli_residues.cfg")
        single = self.rows("residues.csv")
        self.run_command("residues", "bernoulli_residues.cfg", threads=2)
        self.assertEqual(self.rows("residues.csv"), single)


class CounterexampleCommandTest(CommandTestCase):
    def test_average_stays_away_from_projection(self):
        self.run_command("counterexample", "counterexample.cfg")
        summary = self.summary("counterexample_summary.json")
        seed = summary["seeds"]["1"]
        self.assertTrue(seed["passed"])
        self.assertEqual(seed["nonzero_contributions"], [])
        self.assertTrue(seed["average_bound_holds"])
        self.assertEqual(summary["offset"], "3/5")
        self.assertTrue(self.rows("counterexample_seed1.csv"))

    def test_requires_rotation_source(self):
        self.assertExitCode(2, "counterexample", "thue_morse.cfg")

    def test_fixed_point_is_rejected(self):
        error = self.assertExitCode(2, "counterexample", "counterexample_fixed_x.cfg")
        self.assertIn("y+OFFSET", str(error))
        self.assertFalse(os.path.exists(os.path.join(self.out, "counterexample_summary.json")))
        self.assertEqual(ExperimentRun.objects.get().status, ExperimentRun.Status.CONFIG_ERROR)

    def test_unset_point_defaults_to_three_fifths(self):
        self.run_command("counterexample", "counterexample_default_x.cfg")
        summary = self.summary("counterexample_summary.json")
        self.assertEqual(summary["offset"], "3/5")
        self.assertTrue(summary["seeds"]["2"]["passed"])


class VerifyCommandTest(CommandTestCase):
    def test_default_suite_passes(self):
        self.run_command("verify", "verify_default.cfg")
        report = self.summary("verify_report.json")
        self.assertTrue(report["passed"])
        names = [record["check_name"] for record in report["records"]]
        self.assertEqual(
            sorted(names),
            sorted(["property_P", "fourfold_identity", "van_der_corput", "covariance_sum_bound", "lln_ratio",
                    "vn_decay", "van_der_corput_vn"]),
        )
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, ExperimentRun.Status.PASSED)
        self.assertEqual(run.checks.count(), 7)
        self.assertTrue(all(check.passed for check in run.checks.all()))

    def test_periodic_chain_fails(self):
        self.assertExitCode(1, "verify", "verify_periodic.cfg")
        run = ExperimentRun.objects.get()
        self.assertEqual(run.status, ExperimentRun.Status.FAILED)
        self.assertEqual(run.exit_code, 1)
        check = CheckRecord.objects.get()
        self.assertFalse(check.passed)
        self.assertEqual(check.check_name, "property_P")
        self.assertEqual(check.witness, [1, 30])
        report = self.summary("verify_report.json")
        self.assertFalse(report["passed"])

    def test_independent_chain(self):
        self.run_command("verify", "verify_independent.cfg")
        self.assertEqual(CheckRecord.objects.count(), 2)
        self.assertEqual(
            set(CheckRecord.objects.values_list("check_name", flat=True)), {"property_P", "covariance_sum_bound"}
        )
