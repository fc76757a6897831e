import django.test

from ergodic.models import CheckRecord, ExperimentRun
from ergodic.verification import make_record

from ergodic.tests.factories import CheckRecordFactory, ExperimentRunFactory


class ExperimentRunTest(django.test.TestCase):
    def test_finish(self):
        run = ExperimentRunFactory()
        self.assertEqual(run.status, ExperimentRun.Status.RUNNING)
        self.assertIsNone(run.finished_at)
        run.finish(ExperimentRun.Status.FAILED, 1, "property_P failed")
        run.refresh_from_db()
        self.assertEqual(run.status, ExperimentRun.Status.FAILED)
        self.assertEqual(run.exit_code, 1)
        self.assertEqual(run.message, "property_P failed")
        self.assertIsNotNone(run.finished_at)

    def test_str(self):
        run = ExperimentRunFactory(config_hash="ab" * 32)
        self.assertEqual(str(run), "verify abababababab (running)")


class CheckRecordTest(django.test.TestCase):
    def test_from_record(self):
        run = ExperimentRunFactory()
        record = make_record("van_der_corput", {"N": 10, "M": 3}, True, measured=0.25, bound=1.5)
        check = CheckRecord.from_record(run, record)
        check.save()
        check.refresh_from_db()
        self.assertEqual(check.check_name, "van_der_corput")
        self.assertEqual(check.parameters, {"N": 10, "M": 3})
        self.assertTrue(check.passed)
        self.assertEqual(check.measured, 0.25)
        self.assertIsNone(check.witness)

    def test_ordering_by_run(self):
        first = CheckRecordFactory()
        second = CheckRecordFactory(run=first.run, check_name="lln_ratio", passed=False)
        self.assertEqual(list(first.run.checks.all()), [first, second])
        self.assertEqual(list(first.run.checks.filter(passed=False)), [second])
