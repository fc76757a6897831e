import math
from fractions import Fraction

import django.test
from hypothesis import given, settings, strategies as st

from ergodic.errors import PrecisionExhausted
from ergodic.exact_arith import (
    CFSource,
    DigitSource,
    IntervalSet,
    RealPoint,
    Threshold,
    cf_tail_in_interval,
    iroot,
    make_cf_stream,
    make_digit_stream,
    rotation_in_interval,
    tail_in_interval,
    threshold_eval,
    threshold_less,
    thue_morse_digits,
)

from ergodic.tests.factories import DigitStreamFactory, GoldenStreamFactory

GOLDEN = (math.sqrt(5) - 1) / 2


class IrootTest(django.test.SimpleTestCase):
    def test_exact_powers(self):
        self.assertEqual(iroot(2 ** 300, 3), 2 ** 100)
        self.assertEqual(iroot(10 ** 40, 5), 10 ** 8)

    @given(st.integers(min_value=0, max_value=10 ** 60), st.integers(min_value=1, max_value=9))
    def test_floor_root(self, m, k):
        r = iroot(m, k)
        self.assertLessEqual(r ** k, m)
        self.assertGreater((r + 1) ** k, m)

    def test_rejects_negative(self):
        with self.assertRaises(ValueError):
            iroot(-1, 2)


class ThresholdTest(django.test.SimpleTestCase):
    def test_rational_power_is_exact(self):
        self.assertEqual(threshold_eval(Threshold.power(32, Fraction(2, 5)), 64), (Fraction(1, 4), Fraction(1, 4)))
        self.assertEqual(threshold_eval(Threshold.power(16, Fraction(1, 2)), 64), (Fraction(1, 4), Fraction(1, 4)))
        self.assertEqual(Threshold.half_power(16, Fraction(1, 2)).exact(), Fraction(1, 8))

    def test_gauss_rational_case(self):
        # 4 ** (4 ** -1/2) - 1 = 1
        self.assertEqual(Threshold.gauss(4, Fraction(1, 2), 4).exact(), Fraction(1))

    def test_enclosure_width_and_value(self):
        expr = Threshold.power(2, Fraction(1, 2))
        for bits in (8, 64, 200):
            lo, hi = threshold_eval(expr, bits)
            self.assertLessEqual(hi - lo, Fraction(1, 2 ** bits))
            self.assertLess(lo * lo * 2, 1)
            self.assertGreater(hi * hi * 2, 1)

    def test_gauss_enclosure_contains_value(self):
        expr = Threshold.gauss(3, Fraction(2, 5), 2)
        lo, hi = threshold_eval(expr, 80)
        expected = 2 ** (3 ** -0.4) - 1
        self.assertAlmostEqual(float(lo), expected, places=12)
        self.assertLessEqual(hi - lo, Fraction(1, 2 ** 80))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(min_value=2, max_value=10 ** 6), st.integers(min_value=16, max_value=120))
    def test_enclosures_nest(self, n, bits):
        expr = Threshold.power(n, Fraction(2, 5), Fraction(3, 4))
        lo, hi = threshold_eval(expr, bits)
        fine_lo, fine_hi = threshold_eval(expr, bits + 17)
        self.assertLessEqual(lo, fine_lo)
        self.assertLessEqual(fine_hi, hi)

    def test_affine_map(self):
        expr = Threshold.power(32, Fraction(2, 5)).affine(-1, 1)
        self.assertEqual(expr.exact(), Fraction(3, 4))

    def test_threshold_less(self):
        self.assertTrue(threshold_less(Threshold.power(3, Fraction(1, 2)), Threshold.power(2, Fraction(1, 2))))
        self.assertFalse(threshold_less(Threshold.power(2, Fraction(1, 2)), Threshold.power(3, Fraction(1, 2))))
        self.assertFalse(threshold_less(Threshold.constant(1), Threshold.constant(1)))
        self.assertTrue(threshold_less(Threshold.constant(Fraction(1, 2)), Threshold.power(2, Fraction(1, 2))))

    def test_invalid_parameters(self):
        with self.assertRaises(ValueError):
            Threshold.power(0, Fraction(1, 2))
        with self.assertRaises(ValueError):
            Threshold.power(5, Fraction(1))
        with self.assertRaises(ValueError):
            Threshold.gauss(5, Fraction(1, 2), 1)

    def test_overlapping_components_rejected(self):
        with self.assertRaises(ValueError):
            IntervalSet.of((0, Fraction(1, 2)), (Fraction(1, 4), 1)).check_disjoint()
        IntervalSet.of((0, Fraction(1, 4)), (Fraction(1, 4), 1)).check_disjoint()


class DigitStreamTest(django.test.SimpleTestCase):
    def test_seeded_stream_is_reproducible(self):
        first = make_digit_stream(2, DigitSource.seeded(), seed=11)
        second = make_digit_stream(2, DigitSource.seeded(), seed=11)
        self.assertEqual(first.prefix(500), second.prefix(500))
        self.assertNotEqual(first.prefix(500), make_digit_stream(2, DigitSource.seeded(), seed=12).prefix(500))

    def test_prefix_independent_of_materialization_order(self):
        stream = DigitStreamFactory(seed=4)
        late = stream.digit(70000)
        fresh = DigitStreamFactory(seed=4)
        self.assertEqual(fresh.prefix(70000)[-1], late)

    def test_base_ten_digits_in_range(self):
        stream = DigitStreamFactory(base=10, seed=3)
        digits = stream.prefix(2000)
        self.assertTrue(all(0 <= d < 10 for d in digits))
        self.assertGreater(len(set(digits)), 5)

    def test_shifted_view_shares_cache(self):
        stream = DigitStreamFactory(seed=9)
        view = stream.shifted(5)
        self.assertEqual(view.digit(1), stream.digit(6))
        self.assertEqual(view.prefix(10), stream.prefix(15)[5:])

    def test_periodic_exact_tail(self):
        # 0.(01)_2 = 1/3
        stream = make_digit_stream(2, DigitSource.periodic((), (0, 1)))
        self.assertEqual(stream.exact_tail(0), Fraction(1, 3))
        self.assertEqual(stream.exact_tail(1), Fraction(2, 3))

    def test_big_real_digits(self):
        stream = make_digit_stream(10, DigitSource.big_real(Fraction(1, 7)))
        self.assertEqual(stream.prefix(6), [1, 4, 2, 8, 5, 7])
        self.assertEqual(stream.exact_tail(6), Fraction(1, 7))

    def test_rejects_out_of_range_digits(self):
        with self.assertRaises(ValueError):
            make_digit_stream(2, DigitSource.fixed([0, 2]))
        with self.assertRaises(ValueError):
            make_digit_stream(1, DigitSource.seeded())

    def test_thue_morse_tails(self):
        stream = make_digit_stream(2, DigitSource.fixed(thue_morse_digits(200)))
        half = Threshold.constant(Fraction(1, 2))
        zero = Threshold.constant(0)
        self.assertFalse(tail_in_interval(stream, 2, zero, half))
        self.assertTrue(tail_in_interval(stream, 3, zero, half))

    def test_endpoint_hit_is_outside_open_interval(self):
        stream = make_digit_stream(2, DigitSource.fixed([1]))
        half = Threshold.constant(Fraction(1, 2))
        self.assertFalse(tail_in_interval(stream, 0, half, Threshold.constant(1)))
        self.assertTrue(tail_in_interval(stream, 0, half, Threshold.constant(1), closed=True))

    def test_seeded_tail_against_irrational_threshold(self):
        stream = DigitStreamFactory(seed=21)
        hi = Threshold.power(7, Fraction(2, 5))
        expected = stream.leading_float(10) < float(hi)
        self.assertEqual(tail_in_interval(stream, 10, Threshold.constant(0), hi), expected)


class CFStreamTest(django.test.SimpleTestCase):
    def test_golden_convergents(self):
        stream = GoldenStreamFactory()
        self.assertEqual(stream.convergent(5), (5, 8))
        self.assertAlmostEqual(float(stream), GOLDEN, places=15)

    def test_enclosure_brackets_value(self):
        stream = make_cf_stream(CFSource.periodic((), (2,)))
        lo, hi = stream.enclosure(100)
        self.assertLess(lo, hi)
        self.assertLessEqual(hi - lo, Fraction(1, 2 ** 100))
        self.assertAlmostEqual(float(lo), math.sqrt(2) - 1, places=15)

    def test_seeded_quotients_reproducible(self):
        first = make_cf_stream(CFSource.seeded(), seed=5)
        second = make_cf_stream(CFSource.seeded(), seed=5)
        self.assertEqual(
            [first.quotient(k) for k in range(1, 200)],
            [second.quotient(k) for k in range(1, 200)],
        )

    def test_fixed_list_runs_out(self):
        stream = make_cf_stream(CFSource.fixed([1, 2, 3]))
        self.assertEqual(stream.quotient(3), 3)
        with self.assertRaises(PrecisionExhausted):
            stream.quotient(4)

    def test_tail_membership(self):
        stream = make_cf_stream(CFSource.periodic((), (2,)))
        zero = Threshold.constant(0)
        self.assertTrue(cf_tail_in_interval(stream, 3, zero, Threshold.constant(Fraction(1, 2))))
        self.assertFalse(cf_tail_in_interval(stream, 3, zero, Threshold.constant(Fraction(2, 5))))

    def test_rejects_zero_quotient(self):
        with self.assertRaises(ValueError):
            make_cf_stream(CFSource.fixed([1, 0]))


class RotationTest(django.test.SimpleTestCase):
    def test_rational_point_orbit(self):
        alpha = GoldenStreamFactory()
        x = RealPoint(None, Fraction(0))
        # frac(3 * 0.618...) = 0.854...
        self.assertTrue(rotation_in_interval(
            x, alpha, 3, Threshold.constant(Fraction(4, 5)), Threshold.constant(Fraction(9, 10))))
        self.assertFalse(rotation_in_interval(
            x, alpha, 3, Threshold.constant(0), Threshold.constant(Fraction(4, 5))))

    def test_moved_point(self):
        point = RealPoint(None, Fraction(1, 3)).moved(Fraction(1, 3))
        self.assertEqual(point.offset, Fraction(2, 3))
        self.assertEqual(point.enclosure(64), (Fraction(2, 3), Fraction(2, 3)))
