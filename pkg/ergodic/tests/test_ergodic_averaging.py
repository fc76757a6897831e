import cmath
import math
from fractions import Fraction

import django.test
import numpy as np

from ergodic.errors import IncompatibleTarget
from ergodic.ergodic_averaging import (
    Character,
    Coordinate,
    CyclicRotation,
    IndicatorInterval,
    IrrationalRotation,
    PowerTarget,
    Product,
    Table,
    average_along,
    average_of_terms,
    describe_point,
    get_test_system,
    project_invariant,
    residue_distribution,
)
from ergodic.exact_arith import RealPoint
from ergodic.return_sequences import BernoulliSequence, DeterministicSequence, Formula
from ergodic.source_dynamics import ROTATION_FAST_LIMIT

from ergodic.tests.factories import DigitStreamFactory, GoldenStreamFactory

GOLDEN = (math.sqrt(5) - 1) / 2


class CyclicRotationTest(django.test.SimpleTestCase):
    def test_average_along_integers(self):
        trace = average_along(DeterministicSequence(), CyclicRotation(2, 1), Table((0, 1)), 0, 7)
        self.assertEqual(trace.checkpoints[-1], 7)
        self.assertAlmostEqual(trace.final, 4 / 7)
        self.assertEqual(trace.projection, Fraction(1, 2))

    def test_non_ergodic_projection(self):
        system = CyclicRotation(6, 2)
        table = Table(range(6))
        self.assertFalse(system.ergodic)
        self.assertEqual(system.orbit(1), [1, 3, 5])
        self.assertEqual(project_invariant(system, table, 0), 2)
        self.assertEqual(project_invariant(system, table, 1), 3)
        trace = average_along(DeterministicSequence(), system, table, 0, 6, gamma=2)
        self.assertAlmostEqual(trace.final, 2)
        self.assertAlmostEqual(trace.gaps()[-1], 0)

    def test_bernoulli_average_approaches_projection(self):
        system = CyclicRotation(6, 2)
        table = Table.random(6, seed=5)
        trace = average_along(BernoulliSequence(Fraction(2, 5), seed=11), system, table, 0, 3000)
        self.assertLess(trace.gaps()[-1], 0.1)

    def test_character_values(self):
        system = CyclicRotation(4, 1)
        self.assertAlmostEqual(system.evaluate(Character(1), 0, 1), 1j)
        values = system.orbit_values(Character(1), 0, [1, 2])
        self.assertAlmostEqual(values[1], -1)
        self.assertAlmostEqual(project_invariant(system, Character(1), 0), 0)
        self.assertAlmostEqual(project_invariant(CyclicRotation(4, 2), Character(2), 0), 1)

    def test_table_must_fit(self):
        with self.assertRaises(IncompatibleTarget):
            CyclicRotation(3).evaluate(Table((0, 1)), 0, 1)
        with self.assertRaises(IncompatibleTarget):
            CyclicRotation(3).evaluate(IndicatorInterval(0, 1), 0, 1)

    def test_random_table(self):
        table = Table.random(8, seed=3)
        self.assertEqual(table, Table.random(8, seed=3))
        self.assertTrue(all(v.denominator <= 1000 and 0 <= v <= 1 for v in table.values))

    def test_sample_point_in_range(self):
        self.assertIn(CyclicRotation(5).sample_point(9), range(5))


class IrrationalRotationTest(django.test.SimpleTestCase):
    def setUp(self) -> None:
        self.system = IrrationalRotation(GoldenStreamFactory())

    def test_character_average_vanishes(self):
        trace = average_along(DeterministicSequence(), self.system, Character(1), RealPoint(None, 0), 1000)
        self.assertEqual(trace.projection, 0)
        self.assertLess(abs(trace.final), 1 / (1000 * math.sin(math.pi * GOLDEN)))

    def test_fast_values_match_exact(self):
        x = self.system.sample_point(4)
        f = IndicatorInterval(Fraction(1, 3), Fraction(1, 2))
        rs = list(range(1, 200))
        fast = self.system.orbit_values(f, x, rs)
        exact = [float(self.system.evaluate(f, x, r)) for r in rs]
        self.assertEqual(fast.tolist(), exact)

    def test_character_position(self):
        x = RealPoint(None, 0)
        value = self.system.evaluate(Character(1), x, 3)
        self.assertAlmostEqual(value, cmath.exp(2j * math.pi * ((3 * GOLDEN) % 1)), places=12)

    def test_past_fast_limit(self):
        x = RealPoint(None, 0)
        values = self.system.orbit_values(Character(1), x, [ROTATION_FAST_LIMIT])
        self.assertEqual(values.dtype, np.complex128)
        self.assertAlmostEqual(abs(values[0]), 1.0)

    def test_projection_of_indicator(self):
        self.assertEqual(project_invariant(self.system, IndicatorInterval(0, Fraction(1, 4)), None), Fraction(1, 4))


class PowerTargetTest(django.test.SimpleTestCase):
    def test_fast_values_match_exact(self):
        system = PowerTarget(2)
        x = DigitStreamFactory(seed=30)
        f = IndicatorInterval(0, Fraction(1, 2))
        rs = [1, 5, 9, 40, 41, 300]
        self.assertEqual(system.orbit_values(f, x, rs).tolist(), [float(system.evaluate(f, x, r)) for r in rs])
        for r in rs:
            self.assertEqual(system.evaluate(f, x, r), int(x.digit(r + 1) == 0))

    def test_point_base_checked(self):
        with self.assertRaises(IncompatibleTarget):
            PowerTarget(3).evaluate(Character(1), DigitStreamFactory(base=2), 1)


class ProductTest(django.test.SimpleTestCase):
    def test_coordinate_observable(self):
        system = Product([CyclicRotation(2, 1), CyclicRotation(3, 1)])
        f = Coordinate(Table((0, 1, 2)), 1)
        self.assertEqual(system.evaluate(f, (0, 0), 4), 1)
        self.assertEqual(project_invariant(system, f, (0, 0)), 1)
        trace = average_of_terms([1, 2, 3, 4, 5, 6], system, f, (0, 0), Fraction(2))
        self.assertAlmostEqual(trace.final, 1)

    def test_requires_coordinates(self):
        system = Product([CyclicRotation(2, 1), CyclicRotation(3, 1)])
        with self.assertRaises(IncompatibleTarget):
            system.evaluate(Table((0, 1)), (0, 0), 1)
        with self.assertRaises(IncompatibleTarget):
            system.evaluate(Coordinate(Table((0, 1)), 2), (0, 0), 1)
        with self.assertRaises(ValueError):
            Product([CyclicRotation(2)])

    def test_describe_point(self):
        point = (0, RealPoint(None, Fraction(1, 3)))
        self.assertEqual(describe_point(point), "(0, 1/3)")


class AveragingHelpersTest(django.test.SimpleTestCase):
    def test_residue_distribution(self):
        self.assertEqual(residue_distribution(DeterministicSequence(), 3, 9), [Fraction(1, 3)] * 3)
        self.assertEqual(
            residue_distribution(DeterministicSequence(Formula.SQUARE), 4, 8),
            [Fraction(1, 2), Fraction(1, 2), 0, 0],
        )

    def test_bernoulli_residues_equidistribute(self):
        frequencies = residue_distribution(BernoulliSequence(Fraction(2, 5), seed=8), 3, 4000)
        for value in frequencies:
            self.assertAlmostEqual(float(value), 1 / 3, delta=0.04)

    def test_argument_checks(self):
        with self.assertRaises(ValueError):
            average_along(DeterministicSequence(), CyclicRotation(2), Table((0, 1)), 0, 0)
        with self.assertRaises(ValueError):
            average_along(DeterministicSequence(), CyclicRotation(2), Table((0, 1)), 0, 10, gamma=3)
        with self.assertRaises(ValueError):
            residue_distribution(DeterministicSequence(), 0, 5)

    def test_registry(self):
        self.assertIs(get_test_system("cyclic"), CyclicRotation)
        self.assertIs(get_test_system("product"), Product)
        with self.assertRaises(ValueError):
            get_test_system("torus")
