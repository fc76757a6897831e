from fractions import Fraction

import django.test

from ergodic.exact_arith import IntervalSet, RealPoint, Threshold
from ergodic.source_dynamics import (
    GaussMap,
    MarkovChain,
    MarkovPath,
    MarkovShift,
    PowerMap,
    RotationMap,
    get_source,
    invariant_measure_of,
    joint_event_probability,
    matrix_power,
    orbit_membership,
)
from ergodic.target_families import CenteredBall, GaussShrinking, ShrinkingInterval

from ergodic.tests import load_fixture
from ergodic.tests.factories import (
    DigitStreamFactory,
    GoldenStreamFactory,
    IndependentChainFactory,
    MarkovChainFactory,
    PeriodicChainFactory,
)


class RegistryTest(django.test.SimpleTestCase):
    def test_get_source(self):
        self.assertIs(get_source("power"), PowerMap)
        self.assertIs(get_source("gauss"), GaussMap)
        self.assertIs(get_source("rotation"), RotationMap)
        self.assertIs(get_source("markov"), MarkovShift)
        with self.assertRaises(ValueError):
            get_source("tent")


class PowerMapTest(django.test.SimpleTestCase):
    def test_fast_scan_agrees_with_exact_membership(self):
        system = PowerMap(2)
        family = ShrinkingInterval(1, Fraction(2, 5))
        point = DigitStreamFactory(seed=17)
        hits = set(system.scan_block(point, family, 1, 400))
        for n in range(1, 400):
            self.assertEqual(n in hits, orbit_membership(system, point, n, family.target_set(n)), n)

    def test_base_three(self):
        system = PowerMap(3)
        point = DigitStreamFactory(base=3, seed=2)
        target = IntervalSet.of((0, Fraction(1, 3)))
        for n in range(1, 50):
            self.assertEqual(system.contains(point, n, target), point.digit(n + 1) == 0)

    def test_lebesgue_measure(self):
        target = IntervalSet.of((0, Fraction(1, 4)), (Fraction(1, 2), Fraction(3, 4)))
        self.assertEqual(invariant_measure_of(PowerMap(2), target), Fraction(1, 2))

    def test_rejects_small_base(self):
        with self.assertRaises(ValueError):
            PowerMap(1)


class GaussMapTest(django.test.SimpleTestCase):
    def test_measure_of_gauss_target(self):
        family = GaussShrinking(2, Fraction(2, 5))
        for n in (1, 7, 1000):
            self.assertAlmostEqual(GaussMap().measure(family.target_set(n)), n ** -0.4, places=12)

    def test_measure_of_half(self):
        # log2(3/2)
        self.assertAlmostEqual(GaussMap().measure(IntervalSet.of((0, Fraction(1, 2)))), 0.5849625007211562)

    def test_scan_matches_quotients(self):
        system = GaussMap()
        point = system.sample_point(3)
        target = IntervalSet.of((Fraction(1, 2), 1))
        for n in range(0, 30):
            # G^n y lies in (1/2, 1) exactly when a_{n+1} = 1
            self.assertEqual(system.contains(point, n, target), point.quotient(n + 1) == 1)


class RotationMapTest(django.test.SimpleTestCase):
    def test_fast_scan_agrees_with_exact_membership(self):
        system = RotationMap(GoldenStreamFactory(), quotient_bound=1)
        family = CenteredBall(Fraction(2, 5))
        point = system.sample_point(8)
        hits = set(system.scan_block(point, family, 1, 300))
        for n in range(1, 300):
            self.assertEqual(n in hits, system.contains(point, n, family.target_set(n)), n)

    def test_rational_start(self):
        system = RotationMap(GoldenStreamFactory())
        x = RealPoint(None, Fraction(0))
        target = IntervalSet.of((Fraction(4, 5), Fraction(9, 10)))
        self.assertTrue(system.contains(x, 3, target))
        self.assertFalse(system.contains(x, 1, target))

    def test_badly_approximable(self):
        self.assertTrue(RotationMap(GoldenStreamFactory(), quotient_bound=1).badly_approximable)
        self.assertFalse(RotationMap(GoldenStreamFactory()).badly_approximable)


class MarkovChainTest(django.test.SimpleTestCase):
    def test_stationary_and_gap(self):
        chain = MarkovChainFactory()
        self.assertEqual(chain.stationary, (Fraction(1, 2), Fraction(1, 2)))
        self.assertAlmostEqual(chain.second_eigenvalue_modulus, 0.5)

    def test_stationary_asymmetric(self):
        chain = MarkovChainFactory(transition_matrix=((Fraction(1, 2), Fraction(1, 2)), (Fraction(1, 4), Fraction(3, 4))))
        self.assertEqual(chain.stationary, (Fraction(1, 3), Fraction(2, 3)))

    def test_from_text(self):
        chain = MarkovChain.from_text(load_fixture("chain_gap.txt"))
        self.assertEqual(chain, MarkovChainFactory())
        self.assertEqual(MarkovChain.from_text(chain.to_text()), chain)

    def test_periodic_chain_needs_flag(self):
        with self.assertRaises(ValueError):
            MarkovChain(((0, 1), (1, 0)))
        self.assertAlmostEqual(PeriodicChainFactory().second_eigenvalue_modulus, 1.0)

    def test_invalid_matrices(self):
        with self.assertRaises(ValueError):
            MarkovChain(((Fraction(1, 2), Fraction(1, 3)), (0, 1)))
        with self.assertRaises(ValueError):
            MarkovChain(((1, 0), (0, 1)), require_spectral_gap=False)
        with self.assertRaises(ValueError):
            MarkovChain(((1,),))

    def test_matrix_power(self):
        square = matrix_power(MarkovChainFactory(), 2)
        self.assertEqual(square, ((Fraction(5, 8), Fraction(3, 8)), (Fraction(3, 8), Fraction(5, 8))))

    def test_joint_event_probability(self):
        chain = MarkovChainFactory()
        self.assertEqual(joint_event_probability(chain, [1, 2], {1}), Fraction(3, 8))
        self.assertEqual(joint_event_probability(chain, [1, 2, 3], {1}), Fraction(9, 32))
        self.assertEqual(joint_event_probability(IndependentChainFactory(), [1, 5, 9], {0}), Fraction(1, 8))
        with self.assertRaises(ValueError):
            joint_event_probability(chain, [2, 2], {1})
        with self.assertRaises(ValueError):
            joint_event_probability(chain, [1], {2})


class MarkovShiftTest(django.test.SimpleTestCase):
    def test_periodic_path_from_fixed_start(self):
        system = MarkovShift(PeriodicChainFactory(), symbol_event={1}, start_state=0)
        path = system.sample_point(0)
        self.assertTrue(system.contains(path, 1, None))
        self.assertFalse(system.contains(path, 2, None))

    def test_path_is_reproducible(self):
        chain = MarkovChainFactory()
        first = MarkovPath(chain, seed=4)
        second = MarkovPath(chain, seed=4)
        self.assertEqual(first.states(0, 3000).tolist(), second.states(0, 3000).tolist())

    def test_state_frequency(self):
        path = MarkovPath(MarkovChainFactory(), seed=12)
        frequency = path.states(0, 20000).mean()
        self.assertAlmostEqual(frequency, 0.5, delta=0.03)

    def test_interval_coding(self):
        system = MarkovShift(MarkovChainFactory())
        self.assertEqual(system.coding_point(1), Fraction(3, 4))
        self.assertEqual(system.measure(IntervalSet.of((0, Fraction(1, 2)))), Fraction(1, 2))
        self.assertEqual(system.measure(None), Fraction(1, 2))

    def test_rejects_bad_start_state(self):
        with self.assertRaises(ValueError):
            MarkovPath(MarkovChainFactory(), seed=0, start_state=2)

    def test_rejects_bad_event(self):
        with self.assertRaises(ValueError):
            MarkovShift(MarkovChainFactory(), symbol_event={3})

    def test_threshold_target(self):
        system = MarkovShift(MarkovChainFactory())
        path = system.sample_point(1)
        target = IntervalSet.of((0, Threshold.power(2, Fraction(1, 2))))
        for n in range(10):
            self.assertEqual(system.contains(path, n, target), path.state(n) == 0)
