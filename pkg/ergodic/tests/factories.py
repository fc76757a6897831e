from fractions import Fraction

from factory import Factory, LazyFunction, Sequence, SubFactory
from factory.django import DjangoModelFactory

from ergodic import models
from ergodic.exact_arith import CFSource, CFStream, DigitSource, DigitStream
from ergodic.source_dynamics import MarkovChain


class MarkovChainFactory(Factory):
    """The symmetric two-state chain with second eigenvalue 1/2."""

    transition_matrix = (
        (Fraction(3, 4), Fraction(1, 4)),
        (Fraction(1, 4), Fraction(3, 4)),
    )
    require_spectral_gap = True

    class Meta:
        model = MarkovChain


class PeriodicChainFactory(MarkovChainFactory):
    transition_matrix = ((0, 1), (1, 0))
    require_spectral_gap = False


class IndependentChainFactory(MarkovChainFactory):
    transition_matrix = (
        (Fraction(1, 2), Fraction(1, 2)),
        (Fraction(1, 2), Fraction(1, 2)),
    )


class DigitStreamFactory(Factory):
    base = 2
    source = LazyFunction(DigitSource.seeded)
    seed = Sequence(lambda n: n + 1)

    class Meta:
        model = DigitStream


class GoldenStreamFactory(Factory):
    source = LazyFunction(CFSource.golden)
    seed = 0

    class Meta:
        model = CFStream


class ExperimentRunFactory(DjangoModelFactory):
    command = "verify"
    config_hash = Sequence(lambda n: f"{n:064x}")
    seeds = LazyFunction(lambda: [0])
    version = "0.1.0"

    class Meta:
        model = models.ExperimentRun


class CheckRecordFactory(DjangoModelFactory):
    run = SubFactory(ExperimentRunFactory)
    check_name = "fourfold_identity"
    parameters = LazyFunction(lambda: {"cases": 100})
    passed = True

    class Meta:
        model = models.CheckRecord
