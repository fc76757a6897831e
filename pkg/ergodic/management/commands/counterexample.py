from ergodic.cli import LabCommand, run_counterexample


class Command(LabCommand):
    help = "Rotation source with centered-ball targets: show the averages miss the projection of 1_[lo, hi]."
    runner = staticmethod(run_counterexample)
