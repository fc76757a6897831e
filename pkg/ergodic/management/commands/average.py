from ergodic.cli import LabCommand, run_average


class Command(LabCommand):
    help = "Trace the averages (1/K) sum f(T^{r_n} x) against the invariant projection of f."
    runner = staticmethod(run_average)
