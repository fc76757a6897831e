from ergodic.cli import LabCommand, run_returns


class Command(LabCommand):
    help = "Emit the return times r_n(y, E) <= n_max for every seed, with a growth-exponent summary."
    runner = staticmethod(run_returns)
