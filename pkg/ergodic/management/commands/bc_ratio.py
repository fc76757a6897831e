from ergodic.cli import LabCommand, run_bc_ratio


class Command(LabCommand):
    help = "Trace the Borel-Cantelli ratio W_N(omega) / W_N over lacunary N for every seed."
    runner = staticmethod(run_bc_ratio)
