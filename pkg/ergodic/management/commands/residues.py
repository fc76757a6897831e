from ergodic.cli import LabCommand, run_residues


class Command(LabCommand):
    help = "Tabulate the residues of the first k_max terms modulo m = 1..m_max."
    runner = staticmethod(run_residues)
