from ergodic.cli import LabCommand, run_verify


class Command(LabCommand):
    help = (
        "Run the verification suite (property P, fourfold identity, Van der Corput, "
        "LLN ratio, covariance-sum bound, V_N decay) and write a JSON report."
    )
    runner = staticmethod(run_verify)
