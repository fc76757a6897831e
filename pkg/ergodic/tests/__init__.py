import os


def fixture_path(filename: str) -> str:
    base_dir = os.path.realpath(os.path.dirname(__file__))
    return f"{base_dir}/fixtures/{filename}"


def load_fixture(filename: str) -> str:
    with open(fixture_path(filename)) as f:
        return f.read()
