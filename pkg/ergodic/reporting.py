"""
CSV and JSON emission. Every file opens with its provenance: tool version,
config hash and seed. Output is locale independent and stable: floats are
written with ``repr``, rationals as ``p/q``, JSON keys sorted.
"""
import csv
import json
import logging
import math
import os
from fractions import Fraction
from typing import Any, Iterable, Optional, Sequence

import numpy as np

from ergodic.conf import lab_setting
from ergodic.errors import ConfigError

logger = logging.getLogger(__name__)

TOOL = "returnlab"


def provenance_line(config_hash: str, seed) -> str:
    return f"# {TOOL} {lab_setting('VERSION')} config={config_hash} seed={seed}"


def provenance(config_hash: str, seeds) -> dict:
    return {"tool": TOOL, "version": lab_setting("VERSION"), "config_hash": config_hash, "seeds": seeds}


def format_cell(value: Any) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (np.integer,)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, complex):
        return f"{value.real!r}{value.imag:+}j"
    if value is None:
        return ""
    return str(value)


def to_jsonable(value: Any) -> Any:
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, complex):
        return [value.real, value.imag]
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        value = float(value)
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    return value


def output_path(out_dir: str, name: str) -> str:
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out_dir}: {exc}") from exc
    if not os.access(out_dir, os.W_OK):
        raise ConfigError(f"output directory {out_dir} is not writable")
    return os.path.join(out_dir, name)


class CsvWriter:
    """A CSV file written row by row, flushed after every block so partial runs leave usable data."""

    def __init__(self, path: str, columns: Sequence[str], config_hash: str, seed):
        self.path = path
        self._handle = open(path, "w", encoding="utf-8", newline="")
        self._handle.write(provenance_line(config_hash, seed) + "\n")
        self._writer = csv.writer(self._handle, lineterminator="\n")
        self._writer.writerow(columns)
        self.rows = 0

    def write(self, rows: Iterable[Sequence[Any]]) -> None:
        for row in rows:
            self._writer.writerow([format_cell(v) for v in row])
            self.rows += 1
        self._handle.flush()

    def close(self) -> None:
        self._handle.close()
        logger.debug("wrote %s rows to %s", self.rows, self.path)

    def __enter__(self) -> "CsvWriter":
        return self

    def __exit__(self, *exc_info) -> None:
        self.close()


def write_csv(path: str, columns: Sequence[str], rows: Iterable[Sequence[Any]], config_hash: str, seed) -> str:
    with CsvWriter(path, columns, config_hash, seed) as writer:
        writer.write(rows)
    return path


def write_json(path: str, payload: dict, config_hash: str, seeds: Optional[list] = None) -> str:
    document = dict(to_jsonable(payload))
    document["provenance"] = provenance(config_hash, seeds)
    with open(path, "w", encoding="utf-8") as handle:
        json.dump(document, handle, sort_keys=True, indent=2, ensure_ascii=False, allow_nan=False)
        handle.write("\n")
    return path


def read_csv(path: str) -> list:
    """Rows of an emitted CSV, provenance line skipped, header row included."""
    with open(path, encoding="utf-8", newline="") as handle:
        lines = [line for line in handle if not line.startswith("#")]
    return list(csv.reader(lines))
