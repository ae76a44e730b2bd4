"""File helpers shared by the command-line tools: CSV tables, point sets, JSON configs."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import jsonschema
import numpy as np


class ConfigError(ValueError):
    """A configuration file failed validation; ``path`` locates the offending field."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


def fmt(v) -> str:
    """17 significant digits, enough to round-trip any float64."""
    return f"{float(v):.17g}"


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([v if isinstance(v, (int, np.integer, str)) else fmt(v) for v in row])


def read_points(path) -> np.ndarray:
    """Load a point set from CSV (one point per row); a non-numeric first line is treated as a header."""
    path = Path(path)
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        rows = rows[1:]
    try:
        X = np.array([[float(c) for c in r] for r in rows], dtype=np.float64)
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from None
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError(f"{path}: rows have inconsistent lengths")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{path}: non-finite values")
    return X


def write_points(path, X) -> None:
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    write_table(path, [f"x{i}" for i in range(X.shape[1])], X)


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_config(path, schema: dict | None = None) -> dict:
    """Read a JSON config and validate it against ``schema``, reporting the JSON path of any error."""
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON ({exc.msg} at line {exc.lineno})") from None
    if schema is not None:
        validate(cfg, schema)
    return cfg


def validate(obj, schema: dict) -> None:
    err = jsonschema.exceptions.best_match(jsonschema.Draft202012Validator(schema).iter_errors(obj))
    if err is not None:
        raise ConfigError(err.message, err.json_path)


NUMBER = {"type": "number"}
VECTOR = {"type": "array", "items": NUMBER, "minItems": 1}
MATRIX = {"type": "array", "items": VECTOR, "minItems": 1}
GAUSSIAN = {
    "type": "object",
    "required": ["mean", "cov"],
    "properties": {"mean": VECTOR, "cov": MATRIX},
}
MIXTURE = {
    "type": "object",
    "required": ["weights", "components"],
    "properties": {
        "dim": {"type": "integer", "minimum": 1},
        "weights": VECTOR,
        "components": {"type": "array", "items": GAUSSIAN, "minItems": 1},
    },
}
