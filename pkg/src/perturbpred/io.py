"""File formats: labeled CSV matrices, JSON reports, network exports, config.

Matrices travel as comma-separated tables with a header row of column names
and a first column of condition/row IDs.  Values are written with 17
significant digits so a write/read round trip is exact.  Reports are JSON;
fitted networks export as an edge-list CSV and Graphviz dot text.
"""

from __future__ import annotations

import csv
import json
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ParseError
from .types import ConditionMatrix, ResponseMatrix

FLOAT_FMT = "%.17g"


def load_matrix_csv(path):
    """Parse a labeled matrix file.

    Returns (values, row_ids, col_names).  Every structural problem is
    reported with its row/column position.
    """
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    rows = [r for r in rows if r and any(cell.strip() for cell in r)]
    if not rows:
        raise ParseError(f"{path}: file is empty")
    header = [c.strip() for c in rows[0]]
    if len(header) < 2:
        raise ParseError(f"{path}: header must have an ID column plus data columns")
    col_names = header[1:]
    dup = {c for c in col_names if col_names.count(c) > 1}
    if dup:
        raise ParseError(f"{path}: duplicate column labels: {sorted(dup)}")

    n_cols = len(header)
    row_ids = []
    values = []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != n_cols:
            raise ParseError(
                f"{path}: row {i} has {len(row)} cells, expected {n_cols} (ragged table)"
            )
        row_ids.append(row[0].strip())
        parsed = []
        for j, cell in enumerate(row[1:], start=2):
            text = cell.strip()
            try:
                parsed.append(float(text))
            except ValueError:
                raise ParseError(
                    f"{path}: non-numeric cell {text!r} at row {i}, column {j}"
                ) from None
        values.append(parsed)
    if not values:
        raise ParseError(f"{path}: no data rows")
    dup_ids = {r for r in row_ids if row_ids.count(r) > 1}
    if dup_ids:
        raise ParseError(f"{path}: duplicate row labels: {sorted(dup_ids)}")
    return np.array(values), row_ids, col_names


def save_matrix_csv(path, values, row_ids=None, col_names=None, id_header="id"):
    values = np.asarray(values)
    n, m = values.shape
    if row_ids is None:
        row_ids = [f"row_{i + 1}" for i in range(n)]
    if col_names is None:
        col_names = [f"col_{j + 1}" for j in range(m)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([id_header] + list(col_names))
        for rid, row in zip(row_ids, values):
            writer.writerow([rid] + [FLOAT_FMT % v for v in row])


def load_condition_matrix(path):
    values, row_ids, names = load_matrix_csv(path)
    return ConditionMatrix(values, names), row_ids


def load_response_matrix(path):
    values, row_ids, names = load_matrix_csv(path)
    return ResponseMatrix(values, names), row_ids


def write_json_report(path, payload):
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class NetworkExport:
    """Thresholded edge list of a fitted A-form network."""

    edges: tuple  # (source_name, target_name, weight)
    threshold: float

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["source", "target", "weight"])
            for src, dst, w in self.edges:
                writer.writerow([src, dst, FLOAT_FMT % w])

    def write_dot(self, path):
        with open(path, "w") as fh:
            fh.write("digraph network {\n")
            for src, dst, w in self.edges:
                fh.write(f'  "{src}" -> "{dst}" [label="{w:.3g}", weight={abs(w):.3g}];\n')
            fh.write("}\n")


def export_network(A, names=None, threshold=0.2) -> NetworkExport:
    """Edge list from an A-form matrix, dropping |weight| below threshold.

    A[i, j] is the effect of node j on node i, so the exported edge runs
    from j to i.
    """
    A = np.asarray(A)
    p = A.shape[0]
    if names is None:
        names = [f"X{i + 1}" for i in range(p)]
    edges = []
    for i in range(p):
        for j in range(p):
            if i != j and abs(A[i, j]) >= threshold:
                edges.append((names[j], names[i], float(A[i, j])))
    return NetworkExport(tuple(edges), threshold)


def load_run_config(path, known_keys):
    """Flat key=value config file; unknown keys are rejected, '#' starts a comment."""
    cfg = {}
    try:
        with open(path) as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for lineno, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in known_keys:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        cfg[key] = value
    return cfg


def default_output_dir():
    """Output directory default, overridable by PERTURBPRED_OUT_DIR."""
    return os.environ.get("PERTURBPRED_OUT_DIR", ".")
