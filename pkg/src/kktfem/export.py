"""File output: Matrix Market matrices, CSV tables and vectors.

Every CSV written here carries a header row and round-trips through
:func:`read_csv` without loss of meaning; the experiment drivers rely on
that for their output checks.
"""

from __future__ import annotations

import csv
import os

import numpy as np
import scipy.io
import scipy.sparse as sp


def export_matrix_market(mat, path) -> None:
    """Write a matrix in Matrix Market coordinate (or array) text format."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(mat) if sp.issparse(mat) else np.asarray(mat))


def export_triple_matrices(triple, directory) -> None:
    """Dump an operator triple's three matrices for external cross-checking."""
    os.makedirs(directory, exist_ok=True)
    for name, mat in (("mass", triple.mass), ("obs", triple.obs), ("state", triple.state)):
        export_matrix_market(mat, os.path.join(directory, f"{name}.mtx"))


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def read_csv(path):
    """Read back a CSV written by :func:`write_csv`: (header, rows as floats)."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(entry) for entry in row] for row in reader]
    return header, rows


def write_vector_csv(path, values, value_name: str = "value") -> None:
    write_csv(path, ["index", value_name], list(enumerate(np.asarray(values).ravel())))


def write_residual_history_csv(path, history) -> None:
    write_csv(path, ["iteration", "ratio"], list(enumerate(history)))
