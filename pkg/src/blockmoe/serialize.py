"""File formats: model/forward JSON documents, data CSV, selection tables.

JSON floats rely on Python's shortest round-trip representation, which is
exact for IEEE-754 doubles; CSV floats are written with 17 significant
digits. Both are byte-stable across reruns. Block index lists are 1-based
on the wire and canonicalized (with a warning) on read.
"""

import csv
import json
import warnings

import numpy as np

from .blocks import BlockPartition
from .errors import CsvFormatError, ShapeError
from .forward import ForwardParams
from .model import (BlockMoeModel, Bounds, Dataset, ExpertParams,
                    GatingParams, ModelIndex)

__all__ = [
    "model_to_dict", "model_from_dict", "save_model", "load_model",
    "forward_to_dict", "forward_from_dict",
    "fit_result_to_dict", "selection_result_to_dict",
    "write_dataset_csv", "read_dataset_csv",
    "write_table_csv", "dumps_json", "save_json",
]

_BOUNDS_KEYS = {
    "a_pi": "min_weight",
    "A_c": "max_gating_mean",
    "a_Gamma": "gating_eig_min",
    "A_Gamma": "gating_eig_max",
    "lambda_m": "expert_eig_min",
    "lambda_M": "expert_eig_max",
    "T_upsilon": "max_coeff",
}


def _fmt(x):
    return format(float(x), ".17g")


def dumps_json(obj):
    return json.dumps(obj, indent=2) + "\n"


def save_json(obj, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dumps_json(obj))


def _nested(a):
    return np.asarray(a, dtype=float).tolist()


def blocks_to_wire(blocks):
    return [part.to_one_based() for part in blocks]


def blocks_from_wire(raw):
    parts = []
    for groups in raw:
        part = BlockPartition.from_one_based(groups)
        if part.to_one_based() != [list(g) for g in groups]:
            warnings.warn("block partition was not canonical; canonicalized",
                          stacklevel=3)
        parts.append(part)
    return tuple(parts)


def model_to_dict(model):
    return {
        "K": model.n_clusters,
        "d": model.index.degree,
        "blocks": blocks_to_wire(model.index.blocks),
        "pi": _nested(model.gating.weights),
        "c": _nested(model.gating.means),
        "Gamma": _nested(model.gating.covs),
        "alpha": _nested(model.experts.coeffs),
        "Sigma": _nested(model.experts.covs),
        "bounds": {wire: getattr(model.bounds, attr)
                   for wire, attr in _BOUNDS_KEYS.items()},
        "monomial_order": "grlex",
    }


def model_from_dict(doc):
    if doc.get("monomial_order", "grlex") != "grlex":
        raise ShapeError(f"unsupported monomial order {doc['monomial_order']!r}")
    blocks = blocks_from_wire(doc["blocks"])
    c = np.asarray(doc["c"], dtype=float)
    index = ModelIndex(int(doc["K"]), int(doc["d"]), blocks, c.shape[1])
    bounds = Bounds(**{attr: float(doc["bounds"][wire])
                       for wire, attr in _BOUNDS_KEYS.items()})
    gating = GatingParams(np.asarray(doc["pi"], dtype=float), c,
                          np.asarray(doc["Gamma"], dtype=float))
    experts = ExpertParams(np.asarray(doc["alpha"], dtype=float),
                           np.asarray(doc["Sigma"], dtype=float))
    return BlockMoeModel(index, gating, experts, bounds)


def save_model(model, path):
    save_json(model_to_dict(model), path)


def load_model(path):
    with open(path, encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def forward_to_dict(fwd):
    return {
        "direction": "forward",
        "K": fwd.n_clusters,
        "pi": _nested(fwd.weights),
        "c": _nested(fwd.x_means),
        "Gamma": _nested(fwd.x_covs),
        "A": _nested(fwd.slopes),
        "b": _nested(fwd.intercepts),
        "Sigma": _nested(fwd.noises),
    }


def forward_from_dict(doc):
    if doc.get("direction") != "forward":
        raise ShapeError("document is not a forward parameter set")
    return ForwardParams(np.asarray(doc["pi"], dtype=float),
                         np.asarray(doc["c"], dtype=float),
                         np.asarray(doc["Gamma"], dtype=float),
                         np.asarray(doc["A"], dtype=float),
                         np.asarray(doc["b"], dtype=float),
                         np.asarray(doc["Sigma"], dtype=float))


def fit_result_to_dict(result):
    return {
        "nll": result.nll,
        "dim": result.dim,
        "converged": result.converged,
        "iterations": result.iterations,
        "start_index": result.start_index,
        "eta": result.eta,
        "flagged_iterations": list(result.flagged_iterations),
        "loglik_trace": list(result.loglik_trace),
    }


def selection_result_to_dict(result):
    return {
        "selected": {
            "K": result.selected.n_clusters,
            "d": result.selected.degree,
            "blocks": blocks_to_wire(result.selected.blocks),
        },
        "kappa_hat": result.kappa_hat,
        "kappa_used": result.kappa_used,
        "method": result.method,
        "n_models": len(result.table),
        "n": result.table.n,
    }


def write_dataset_csv(data, path):
    """Write `y_1..y_L,x_1..x_D` rows; 17-significant-digit floats."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        header = [f"y_{j + 1}" for j in range(data.y_dim)] + \
                 [f"x_{j + 1}" for j in range(data.x_dim)]
        fh.write(",".join(header) + "\n")
        for i in range(data.n):
            row = [_fmt(v) for v in data.y[i]] + [_fmt(v) for v in data.x[i]]
            fh.write(",".join(row) + "\n")


def read_dataset_csv(path, rescale="warn"):
    """Parse a data CSV; malformed cells raise with 1-based line/column."""
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise CsvFormatError("empty file", line=1)
    header = lines[0].split(",")
    y_cols = [h for h in header if h.startswith("y_")]
    x_cols = [h for h in header if h.startswith("x_")]
    expected = [f"y_{j + 1}" for j in range(len(y_cols))] + \
               [f"x_{j + 1}" for j in range(len(x_cols))]
    if not y_cols or not x_cols or header != expected:
        raise CsvFormatError(
            f"header must be y_1..y_L,x_1..x_D, got {','.join(header)!r}", line=1)
    n_cols = len(header)
    rows = np.empty((len(lines) - 1, n_cols))
    for i, line in enumerate(lines[1:], start=2):
        cells = line.split(",")
        if len(cells) != n_cols:
            raise CsvFormatError(
                f"expected {n_cols} columns, got {len(cells)}", line=i)
        for j, cell in enumerate(cells):
            try:
                rows[i - 2, j] = float(cell)
            except ValueError as exc:
                raise CsvFormatError(f"not a number: {cell!r}", line=i,
                                     column=j + 1) from exc
    L = len(y_cols)
    return Dataset.from_arrays(rows[:, L:], rows[:, :L], rescale=rescale)


def write_table_csv(table, path):
    """Selection table CSV: K,d,blocks_json,nll,dim,pen_shape,converged."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["K", "d", "blocks_json", "nll", "dim", "pen_shape",
                         "converged"])
        for row in table.rows:
            writer.writerow([
                row.index.n_clusters,
                row.index.degree,
                json.dumps(blocks_to_wire(row.index.blocks),
                           separators=(",", ":")),
                _fmt(row.nll),
                row.dim,
                _fmt(row.pen_shape),
                str(bool(row.converged)).lower(),
            ])


def write_points_csv(points, path):
    """Generic (kind, x, y) point cloud for external plotting."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["kind", "x", "y"])
        for kind, x, y in points:
            writer.writerow([kind, _fmt(x), _fmt(y)])


def write_oracle_cells_csv(report, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["n", "seed", "selected_K", "selected_d",
                         "selected_blocks_json", "kappa_used", "jkl_selected",
                         "jkl_std_error", "oracle", "ratio", "n_models",
                         "error"])
        for c in report.cells:
            if c.selected is None:
                sel = ["", "", ""]
            else:
                sel = [c.selected.n_clusters, c.selected.degree,
                       json.dumps(blocks_to_wire(c.selected.blocks),
                                  separators=(",", ":"))]
            writer.writerow([c.n, c.seed, *sel, _fmt(c.kappa_used),
                             _fmt(c.jkl_selected), _fmt(c.jkl_std_error),
                             _fmt(c.oracle), _fmt(c.ratio), c.n_models,
                             c.error or ""])
