"""Command-line surface.

Commands: fit, select, simulate, eval, slope, oracle. Every command takes
an explicit --seed (no wall-clock defaults) and writes byte-identical
outputs on rerun. Exit codes: 0 success, 1 input error, 2 numeric or
convergence failure.
"""

import argparse
import json
import math
import sys

import numpy as np

from . import serialize
from .blocks import BlockPartition
from .divergences import (MixtureConditional, c_rho, jkl_upper_bound,
                          mc_divergence_suite)
from .em import FitConfig, fit
from .errors import BlockMoeError, CsvFormatError, FitFailureError
from .model import Bounds, ModelIndex
from .selection import (DetectionConfig, _argmin_row, build_collection,
                        fit_collection, select, slope_heuristic)
from .simulate import (McConfig, ModelSpec, Scenario, make_true_model,
                       oracle_experiment, sample_covariates, sample_dataset)

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_NUMERIC = 2


def _fail(message, code):
    print(f"error: {message}", file=sys.stderr)
    return code


def _read_data(path, rescale):
    return serialize.read_dataset_csv(path, rescale=rescale)


def _parse_blocks(spec, n_clusters, x_dim):
    if spec == "full":
        return tuple(BlockPartition.one_block(x_dim) for _ in range(n_clusters))
    if spec == "singletons":
        return tuple(BlockPartition.singletons(x_dim) for _ in range(n_clusters))
    with open(spec, encoding="utf-8") as fh:
        raw = json.load(fh)
    if raw and isinstance(raw[0][0], list):
        parts = serialize.blocks_from_wire(raw)
    else:
        parts = serialize.blocks_from_wire([raw])
        parts = tuple(parts[0] for _ in range(n_clusters))
    if len(parts) != n_clusters:
        raise ValueError(f"{len(parts)} partitions for {n_clusters} clusters")
    return parts


def _fit_config(args):
    return FitConfig(max_iters=args.max_iters, rel_tol=args.tol,
                     n_starts=args.starts, seed=args.seed,
                     init_strategy=args.init, bounds=Bounds())


def _add_fit_opts(p):
    p.add_argument("--max-iters", type=int, default=500)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--starts", type=int, default=5)
    p.add_argument("--init", choices=["kmeans", "random_responsibilities"],
                   default="kmeans")
    p.add_argument("--rescale-y", choices=["warn", "affine", "error", "ignore"],
                   default="warn")


def cmd_fit(args):
    try:
        data = _read_data(args.data, args.rescale_y)
    except CsvFormatError as exc:
        where = f" (line {exc.line}" + (f", column {exc.column})" if exc.column else ")")
        return _fail(f"malformed CSV{where}: {exc}", EXIT_INPUT)
    try:
        blocks = _parse_blocks(args.blocks, args.clusters, data.x_dim)
        index = ModelIndex(args.clusters, args.degree, blocks, data.y_dim)
    except (BlockMoeError, ValueError, OSError) as exc:
        return _fail(f"invalid partition or index: {exc}", EXIT_INPUT)
    try:
        result = fit(data, index, _fit_config(args))
    except FitFailureError as exc:
        return _fail(str(exc), EXIT_NUMERIC)
    serialize.save_model(result.model, args.out_model)
    serialize.save_json(serialize.fit_result_to_dict(result), args.out_report)
    if not result.converged:
        print("warning: EM did not converge within max-iters", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _sweep(args, data):
    det = DetectionConfig(threshold_count=args.thresholds,
                          max_structures=args.max_structures)
    config = _fit_config(args)
    indices, base = build_collection(data, args.max_clusters, args.max_degree,
                                     det, config)
    table, fits = fit_collection(data, indices, base, config)
    return table, fits


def cmd_select(args):
    try:
        data = _read_data(args.data, args.rescale_y)
    except CsvFormatError as exc:
        return _fail(f"malformed CSV (line {exc.line}): {exc}", EXIT_INPUT)
    try:
        table, _ = _sweep(args, data)
        if len(table) == 0:
            return _fail("every candidate fit failed; empty collection",
                         EXIT_NUMERIC)
        if args.kappa is not None:
            result = select(table, args.kappa, kappa_hat=args.kappa,
                            method="fixed")
        else:
            kappa_hat = slope_heuristic(table, method=args.method,
                                        fraction=args.fraction)
            result = select(table, 2.0 * kappa_hat, kappa_hat=kappa_hat,
                            method=args.method)
    except FitFailureError as exc:
        return _fail(str(exc), EXIT_NUMERIC)
    serialize.write_table_csv(table, args.out_table)
    serialize.save_json(serialize.selection_result_to_dict(result),
                        args.out_selection)
    return EXIT_OK


def cmd_slope(args):
    try:
        data = _read_data(args.data, args.rescale_y)
    except CsvFormatError as exc:
        return _fail(f"malformed CSV (line {exc.line}): {exc}", EXIT_INPUT)
    try:
        table, _ = _sweep(args, data)
        if len(table) == 0:
            return _fail("empty collection", EXIT_NUMERIC)
    except FitFailureError as exc:
        return _fail(str(exc), EXIT_NUMERIC)
    points = [("pen_nll", row.pen_shape, row.nll) for row in table.rows]
    spread_nll = float(np.ptp(table.nlls()))
    spread_ps = float(np.ptp(table.pen_shapes()))
    scale = spread_nll / spread_ps if spread_nll > 0 and spread_ps > 0 else 1.0
    grid = scale * np.logspace(-3, 3, args.kappa_grid)
    for kappa in grid:
        points.append(("kappa_dim", float(kappa),
                       float(_argmin_row(table, kappa).dim)))
    serialize.write_points_csv(points, args.out_points)
    return EXIT_OK


def _scenario_from_file(path):
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    spec_doc = dict(doc["model"])
    blocks = spec_doc.pop("blocks", None)
    if blocks is not None:
        if blocks and isinstance(blocks[0][0], list):
            blocks = tuple(tuple(tuple(i - 1 for i in g) for g in b)
                           for b in blocks)
        else:
            blocks = tuple(tuple(i - 1 for i in g) for g in blocks)
    spec = ModelSpec(
        n_clusters=spec_doc.get("K", 2), degree=spec_doc.get("d", 1),
        x_dim=spec_doc.get("D", 4), y_dim=spec_doc.get("L", 1),
        blocks=blocks, separation=spec_doc.get("separation", 6.0),
        noise_scale=spec_doc.get("noise_scale", 1.0),
        within_corr=spec_doc.get("within_corr"),
        coeff_scale=spec_doc.get("coeff_scale", 1.0),
        seed=spec_doc.get("seed", 0))
    model = make_true_model(spec)
    fit_doc = doc.get("fit", {})
    det_doc = doc.get("detect", {})
    mc_doc = doc.get("mc", {})
    return Scenario(
        true_model=model,
        n_grid=doc.get("n_grid", [500]),
        seeds=doc.get("seeds", [0]),
        K_max=doc.get("K_max", 3),
        d_max=doc.get("d_max", 1),
        det_config=DetectionConfig(
            threshold_count=det_doc.get("threshold_count", 8),
            max_structures=det_doc.get("max_structures", 20)),
        fit_config=FitConfig(
            max_iters=fit_doc.get("max_iters", 500),
            rel_tol=fit_doc.get("rel_tol", 1e-8),
            n_starts=fit_doc.get("n_starts", 5),
            seed=fit_doc.get("seed", 0),
            init_strategy=fit_doc.get("init", "kmeans")),
        mc_config=McConfig(
            n_samples=mc_doc.get("n_samples", 256),
            n_designs=mc_doc.get("n_designs", 16),
            rho=mc_doc.get("rho", 0.5)))


def cmd_simulate(args):
    try:
        scenario = _scenario_from_file(args.scenario)
    except (OSError, KeyError, ValueError, BlockMoeError) as exc:
        return _fail(f"bad scenario: {exc}", EXIT_INPUT)
    if args.out_latent:
        data, labels = sample_dataset(scenario.true_model, args.n, args.seed,
                                      return_latent=True)
        with open(args.out_latent, "w", encoding="utf-8", newline="") as fh:
            fh.write("z\n")
            fh.writelines(f"{int(z)}\n" for z in labels)
    else:
        data = sample_dataset(scenario.true_model, args.n, args.seed)
    serialize.write_dataset_csv(data, args.out_data)
    if args.out_model:
        serialize.save_model(scenario.true_model, args.out_model)
    return EXIT_OK


def cmd_eval(args):
    try:
        true_model = serialize.load_model(args.true_model)
        fitted = serialize.load_model(args.model)
    except (OSError, KeyError, ValueError, BlockMoeError) as exc:
        return _fail(f"bad model file: {exc}", EXIT_INPUT)
    rng = np.random.default_rng(args.seed)
    if args.designs:
        try:
            designs = _read_data(args.designs, "ignore").y
        except CsvFormatError as exc:
            return _fail(f"malformed CSV (line {exc.line}): {exc}", EXIT_INPUT)
    else:
        _, designs = sample_covariates(true_model, args.n_designs, rng)
    suite = mc_divergence_suite(MixtureConditional(true_model),
                                MixtureConditional(fitted), designs,
                                args.rho, args.samples, args.seed)
    cr = c_rho(args.rho)
    cap = jkl_upper_bound(args.rho)
    doc = {
        "kl": suite.kl.value,
        "jkl": suite.jkl.value,
        "hellinger": suite.hellinger.value,
        "rho": args.rho,
        "n_samples": suite.kl.n_samples,
        "std_errors": {
            "kl": suite.kl.std_error,
            "jkl": suite.jkl.std_error,
            "hellinger": suite.hellinger.std_error,
        },
        "bound_checks": {
            "c_rho": cr,
            "jkl_upper_bound": cap,
            "chain_lower_ok": bool(
                cr * suite.hellinger.value <= suite.jkl.value
                + 4.0 * (cr * suite.hellinger.std_error + suite.jkl.std_error)),
            "chain_upper_ok": bool(
                suite.jkl.value <= suite.kl.value
                + 4.0 * (suite.jkl.std_error + (0.0 if math.isinf(suite.kl.value)
                                                else suite.kl.std_error))),
            "jkl_cap_ok": bool(suite.jkl.value
                               <= cap + 4.0 * suite.jkl.std_error),
        },
    }
    serialize.save_json(doc, args.out)
    return EXIT_OK


def cmd_oracle(args):
    try:
        scenario = _scenario_from_file(args.scenario)
    except (OSError, KeyError, ValueError, BlockMoeError) as exc:
        return _fail(f"bad scenario: {exc}", EXIT_INPUT)
    report = oracle_experiment(scenario)
    doc = {
        "median_jkl_by_n": {str(k): v for k, v in report.median_jkl_by_n.items()},
        "mean_ratio_by_n": {str(k): v for k, v in report.mean_ratio_by_n.items()},
        "n_cells": len(report.cells),
        "n_failures": sum(1 for c in report.cells if c.error is not None),
    }
    serialize.save_json(doc, args.out_report)
    if args.out_cells:
        serialize.write_oracle_cells_csv(report, args.out_cells)
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="blockmoe",
        description="Block-diagonal mixture-of-polynomial-experts toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="EM fit at a fixed model index")
    p.add_argument("--data", required=True)
    p.add_argument("--clusters", type=int, required=True)
    p.add_argument("--degree", type=int, default=1)
    p.add_argument("--blocks", default="full",
                   help='"full", "singletons", or a JSON file of 1-based groups')
    p.add_argument("--seed", type=int, required=True)
    _add_fit_opts(p)
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-report", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", help="penalized model selection sweep")
    p.add_argument("--data", required=True)
    p.add_argument("--max-clusters", type=int, required=True)
    p.add_argument("--max-degree", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--kappa", type=float, default=None,
                   help="fixed penalty constant (skips calibration)")
    p.add_argument("--method", choices=["slope_fit", "dimension_jump"],
                   default="slope_fit")
    p.add_argument("--fraction", type=float, default=0.5)
    p.add_argument("--thresholds", type=int, default=8)
    p.add_argument("--max-structures", type=int, default=20)
    _add_fit_opts(p)
    p.add_argument("--out-selection", required=True)
    p.add_argument("--out-table", required=True)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("slope", help="emit slope-heuristic point clouds")
    p.add_argument("--data", required=True)
    p.add_argument("--max-clusters", type=int, required=True)
    p.add_argument("--max-degree", type=int, default=1)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--thresholds", type=int, default=8)
    p.add_argument("--max-structures", type=int, default=20)
    p.add_argument("--kappa-grid", type=int, default=41)
    _add_fit_opts(p)
    p.add_argument("--out-points", required=True)
    p.set_defaults(func=cmd_slope)

    p = sub.add_parser("simulate", help="sample a dataset from a scenario")
    p.add_argument("--scenario", required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-data", required=True)
    p.add_argument("--out-model")
    p.add_argument("--out-latent")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", help="divergences between two saved models")
    p.add_argument("--true-model", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--designs", help="CSV whose y columns are the design points")
    p.add_argument("--n-designs", type=int, default=32)
    p.add_argument("--rho", type=float, default=0.5)
    p.add_argument("--samples", type=int, default=512)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="run the oracle-inequality experiment")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out-report", required=True)
    p.add_argument("--out-cells")
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
