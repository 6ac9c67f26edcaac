import math

import pytest

from utils.errors import ConfigError
from utils.geometry import generate_cap_grid, generate_regular_grid
from utils.modeselect import (
    SubsetResult,
    SubsetSweep,
    best_per_cardinality,
    detect_degenerate_sets,
    enumerate_subsets,
    format_bracketed,
    read_subsets_csv,
    result_kind,
    scatter_rows,
    subset_order,
    write_subsets_csv,
)
from utils.synth import CANONICAL_MODES, canonical_mode_set

NAMES = list(CANONICAL_MODES)


@pytest.fixture(scope="module")
def modes():
    return canonical_mode_set(theta_step_deg=1, phi_step_deg=1)


@pytest.fixture(scope="module")
def grid():
    return generate_cap_grid(math.radians(45), math.radians(90), 250)


@pytest.fixture(scope="module")
def sweep(modes, grid):
    return enumerate_subsets(modes, grid, "theta", "directivity", min_size=1, max_size=4)


def fake(indices, value_db):
    return SubsetResult(tuple(indices), tuple(NAMES[i] for i in indices), 10 ** (value_db / 10), value_db, "directivity", 0)


def by_indices(sweep, indices):
    return next(r for r in sweep if r.entry_indices == tuple(indices))


def test_subset_order():
    assert subset_order(3, 1, 2) == [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2)]


def test_sizes_two_to_three_cover_ten_subsets(modes, grid):
    result = enumerate_subsets(modes, grid, "theta", "directivity", min_size=2, max_size=3, detect=False)
    assert len(result.results) + len(result.failures) == 10


def test_bad_sizes_rejected(modes, grid):
    with pytest.raises(ConfigError):
        enumerate_subsets(modes, grid, "theta", "directivity", min_size=0)
    with pytest.raises(ConfigError):
        enumerate_subsets(modes, grid, "theta", "directivity", min_size=3, max_size=2)


def test_zero_theta_mode_adds_nothing(sweep):
    assert by_indices(sweep, [0]).kpi == by_indices(sweep, [0, 3]).kpi
    assert by_indices(sweep, [0, 1, 2]).kpi == by_indices(sweep, [0, 1, 2, 3]).kpi


def test_best_three_mode_set(sweep):
    table = {row.size: row for row in best_per_cardinality(sweep.results, NAMES)}
    assert (0, 1, 2) in table[3].subsets
    assert table[4].kpi_db == table[3].kpi_db


def test_zero_norm_subsets_are_failures(sweep):
    # ZTH has no theta component anywhere
    assert any(f.entry_indices == (3,) for f in sweep.failures)


def test_threads_reproduce_serial_results(modes, grid):
    serial = enumerate_subsets(modes, grid, "theta", "directivity", min_size=2, max_size=2, detect=False)
    threaded = enumerate_subsets(modes, grid, "theta", "directivity", min_size=2, max_size=2, workers=4, detect=False)
    assert [(r.entry_indices, r.kpi) for r in serial] == [(r.entry_indices, r.kpi) for r in threaded]


def test_best_per_cardinality_single_subset():
    table = best_per_cardinality([fake([0, 1], 3.0)], NAMES)
    assert table[0].subsets == ((0, 1),)
    assert table[0].label == "VED, MDX"


def test_best_per_cardinality_lists_ties_in_brackets():
    results = [fake([0, 1], 3.0), fake([0, 2], 2.995), fake([1, 2], 1.0)]
    table = best_per_cardinality(results, NAMES)
    assert table[0].subsets == ((0, 1), (0, 2))
    assert table[0].label == "VED, [MDX, MDY]"


def test_format_bracketed_places_bracket_at_first_difference():
    assert format_bracketed([(1, 2, 3), (0, 2, 3)], NAMES) == "[VED, MDX], MDY, ZTH"


def test_degenerate_swap_is_grouped(modes):
    symmetric = generate_regular_grid(math.radians(45), math.radians(90), math.radians(5), math.radians(10))
    sweep = enumerate_subsets(modes, symmetric, "theta", "directivity", min_size=2, max_size=2, detect=False)

    groups = detect_degenerate_sets(sweep.results, tolerance_db=0.05)

    assert any((0, 1) in g and (0, 2) in g for g in groups)


def test_zero_tolerance_with_distinct_kpis_has_no_groups():
    results = [fake([0, 1], 3.0), fake([0, 2], 2.9), fake([1, 2], 2.8)]
    assert detect_degenerate_sets(results, tolerance_db=0.0) == []


def test_negative_tolerance_rejected():
    with pytest.raises(ConfigError):
        detect_degenerate_sets([], tolerance_db=-1.0)


def test_scatter_rows_rank_within_size():
    rows = scatter_rows_for([fake([0], 1.0), fake([1], 2.0), fake([0, 1], 5.0)])
    assert [(r["size"], r["rank"], r["names"]) for r in rows] == [(1, 1, "MDX"), (1, 2, "VED"), (2, 1, "VED MDX")]


def scatter_rows_for(results):
    return scatter_rows(SubsetSweep(tuple(results), (), tuple(NAMES), "directivity", "cm-directivity", "theta"))


def test_subsets_csv_round_trip(tmp_path, sweep):
    path = write_subsets_csv(sweep, tmp_path / "subsets.csv")
    rows = read_subsets_csv(path)
    assert [(size, indices, value) for size, indices, value, _ in rows] == [
        (r.size, r.entry_indices, r.kpi_db) for r in sweep
    ]


def test_result_kind_is_the_requested_kind(modes, grid):
    directivity = enumerate_subsets(modes, grid, "theta", "directivity", min_size=4, detect=False)
    realized = enumerate_subsets(modes, grid, "theta", "realized", min_size=4, detect=False)

    assert directivity.kind == "directivity" and directivity.measurement_kind == "cm-directivity"
    assert realized.kind == "realized" and realized.measurement_kind == "cm-realized"
    assert {r.kind for r in realized} == {"realized"}


def test_result_kind_for_port_sets():
    assert result_kind("port") == "directivity"
    assert result_kind("cm-realized") == "realized"
