import math

import numpy as np
import pytest

from utils.errors import ConfigError, DataValidationError
from utils.geometry import (
    Direction,
    DoAGrid,
    cap_solid_angle,
    generate_cap_grid,
    generate_regular_grid,
    great_circle_distance,
    nearest_index,
    neighbor_indices,
    read_grid_csv,
    sort_reference_order,
    write_grid_csv,
)


@pytest.fixture
def default_grid():
    return generate_cap_grid(math.radians(45), math.radians(90), 250)


def test_direction_wraps_phi():
    assert Direction.from_degrees(45, 370).phi_deg == pytest.approx(10.0)
    assert Direction.from_degrees(45, -90).phi_deg == pytest.approx(270.0)


def test_direction_rejects_theta_outside_range():
    with pytest.raises(ConfigError):
        Direction.from_degrees(190, 0)


def test_pole_ignores_phi():
    assert Direction(0.0, 1.0) == Direction(0.0, 2.5)
    assert great_circle_distance(Direction(0.0, 1.0), Direction(0.0, 2.5)) == 0.0


def test_great_circle_distance_quarter_turn():
    a = Direction.from_degrees(90, 0)
    b = Direction.from_degrees(90, 90)
    assert great_circle_distance(a, b) == pytest.approx(math.pi / 2)


def test_great_circle_distance_is_symmetric():
    a = Direction.from_degrees(50, 10)
    b = Direction.from_degrees(80, 200)
    assert great_circle_distance(a, b) == pytest.approx(great_circle_distance(b, a), abs=1e-15)


def test_cap_grid_has_requested_count(default_grid):
    assert len(default_grid) == 250


def test_cap_grid_weights_cover_cap(default_grid):
    omega = cap_solid_angle(math.radians(45), math.radians(90))
    assert default_grid.cell_weights.sum() == pytest.approx(omega, rel=1e-12)


def test_cap_grid_rings_include_bounds(default_grid):
    rings = np.unique(default_grid.thetas)
    assert len(rings) == 7
    assert rings[0] == pytest.approx(math.radians(45), abs=1e-15)
    assert rings[-1] == pytest.approx(math.radians(90), abs=1e-15)


def test_cap_grid_is_deterministic(default_grid):
    again = generate_cap_grid(math.radians(45), math.radians(90), 250)
    assert np.array_equal(default_grid.thetas, again.thetas)
    assert np.array_equal(default_grid.phis, again.phis)


def test_cap_grid_single_point_is_centroid():
    grid = generate_cap_grid(math.radians(45), math.radians(90), 1)
    assert len(grid) == 1
    assert math.cos(grid.thetas[0]) == pytest.approx(math.cos(math.radians(45)) / 2)


@pytest.mark.parametrize("count", [0, -3, 2.5])
def test_cap_grid_rejects_bad_count(count):
    with pytest.raises(ConfigError):
        generate_cap_grid(math.radians(45), math.radians(90), count)


def test_cap_grid_rejects_inverted_bounds():
    with pytest.raises(ConfigError):
        generate_cap_grid(math.radians(90), math.radians(45), 100)


def test_regular_grid_full_sphere():
    grid = generate_regular_grid(0.0, math.pi, math.radians(30), math.radians(90))
    assert len(grid) == 2 + 5 * 4
    assert grid.cell_weights.sum() == pytest.approx(4 * math.pi, rel=1e-12)


def test_grid_rejects_weights_not_matching_cap():
    with pytest.raises(DataValidationError):
        DoAGrid(np.array([0.5, 0.6]), np.zeros(2), np.array([1.0, 1.0]), 0.4, 0.7)


def test_sort_reference_order_starts_at_top_ring(default_grid):
    order = sort_reference_order(default_grid)
    thetas = default_grid.thetas[order]
    assert np.all(np.diff(thetas) >= -1e-15)
    top = order[thetas == thetas[0]]
    assert np.all(np.diff(default_grid.phis[top]) > 0)


def test_nearest_index_finds_grid_point(default_grid):
    k = 123
    assert nearest_index(default_grid, default_grid.direction(k)) == k


def test_neighbor_indices_exclude_self(default_grid):
    neighbors = neighbor_indices(default_grid, 6)
    assert neighbors.shape == (250, 6)
    assert not np.any(neighbors == np.arange(250)[:, None])


def test_neighbor_indices_single_point():
    grid = generate_cap_grid(math.radians(45), math.radians(90), 1)
    assert neighbor_indices(grid, 6).shape == (1, 0)


def test_grid_csv_round_trip(tmp_path, default_grid):
    path = tmp_path / "grid.csv"
    write_grid_csv(default_grid, path)

    loaded = read_grid_csv(path, 45, 90)

    assert np.allclose(loaded.thetas, default_grid.thetas, rtol=0, atol=1e-14)
    assert np.allclose(loaded.phis, default_grid.phis, rtol=0, atol=1e-14)
    assert np.allclose(loaded.cell_weights, default_grid.cell_weights, rtol=1e-15, atol=0)


def test_grid_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "grid.csv"
    path.write_text("a,b,c,d\n0,1,2,3\n")
    with pytest.raises(DataValidationError):
        read_grid_csv(path)


def test_great_circle_distance_across_the_pole():
    a = Direction.from_degrees(80, 90)
    b = Direction.from_degrees(80, 270)
    assert math.degrees(great_circle_distance(a, b)) == pytest.approx(160.0)


def test_great_circle_distance_matches_cartesian_angle():
    rng = np.random.default_rng(5)
    for theta_a, phi_a, theta_b, phi_b in rng.uniform(0.1, 3.0, size=(200, 4)):
        a, b = Direction(theta_a, phi_a), Direction(theta_b, phi_b)
        dot = float(np.clip(a.unit_vector() @ b.unit_vector(), -1.0, 1.0))
        assert great_circle_distance(a, b) == pytest.approx(math.acos(dot), abs=1e-12)


def test_great_circle_triangle_inequality(default_grid):
    d = default_grid.distance_matrix()
    for i, j, k in [(0, 100, 200), (5, 17, 249), (30, 60, 90)]:
        assert d[i, k] <= d[i, j] + d[j, k] + 1e-12


@pytest.mark.parametrize("count", [250, 1000])
def test_cap_grid_is_homogeneous(count):
    grid = generate_cap_grid(math.radians(45), math.radians(90), count)
    d = grid.distance_matrix()
    np.fill_diagonal(d, np.inf)
    nearest = d.min(axis=1)

    assert nearest.max() <= 2 * nearest.min()
