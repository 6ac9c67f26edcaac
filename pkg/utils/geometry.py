"""Directions, the great-circle metric and deterministic spherical-cap DoA grids.

Angles are radians inside the package and degrees at every file or CLI
boundary. theta is the polar angle from +z, phi the azimuth in [0, 2*pi).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.spatial import cKDTree

from .errors import ConfigError, DataValidationError
from .tables import read_table, write_table

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
ANGLE_TOL = 1e-12
WEIGHT_RTOL = 1e-9
GRID_HEADER = ("index", "theta_deg", "phi_deg", "weight_sr")


def _wrap_phi(phi):
    wrapped = np.mod(phi, TWO_PI)
    # np.mod can return exactly 2*pi for tiny negative inputs
    return np.where(wrapped >= TWO_PI, 0.0, wrapped)


@dataclass(frozen=True, eq=False)
class Direction:
    """A direction of arrival. At theta in {0, pi} every phi is the same direction."""

    theta: float
    phi: float = 0.0

    def __post_init__(self) -> None:
        theta = float(self.theta)
        phi = float(self.phi)
        if not (math.isfinite(theta) and math.isfinite(phi)):
            raise ConfigError(f"Direction angles must be finite, got theta={theta}, phi={phi}")
        if theta < -ANGLE_TOL or theta > math.pi + ANGLE_TOL:
            raise ConfigError(f"theta must lie in [0, pi], got {theta}")
        object.__setattr__(self, "theta", min(max(theta, 0.0), math.pi))
        object.__setattr__(self, "phi", float(_wrap_phi(phi)))

    @classmethod
    def from_degrees(cls, theta_deg: float, phi_deg: float = 0.0) -> "Direction":
        return cls(math.radians(theta_deg), math.radians(phi_deg))

    @property
    def theta_deg(self) -> float:
        return math.degrees(self.theta)

    @property
    def phi_deg(self) -> float:
        return math.degrees(self.phi)

    @property
    def pole(self) -> Optional[int]:
        """+1 at the north pole, -1 at the south pole, None elsewhere."""
        if self.theta == 0.0:
            return 1
        if self.theta == math.pi:
            return -1
        return None

    def unit_vector(self) -> np.ndarray:
        st = math.sin(self.theta)
        return np.array([st * math.cos(self.phi), st * math.sin(self.phi), math.cos(self.theta)])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Direction):
            return NotImplemented
        if self.pole is not None or other.pole is not None:
            return self.pole == other.pole
        return self.theta == other.theta and self.phi == other.phi

    def __hash__(self) -> int:
        if self.pole is not None:
            return hash(("pole", self.pole))
        return hash((self.theta, self.phi))

    def __repr__(self) -> str:
        return f"Direction(theta={self.theta_deg:.6g} deg, phi={self.phi_deg:.6g} deg)"


NORTH_POLE = Direction(0.0, 0.0)


def great_circle_distance(a: Direction, b: Direction) -> float:
    """Great-circle distance in radians, in [0, pi]; exactly 0 for the same direction."""
    if a == b:
        return 0.0
    arg = math.cos(a.theta) * math.cos(b.theta) + math.sin(a.theta) * math.sin(b.theta) * math.cos(b.phi - a.phi)
    return math.acos(min(1.0, max(-1.0, arg)))


def great_circle_distances(theta_a, phi_a, theta_b, phi_b) -> np.ndarray:
    """Pairwise distances between two sets of directions, shape (len(a), len(b))."""
    ta = np.asarray(theta_a, dtype=float)[:, None]
    pa = np.asarray(phi_a, dtype=float)[:, None]
    tb = np.asarray(theta_b, dtype=float)[None, :]
    pb = np.asarray(phi_b, dtype=float)[None, :]
    arg = np.cos(ta) * np.cos(tb) + np.sin(ta) * np.sin(tb) * np.cos(pb - pa)
    dist = np.arccos(np.clip(arg, -1.0, 1.0))
    same = (ta == tb) & ((pa == pb) | (ta == 0.0) | (ta == math.pi))
    return np.where(same, 0.0, dist)


def cap_solid_angle(theta_min: float, theta_max: float) -> float:
    return TWO_PI * (math.cos(theta_min) - math.cos(theta_max))


@dataclass(frozen=True, eq=False)
class DoAGrid:
    """K evaluation directions on a spherical cap with solid-angle weights (steradians)."""

    thetas: np.ndarray
    phis: np.ndarray
    cell_weights: np.ndarray
    theta_min: float
    theta_max: float

    def __post_init__(self) -> None:
        thetas = np.array(self.thetas, dtype=float).reshape(-1)
        phis = _wrap_phi(np.array(self.phis, dtype=float).reshape(-1))
        weights = np.array(self.cell_weights, dtype=float).reshape(-1)
        if not (len(thetas) == len(phis) == len(weights)):
            raise DataValidationError("DoA grid arrays differ in length")
        if len(thetas) == 0:
            raise DataValidationError("DoA grid is empty")
        if not (np.all(np.isfinite(thetas)) and np.all(np.isfinite(weights))):
            raise DataValidationError("DoA grid contains non-finite values")
        if np.any(thetas < self.theta_min - ANGLE_TOL) or np.any(thetas > self.theta_max + ANGLE_TOL):
            raise DataValidationError(
                f"DoA grid directions leave the cap [{math.degrees(self.theta_min)}, "
                f"{math.degrees(self.theta_max)}] deg"
            )
        if np.any(weights < 0):
            raise DataValidationError("DoA grid weights must be non-negative")
        omega = cap_solid_angle(self.theta_min, self.theta_max)
        if abs(weights.sum() - omega) > WEIGHT_RTOL * omega:
            raise DataValidationError(
                f"DoA grid weights sum to {weights.sum():.12g} sr, cap solid angle is {omega:.12g} sr"
            )
        for arr in (thetas, phis, weights):
            arr.setflags(write=False)
        object.__setattr__(self, "thetas", thetas)
        object.__setattr__(self, "phis", phis)
        object.__setattr__(self, "cell_weights", weights)

    def __len__(self) -> int:
        return len(self.thetas)

    @property
    def directions(self) -> tuple[Direction, ...]:
        return tuple(Direction(t, p) for t, p in zip(self.thetas, self.phis))

    def direction(self, index: int) -> Direction:
        return Direction(self.thetas[index], self.phis[index])

    def unit_vectors(self) -> np.ndarray:
        st = np.sin(self.thetas)
        return np.column_stack((st * np.cos(self.phis), st * np.sin(self.phis), np.cos(self.thetas)))

    def distance_matrix(self) -> np.ndarray:
        return great_circle_distances(self.thetas, self.phis, self.thetas, self.phis)


def _check_cap_bounds(theta_min: float, theta_max: float, upper: float) -> None:
    if not (math.isfinite(theta_min) and math.isfinite(theta_max)):
        raise ConfigError("Cap bounds must be finite")
    if not 0.0 <= theta_min < theta_max <= upper + ANGLE_TOL:
        raise ConfigError(
            f"Cap bounds must satisfy 0 <= theta_min < theta_max <= {math.degrees(upper):g} deg; "
            f"got {math.degrees(theta_min):g}, {math.degrees(theta_max):g}"
        )


def _apportion(total: int, areas: np.ndarray, single: np.ndarray) -> np.ndarray:
    """Largest-remainder split of ``total`` points over rings, at least one per ring."""
    quotas = total * areas / areas.sum()
    counts = np.maximum(np.floor(quotas).astype(int), 1)
    counts[single] = 1
    adjustable = [i for i in range(len(areas)) if not single[i]]
    by_remainder = sorted(adjustable, key=lambda i: (-(quotas[i] - math.floor(quotas[i])), i))
    remaining = total - int(counts.sum())
    step = 0
    while remaining > 0 and by_remainder:
        counts[by_remainder[step % len(by_remainder)]] += 1
        remaining -= 1
        step += 1
    while remaining < 0:
        candidates = [i for i in adjustable if counts[i] > 1]
        if not candidates:
            break
        i = max(candidates, key=lambda j: (counts[j] - quotas[j], -j))
        counts[i] -= 1
        remaining += 1
    return counts


def generate_cap_grid(theta_min: float, theta_max: float, target_count: int) -> DoAGrid:
    """Equal-area ring grid on the cap theta_min <= theta <= theta_max.

    Rings sit at constant theta and include both cap bounds; each ring holds a
    number of phi-uniform points proportional to its band area, odd rings are
    offset by half a phi step. The point count equals ``target_count``.
    """
    _check_cap_bounds(theta_min, theta_max, math.pi / 2)
    if isinstance(target_count, bool) or int(target_count) != target_count or target_count < 1:
        raise ConfigError(f"target_count must be a positive integer, got {target_count}")
    target_count = int(target_count)
    omega = cap_solid_angle(theta_min, theta_max)

    if target_count == 1:
        centroid = math.acos((math.cos(theta_min) + math.cos(theta_max)) / 2.0)
        return DoAGrid(np.array([centroid]), np.array([0.0]), np.array([omega]), theta_min, theta_max)

    cell_width = math.sqrt(omega / target_count)
    gaps = max(int(round((theta_max - theta_min) / cell_width)), 1)
    ring_count = min(gaps + 1, target_count)
    ring_thetas = np.linspace(theta_min, theta_max, ring_count)
    edges = np.concatenate(([theta_min], (ring_thetas[:-1] + ring_thetas[1:]) / 2.0, [theta_max]))
    areas = TWO_PI * (np.cos(edges[:-1]) - np.cos(edges[1:]))
    counts = _apportion(target_count, areas, ring_thetas == 0.0)

    thetas, phis, weights = [], [], []
    for i, (theta, n) in enumerate(zip(ring_thetas, counts)):
        offset = 0.5 if (i % 2 and theta != 0.0) else 0.0
        thetas.append(np.full(n, theta))
        phis.append(TWO_PI * (np.arange(n) + offset) / n)
        weights.append(np.full(n, areas[i] / n))
    grid = DoAGrid(np.concatenate(thetas), np.concatenate(phis), np.concatenate(weights), theta_min, theta_max)
    logger.debug("Cap grid: %d rings, %d points", ring_count, len(grid))
    return grid


def generate_regular_grid(theta_min: float, theta_max: float, theta_step: float, phi_step: float) -> DoAGrid:
    """Regular theta/phi node grid with ring-band quadrature weights (full sphere allowed)."""
    _check_cap_bounds(theta_min, theta_max, math.pi)
    if not (theta_step > 0 and phi_step > 0):
        raise ConfigError("Grid steps must be positive")
    span = (theta_max - theta_min) / theta_step
    ring_count = int(round(span)) + 1
    if abs(span - (ring_count - 1)) > 1e-9 * max(1.0, span):
        raise ConfigError("theta span must be an integer multiple of theta_step")
    per_ring = TWO_PI / phi_step
    n_phi = int(round(per_ring))
    if abs(per_ring - n_phi) > 1e-9 * per_ring:
        raise ConfigError("phi_step must divide 360 deg")

    ring_thetas = theta_min + theta_step * np.arange(ring_count)
    ring_thetas[-1] = theta_max
    edges = np.concatenate(([theta_min], (ring_thetas[:-1] + ring_thetas[1:]) / 2.0, [theta_max]))
    areas = TWO_PI * (np.cos(edges[:-1]) - np.cos(edges[1:]))

    thetas, phis, weights = [], [], []
    for theta, area in zip(ring_thetas, areas):
        n = 1 if theta in (0.0, math.pi) else n_phi
        thetas.append(np.full(n, theta))
        phis.append(phi_step * np.arange(n))
        weights.append(np.full(n, area / n))
    return DoAGrid(np.concatenate(thetas), np.concatenate(phis), np.concatenate(weights), theta_min, theta_max)


def sort_reference_order(grid: DoAGrid) -> np.ndarray:
    """Grid indices ordered by distance to the north pole, then phi, then index."""
    to_pole = great_circle_distances([0.0], [0.0], grid.thetas, grid.phis)[0]
    index = np.arange(len(grid))
    return np.lexsort((index, grid.phis, to_pole))


def nearest_index(grid: DoAGrid, d: Direction) -> int:
    dist = great_circle_distances([d.theta], [d.phi], grid.thetas, grid.phis)[0]
    return int(np.argmin(dist))


def neighbor_indices(grid: DoAGrid, count: int = 6) -> np.ndarray:
    """Indices of the ``count`` nearest other grid points, shape (K, min(count, K-1))."""
    k_total = len(grid)
    count = min(count, k_total - 1)
    if count <= 0:
        return np.empty((k_total, 0), dtype=np.int64)
    # chord length is monotone in great-circle distance
    tree = cKDTree(grid.unit_vectors())
    _, idx = tree.query(grid.unit_vectors(), k=count + 1)
    out = np.empty((k_total, count), dtype=np.int64)
    for i, row in enumerate(np.atleast_2d(idx)):
        others = [j for j in row if j != i]
        out[i] = others[:count]
    return out


def write_grid_csv(grid: DoAGrid, path: Union[str, Path]) -> str:
    return write_table(
        path,
        GRID_HEADER,
        [np.arange(len(grid)), np.degrees(grid.thetas), np.degrees(grid.phis), grid.cell_weights],
        int_columns=(0,),
    )


def read_grid_csv(
    path: Union[str, Path],
    theta_min_deg: Optional[float] = None,
    theta_max_deg: Optional[float] = None,
) -> DoAGrid:
    """Read a grid CSV; cap bounds default to the extreme theta values in the file."""
    table = read_table(path, GRID_HEADER)
    order = np.argsort(table["index"], kind="stable")
    if not np.array_equal(table["index"][order], np.arange(len(order))):
        raise DataValidationError(f"{path}: grid indices must be 0..K-1")
    thetas = np.radians(table["theta_deg"][order])
    phis = np.radians(table["phi_deg"][order])
    lo = math.radians(theta_min_deg) if theta_min_deg is not None else float(thetas.min())
    hi = math.radians(theta_max_deg) if theta_max_deg is not None else float(thetas.max())
    return DoAGrid(thetas, phis, table["weight_sr"][order], lo, hi)
