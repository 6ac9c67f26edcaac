"""Exhaustive mode-subset sweeps, best sets per cardinality and degeneracy groups."""

from __future__ import annotations

import csv
import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from .command import ensure_parent_dir
from .errors import ConfigError, DataValidationError, DegeneracyError
from .farfield import FarFieldSet
from .geometry import DoAGrid
from .uncertainty import (
    KIND_CM_REALIZED,
    MeasurementMatrix,
    NeighborStructure,
    assemble_measurement_matrix,
    find_ambiguities,
    kpi,
    kpi_db,
    linear_weight,
    measurement_kind_for,
    uncertainty_values,
)

logger = logging.getLogger(__name__)

MAX_ENTRIES = 20
SUBSETS_HEADER = ("size", "indices", "kpi_db", "ambiguities")
SCATTER_HEADER = ("size", "rank", "kpi_db", "names")


@dataclass(frozen=True)
class SubsetResult:
    entry_indices: tuple[int, ...]
    entry_names: tuple[str, ...]
    kpi: float
    kpi_db: float
    kind: str
    ambiguity_count: int

    @property
    def size(self) -> int:
        return len(self.entry_indices)


@dataclass(frozen=True)
class SubsetFailure:
    entry_indices: tuple[int, ...]
    entry_names: tuple[str, ...]
    reason: str

    @property
    def size(self) -> int:
        return len(self.entry_indices)


@dataclass(frozen=True)
class SubsetSweep:
    """Results of one sweep in enumeration order; failures are subsets with a zero-norm DoA."""

    results: tuple[SubsetResult, ...]
    failures: tuple[SubsetFailure, ...]
    entry_names: tuple[str, ...]
    kind: str
    measurement_kind: str
    polarization: str

    def __iter__(self) -> Iterator[SubsetResult]:
        return iter(self.results)

    def __len__(self) -> int:
        return len(self.results)


def result_kind(measurement_kind: str) -> str:
    """``realized`` for cm-realized matrices, ``directivity`` for port and cm-directivity ones."""
    return "realized" if measurement_kind == KIND_CM_REALIZED else "directivity"


def subset_order(entry_count: int, min_size: int, max_size: int) -> list[tuple[int, ...]]:
    """Index sets by size, lexicographic within a size."""
    return [c for size in range(min_size, max_size + 1) for c in itertools.combinations(range(entry_count), size)]


def _check_sizes(entry_count: int, min_size: int, max_size: int) -> None:
    if entry_count > MAX_ENTRIES:
        raise ConfigError(f"Exhaustive enumeration is limited to {MAX_ENTRIES} entries; the set has {entry_count}")
    if not 1 <= min_size <= max_size <= entry_count:
        raise ConfigError(
            f"Subset sizes must satisfy 1 <= min_size <= max_size <= {entry_count}; got {min_size}..{max_size}"
        )


def _evaluate_subset(
    X: MeasurementMatrix,
    indices: tuple[int, ...],
    weights: np.ndarray,
    structure: Optional[NeighborStructure],
    ambiguity_params: dict,
) -> Union[SubsetResult, SubsetFailure]:
    Xs = X.subset_rows(indices)
    try:
        u = uncertainty_values(Xs)
        value = kpi(u, weights)
    except DegeneracyError as e:
        return SubsetFailure(indices, Xs.entry_names, str(e))
    count = 0
    if structure is not None:
        count = find_ambiguities(u, X.grid, structure=structure, **ambiguity_params).count
    return SubsetResult(indices, Xs.entry_names, value, kpi_db(value), result_kind(X.kind), count)


def enumerate_subsets(
    ff: FarFieldSet,
    grid: DoAGrid,
    pol: str,
    kind: str,
    min_size: int = 1,
    max_size: Optional[int] = None,
    workers: int = 1,
    exclusion_radius: float = math.radians(30.0),
    relative_threshold: float = 0.5,
    ambiguity_reference: str = "geometric",
    detect: bool = True,
) -> SubsetSweep:
    """Evaluate every subset of the set's entries with sizes in ``min_size..max_size``.

    The full measurement matrix is assembled once; each subset uses its rows.
    """
    entry_count = len(ff)
    max_size = entry_count if max_size is None else int(max_size)
    _check_sizes(entry_count, int(min_size), max_size)

    X = assemble_measurement_matrix(ff, grid, pol, measurement_kind_for(ff, kind))
    structure = NeighborStructure.for_grid(grid) if detect else None
    distances = structure.distances if structure is not None else grid.distance_matrix()
    weights = linear_weight(distances)
    params = {
        "exclusion_radius": exclusion_radius,
        "relative_threshold": relative_threshold,
        "reference": ambiguity_reference,
    }

    order = subset_order(entry_count, int(min_size), max_size)
    outcomes: list[Optional[Union[SubsetResult, SubsetFailure]]] = [None] * len(order)
    if workers <= 1:
        for i, indices in enumerate(order):
            outcomes[i] = _evaluate_subset(X, indices, weights, structure, params)
    else:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            futures = {
                ex.submit(_evaluate_subset, X, indices, weights, structure, params): i
                for i, indices in enumerate(order)
            }
            for fut in as_completed(futures):
                outcomes[futures[fut]] = fut.result()

    results = tuple(o for o in outcomes if isinstance(o, SubsetResult))
    failures = tuple(o for o in outcomes if isinstance(o, SubsetFailure))
    for failure in failures:
        logger.warning("Subset %s skipped: %s", ", ".join(failure.entry_names), failure.reason)
    logger.info("Evaluated %d subset(s), %d failed", len(results), len(failures))
    return SubsetSweep(results, failures, tuple(ff.names), result_kind(X.kind), X.kind, pol)


@dataclass(frozen=True)
class BestSet:
    size: int
    subsets: tuple[tuple[int, ...], ...]
    kpi_db: float
    label: str


def best_per_cardinality(results: Sequence[SubsetResult], names: Sequence[str], tolerance_db: float = 0.01) -> list[BestSet]:
    """Per size, the maximal-KPI subset plus any within ``tolerance_db`` of it."""
    results = list(results)
    if not results:
        raise ConfigError("No subset results to rank")
    if tolerance_db < 0:
        raise ConfigError(f"tolerance_db must be >= 0, got {tolerance_db}")
    table = []
    for size in sorted({r.size for r in results}):
        group = [r for r in results if r.size == size]
        best = max(r.kpi_db for r in group)
        winners = tuple(r.entry_indices for r in group if best - r.kpi_db <= tolerance_db)
        table.append(BestSet(size, winners, best, format_bracketed(winners, names)))
    return table


def format_bracketed(subsets: Sequence[Sequence[int]], names: Sequence[str]) -> str:
    """Entries shared by every subset are listed plainly, the others inside one bracket."""
    subsets = [tuple(s) for s in subsets]
    if not subsets:
        return ""
    common = set(subsets[0]).intersection(*subsets[1:])
    union = sorted(set().union(*subsets))
    tokens, bracket = [], []
    for index in union:
        if index in common:
            tokens.append(names[index])
        else:
            if not bracket:
                tokens.append(None)
            bracket.append(names[index])
    return ", ".join(f"[{', '.join(bracket)}]" if t is None else t for t in tokens)


def detect_degenerate_sets(results: Sequence[SubsetResult], tolerance_db: float = 0.05) -> list[list[tuple[int, ...]]]:
    """Groups of same-size subsets linked by one-entry swaps whose KPIs differ by at most ``tolerance_db``."""
    if tolerance_db < 0:
        raise ConfigError(f"tolerance_db must be >= 0, got {tolerance_db}")
    results = list(results)
    parent = list(range(len(results)))

    def find(i: int) -> int:
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in itertools.combinations(range(len(results)), 2):
        a, b = results[i], results[j]
        if a.size != b.size or abs(a.kpi_db - b.kpi_db) > tolerance_db:
            continue
        if len(set(a.entry_indices) ^ set(b.entry_indices)) == 2:
            parent[find(j)] = find(i)

    groups: dict[int, list[tuple[int, ...]]] = {}
    for i, r in enumerate(results):
        groups.setdefault(find(i), []).append(r.entry_indices)
    return sorted((sorted(g) for g in groups.values() if len(g) > 1), key=lambda g: (len(g[0]), g))


def _indices_label(indices: Sequence[int]) -> str:
    return " ".join(str(i) for i in indices)


def scatter_rows(sweep: SubsetSweep) -> list[dict]:
    """Per cardinality, subsets ranked by KPI (highest first)."""
    rows = []
    for size in sorted({r.size for r in sweep}):
        group = sorted((r for r in sweep if r.size == size), key=lambda r: (-r.kpi_db, r.entry_indices))
        for rank, r in enumerate(group, start=1):
            rows.append({"size": size, "rank": rank, "kpi_db": r.kpi_db, "names": " ".join(r.entry_names)})
    return rows


def _write_csv(path: Union[str, Path], header: Sequence[str], rows: Sequence[Sequence]) -> str:
    ensure_parent_dir(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
    return str(path)


def write_subsets_csv(sweep: SubsetSweep, path: Union[str, Path]) -> str:
    rows = [(r.size, _indices_label(r.entry_indices), repr(r.kpi_db), r.ambiguity_count) for r in sweep]
    return _write_csv(path, SUBSETS_HEADER, rows)


def write_scatter_csv(sweep: SubsetSweep, path: Union[str, Path]) -> str:
    rows = [(row["size"], row["rank"], repr(row["kpi_db"]), row["names"]) for row in scatter_rows(sweep)]
    return _write_csv(path, SCATTER_HEADER, rows)


def read_subsets_csv(path: Union[str, Path]) -> list[tuple[int, tuple[int, ...], float, int]]:
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        if tuple(header) != SUBSETS_HEADER:
            raise DataValidationError(f"{path}: unexpected header {','.join(header)!r}")
        return [
            (int(size), tuple(int(i) for i in indices.split()), float(value), int(count))
            for size, indices, value, count in reader
        ]
