"""Measurement matrices, correlation, the uncertainty parameter, the sorted
uncertainty matrix, distance weighting, the KPI and ambiguity detection.

Column k of a measurement matrix stacks every port/mode value for grid DoA k.
Inner products between columns are accumulated row by row in a canonical row
order, so results do not depend on entry order, on zero rows, or on how the
columns are split across workers.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError, DataValidationError, DegeneracyError
from .farfield import FarFieldSet, check_polarization, sample_many
from .geometry import DoAGrid, neighbor_indices, sort_reference_order
from .tables import read_matrix, read_table, write_matrix, write_table

logger = logging.getLogger(__name__)

KIND_PORT = "port"
KIND_CM_DIRECTIVITY = "cm-directivity"
KIND_CM_REALIZED = "cm-realized"
MEASUREMENT_KINDS = (KIND_PORT, KIND_CM_DIRECTIVITY, KIND_CM_REALIZED)

SORTED_MATRIX_FILE = "uncertainty_sorted.csv"
COLUMN_ORDER_FILE = "column_order.csv"
ROW_ORDER_FILE = "row_order.csv"
COLUMN_ORDER_HEADER = ("sorted_column", "grid_index")
VECTOR_HEADER = ("theta_deg", "phi_deg", "u")
AMBIGUITY_REFERENCES = ("geometric", "self")


@dataclass(frozen=True, eq=False)
class MeasurementMatrix:
    """P x K complex matrix of far-field values at the grid DoAs."""

    values: np.ndarray
    grid: DoAGrid
    polarization: str
    kind: str
    entry_names: tuple[str, ...]

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=complex)
        if values.ndim != 2:
            raise DataValidationError("measurement matrix must be 2-D")
        if values.shape != (len(self.entry_names), len(self.grid)):
            raise DataValidationError(
                f"measurement matrix is {values.shape[0]}x{values.shape[1]}, expected "
                f"{len(self.entry_names)}x{len(self.grid)}"
            )
        if self.kind not in MEASUREMENT_KINDS:
            raise ConfigError(f"kind must be one of {', '.join(MEASUREMENT_KINDS)}; got {self.kind!r}")
        check_polarization(self.polarization)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "entry_names", tuple(self.entry_names))

    @property
    def entry_count(self) -> int:
        return self.values.shape[0]

    @property
    def doa_count(self) -> int:
        return self.values.shape[1]

    def column(self, k: int) -> np.ndarray:
        return self.values[:, k]

    def subset_rows(self, indices: Sequence[int]) -> "MeasurementMatrix":
        indices = list(indices)
        return MeasurementMatrix(
            self.values[indices], self.grid, self.polarization, self.kind, tuple(self.entry_names[i] for i in indices)
        )

    def scaled(self, factor: complex) -> "MeasurementMatrix":
        return MeasurementMatrix(self.values * factor, self.grid, self.polarization, self.kind, self.entry_names)


def measurement_kind_for(ff: FarFieldSet, kind: str) -> str:
    """Map the CLI's ``directivity``/``realized`` onto a measurement-matrix kind for ``ff``."""
    if kind in MEASUREMENT_KINDS:
        return kind
    if kind == "directivity":
        return KIND_CM_DIRECTIVITY if ff.normalization == "cm-directivity" else KIND_PORT
    if kind == "realized":
        return KIND_CM_REALIZED
    raise ConfigError(f"Unknown kind {kind!r}; use directivity or realized")


def assemble_measurement_matrix(ff: FarFieldSet, grid: DoAGrid, pol: str, kind: str) -> MeasurementMatrix:
    """Sample every entry at every grid DoA; cm-realized rows are scaled by 1/(1 + j lambda)."""
    check_polarization(pol)
    if kind not in MEASUREMENT_KINDS:
        raise ConfigError(f"kind must be one of {', '.join(MEASUREMENT_KINDS)}; got {kind!r}")
    if kind == KIND_CM_REALIZED and not ff.has_eigenvalues:
        missing = [e.name for e in ff.entries if e.eigenvalue is None]
        raise DataValidationError(f"cm-realized evaluation needs eigenvalues; missing for {', '.join(missing)}")

    values = sample_many(ff, grid.thetas, grid.phis, pol)
    if kind == KIND_CM_REALIZED:
        lambdas = np.array([e.eigenvalue for e in ff.entries], dtype=float)
        values = values / (1.0 + 1j * lambdas)[:, None]
    return MeasurementMatrix(values, grid, pol, kind, tuple(ff.names))


def canonical_row_order(values: np.ndarray) -> list[int]:
    return sorted(range(values.shape[0]), key=lambda p: (values[p].tobytes(), p))


def _gram_block(values: np.ndarray, order: Sequence[int], cols_a: np.ndarray, cols_b: np.ndarray) -> np.ndarray:
    acc = np.zeros((len(cols_a), len(cols_b)), dtype=complex)
    for p in order:
        acc += np.conj(values[p, cols_a])[:, None] * values[p, cols_b][None, :]
    return acc


def gram_matrix(values: np.ndarray, workers: int = 1) -> np.ndarray:
    """All column inner products x_a^H x_b, parallel over column blocks."""
    values = np.asarray(values, dtype=complex)
    k_total = values.shape[1]
    order = canonical_row_order(values)
    rows = np.arange(k_total)
    blocks = [b for b in np.array_split(rows, max(1, min(int(workers), k_total))) if len(b)]
    gram = np.empty((k_total, k_total), dtype=complex)
    if len(blocks) == 1:
        gram[:, :] = _gram_block(values, order, rows, rows)
    else:
        with ThreadPoolExecutor(max_workers=len(blocks)) as ex:
            futures = {ex.submit(_gram_block, values, order, rows, b): b for b in blocks}
            for fut in as_completed(futures):
                gram[:, futures[fut]] = fut.result()
    # exact Hermitian symmetry
    lower = np.tril_indices(k_total, -1)
    gram[lower] = np.conj(gram.T[lower])
    return gram


def _describe_doa(grid: DoAGrid, k: int) -> str:
    return f"DoA {k} (theta={math.degrees(grid.thetas[k]):.6g} deg, phi={math.degrees(grid.phis[k]):.6g} deg)"


def _check_powers(grid: DoAGrid, powers: np.ndarray, columns: Sequence[int]) -> None:
    zero = [int(columns[i]) for i in np.flatnonzero(powers <= 0.0)]
    if zero:
        raise DegeneracyError(
            f"Zero-norm measurement column at {_describe_doa(grid, zero[0])}: "
            f"the system receives nothing there ({len(zero)} such DoA(s))"
        )


def _pair_terms(X: MeasurementMatrix, alpha: int, beta: int) -> tuple[complex, float, float]:
    lo, hi = min(alpha, beta), max(alpha, beta)
    cols = np.array([lo, hi])
    g = _gram_block(X.values, canonical_row_order(X.values), cols, cols)
    powers = np.array([g[0, 0].real, g[1, 1].real])
    _check_powers(X.grid, powers, cols)
    power = {lo: float(powers[0]), hi: float(powers[1])}
    g_ab = complex(g[0, 1]) if alpha <= beta else complex(np.conj(g[0, 1]))
    return g_ab, power[alpha], power[beta]


def correlation(X: MeasurementMatrix, alpha: int, beta: int) -> complex:
    """rho = x_a^H x_b / (|x_a| |x_b|)."""
    g_ab, p_a, p_b = _pair_terms(X, alpha, beta)
    return g_ab / math.sqrt(p_a * p_b)


def uncertainty(X: MeasurementMatrix, alpha: int, beta: int) -> float:
    """u = |rho| / (|x_a| |x_b|); u_aa = 1 / |x_a|^2."""
    g_ab, p_a, p_b = _pair_terms(X, alpha, beta)
    return abs(g_ab) / (p_a * p_b)


def uncertainty_values(X: MeasurementMatrix, workers: int = 1) -> np.ndarray:
    """Unsorted K x K uncertainties in grid order, u[beta, alpha]."""
    gram = gram_matrix(X.values, workers=workers)
    powers = np.diagonal(gram).real.copy()
    _check_powers(X.grid, powers, range(len(powers)))
    return np.abs(gram) / (powers[:, None] * powers[None, :])


@dataclass(frozen=True, eq=False)
class UncertaintyMatrix:
    """Double-sorted uncertainty matrix.

    ``values[r, c]`` is u for reference grid DoA ``column_reference_perm[c]`` and
    test grid DoA ``row_perms[c, r]``. ``self_terms`` is indexed by grid DoA.
    """

    values: np.ndarray
    column_reference_perm: np.ndarray
    row_perms: np.ndarray
    self_terms: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=float)
        k_total = values.shape[0] if values.ndim == 2 else -1
        if values.ndim != 2 or values.shape[1] != k_total:
            raise DataValidationError(f"uncertainty matrix must be square, got shape {values.shape}")
        cols = np.array(self.column_reference_perm, dtype=np.int64)
        rows = np.array(self.row_perms, dtype=np.int64)
        selfs = np.array(self.self_terms, dtype=float)
        if not np.array_equal(np.sort(cols), np.arange(k_total)):
            raise DataValidationError("column_reference_perm is not a permutation of the grid indices")
        if rows.shape != (k_total, k_total) or not np.all(np.sort(rows, axis=1) == np.arange(k_total)):
            raise DataValidationError("row_perms must hold one grid-index permutation per sorted column")
        if selfs.shape != (k_total,):
            raise DataValidationError(f"self_terms must have length {k_total}")
        for arr in (values, cols, rows, selfs):
            arr.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "column_reference_perm", cols)
        object.__setattr__(self, "row_perms", rows)
        object.__setattr__(self, "self_terms", selfs)

    def __len__(self) -> int:
        return self.values.shape[0]

    def unsorted(self) -> np.ndarray:
        """Grid-ordered matrix ``u[beta, alpha]``."""
        out = np.empty_like(self.values)
        out[self.row_perms.T, self.column_reference_perm[None, :]] = self.values
        return out

    def column_vector(self, grid_index: int) -> np.ndarray:
        """u over all test DoAs (grid order) for one reference DoA."""
        c = int(np.flatnonzero(self.column_reference_perm == grid_index)[0])
        out = np.empty(len(self))
        out[self.row_perms[c]] = self.values[:, c]
        return out


def _row_orders(grid: DoAGrid, col_perm: np.ndarray, distances: np.ndarray) -> np.ndarray:
    index = np.arange(len(grid))
    return np.stack([np.lexsort((index, grid.phis, distances[alpha])) for alpha in col_perm])


def uncertainty_matrix(
    X: MeasurementMatrix, grid: Optional[DoAGrid] = None, workers: int = 1
) -> UncertaintyMatrix:
    """All-pairs uncertainties, columns by distance to the pole, rows by distance to each reference."""
    grid = X.grid if grid is None else grid
    if len(grid) != X.doa_count:
        raise DataValidationError(f"grid has {len(grid)} DoAs but the measurement matrix has {X.doa_count}")
    u = uncertainty_values(X, workers=workers)
    col_perm = sort_reference_order(grid)
    row_perms = _row_orders(grid, col_perm, grid.distance_matrix())
    values = u[row_perms.T, col_perm[None, :]]
    logger.debug("Uncertainty matrix: K=%d, P=%d, kind=%s", len(grid), X.entry_count, X.kind)
    return UncertaintyMatrix(values, col_perm, row_perms, np.diagonal(u).copy())


def linear_weight(delta):
    """w = delta / pi."""
    return np.asarray(delta, dtype=float) / math.pi if np.ndim(delta) else float(delta) / math.pi


def weight_matrix(U: UncertaintyMatrix, grid: DoAGrid) -> np.ndarray:
    if len(grid) != len(U):
        raise DataValidationError(f"grid has {len(grid)} DoAs but U is {len(U)}x{len(U)}")
    distances = grid.distance_matrix()
    return linear_weight(distances[U.row_perms.T, U.column_reference_perm[None, :]])


def kpi(U: Union[UncertaintyMatrix, np.ndarray], W: np.ndarray) -> float:
    """Inverse mean of |U| * W; the sum is exactly rounded so layout and order do not matter."""
    values = U.values if isinstance(U, UncertaintyMatrix) else np.asarray(U, dtype=float)
    weights = np.asarray(W, dtype=float)
    if values.shape != weights.shape:
        raise DataValidationError(f"U {values.shape} and W {weights.shape} differ in shape")
    total = math.fsum((np.abs(values) * weights).ravel(order="F"))
    if total == 0.0:
        raise DegeneracyError("Weighted uncertainty sum is zero; the KPI is undefined (single-DoA grid?)")
    return values.size / total


def kpi_db(value: float) -> float:
    return 10.0 * math.log10(value)


def kpi_of_measurement(X: MeasurementMatrix, workers: int = 1, distances: Optional[np.ndarray] = None) -> float:
    """KPI straight from the unsorted matrices; equal to kpi(U, W) since the sum is exactly rounded."""
    u = uncertainty_values(X, workers=workers)
    distances = X.grid.distance_matrix() if distances is None else distances
    return kpi(u, linear_weight(distances))


@dataclass(frozen=True)
class Ambiguity:
    reference_index: int
    test_index: int
    theta_deg: float
    phi_deg: float
    u: float
    relative: float
    distance_deg: float

    def to_dict(self) -> dict:
        return {
            "test_index": self.test_index,
            "theta_deg": self.theta_deg,
            "phi_deg": self.phi_deg,
            "u": self.u,
            "relative": self.relative,
            "distance_deg": self.distance_deg,
        }


@dataclass(frozen=True)
class AmbiguityReport:
    exclusion_radius: float
    relative_threshold: float
    reference: str
    findings: dict[int, tuple[Ambiguity, ...]] = field(default_factory=dict)

    @property
    def count(self) -> int:
        return sum(len(v) for v in self.findings.values())

    @property
    def references_affected(self) -> int:
        return sum(1 for v in self.findings.values() if v)

    def for_reference(self, grid_index: int) -> tuple[Ambiguity, ...]:
        return self.findings.get(grid_index, ())

    def to_dict(self, grid: DoAGrid) -> dict:
        per_reference = []
        for alpha, items in sorted(self.findings.items()):
            if not items:
                continue
            per_reference.append(
                {
                    "reference_index": alpha,
                    "theta_deg": math.degrees(grid.thetas[alpha]),
                    "phi_deg": math.degrees(grid.phis[alpha]),
                    "findings": [a.to_dict() for a in items],
                }
            )
        return {
            "count": self.count,
            "references_affected": self.references_affected,
            "reference_count": len(grid),
            "exclusion_radius_deg": math.degrees(self.exclusion_radius),
            "relative_threshold": self.relative_threshold,
            "threshold_reference": self.reference,
            "per_reference": per_reference,
        }


@dataclass(frozen=True, eq=False)
class NeighborStructure:
    """Grid distances, nearest neighbours and the symmetric neighbour graph."""

    distances: np.ndarray
    neighbors: np.ndarray
    graph: csr_matrix

    @classmethod
    def for_grid(cls, grid: DoAGrid, neighbor_count: int = 6) -> "NeighborStructure":
        neighbors = neighbor_indices(grid, neighbor_count)
        k_total = len(grid)
        rows = np.repeat(np.arange(k_total), neighbors.shape[1])
        graph = csr_matrix(
            (np.ones(len(rows), dtype=np.int8), (rows, neighbors.ravel())), shape=(k_total, k_total)
        )
        return cls(grid.distance_matrix(), neighbors, (graph + graph.T).tocsr())


def _check_detector_params(exclusion_radius: float, relative_threshold: float, reference: str) -> None:
    if not exclusion_radius > 0:
        raise ConfigError(f"exclusion_radius must be > 0, got {exclusion_radius}")
    if not 0 < relative_threshold <= 1:
        raise ConfigError(f"relative_threshold must be in (0, 1], got {relative_threshold}")
    if reference not in AMBIGUITY_REFERENCES:
        raise ConfigError(f"reference must be one of {', '.join(AMBIGUITY_REFERENCES)}; got {reference!r}")


def detect_ambiguities(
    U: UncertaintyMatrix,
    grid: DoAGrid,
    exclusion_radius: float,
    relative_threshold: float,
    reference: str = "geometric",
    neighbor_count: int = 6,
) -> AmbiguityReport:
    """Secondary maxima of u far from each reference DoA.

    A test DoA is reported when it lies beyond ``exclusion_radius``, is a local
    maximum of u over its grid neighbours, exceeds the threshold, and is not
    joined to the reference's own lobe by neighbours that all exceed it. The
    threshold is ``relative_threshold * sqrt(u_aa * u_bb)`` (``"geometric"``,
    i.e. |rho| >= t) or ``relative_threshold * u_aa`` (``"self"``).
    """
    if len(grid) != len(U):
        raise DataValidationError(f"grid has {len(grid)} DoAs but U is {len(U)}x{len(U)}")
    report = find_ambiguities(
        U.unsorted(),
        grid,
        exclusion_radius,
        relative_threshold,
        reference,
        NeighborStructure.for_grid(grid, neighbor_count),
    )
    logger.info(
        "Ambiguities: %d finding(s) over %d of %d reference DoA(s)", report.count, report.references_affected, len(grid)
    )
    return report


def find_ambiguities(
    u: np.ndarray,
    grid: DoAGrid,
    exclusion_radius: float,
    relative_threshold: float,
    reference: str,
    structure: NeighborStructure,
) -> AmbiguityReport:
    """Detector core on a grid-ordered ``u[beta, alpha]``."""
    _check_detector_params(exclusion_radius, relative_threshold, reference)
    selfs = np.diagonal(u)
    if reference == "geometric":
        scale = np.sqrt(selfs[:, None] * selfs[None, :])
    else:
        scale = np.broadcast_to(selfs[None, :], u.shape)
    above = u >= relative_threshold * scale

    distances = structure.distances
    neighbors = structure.neighbors
    if neighbors.shape[1]:
        local_max = u >= u[neighbors, :].max(axis=1)
    else:
        local_max = np.ones_like(above)
    candidates = above & local_max & (distances > exclusion_radius) & (u > 0)

    findings: dict[int, tuple[Ambiguity, ...]] = {}
    for alpha in range(len(grid)):
        tests = np.flatnonzero(candidates[:, alpha])
        if len(tests):
            members = np.flatnonzero(above[:, alpha])
            _, labels = connected_components(structure.graph[members][:, members], directed=False)
            lobe = members[labels == labels[np.searchsorted(members, alpha)]]
            tests = tests[~np.isin(tests, lobe)]
        items = [
            Ambiguity(
                reference_index=alpha,
                test_index=int(b),
                theta_deg=math.degrees(grid.thetas[b]),
                phi_deg=math.degrees(grid.phis[b]),
                u=float(u[b, alpha]),
                relative=float(u[b, alpha] / scale[b, alpha]),
                distance_deg=math.degrees(distances[b, alpha]),
            )
            for b in tests
        ]
        items.sort(key=lambda a: (-a.u, a.test_index))
        findings[alpha] = tuple(items)
    return AmbiguityReport(exclusion_radius, relative_threshold, reference, findings)


def write_uncertainty_matrix(
    U: UncertaintyMatrix, directory: Union[str, Path], *, permutations: bool = True
) -> dict[str, str]:
    """Sorted matrix plus side files; row_order.csv has the same layout as the matrix."""
    directory = Path(directory)
    written = {"sorted_matrix": write_matrix(directory / SORTED_MATRIX_FILE, U.values)}
    if not permutations:
        return written
    return {
        **written,
        "column_order": write_table(
            directory / COLUMN_ORDER_FILE,
            COLUMN_ORDER_HEADER,
            [np.arange(len(U)), U.column_reference_perm],
            int_columns=(0, 1),
        ),
        "row_order": write_matrix(directory / ROW_ORDER_FILE, U.row_perms.T, integer=True),
    }


def read_uncertainty_matrix(directory: Union[str, Path]) -> UncertaintyMatrix:
    directory = Path(directory)
    values = read_matrix(directory / SORTED_MATRIX_FILE)
    table = read_table(directory / COLUMN_ORDER_FILE, COLUMN_ORDER_HEADER)
    order = np.argsort(table["sorted_column"], kind="stable")
    col_perm = table["grid_index"][order].astype(np.int64)
    row_perms = read_matrix(directory / ROW_ORDER_FILE, integer=True).T
    if values.shape != row_perms.T.shape or len(col_perm) != values.shape[0]:
        raise DataValidationError(f"{directory}: uncertainty matrix and permutation files disagree in size")
    self_terms = np.empty(len(col_perm))
    self_terms[col_perm] = values[0]
    return UncertaintyMatrix(values, col_perm, row_perms, self_terms)


def write_uncertainty_vector(U: UncertaintyMatrix, grid: DoAGrid, reference_index: int, path: Union[str, Path]) -> str:
    return write_table(
        path, VECTOR_HEADER, [np.degrees(grid.thetas), np.degrees(grid.phis), U.column_vector(reference_index)]
    )
