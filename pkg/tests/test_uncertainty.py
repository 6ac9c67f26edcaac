import math

import numpy as np
import pytest

from utils.errors import ConfigError, DegeneracyError
from utils.geometry import Direction, generate_cap_grid, nearest_index
from utils.synth import UcaSpec, canonical_mode_set, synth_uca
from utils.uncertainty import (
    KIND_CM_DIRECTIVITY,
    KIND_CM_REALIZED,
    KIND_PORT,
    MeasurementMatrix,
    assemble_measurement_matrix,
    correlation,
    detect_ambiguities,
    kpi,
    kpi_db,
    kpi_of_measurement,
    linear_weight,
    read_uncertainty_matrix,
    uncertainty,
    uncertainty_matrix,
    uncertainty_values,
    weight_matrix,
    write_uncertainty_matrix,
)

CAP = (math.radians(45), math.radians(90))
INSTANCE_COUNT = 200


@pytest.fixture
def default_grid():
    return generate_cap_grid(*CAP, 250)


@pytest.fixture
def small_grid():
    return generate_cap_grid(*CAP, 12)


def random_matrix(rng, grid, entries=3):
    values = rng.standard_normal((entries, len(grid))) + 1j * rng.standard_normal((entries, len(grid)))
    return MeasurementMatrix(values, grid, "theta", KIND_PORT, tuple(f"e{i}" for i in range(entries)))


def random_instances(grid, count=INSTANCE_COUNT, entries=3):
    rng = np.random.default_rng(1234)
    return [random_matrix(rng, grid, entries) for _ in range(count)]


def test_toy_correlation_and_uncertainty():
    grid = generate_cap_grid(*CAP, 3)
    X = MeasurementMatrix(np.array([[1, 0, 1], [0, 1, 1]]), grid, "theta", KIND_PORT, ("a", "b"))

    assert correlation(X, 0, 2) == pytest.approx(1 / math.sqrt(2))
    assert correlation(X, 0, 1) == 0
    assert uncertainty(X, 0, 2) == pytest.approx(0.5)
    assert uncertainty(X, 2, 2) == pytest.approx(0.5)


def test_correlation_with_itself_is_one(small_grid):
    X = random_instances(small_grid, count=1)[0]
    assert correlation(X, 4, 4) == pytest.approx(1.0, abs=1e-15)


def test_zero_column_is_degenerate():
    grid = generate_cap_grid(*CAP, 3)
    X = MeasurementMatrix(np.array([[1, 0, 1], [1, 0, 2]]), grid, "theta", KIND_PORT, ("a", "b"))

    with pytest.raises(DegeneracyError, match="DoA 1"):
        uncertainty_values(X)
    with pytest.raises(DegeneracyError):
        correlation(X, 0, 1)


def test_cauchy_schwarz(small_grid):
    for X in random_instances(small_grid):
        u = uncertainty_values(X)
        selfs = np.diagonal(u)
        assert np.all(u <= np.sqrt(selfs[:, None] * selfs[None, :]) * (1 + 1e-12))
        assert abs(correlation(X, 0, 7)) <= 1 + 1e-12


def test_correlation_is_hermitian(small_grid):
    for X in random_instances(small_grid):
        assert correlation(X, 2, 9) == np.conj(correlation(X, 9, 2))
        u = uncertainty_values(X)
        assert np.array_equal(u, u.T)


def test_unitary_mixing_keeps_uncertainty(small_grid):
    rng = np.random.default_rng(7)
    for X in random_instances(small_grid):
        q, _ = np.linalg.qr(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
        mixed = MeasurementMatrix(q @ X.values, X.grid, "theta", KIND_PORT, X.entry_names)
        assert np.allclose(uncertainty_values(mixed), uncertainty_values(X), rtol=1e-10, atol=0)


def test_zero_rows_and_row_order_do_not_change_uncertainty(small_grid):
    X = random_instances(small_grid, count=1)[0]
    padded = np.vstack([X.values[::-1], np.zeros(len(small_grid))])
    Y = MeasurementMatrix(padded, small_grid, "theta", KIND_PORT, ("c", "b", "a", "zero"))

    assert np.array_equal(uncertainty_values(Y), uncertainty_values(X))


def test_workers_are_bit_reproducible(small_grid):
    for X in random_instances(small_grid):
        assert np.array_equal(uncertainty_values(X, workers=1), uncertainty_values(X, workers=4))


def test_sorted_matrix_recovers_grid_order(small_grid):
    for X in random_instances(small_grid):
        U = uncertainty_matrix(X)
        assert np.array_equal(U.unsorted(), uncertainty_values(X))


def test_sorted_columns_start_with_self_term(small_grid):
    X = random_instances(small_grid, count=1)[0]
    U = uncertainty_matrix(X)
    norms = np.sum(np.abs(X.values) ** 2, axis=0)

    assert np.allclose(U.values[0], 1 / norms[U.column_reference_perm], rtol=1e-12, atol=0)
    assert np.allclose(U.self_terms, 1 / norms, rtol=1e-12, atol=0)


def test_column_vector_matches_unsorted(small_grid):
    X = random_instances(small_grid, count=1)[0]
    U = uncertainty_matrix(X)
    assert np.array_equal(U.column_vector(5), U.unsorted()[:, 5])


def test_weight_endpoints():
    assert linear_weight(0.0) == 0.0
    assert linear_weight(math.pi / 2) == 0.5
    assert linear_weight(math.pi) == 1.0


def test_weight_matrix_first_row_is_zero(small_grid):
    U = uncertainty_matrix(random_instances(small_grid, count=1)[0])
    W = weight_matrix(U, small_grid)
    assert np.all(W[0] == 0.0)
    assert np.all(W >= 0) and np.all(W <= 1)


def test_kpi_sorted_equals_unsorted(small_grid):
    X = random_instances(small_grid, count=1)[0]
    U = uncertainty_matrix(X)
    assert kpi(U, weight_matrix(U, small_grid)) == kpi_of_measurement(X)


def test_kpi_single_doa_is_degenerate():
    grid = generate_cap_grid(*CAP, 1)
    X = MeasurementMatrix(np.ones((1, 1)), grid, "theta", KIND_PORT, ("a",))
    U = uncertainty_matrix(X)
    with pytest.raises(DegeneracyError):
        kpi(U, weight_matrix(U, grid))


def test_kpi_scaling_law(default_grid):
    ff = canonical_mode_set(theta_step_deg=1, phi_step_deg=1)
    X = assemble_measurement_matrix(ff, default_grid, "theta", KIND_CM_DIRECTIVITY)

    gain = kpi_db(kpi_of_measurement(X.scaled(math.sqrt(10)))) - kpi_db(kpi_of_measurement(X))

    assert gain == pytest.approx(10.0, abs=1e-9)


def test_realized_with_zero_eigenvalues_matches_directivity(small_grid):
    ff = canonical_mode_set(theta_step_deg=5, phi_step_deg=5)
    directivity = assemble_measurement_matrix(ff, small_grid, "theta", KIND_CM_DIRECTIVITY)
    realized = assemble_measurement_matrix(ff, small_grid, "theta", KIND_CM_REALIZED)
    assert np.array_equal(directivity.values, realized.values)


def test_realized_scales_by_modal_significance(default_grid):
    ff = canonical_mode_set(theta_step_deg=5, phi_step_deg=5, eigenvalues=[1.0] * 4)
    directivity = assemble_measurement_matrix(ff, default_grid, "theta", KIND_CM_DIRECTIVITY)
    realized = assemble_measurement_matrix(ff, default_grid, "theta", KIND_CM_REALIZED)

    assert np.allclose(np.abs(realized.values), np.abs(directivity.values) / math.sqrt(2))
    drop = kpi_db(kpi_of_measurement(directivity)) - kpi_db(kpi_of_measurement(realized))
    assert drop == pytest.approx(10 * math.log10(2), abs=1e-9)


def test_zero_theta_mode_changes_nothing(default_grid):
    ff = canonical_mode_set(theta_step_deg=5, phi_step_deg=5)
    X = assemble_measurement_matrix(ff, default_grid, "theta", KIND_CM_DIRECTIVITY)

    ved = X.subset_rows([0])
    ved_zth = X.subset_rows([0, 3])

    assert np.array_equal(uncertainty_values(ved), uncertainty_values(ved_zth))
    assert kpi_of_measurement(ved) == kpi_of_measurement(ved_zth)


def test_kpi_resolution_invariance():
    ff = canonical_mode_set(theta_step_deg=1, phi_step_deg=1)
    coarse = assemble_measurement_matrix(ff, generate_cap_grid(*CAP, 250), "theta", KIND_CM_DIRECTIVITY)
    fine = assemble_measurement_matrix(ff, generate_cap_grid(*CAP, 1000), "theta", KIND_CM_DIRECTIVITY)

    assert abs(kpi_db(kpi_of_measurement(coarse)) - kpi_db(kpi_of_measurement(fine))) < 0.5


def test_write_and_read_uncertainty_matrix(tmp_path, small_grid):
    U = uncertainty_matrix(random_instances(small_grid, count=1)[0])

    written = write_uncertainty_matrix(U, tmp_path)
    loaded = read_uncertainty_matrix(tmp_path)

    assert set(written) == {"sorted_matrix", "column_order", "row_order"}
    assert np.array_equal(loaded.values, U.values)
    assert np.array_equal(loaded.column_reference_perm, U.column_reference_perm)
    assert np.array_equal(loaded.row_perms, U.row_perms)
    assert np.array_equal(loaded.self_terms, U.self_terms)


def test_detector_rejects_bad_threshold(small_grid):
    U = uncertainty_matrix(random_instances(small_grid, count=1)[0])
    with pytest.raises(ConfigError):
        detect_ambiguities(U, small_grid, math.radians(30), 0.0)
    with pytest.raises(ConfigError):
        detect_ambiguities(U, small_grid, math.radians(30), 0.5, reference="median")


def uca_uncertainty(spacing, grid):
    ff = synth_uca(UcaSpec(6, spacing))
    return uncertainty_matrix(assemble_measurement_matrix(ff, grid, "theta", KIND_PORT))


def test_grating_lobe_ambiguity(default_grid):
    U = uca_uncertainty(0.6, default_grid)

    report = detect_ambiguities(U, default_grid, math.radians(30), 0.5)

    assert report.references_affected == len(default_grid)
    assert all(report.for_reference(alpha) for alpha in range(len(default_grid)))
    ref = nearest_index(default_grid, Direction.from_degrees(80, 90))
    phis = [a.phi_deg for a in report.for_reference(ref)]
    assert any(abs(phi - 270.0) <= 10.0 for phi in phis)


def test_no_ambiguity_below_half_wavelength(default_grid):
    U = uca_uncertainty(0.3, default_grid)

    report = detect_ambiguities(U, default_grid, math.radians(30), 0.5)

    assert report.count == 0
    assert report.references_affected == 0
    assert report.to_dict(default_grid)["per_reference"] == []


def test_ambiguity_report_unchanged_by_scaling(default_grid):
    ff = synth_uca(UcaSpec(6, 0.6))
    X = assemble_measurement_matrix(ff, default_grid, "theta", KIND_PORT)

    base = detect_ambiguities(uncertainty_matrix(X), default_grid, math.radians(30), 0.5)
    louder = detect_ambiguities(uncertainty_matrix(X.scaled(math.sqrt(10))), default_grid, math.radians(30), 0.5)

    assert [a.test_index for a in base.for_reference(0)] == [a.test_index for a in louder.for_reference(0)]
    assert base.count == louder.count
