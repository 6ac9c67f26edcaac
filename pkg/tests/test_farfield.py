import json
import math

import numpy as np
import pytest

from utils.errors import DataValidationError
from utils.farfield import (
    FarFieldSet,
    PatternEntry,
    load_farfield_set,
    modal_significance,
    most_significant,
    radiated_power,
    rotate_about_z,
    sample,
    sample_many,
    save_farfield_set,
    scaled,
)
from utils.geometry import Direction
from utils.synth import canonical_mode_set


@pytest.fixture
def modes():
    return canonical_mode_set(theta_step_deg=10, phi_step_deg=10, eigenvalues=[0.0, 5.0, -0.5, 2.0])


def test_save_and_load_keep_entries(tmp_path, modes):
    modes = scaled(modes, np.exp(0.3j) / 3)
    manifest = save_farfield_set(modes, tmp_path / "set")

    loaded = load_farfield_set(manifest)

    assert loaded.names == modes.names
    assert loaded.eigenvalues == modes.eigenvalues
    assert loaded.normalization == "cm-directivity"
    for a, b in zip(loaded.entries, modes.entries):
        assert np.array_equal(a.e_theta, b.e_theta)
        assert np.array_equal(a.e_phi, b.e_phi)


def test_load_missing_manifest(tmp_path):
    with pytest.raises(DataValidationError, match="not found"):
        load_farfield_set(tmp_path / "nothing.json")


def test_load_missing_entry_file(tmp_path, modes):
    manifest = save_farfield_set(modes, tmp_path)
    (tmp_path / "00_VED.csv").unlink()

    with pytest.raises(DataValidationError, match="file not found"):
        load_farfield_set(manifest)


def test_load_rejects_dimension_mismatch(tmp_path, modes):
    manifest = save_farfield_set(modes, tmp_path)
    data = json.loads((tmp_path / "manifest.json").read_text())
    data["phi_deg"] = {"start": 0.0, "step": 20.0, "count": 18}
    (tmp_path / "manifest.json").write_text(json.dumps(data))

    with pytest.raises(DataValidationError, match="dimension mismatch"):
        load_farfield_set(manifest)


def test_duplicate_entry_names_rejected(modes):
    first = modes.entries[0]
    with pytest.raises(DataValidationError, match="Duplicate"):
        FarFieldSet((first, first), modes.theta_samples, modes.phi_samples, "directivity", 1e9)


def test_cm_directivity_needs_eigenvalues(modes):
    entry = PatternEntry("A", modes.entries[0].e_theta, modes.entries[0].e_phi)
    with pytest.raises(DataValidationError, match="eigenvalue"):
        FarFieldSet((entry,), modes.theta_samples, modes.phi_samples, "cm-directivity", 1e9)


def test_sample_at_node(modes):
    value = sample(modes, 0, Direction.from_degrees(60, 30), "theta")
    assert value == pytest.approx(math.sin(math.radians(60)), abs=1e-12)


def test_sample_wraps_across_phi_seam(modes):
    value = sample(modes, 1, Direction.from_degrees(40, 355), "theta")
    expected = 0.5 * (math.sin(math.radians(350)) + math.sin(0.0))
    assert value == pytest.approx(expected, abs=1e-12)


def test_sample_outside_theta_range(modes):
    with pytest.raises(DataValidationError, match="outside the sampled range"):
        sample_many(modes, [math.radians(120)], [0.0], "theta")


def test_rotate_about_z(modes):
    rotated = rotate_about_z(modes, 9)
    p = modes.phi_samples[None, :]
    assert np.allclose(rotated.entries[1].e_theta, -np.cos(p) * np.ones((len(modes.theta_samples), 1)), atol=1e-12)


def test_radiated_power_full_sphere_dipole():
    ff = canonical_mode_set(theta_step_deg=1, phi_step_deg=1, theta_stop_deg=180.0)
    assert radiated_power(ff, 0) == pytest.approx(8 * math.pi / 3, rel=1e-6)


def test_modal_significance():
    assert modal_significance(0.0) == 1.0
    assert modal_significance(1.0) == pytest.approx(1 / math.sqrt(2))


def test_most_significant_keeps_original_order(modes):
    kept = most_significant(modes, 2)
    assert kept.names == ["VED", "MDY"]


@pytest.fixture(scope="module")
def fine_hemisphere():
    return canonical_mode_set(theta_step_deg=0.1, phi_step_deg=10)


def single_entry(like, e_theta):
    entry = PatternEntry("ONE", e_theta, np.zeros_like(e_theta))
    return FarFieldSet((entry,), like.theta_samples, like.phi_samples, "directivity", 1e9)


def test_radiated_power_of_constant_hemisphere(fine_hemisphere):
    ff = single_entry(fine_hemisphere, np.ones_like(fine_hemisphere.entries[0].e_theta))
    assert radiated_power(ff, 0) == pytest.approx(2 * math.pi, rel=1e-6)


def test_radiated_power_hemisphere_dipole(fine_hemisphere):
    assert radiated_power(fine_hemisphere, 0) == pytest.approx(4 * math.pi / 3, rel=1e-6)


def test_radiated_power_of_zero_entry(fine_hemisphere):
    ff = single_entry(fine_hemisphere, np.zeros_like(fine_hemisphere.entries[0].e_theta))
    assert radiated_power(ff, 0) == 0.0


def test_radiated_power_unchanged_by_rotation(modes):
    for steps in (1, 9, 20):
        rotated = rotate_about_z(modes, steps)
        for index in range(len(modes)):
            assert radiated_power(rotated, index) == pytest.approx(radiated_power(modes, index), rel=1e-14)


def test_rotation_by_full_turn_and_back(modes):
    turned = rotate_about_z(rotate_about_z(modes, 9), -9)
    full = rotate_about_z(modes, len(modes.phi_samples))
    for original, back, around in zip(modes.entries, turned.entries, full.entries):
        assert np.array_equal(back.e_theta, original.e_theta)
        assert np.array_equal(around.e_phi, original.e_phi)


def test_sample_at_phi_midpoint_is_mean(modes):
    value = sample(modes, 1, Direction.from_degrees(40, 25), "theta")
    expected = 0.5 * (math.sin(math.radians(20)) + math.sin(math.radians(30)))
    assert value == pytest.approx(expected, abs=1e-14)


def test_sample_just_below_seam_on_one_degree_grid():
    ff = canonical_mode_set(theta_step_deg=1, phi_step_deg=1)
    value = sample(ff, 2, Direction.from_degrees(50, 359.5), "theta")
    expected = 0.5 * (math.cos(math.radians(359)) + math.cos(0.0))
    assert value == pytest.approx(expected, abs=1e-12)


def test_bilinear_error_is_bounded():
    ff = canonical_mode_set(theta_step_deg=1, phi_step_deg=1)
    rng = np.random.default_rng(11)
    thetas = rng.uniform(0.0, math.pi / 2, 2000)
    phis = rng.uniform(0.0, 2 * math.pi, 2000)
    h = math.radians(1)

    f_theta = sample_many(ff, thetas, phis, "theta")
    f_phi = sample_many(ff, thetas, phis, "phi")

    # each component is a product of sines and cosines, so |f''| <= 1 per axis
    assert np.max(np.abs(f_theta[0] - np.sin(thetas))) <= h**2 / 8
    assert np.max(np.abs(f_theta[1] - np.sin(phis))) <= h**2 / 8
    assert np.max(np.abs(f_phi[1] - np.cos(thetas) * np.cos(phis))) <= h**2 / 4
