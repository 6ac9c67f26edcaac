import math

import numpy as np
import pytest

from utils.errors import ConfigError
from utils.synth import CANONICAL_MODES, UcaSpec, canonical_mode_set, monopole_element_pattern, synth_uca


def test_monopole_pattern_values():
    assert monopole_element_pattern(0.25, math.pi / 2) == pytest.approx(1.0)
    assert monopole_element_pattern(0.25, 0.0) == 0.0


def test_uca_circumradius():
    spec = UcaSpec(8, 0.3)
    assert spec.circumradius_over_lambda == pytest.approx(0.3 / (2 * math.sin(math.pi / 8)))


def test_uca_spec_rejects_single_element():
    with pytest.raises(ConfigError):
        UcaSpec(1, 0.3)


def test_synth_uca_ports():
    ff = synth_uca(UcaSpec(8, 0.3, theta_step_deg=5, phi_step_deg=5))
    assert ff.names == [f"port{i}" for i in range(1, 9)]
    assert ff.normalization == "directivity"
    assert np.degrees(ff.theta_samples[-1]) == pytest.approx(90.0)
    for entry in ff.entries:
        assert not np.any(entry.e_phi)


def test_synth_uca_phase_at_horizon():
    spec = UcaSpec(8, 0.3, theta_step_deg=5, phi_step_deg=5)
    ff = synth_uca(spec)
    value = ff.entries[0].e_theta[-1, 0]
    kr = 2 * math.pi * spec.circumradius_over_lambda
    assert np.angle(value) == pytest.approx(math.remainder(kr, 2 * math.pi), abs=1e-12)


def test_synth_uca_ports_are_rotations():
    ff = synth_uca(UcaSpec(8, 0.6))
    rolled = np.roll(ff.entries[0].e_theta, 45, axis=1)
    assert np.allclose(rolled, ff.entries[1].e_theta, atol=1e-12)


def test_canonical_mode_components():
    ff = canonical_mode_set(theta_step_deg=10, phi_step_deg=10)
    assert ff.names == list(CANONICAL_MODES)
    assert ff.eigenvalues == [0.0] * 4
    assert not np.any(ff.entries[0].e_phi)
    assert not np.any(ff.entries[3].e_theta)


def test_canonical_mode_eigenvalues_by_name():
    ff = canonical_mode_set(theta_step_deg=10, phi_step_deg=10, eigenvalues={"MDX": 1.5})
    assert ff.eigenvalues == [0.0, 1.5, 0.0, 0.0]


def test_canonical_mode_rejects_wrong_eigenvalue_count():
    with pytest.raises(ConfigError):
        canonical_mode_set(eigenvalues=[1.0, 2.0])


def test_canonical_mode_rejects_unknown_stop():
    with pytest.raises(ConfigError):
        canonical_mode_set(theta_stop_deg=120.0)
