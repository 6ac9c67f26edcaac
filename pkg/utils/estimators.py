"""Single-source baselines: covariance models, the MUSIC pseudo-spectrum and the
deterministic Cramer-Rao bound for azimuth.

The noise power is referenced to the mean per-port received power over the
grid, mean_k(|x_k|^2 / P), at unit signal power.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy.linalg import eigh

from .errors import ConfigError, DegeneracyError
from .farfield import FarFieldSet, check_polarization, sample_many
from .geometry import Direction, DoAGrid, nearest_index, neighbor_indices
from .tables import write_table
from .uncertainty import MeasurementMatrix

logger = logging.getLogger(__name__)

MUSIC_EPSILON = 1e-12
EIGEN_GAP_RTOL = 1e-12
CRB_MIN_CURVATURE = 1e-15
DEFAULT_CRB_STEP_DEG = 0.1
MAP_HEADER = ("theta_deg", "phi_deg", "value")
SNR_REFERENCE = "mean per-port received power over the grid (unit signal power)"


@dataclass(frozen=True)
class SourceScenario:
    source_doa: Direction
    polarization: str
    snr_db: float
    snapshot_count: int = 1
    signal_power: float = 1.0

    def __post_init__(self) -> None:
        check_polarization(self.polarization)
        if isinstance(self.snapshot_count, bool) or int(self.snapshot_count) != self.snapshot_count:
            raise ConfigError(f"snapshot_count must be an integer, got {self.snapshot_count}")
        if self.snapshot_count < 1:
            raise ConfigError(f"snapshot_count must be >= 1, got {self.snapshot_count}")
        # +inf means noiseless
        if math.isnan(self.snr_db) or self.snr_db == -math.inf:
            raise ConfigError(f"snr_db must be a number or +inf, got {self.snr_db}")
        if not (math.isfinite(self.signal_power) and self.signal_power >= 0):
            raise ConfigError(f"signal_power must be finite and >= 0, got {self.signal_power}")

    def with_source(self, source: Direction) -> "SourceScenario":
        return SourceScenario(source, self.polarization, self.snr_db, self.snapshot_count, self.signal_power)


def noise_power_for(X: MeasurementMatrix, snr_db: float) -> float:
    column_powers = np.sum(np.abs(X.values) ** 2, axis=0)
    reference = float(np.mean(column_powers)) / X.entry_count
    if snr_db == math.inf:
        return 0.0
    return reference / 10.0 ** (snr_db / 10.0)


def _steering(X: MeasurementMatrix, scenario: SourceScenario) -> np.ndarray:
    k = nearest_index(X.grid, scenario.source_doa)
    a = X.values[:, k]
    if not np.any(a):
        raise DegeneracyError(f"Zero steering vector at the source DoA {scenario.source_doa!r}")
    return a


def expected_covariance(
    X: MeasurementMatrix, scenario: SourceScenario, noise_power: Optional[float] = None
) -> np.ndarray:
    """R = s a a^H + n I with a the grid column nearest to the source."""
    a = _steering(X, scenario)
    noise_power = noise_power_for(X, scenario.snr_db) if noise_power is None else float(noise_power)
    cov = scenario.signal_power * np.outer(a, np.conj(a)) + noise_power * np.eye(len(a))
    return 0.5 * (cov + cov.conj().T)


def sample_covariance(
    X: MeasurementMatrix, scenario: SourceScenario, seed: int = 0, noise_power: Optional[float] = None
) -> np.ndarray:
    """Covariance of ``snapshot_count`` seeded random snapshots y = a s + n."""
    a = _steering(X, scenario)
    noise_power = noise_power_for(X, scenario.snr_db) if noise_power is None else float(noise_power)
    rng = np.random.default_rng(seed)
    n_snap = int(scenario.snapshot_count)
    signal = math.sqrt(scenario.signal_power / 2.0) * (rng.standard_normal(n_snap) + 1j * rng.standard_normal(n_snap))
    noise = math.sqrt(noise_power / 2.0) * (
        rng.standard_normal((len(a), n_snap)) + 1j * rng.standard_normal((len(a), n_snap))
    )
    y = a[:, None] * signal[None, :] + noise
    cov = (y @ y.conj().T) / n_snap
    return 0.5 * (cov + cov.conj().T)


def music_spectrum(
    X: MeasurementMatrix,
    scenario: SourceScenario,
    model_order: int = 1,
    covariance: Optional[np.ndarray] = None,
) -> np.ndarray:
    """MUSIC pseudo-spectrum over the grid in dB, normalized to a 0 dB peak."""
    p = X.entry_count
    if model_order != 1:
        raise ConfigError("Only single-source scenarios (model_order=1) are supported")
    if p <= model_order:
        raise ConfigError(f"MUSIC needs more entries than sources; got P={p}")
    cov = expected_covariance(X, scenario) if covariance is None else np.asarray(covariance, dtype=complex)
    if cov.shape != (p, p):
        raise ConfigError(f"covariance must be {p}x{p}, got {cov.shape}")

    eigvals, eigvecs = eigh(cov)
    split = p - model_order
    gap = eigvals[split] - eigvals[split - 1]
    if gap < EIGEN_GAP_RTOL * max(abs(eigvals[-1]), np.finfo(float).tiny):
        raise DegeneracyError(
            f"Signal and noise subspaces are not separable (eigenvalue gap {gap:.3e} vs largest {eigvals[-1]:.3e})"
        )
    noise_space = eigvecs[:, :split]

    norms = np.linalg.norm(X.values, axis=0)
    if np.any(norms == 0.0):
        k = int(np.flatnonzero(norms == 0.0)[0])
        raise DegeneracyError(f"Zero steering vector at grid DoA {k}")
    steering = X.values / norms
    projection = np.sum(np.abs(noise_space.conj().T @ steering) ** 2, axis=0)
    spectrum = 1.0 / (projection + MUSIC_EPSILON)
    return 10.0 * np.log10(spectrum / spectrum.max())


def find_spectrum_peaks(values: np.ndarray, grid: DoAGrid, neighbor_count: int = 6) -> list[tuple[int, float]]:
    """Grid local maxima as ``(index, value)``, highest first."""
    values = np.asarray(values, dtype=float)
    neighbors = neighbor_indices(grid, neighbor_count)
    if neighbors.shape[1]:
        is_peak = values >= values[neighbors].max(axis=1)
    else:
        is_peak = np.ones(len(values), dtype=bool)
    peaks = [(int(k), float(values[k])) for k in np.flatnonzero(is_peak)]
    return sorted(peaks, key=lambda item: (-item[1], item[0]))


def _crb_from_fields(
    a: np.ndarray, d: np.ndarray, noise_power: float, scenario: SourceScenario
) -> np.ndarray:
    power = np.sum(np.abs(a) ** 2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        curvature = np.sum(np.abs(d) ** 2, axis=0) - np.abs(np.sum(np.conj(a) * d, axis=0)) ** 2 / power
    curvature = np.where(power > 0.0, curvature, 0.0)
    with np.errstate(divide="ignore"):
        crb = noise_power / (2.0 * scenario.snapshot_count * scenario.signal_power * curvature)
    return np.where(curvature < CRB_MIN_CURVATURE, np.nan, crb)


def _phi_derivative(ff: FarFieldSet, thetas, phis, pol: str, step_deg: float) -> tuple[np.ndarray, np.ndarray]:
    if not step_deg > 0:
        raise ConfigError(f"finite-difference step must be > 0, got {step_deg}")
    h = math.radians(step_deg)
    a = sample_many(ff, thetas, phis, pol)
    ahead = sample_many(ff, thetas, np.asarray(phis) + h, pol)
    behind = sample_many(ff, thetas, np.asarray(phis) - h, pol)
    return a, (ahead - behind) / (2.0 * step_deg)


def crb_phi(
    ff: FarFieldSet,
    X: MeasurementMatrix,
    scenario: SourceScenario,
    step_deg: float = DEFAULT_CRB_STEP_DEG,
    noise_power: Optional[float] = None,
) -> float:
    """Deterministic single-source CRB of the azimuth estimate, deg^2.

    The steering field and its phi derivative come from the interpolated set;
    ``X`` fixes the noise reference.
    """
    source = scenario.source_doa
    if source.pole is not None:
        raise DegeneracyError(f"Azimuth is undefined at the pole; source {source!r}")
    noise_power = noise_power_for(X, scenario.snr_db) if noise_power is None else float(noise_power)
    if scenario.signal_power == 0.0:
        raise DegeneracyError("CRB is unbounded for zero signal power")
    a, d = _phi_derivative(ff, [source.theta], [source.phi], scenario.polarization, step_deg)
    crb = float(_crb_from_fields(a, d, noise_power, scenario)[0])
    if math.isnan(crb):
        raise DegeneracyError(f"Azimuth is unidentifiable at {source!r} (d^H P d below {CRB_MIN_CURVATURE:g})")
    return crb


def crb_map(
    ff: FarFieldSet,
    X: MeasurementMatrix,
    scenario: SourceScenario,
    step_deg: float = DEFAULT_CRB_STEP_DEG,
    noise_power: Optional[float] = None,
) -> np.ndarray:
    """CRB for a source at every grid DoA; unidentifiable DoAs are NaN."""
    grid = X.grid
    if scenario.signal_power == 0.0:
        raise DegeneracyError("CRB is unbounded for zero signal power")
    noise_power = noise_power_for(X, scenario.snr_db) if noise_power is None else float(noise_power)
    a, d = _phi_derivative(ff, grid.thetas, grid.phis, scenario.polarization, step_deg)
    values = _crb_from_fields(a, d, noise_power, scenario)
    poles = np.isin(grid.thetas, (0.0, math.pi))
    values[poles] = np.nan
    missing = int(np.count_nonzero(np.isnan(values)))
    if missing:
        logger.warning("CRB undefined at %d of %d grid DoA(s); reported as NaN", missing, len(grid))
    return values


def to_display_units(values):
    """deg^2 -> the deg/100 display scale."""
    return np.asarray(values, dtype=float) / 100.0


def write_map_csv(grid: DoAGrid, values: np.ndarray, path: Union[str, Path]) -> str:
    return write_table(path, MAP_HEADER, [np.degrees(grid.thetas), np.degrees(grid.phis), values])
