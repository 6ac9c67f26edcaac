"""Analytic far-field generators: monopole UCAs and canonical mode-like patterns.

Lengths are in free-space wavelengths. The array centre is the global phase
origin; a wave incident from e_r picks up exp(+j k0 e_r . p) at element p.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from .errors import ConfigError
from .farfield import FarFieldSet, PatternEntry

logger = logging.getLogger(__name__)

DEFAULT_FREQUENCY_HZ = 1.06e9
CANONICAL_MODES = ("VED", "MDX", "MDY", "ZTH")


def monopole_element_pattern(length_over_lambda: float, theta):
    """Thin monopole over ground: [cos(k0 L cos t) - cos(k0 L)] / sin t, 0 at t = 0."""
    k0l = 2.0 * math.pi * length_over_lambda
    theta_arr = np.asarray(theta, dtype=float)
    st = np.sin(theta_arr)
    with np.errstate(divide="ignore", invalid="ignore"):
        value = (np.cos(k0l * np.cos(theta_arr)) - math.cos(k0l)) / st
    value = np.where(theta_arr == 0.0, 0.0, value)
    return float(value) if value.ndim == 0 else value


def _axis(stop_deg: float, step_deg: float, label: str, periodic: bool) -> np.ndarray:
    span = stop_deg / step_deg
    count = int(round(span))
    if step_deg <= 0 or abs(span - count) > 1e-9 * max(1.0, span):
        raise ConfigError(f"{label} step {step_deg} deg must divide {stop_deg} deg")
    if periodic:
        return np.radians(step_deg * np.arange(count))
    degrees = step_deg * np.arange(count + 1)
    degrees[-1] = stop_deg
    return np.radians(degrees)


@dataclass(frozen=True)
class UcaSpec:
    element_count: int
    spacing_over_lambda: float
    monopole_length_over_lambda: float = 0.25
    theta_step_deg: float = 1.0
    phi_step_deg: float = 1.0
    frequency_hz: float = DEFAULT_FREQUENCY_HZ

    def __post_init__(self) -> None:
        if int(self.element_count) != self.element_count or self.element_count < 2:
            raise ConfigError(f"element_count must be an integer >= 2, got {self.element_count}")
        if not self.spacing_over_lambda > 0:
            raise ConfigError(f"spacing_over_lambda must be > 0, got {self.spacing_over_lambda}")
        if not self.monopole_length_over_lambda > 0:
            raise ConfigError(f"monopole_length_over_lambda must be > 0, got {self.monopole_length_over_lambda}")
        if not self.frequency_hz > 0:
            raise ConfigError(f"frequency_hz must be > 0, got {self.frequency_hz}")

    @property
    def circumradius_over_lambda(self) -> float:
        return self.spacing_over_lambda / (2.0 * math.sin(math.pi / self.element_count))

    def element_azimuths(self) -> np.ndarray:
        return 2.0 * math.pi * np.arange(self.element_count) / self.element_count


def synth_uca(spec: UcaSpec) -> FarFieldSet:
    """Isolated-element (no coupling) monopole UCA over an infinite ground plane."""
    thetas = _axis(90.0, spec.theta_step_deg, "theta", periodic=False)
    phis = _axis(360.0, spec.phi_step_deg, "phi", periodic=True)
    pattern = monopole_element_pattern(spec.monopole_length_over_lambda, thetas)[:, None]
    kr = 2.0 * math.pi * spec.circumradius_over_lambda
    sin_t = np.sin(thetas)[:, None]

    entries = []
    for p, phi_p in enumerate(spec.element_azimuths()):
        phase = kr * sin_t * np.cos(phis[None, :] - phi_p)
        e_theta = pattern * np.exp(1j * phase)
        entries.append(PatternEntry(f"port{p + 1}", e_theta, np.zeros_like(e_theta)))
    logger.info(
        "Synthesized %d-element UCA, d=%.4g lambda, R=%.4g lambda",
        spec.element_count,
        spec.spacing_over_lambda,
        spec.circumradius_over_lambda,
    )
    return FarFieldSet(tuple(entries), thetas, phis, "directivity", spec.frequency_hz)


def _resolve_eigenvalues(
    eigenvalues: Optional[Union[Mapping[str, float], Sequence[float]]], names: Sequence[str]
) -> list[float]:
    if eigenvalues is None:
        return [0.0] * len(names)
    if isinstance(eigenvalues, Mapping):
        unknown = sorted(set(eigenvalues) - set(names))
        if unknown:
            raise ConfigError(f"Unknown mode names in eigenvalues: {', '.join(unknown)}")
        return [float(eigenvalues.get(n, 0.0)) for n in names]
    values = [float(v) for v in eigenvalues]
    if len(values) != len(names):
        raise ConfigError(f"Expected {len(names)} eigenvalues, got {len(values)}")
    return values


def canonical_mode_set(
    theta_step_deg: float = 1.0,
    phi_step_deg: float = 1.0,
    eigenvalues: Optional[Union[Mapping[str, float], Sequence[float]]] = None,
    theta_stop_deg: float = 90.0,
    frequency_hz: float = DEFAULT_FREQUENCY_HZ,
) -> FarFieldSet:
    """Unit-peak mode-like patterns: VED, MDX, MDY and the zero-theta-component ZTH.

    theta_stop_deg=90 gives the ground-plane hemisphere, 180 the full sphere.
    Eigenvalues default to 0 (resonant, modal significance 1).
    """
    if theta_stop_deg not in (90.0, 180.0):
        raise ConfigError(f"theta_stop_deg must be 90 or 180, got {theta_stop_deg}")
    thetas = _axis(theta_stop_deg, theta_step_deg, "theta", periodic=False)
    phis = _axis(360.0, phi_step_deg, "phi", periodic=True)
    t = thetas[:, None]
    p = phis[None, :]
    ones = np.ones((len(thetas), len(phis)))
    zeros = np.zeros_like(ones)

    components = {
        "VED": (np.sin(t) * ones, zeros),
        "MDX": (np.sin(p) * ones, np.cos(t) * np.cos(p)),
        "MDY": (np.cos(p) * ones, -np.cos(t) * np.sin(p)),
        "ZTH": (zeros, np.sin(t) * ones),
    }
    lambdas = _resolve_eigenvalues(eigenvalues, CANONICAL_MODES)
    entries = tuple(
        PatternEntry(name, components[name][0], components[name][1], lam)
        for name, lam in zip(CANONICAL_MODES, lambdas)
    )
    return FarFieldSet(entries, thetas, phis, "cm-directivity", frequency_hz)
