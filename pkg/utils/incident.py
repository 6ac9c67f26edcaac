"""Estimated incident fields from CM far fields and the correlation-equivalence checks.

The expansion coefficient of mode n for a plane wave from ``ref`` is taken as
F_n(ref); the common physical constant cancels in every correlation and is
fixed to 1.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Union

import numpy as np
from scipy.linalg import eigh

from .errors import DataValidationError, DegeneracyError
from .farfield import FarFieldSet, check_polarization, sample_many
from .geometry import Direction, DoAGrid
from .tables import write_table

logger = logging.getLogger(__name__)

PATTERN_HEADER = ("theta_deg", "phi_deg", "re_ftheta", "im_ftheta", "re_fphi", "im_fphi", "magnitude")
ORTHONORMAL_RTOL = 1e-12


def incident_coefficients(ff: FarFieldSet, ref: Direction, pol: str) -> np.ndarray:
    """c_n = F_n(ref) for the ``pol`` component."""
    coefficients = sample_many(ff, [ref.theta], [ref.phi], check_polarization(pol))[:, 0]
    if not np.any(coefficients):
        logger.warning("Reference DoA %r is a null of every entry; coefficients are all zero", ref)
    return coefficients


@dataclass(frozen=True, eq=False)
class IncidentFieldEstimate:
    reference_doa: Direction
    coefficients: np.ndarray
    theta_component: np.ndarray
    phi_component: np.ndarray
    grid: DoAGrid

    @property
    def null_reference(self) -> bool:
        return not np.any(self.coefficients)

    @property
    def magnitude(self) -> np.ndarray:
        return np.sqrt(np.abs(self.theta_component) ** 2 + np.abs(self.phi_component) ** 2)

    def component(self, pol: str) -> np.ndarray:
        return self.theta_component if check_polarization(pol) == "theta" else self.phi_component


def _superpose(ff: FarFieldSet, coefficients: np.ndarray, grid: DoAGrid) -> tuple[np.ndarray, np.ndarray]:
    f_theta = sample_many(ff, grid.thetas, grid.phis, "theta")
    f_phi = sample_many(ff, grid.thetas, grid.phis, "phi")
    return coefficients @ np.conj(f_theta), coefficients @ np.conj(f_phi)


def estimate_incident_field(ff: FarFieldSet, ref: Direction, pol: str, output_grid: DoAGrid) -> IncidentFieldEstimate:
    """sum_n c_n conj(F_n) on ``output_grid``, both vector components."""
    coefficients = incident_coefficients(ff, ref, pol)
    theta_part, phi_part = _superpose(ff, coefficients, output_grid)
    return IncidentFieldEstimate(ref, coefficients, theta_part, phi_part, output_grid)


def coefficient_correlation(c_a: np.ndarray, c_b: np.ndarray) -> complex:
    c_a = np.asarray(c_a, dtype=complex)
    c_b = np.asarray(c_b, dtype=complex)
    norm_a = np.linalg.norm(c_a)
    norm_b = np.linalg.norm(c_b)
    if norm_a == 0.0 or norm_b == 0.0:
        raise DegeneracyError("Zero coefficient vector: the reference DoA is a null of every mode")
    return complex(np.vdot(c_a, c_b) / (norm_a * norm_b))


def _inner(grid: DoAGrid, a_theta, a_phi, b_theta, b_phi) -> complex:
    w = grid.cell_weights
    return complex(np.sum(w * (np.conj(a_theta) * b_theta + np.conj(a_phi) * b_phi)))


def correlation_via_incident_fields(
    ff: FarFieldSet, ref_a: Direction, ref_b: Direction, pol: str, quadrature_grid: DoAGrid
) -> complex:
    """Normalized surface inner product of the two estimated incident fields."""
    est_a = estimate_incident_field(ff, ref_a, pol, quadrature_grid)
    est_b = estimate_incident_field(ff, ref_b, pol, quadrature_grid)
    parts_a = (est_a.theta_component, est_a.phi_component)
    parts_b = (est_b.theta_component, est_b.phi_component)
    norm_a = _inner(quadrature_grid, *parts_a, *parts_a).real
    norm_b = _inner(quadrature_grid, *parts_b, *parts_b).real
    if norm_a <= 0.0 or norm_b <= 0.0:
        raise DegeneracyError(f"Zero-norm incident field for reference {ref_a if norm_a <= 0.0 else ref_b!r}")
    return _inner(quadrature_grid, *parts_a, *parts_b) / math.sqrt(norm_a * norm_b)


def mode_gram(ff: FarFieldSet, quadrature_grid: DoAGrid) -> np.ndarray:
    """M[n, m] = <F_n, F_m> under the grid's quadrature weights."""
    f_theta = sample_many(ff, quadrature_grid.thetas, quadrature_grid.phis, "theta")
    f_phi = sample_many(ff, quadrature_grid.thetas, quadrature_grid.phis, "phi")
    w = quadrature_grid.cell_weights
    return np.conj(f_theta) @ (w * f_theta).T + np.conj(f_phi) @ (w * f_phi).T


def orthonormalize(ff: FarFieldSet, quadrature_grid: DoAGrid) -> FarFieldSet:
    """Symmetric (Loewdin) orthonormalization of all entries under the quadrature inner product.

    Names and eigenvalues are carried over entry by entry.
    """
    gram = mode_gram(ff, quadrature_grid)
    gram = 0.5 * (gram + gram.conj().T)
    values, vectors = eigh(gram)
    if values[0] <= ORTHONORMAL_RTOL * values[-1]:
        raise DegeneracyError("Entries are linearly dependent over the quadrature grid; cannot orthonormalize")
    transform = (vectors / np.sqrt(values)) @ vectors.conj().T

    e_theta = np.stack([e.e_theta for e in ff.entries])
    e_phi = np.stack([e.e_phi for e in ff.entries])
    new_theta = np.tensordot(transform.T, e_theta, axes=1)
    new_phi = np.tensordot(transform.T, e_phi, axes=1)
    entries = tuple(
        replace(entry, e_theta=new_theta[k], e_phi=new_phi[k]) for k, entry in enumerate(ff.entries)
    )
    logger.debug("Orthonormalized %d entries; Gram eigenvalues %.3g..%.3g", len(entries), values[0], values[-1])
    return replace(ff, entries=entries)


@dataclass(frozen=True)
class EquivalenceCheck:
    coefficient: complex
    incident: complex

    @property
    def residual(self) -> float:
        return abs(self.incident - self.coefficient)


def check_correlation_equivalence(
    ff: FarFieldSet, ref_a: Direction, ref_b: Direction, pol: str, quadrature_grid: DoAGrid
) -> EquivalenceCheck:
    """Both correlation forms for one DoA pair; the residual is reported, not asserted."""
    coefficient = coefficient_correlation(incident_coefficients(ff, ref_a, pol), incident_coefficients(ff, ref_b, pol))
    incident = correlation_via_incident_fields(ff, ref_a, ref_b, pol, quadrature_grid)
    check = EquivalenceCheck(coefficient, incident)
    logger.info("Correlation equivalence %r vs %r: residual %.3e", ref_a, ref_b, check.residual)
    return check


def write_pattern_csv(estimate: IncidentFieldEstimate, path: Union[str, Path]) -> str:
    grid = estimate.grid
    if len(estimate.theta_component) != len(grid):
        raise DataValidationError("incident-field pattern and grid differ in length")
    return write_table(
        path,
        PATTERN_HEADER,
        [
            np.degrees(grid.thetas),
            np.degrees(grid.phis),
            estimate.theta_component.real,
            estimate.theta_component.imag,
            estimate.phi_component.real,
            estimate.phi_component.imag,
            estimate.magnitude,
        ],
    )
