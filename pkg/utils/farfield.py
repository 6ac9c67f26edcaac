"""Sets of complex far-field patterns (antenna ports or Characteristic Modes).

A set stores, per entry, the theta- and phi-components on a regular
theta x phi grid. phi is periodic: the grid covers [phi0, phi0 + 2*pi) and
interpolation wraps across the seam.
"""

from __future__ import annotations

import json
import logging
import math
import re
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
from scipy.integrate import trapezoid
from scipy.interpolate import RegularGridInterpolator

from .command import ensure_parent_dir
from .errors import ConfigError, DataValidationError
from .geometry import ANGLE_TOL, TWO_PI, Direction
from .tables import read_table, write_table

logger = logging.getLogger(__name__)

NORMALIZATIONS = ("directivity", "gain", "realized-gain", "cm-directivity")
POLARIZATIONS = ("theta", "phi")
FARFIELD_HEADER = ("theta_deg", "phi_deg", "re_etheta", "im_etheta", "re_ephi", "im_ephi")
SPACING_RTOL = 1e-9
NODE_TOL_DEG = 1e-9


def check_polarization(pol: str) -> str:
    if pol not in POLARIZATIONS:
        raise ConfigError(f"polarization must be one of {', '.join(POLARIZATIONS)}; got {pol!r}")
    return pol


@dataclass(frozen=True, eq=False)
class PatternEntry:
    """One port or mode: complex F_theta / F_phi samples and an optional CM eigenvalue."""

    name: str
    e_theta: np.ndarray
    e_phi: np.ndarray
    eigenvalue: Optional[float] = None

    def __post_init__(self) -> None:
        e_theta = np.array(self.e_theta, dtype=complex)
        e_phi = np.array(self.e_phi, dtype=complex)
        if e_theta.ndim != 2 or e_theta.shape != e_phi.shape:
            raise DataValidationError(
                f"Entry {self.name!r}: e_theta {e_theta.shape} and e_phi {e_phi.shape} must be equal 2-D arrays"
            )
        if not (np.all(np.isfinite(e_theta)) and np.all(np.isfinite(e_phi))):
            raise DataValidationError(f"Entry {self.name!r}: far-field values must be finite")
        eigenvalue = self.eigenvalue
        if eigenvalue is not None:
            if isinstance(eigenvalue, complex) or not math.isfinite(float(eigenvalue)):
                raise DataValidationError(f"Entry {self.name!r}: eigenvalue must be a finite real number")
            eigenvalue = float(eigenvalue)
        e_theta.setflags(write=False)
        e_phi.setflags(write=False)
        object.__setattr__(self, "e_theta", e_theta)
        object.__setattr__(self, "e_phi", e_phi)
        object.__setattr__(self, "eigenvalue", eigenvalue)

    def component(self, pol: str) -> np.ndarray:
        return self.e_theta if check_polarization(pol) == "theta" else self.e_phi


def _check_uniform(samples: np.ndarray, label: str) -> None:
    if len(samples) < 2:
        raise DataValidationError(f"{label} needs at least two samples")
    steps = np.diff(samples)
    if np.any(steps <= 0):
        raise DataValidationError(f"{label} samples must be strictly increasing")
    if np.max(np.abs(steps - steps.mean())) > SPACING_RTOL * steps.mean():
        raise DataValidationError(f"{label} samples must be uniformly spaced")


@dataclass(frozen=True, eq=False)
class FarFieldSet:
    entries: tuple[PatternEntry, ...]
    theta_samples: np.ndarray
    phi_samples: np.ndarray
    normalization: str
    frequency_hz: float

    def __post_init__(self) -> None:
        entries = tuple(self.entries)
        thetas = np.array(self.theta_samples, dtype=float).reshape(-1)
        phis = np.array(self.phi_samples, dtype=float).reshape(-1)
        if not entries:
            raise DataValidationError("A far-field set needs at least one entry")
        _check_uniform(thetas, "theta")
        _check_uniform(phis, "phi")
        if thetas[0] < -ANGLE_TOL or thetas[-1] > math.pi + ANGLE_TOL:
            raise DataValidationError("theta samples must lie within [0, 180] deg")
        if phis[0] < -ANGLE_TOL or phis[-1] >= TWO_PI:
            raise DataValidationError("phi samples must lie within [0, 360) deg")
        phi_step = (phis[-1] - phis[0]) / (len(phis) - 1)
        if abs(phi_step * len(phis) - TWO_PI) > SPACING_RTOL * TWO_PI:
            raise DataValidationError("phi samples must cover one full revolution (periodic wrap)")
        if self.normalization not in NORMALIZATIONS:
            raise DataValidationError(
                f"normalization must be one of {', '.join(NORMALIZATIONS)}; got {self.normalization!r}"
            )
        if not (math.isfinite(float(self.frequency_hz)) and float(self.frequency_hz) > 0):
            raise DataValidationError(f"frequency must be a positive number, got {self.frequency_hz}")

        shape = (len(thetas), len(phis))
        names = set()
        for entry in entries:
            if entry.e_theta.shape != shape:
                raise DataValidationError(
                    f"Entry {entry.name!r}: arrays are {entry.e_theta.shape[0]}x{entry.e_theta.shape[1]}, "
                    f"expected {shape[0]}x{shape[1]}"
                )
            if entry.name in names:
                raise DataValidationError(f"Duplicate entry name {entry.name!r}")
            names.add(entry.name)
            if self.normalization == "cm-directivity" and entry.eigenvalue is None:
                raise DataValidationError(f"Entry {entry.name!r}: cm-directivity sets need an eigenvalue per entry")

        thetas.setflags(write=False)
        phis.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "theta_samples", thetas)
        object.__setattr__(self, "phi_samples", phis)
        object.__setattr__(self, "frequency_hz", float(self.frequency_hz))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    @property
    def eigenvalues(self) -> list[Optional[float]]:
        return [e.eigenvalue for e in self.entries]

    @property
    def has_eigenvalues(self) -> bool:
        return all(e.eigenvalue is not None for e in self.entries)

    @property
    def theta_step(self) -> float:
        return (self.theta_samples[-1] - self.theta_samples[0]) / (len(self.theta_samples) - 1)

    @property
    def phi_step(self) -> float:
        return TWO_PI / len(self.phi_samples)

    def index_of(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError as e:
            raise ConfigError(f"No entry named {name!r}; available: {', '.join(self.names)}") from e

    @cached_property
    def _interpolator(self) -> RegularGridInterpolator:
        # trailing axis: [Re Ft, Im Ft, Re Fp, Im Fp] per entry
        stacked = np.stack(
            [part for e in self.entries for part in (e.e_theta.real, e.e_theta.imag, e.e_phi.real, e.e_phi.imag)],
            axis=-1,
        )
        wrapped = np.concatenate([stacked, stacked[:, :1, :]], axis=1)
        phi_ext = np.append(self.phi_samples, self.phi_samples[0] + TWO_PI)
        return RegularGridInterpolator((self.theta_samples, phi_ext), wrapped, method="linear")


def sample_many(
    ff: FarFieldSet,
    thetas: Sequence[float],
    phis: Sequence[float],
    pol: str,
    entry_indices: Optional[Sequence[int]] = None,
) -> np.ndarray:
    """Bilinear samples of one component at many directions, shape (entries, points)."""
    check_polarization(pol)
    thetas = np.asarray(thetas, dtype=float).reshape(-1)
    phis = np.asarray(phis, dtype=float).reshape(-1)
    lo, hi = ff.theta_samples[0], ff.theta_samples[-1]
    outside = (thetas < lo - ANGLE_TOL) | (thetas > hi + ANGLE_TOL)
    if np.any(outside):
        bad = float(thetas[np.argmax(outside)])
        raise DataValidationError(
            f"theta={math.degrees(bad):.6g} deg lies outside the sampled range "
            f"[{math.degrees(lo):.6g}, {math.degrees(hi):.6g}] deg"
        )
    thetas = np.clip(thetas, lo, hi)
    phi0 = ff.phi_samples[0]
    local = np.mod(phis - phi0, TWO_PI)
    local = np.where(local >= TWO_PI, 0.0, local)
    points = np.column_stack((thetas, phi0 + local))

    raw = ff._interpolator(points)  # (points, 4 * entries)
    offset = 0 if pol == "theta" else 2
    selected = range(len(ff.entries)) if entry_indices is None else entry_indices
    rows = [raw[:, 4 * p + offset] + 1j * raw[:, 4 * p + offset + 1] for p in selected]
    return np.array(rows, dtype=complex).reshape(len(rows), len(thetas))


def sample(ff: FarFieldSet, entry_index: int, d: Direction, pol: str) -> complex:
    """Interpolated value of one entry's ``pol`` component at direction ``d``."""
    if not 0 <= entry_index < len(ff.entries):
        raise ConfigError(f"entry index {entry_index} out of range for {len(ff.entries)} entries")
    return complex(sample_many(ff, [d.theta], [d.phi], pol, [entry_index])[0, 0])


def radiated_power(ff: FarFieldSet, entry_index: int) -> float:
    """Integral of |F_theta|^2 + |F_phi|^2 over the sampled region.

    Trapezoidal rule in theta with the sin(theta) Jacobian, periodic
    rectangle rule in phi.
    """
    entry = ff.entries[entry_index]
    density = np.abs(entry.e_theta) ** 2 + np.abs(entry.e_phi) ** 2
    ring_totals = density.sum(axis=1) * ff.phi_step
    return float(trapezoid(ring_totals * np.sin(ff.theta_samples), ff.theta_samples))


def rotate_about_z(ff: FarFieldSet, steps: int) -> FarFieldSet:
    """Rotate every pattern by ``steps`` phi samples: new(phi) = old(phi - steps * dphi)."""
    steps = int(steps)
    entries = tuple(
        replace(e, e_theta=np.roll(e.e_theta, steps, axis=1), e_phi=np.roll(e.e_phi, steps, axis=1))
        for e in ff.entries
    )
    return replace(ff, entries=entries)


def scaled(ff: FarFieldSet, factor: complex) -> FarFieldSet:
    entries = tuple(replace(e, e_theta=e.e_theta * factor, e_phi=e.e_phi * factor) for e in ff.entries)
    return replace(ff, entries=entries)


def subset(ff: FarFieldSet, indices: Sequence[int]) -> FarFieldSet:
    return replace(ff, entries=tuple(ff.entries[i] for i in indices))


def modal_significance(eigenvalue: float) -> float:
    """MS = 1 / |1 + j*lambda|."""
    return 1.0 / abs(1.0 + 1j * eigenvalue)


def most_significant(ff: FarFieldSet, count: int) -> FarFieldSet:
    """Keep the ``count`` entries with the highest modal significance, in their original order."""
    if not ff.has_eigenvalues:
        raise DataValidationError("Modal significance needs an eigenvalue on every entry")
    if not 1 <= count <= len(ff.entries):
        raise ConfigError(f"count must lie in 1..{len(ff.entries)}, got {count}")
    ranked = sorted(range(len(ff.entries)), key=lambda i: (-modal_significance(ff.entries[i].eigenvalue), i))
    return subset(ff, sorted(ranked[:count]))


def _axis_from_manifest(spec: dict, label: str, periodic: bool) -> np.ndarray:
    try:
        start = float(spec["start"])
        step = float(spec["step"])
        count = int(spec["count"]) if periodic else None
        stop = None if periodic else float(spec["stop"])
    except (KeyError, TypeError, ValueError) as e:
        raise DataValidationError(f"manifest: malformed {label} axis {spec!r}") from e
    if step <= 0:
        raise DataValidationError(f"manifest: {label} step must be positive")
    if periodic:
        if abs(step * count - 360.0) > SPACING_RTOL * 360.0:
            raise DataValidationError(f"manifest: phi step x count must equal 360 deg, got {step * count}")
        return np.radians(start + step * np.arange(count))
    span = (stop - start) / step
    count = int(round(span)) + 1
    if abs(span - (count - 1)) > SPACING_RTOL * max(1.0, span):
        raise DataValidationError(f"manifest: theta span {start}..{stop} is not a multiple of {step}")
    degrees = start + step * np.arange(count)
    degrees[-1] = stop
    return np.radians(degrees)


def load_farfield_set(manifest_path: Union[str, Path]) -> FarFieldSet:
    """Load and validate a manifest plus its per-entry CSV files."""
    manifest_path = Path(manifest_path)
    if not manifest_path.is_file():
        raise DataValidationError(f"Far-field manifest not found: {manifest_path}")
    try:
        with open(manifest_path, "r", encoding="utf-8") as f:
            manifest = json.load(f)
    except json.JSONDecodeError as e:
        raise DataValidationError(f"{manifest_path}: invalid JSON: {e}") from e

    for key in ("frequency_hz", "normalization", "theta_deg", "phi_deg", "entries"):
        if key not in manifest:
            raise DataValidationError(f"{manifest_path}: missing field {key!r}")

    thetas = _axis_from_manifest(manifest["theta_deg"], "theta", periodic=False)
    phis = _axis_from_manifest(manifest["phi_deg"], "phi", periodic=True)
    shape = (len(thetas), len(phis))
    node_theta = np.repeat(np.degrees(thetas), shape[1])
    node_phi = np.tile(np.degrees(phis), shape[0])

    entries = []
    for item in manifest["entries"]:
        name = item.get("name")
        file_name = item.get("file")
        if not name or not file_name:
            raise DataValidationError(f"{manifest_path}: each entry needs 'name' and 'file'")
        entry_path = manifest_path.parent / file_name
        if not entry_path.is_file():
            raise DataValidationError(f"Entry {name!r}: file not found: {entry_path}")
        table = read_table(entry_path, FARFIELD_HEADER)
        rows = len(table["theta_deg"])
        if rows != shape[0] * shape[1]:
            raise DataValidationError(
                f"Entry {name!r}: {entry_path.name} has {rows} nodes, expected {shape[0]}x{shape[1]} = "
                f"{shape[0] * shape[1]} (dimension mismatch)"
            )
        if (
            np.max(np.abs(table["theta_deg"] - node_theta)) > NODE_TOL_DEG
            or np.max(np.abs(table["phi_deg"] - node_phi)) > NODE_TOL_DEG
        ):
            raise DataValidationError(
                f"Entry {name!r}: node coordinates do not follow the manifest grid in theta-then-phi order"
            )
        e_theta = (table["re_etheta"] + 1j * table["im_etheta"]).reshape(shape)
        e_phi = (table["re_ephi"] + 1j * table["im_ephi"]).reshape(shape)
        entries.append(PatternEntry(name, e_theta, e_phi, item.get("eigenvalue")))

    ff = FarFieldSet(
        entries=tuple(entries),
        theta_samples=thetas,
        phi_samples=phis,
        normalization=manifest["normalization"],
        frequency_hz=manifest["frequency_hz"],
    )
    logger.info("Loaded %d entries (%dx%d nodes) from %s", len(ff), shape[0], shape[1], manifest_path)
    return ff


def _file_stem(index: int, name: str) -> str:
    return f"{index:02d}_{re.sub(r'[^A-Za-z0-9_.-]+', '_', name)}"


def save_farfield_set(ff: FarFieldSet, directory: Union[str, Path], manifest_name: str = "manifest.json") -> str:
    """Write ``ff`` as a manifest plus one CSV per entry; returns the manifest path."""
    directory = Path(directory)
    theta_deg = np.degrees(ff.theta_samples)
    phi_deg = np.degrees(ff.phi_samples)
    shape = (len(theta_deg), len(phi_deg))
    node_theta = np.repeat(theta_deg, shape[1])
    node_phi = np.tile(phi_deg, shape[0])

    items = []
    for i, entry in enumerate(ff.entries):
        file_name = f"{_file_stem(i, entry.name)}.csv"
        write_table(
            directory / file_name,
            FARFIELD_HEADER,
            [
                node_theta,
                node_phi,
                entry.e_theta.real.ravel(),
                entry.e_theta.imag.ravel(),
                entry.e_phi.real.ravel(),
                entry.e_phi.imag.ravel(),
            ],
        )
        item = {"name": entry.name, "file": file_name}
        if entry.eigenvalue is not None:
            item["eigenvalue"] = entry.eigenvalue
        items.append(item)

    manifest = {
        "frequency_hz": ff.frequency_hz,
        "normalization": ff.normalization,
        "theta_deg": {
            "start": float(theta_deg[0]),
            "stop": float(theta_deg[-1]),
            "step": float((theta_deg[-1] - theta_deg[0]) / (shape[0] - 1)),
        },
        "phi_deg": {"start": float(phi_deg[0]), "step": 360.0 / shape[1], "count": shape[1]},
        "entries": items,
    }
    manifest_path = directory / manifest_name
    ensure_parent_dir(manifest_path)
    with open(manifest_path, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2)
    logger.info("Wrote %d entries to %s", len(ff), manifest_path)
    return str(manifest_path)
