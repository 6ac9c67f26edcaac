#!/usr/bin/env python3

import argparse
import json
import logging
import math
import os
import sys
import time
from datetime import datetime

import numpy as np
import psutil

from utils.command import append_log, create_instance_log_file, log_artifact, log_begin, log_end, log_settings
from utils.config import (
    AMBIGUITY_REFERENCES,
    COVARIANCE_MODES,
    KINDS,
    POLARIZATIONS,
    load_config,
    resolve_run_config,
    resolve_worker_count,
)
from utils.errors import ConfigError, DataValidationError, DegeneracyError, DfEvalError
from utils.estimators import (
    SNR_REFERENCE,
    SourceScenario,
    crb_map,
    crb_phi,
    expected_covariance,
    find_spectrum_peaks,
    music_spectrum,
    noise_power_for,
    sample_covariance,
    to_display_units,
    write_map_csv,
)
from utils.farfield import load_farfield_set, most_significant, save_farfield_set
from utils.geometry import Direction, generate_cap_grid, generate_regular_grid, nearest_index, write_grid_csv
from utils.incident import check_correlation_equivalence, estimate_incident_field, orthonormalize, write_pattern_csv
from utils.modeselect import (
    best_per_cardinality,
    detect_degenerate_sets,
    enumerate_subsets,
    format_bracketed,
    write_scatter_csv,
    write_subsets_csv,
)
from utils.references import parse_reference_arg
from utils.report import EVALUATE_TEMPLATE, MODESELECT_TEMPLATE, render_report
from utils.synth import CANONICAL_MODES, UcaSpec, canonical_mode_set, synth_uca
from utils.uncertainty import (
    assemble_measurement_matrix,
    detect_ambiguities,
    kpi,
    kpi_db,
    measurement_kind_for,
    uncertainty_matrix,
    weight_matrix,
    write_uncertainty_matrix,
    write_uncertainty_vector,
)

logger = logging.getLogger("df_eval")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_DEGENERATE = 4

# argparse destination -> configuration key
OVERRIDE_KEYS = {
    "theta_min": "theta_min_deg",
    "theta_max": "theta_max_deg",
    "grid_count": "grid_count",
    "polarization": "polarization",
    "kind": "kind",
    "exclusion_radius": "exclusion_radius_deg",
    "relative_threshold": "relative_threshold",
    "ambiguity_reference": "ambiguity_reference",
    "source": "source_deg",
    "snr": "snr_db",
    "snapshots": "snapshot_count",
    "signal_power": "signal_power",
    "covariance": "covariance_mode",
    "seed": "seed",
    "crb_step": "crb_step_deg",
    "min_size": "min_size",
    "max_size": "max_size",
    "tolerance_db": "degeneracy_tolerance_db",
    "best_tolerance_db": "best_tolerance_db",
    "output_grid_step": "output_grid_step_deg",
    "most_significant": "most_significant",
}


class ResourceTracker:
    """Runtime, CPU time and resident memory of this process; worker threads count toward all three."""

    def __init__(self):
        self._process = psutil.Process()
        self._start = time.perf_counter()
        self._start_cpu = self._cpu_seconds()

    def _cpu_seconds(self):
        times = self._process.cpu_times()
        return times.user + times.system

    def summary(self):
        return {
            "runtime_s": time.perf_counter() - self._start,
            "cpu_time_s": self._cpu_seconds() - self._start_cpu,
            "memory_mb": self._process.memory_info().rss / (1024 * 1024),
        }


def _ref_label(theta_deg, phi_deg):
    return f"t{theta_deg:g}_p{phi_deg:g}".replace("-", "m")


def _json_ready(value):
    """Non-finite floats become the strings "inf", "-inf" and "nan"."""
    if isinstance(value, float) and not math.isfinite(value):
        return "nan" if math.isnan(value) else ("inf" if value > 0 else "-inf")
    if isinstance(value, dict):
        return {key: _json_ready(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_ready(item) for item in value]
    return value


def _write_json(path, payload):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(_json_ready(payload), f, indent=2, allow_nan=False)
        f.write("\n")
    return path


def _build_grid(cfg):
    return generate_cap_grid(math.radians(cfg.theta_min_deg), math.radians(cfg.theta_max_deg), cfg.grid_count)


def _load_selected(args, cfg, log_file):
    """Load the set; with most_significant set, keep only that many entries."""
    ff = load_farfield_set(args.farfield)
    if cfg.most_significant is None:
        return ff
    kept = most_significant(ff, int(cfg.most_significant))
    logger.info("Keeping the %d most significant of %d entries: %s", len(kept), len(ff), ", ".join(kept.names))
    append_log(log_file, f"selected entries: {', '.join(kept.names)}")
    return kept


def _scenario(cfg):
    theta_deg, phi_deg = cfg.source_deg
    return SourceScenario(
        Direction.from_degrees(theta_deg, phi_deg),
        cfg.polarization,
        float(cfg.snr_db),
        int(cfg.snapshot_count),
        float(cfg.signal_power),
    )


def _grid_summary(cfg, grid):
    return {"theta_min_deg": cfg.theta_min_deg, "theta_max_deg": cfg.theta_max_deg, "count": len(grid)}


def cmd_synth(args, cfg, log_file, workers):
    if args.synth_command == "uca":
        spec = UcaSpec(
            element_count=args.elements,
            spacing_over_lambda=args.spacing,
            monopole_length_over_lambda=args.length,
            theta_step_deg=args.theta_step,
            phi_step_deg=args.phi_step,
            frequency_hz=args.frequency,
        )
        ff = synth_uca(spec)
    else:
        eigenvalues = None
        if args.eigenvalues:
            if len(args.eigenvalues) != len(CANONICAL_MODES):
                raise ConfigError(f"--eigenvalues needs {len(CANONICAL_MODES)} values ({', '.join(CANONICAL_MODES)})")
            eigenvalues = dict(zip(CANONICAL_MODES, args.eigenvalues))
        ff = canonical_mode_set(
            theta_step_deg=args.theta_step,
            phi_step_deg=args.phi_step,
            eigenvalues=eigenvalues,
            theta_stop_deg=180.0 if args.full_sphere else 90.0,
            frequency_hz=args.frequency,
        )
    manifest = save_farfield_set(ff, args.output_directory)
    log_artifact(log_file, "farfield manifest", manifest)
    logger.info("Wrote %d-entry set to %s", len(ff), manifest)
    return {"farfield": manifest, "entries": ff.names}


def cmd_grid(args, cfg, log_file, workers):
    grid = _build_grid(cfg)
    path = log_artifact(log_file, "grid", write_grid_csv(grid, os.path.join(args.output_directory, "grid.csv")))
    logger.info("Wrote %d-point grid to %s", len(grid), path)
    return {"grid": path}


def cmd_evaluate(args, cfg, log_file, workers):
    out = args.output_directory
    ff = _load_selected(args, cfg, log_file)
    grid = _build_grid(cfg)
    kind = measurement_kind_for(ff, cfg.kind)
    X = assemble_measurement_matrix(ff, grid, cfg.polarization, kind)
    U = uncertainty_matrix(X, grid, workers=workers)
    value = kpi(U, weight_matrix(U, grid))
    report = detect_ambiguities(
        U, grid, math.radians(cfg.exclusion_radius_deg), cfg.relative_threshold, cfg.ambiguity_reference
    )
    logger.info("KPI %.6g (%.4f dB), %d ambiguity finding(s)", value, kpi_db(value), report.count)

    log_artifact(log_file, "grid", write_grid_csv(grid, os.path.join(out, "grid.csv")))
    if cfg.emit_sorted_matrix:
        for name, path in write_uncertainty_matrix(U, out, permutations=cfg.emit_permutations).items():
            log_artifact(log_file, name, path)

    requested = []
    for theta_deg, phi_deg in cfg.reference_doas_deg:
        index = nearest_index(grid, Direction.from_degrees(theta_deg, phi_deg))
        findings = report.for_reference(index)
        row = {
            "requested_deg": [theta_deg, phi_deg],
            "grid_index": index,
            "theta_deg": math.degrees(grid.thetas[index]),
            "phi_deg": math.degrees(grid.phis[index]),
            "self_term": float(U.self_terms[index]),
            "count": len(findings),
            "findings": [a.to_dict() for a in findings],
        }
        if cfg.emit_uncertainty_vectors:
            path = os.path.join(out, f"uncertainty_vector_{_ref_label(theta_deg, phi_deg)}.csv")
            log_artifact(log_file, "uncertainty vector", write_uncertainty_vector(U, grid, index, path))
            row["vector_file"] = os.path.basename(path)
        requested.append(row)

    payload = {
        "farfield": os.path.abspath(args.farfield),
        "entries": ff.names,
        "most_significant": cfg.most_significant,
        "kind": cfg.kind,
        "measurement_kind": kind,
        "polarization": cfg.polarization,
        "weighting": cfg.weighting,
        "grid": _grid_summary(cfg, grid),
        "kpi": value,
        "kpi_db": kpi_db(value),
        "ambiguities": report.to_dict(grid),
        "references": requested,
    }
    log_artifact(log_file, "evaluation", _write_json(os.path.join(out, "evaluation.json"), payload))

    if cfg.emit_summary:
        context = {
            "set_name": os.path.basename(os.path.dirname(os.path.abspath(args.farfield))) or args.farfield,
            "entry_count": len(ff),
            "entry_names": ff.names,
            "grid_count": len(grid),
            "theta_min_deg": cfg.theta_min_deg,
            "theta_max_deg": cfg.theta_max_deg,
            "polarization": cfg.polarization,
            "kind": f"{cfg.kind} ({kind})",
            "weighting": cfg.weighting,
            "kpi": value,
            "kpi_db": kpi_db(value),
            "exclusion_radius_deg": cfg.exclusion_radius_deg,
            "relative_threshold": cfg.relative_threshold,
            "threshold_reference": cfg.ambiguity_reference,
            "ambiguity_count": report.count,
            "references_affected": report.references_affected,
            "requested": [
                {
                    "theta_deg": r["theta_deg"],
                    "phi_deg": r["phi_deg"],
                    "count": r["count"],
                    "best_theta_deg": r["findings"][0]["theta_deg"] if r["findings"] else None,
                    "best_phi_deg": r["findings"][0]["phi_deg"] if r["findings"] else None,
                    "best_relative": r["findings"][0]["relative"] if r["findings"] else None,
                }
                for r in requested
            ],
        }
        log_artifact(log_file, "summary", render_report(EVALUATE_TEMPLATE, os.path.join(out, "summary.md"), context))
    return payload


def cmd_modeselect(args, cfg, log_file, workers):
    out = args.output_directory
    ff = _load_selected(args, cfg, log_file)
    grid = _build_grid(cfg)
    sweep = enumerate_subsets(
        ff,
        grid,
        cfg.polarization,
        cfg.kind,
        min_size=cfg.min_size,
        max_size=cfg.max_size,
        workers=workers,
        exclusion_radius=math.radians(cfg.exclusion_radius_deg),
        relative_threshold=cfg.relative_threshold,
        ambiguity_reference=cfg.ambiguity_reference,
    )
    names = list(sweep.entry_names)
    best = best_per_cardinality(sweep.results, names, cfg.best_tolerance_db)
    degenerate = detect_degenerate_sets(sweep.results, cfg.degeneracy_tolerance_db)

    log_artifact(log_file, "subsets", write_subsets_csv(sweep, os.path.join(out, "subsets.csv")))
    log_artifact(log_file, "scatter", write_scatter_csv(sweep, os.path.join(out, "scatter.csv")))
    payload = {
        "farfield": os.path.abspath(args.farfield),
        "entries": names,
        "most_significant": cfg.most_significant,
        "kind": sweep.kind,
        "measurement_kind": sweep.measurement_kind,
        "polarization": cfg.polarization,
        "grid": _grid_summary(cfg, grid),
        "evaluated_count": len(sweep.results) + len(sweep.failures),
        "result_count": len(sweep.results),
        "failures": [{"indices": list(f.entry_indices), "names": list(f.entry_names), "reason": f.reason} for f in sweep.failures],
        "best": [
            {
                "size": b.size,
                "kpi_db": b.kpi_db,
                "label": b.label,
                "sets": [[names[i] for i in s] for s in b.subsets],
                "indices": [list(s) for s in b.subsets],
            }
            for b in best
        ],
        "degeneracy_tolerance_db": cfg.degeneracy_tolerance_db,
        "degenerate_groups": [[[names[i] for i in s] for s in group] for group in degenerate],
    }
    log_artifact(log_file, "best sets", _write_json(os.path.join(out, "best_sets.json"), payload))

    if cfg.emit_summary:
        context = {
            "set_name": os.path.basename(os.path.dirname(os.path.abspath(args.farfield))) or args.farfield,
            "subset_count": payload["evaluated_count"],
            "failure_count": len(sweep.failures),
            "kind": sweep.kind,
            "polarization": cfg.polarization,
            "best": [{"size": b.size, "label": b.label, "kpi_db": b.kpi_db} for b in best],
            "degeneracy_tolerance_db": cfg.degeneracy_tolerance_db,
            "degenerate": [format_bracketed(group, names) for group in degenerate],
        }
        log_artifact(log_file, "table", render_report(MODESELECT_TEMPLATE, os.path.join(out, "table.md"), context))
    return payload


def cmd_incident(args, cfg, log_file, workers):
    out = args.output_directory
    ff = load_farfield_set(args.farfield)
    step = math.radians(cfg.output_grid_step_deg)
    output_grid = generate_regular_grid(float(ff.theta_samples[0]), float(ff.theta_samples[-1]), step, step)
    if args.orthonormalize:
        ff = orthonormalize(ff, output_grid)

    references = [Direction.from_degrees(t, p) for t, p in cfg.reference_doas_deg]
    estimates = []
    for (theta_deg, phi_deg), ref in zip(cfg.reference_doas_deg, references):
        estimate = estimate_incident_field(ff, ref, cfg.polarization, output_grid)
        path = os.path.join(out, f"incident_{_ref_label(theta_deg, phi_deg)}.csv")
        log_artifact(log_file, "incident pattern", write_pattern_csv(estimate, path))
        peak = int(np.argmax(estimate.magnitude))
        estimates.append(
            {
                "reference_deg": [theta_deg, phi_deg],
                "coefficients": [[c.real, c.imag] for c in estimate.coefficients],
                "null_reference": estimate.null_reference,
                "peak_deg": [math.degrees(output_grid.thetas[peak]), math.degrees(output_grid.phis[peak])],
                "pattern_file": os.path.basename(path),
            }
        )

    equivalence = []
    if args.equivalence:
        for i in range(len(references)):
            for j in range(i + 1, len(references)):
                check = check_correlation_equivalence(ff, references[i], references[j], cfg.polarization, output_grid)
                equivalence.append(
                    {
                        "pair_deg": [list(cfg.reference_doas_deg[i]), list(cfg.reference_doas_deg[j])],
                        "coefficient": [check.coefficient.real, check.coefficient.imag],
                        "incident": [check.incident.real, check.incident.imag],
                        "residual": check.residual,
                    }
                )

    payload = {
        "farfield": os.path.abspath(args.farfield),
        "entries": ff.names,
        "polarization": cfg.polarization,
        "orthonormalized": bool(args.orthonormalize),
        "output_grid_step_deg": cfg.output_grid_step_deg,
        "estimates": estimates,
        "equivalence": equivalence,
    }
    log_artifact(log_file, "incident", _write_json(os.path.join(out, "incident.json"), payload))
    return payload


def _measurement(args, cfg):
    ff = load_farfield_set(args.farfield)
    grid = _build_grid(cfg)
    X = assemble_measurement_matrix(ff, grid, cfg.polarization, measurement_kind_for(ff, cfg.kind))
    return ff, grid, X


def cmd_music(args, cfg, log_file, workers):
    out = args.output_directory
    ff, grid, X = _measurement(args, cfg)
    scenario = _scenario(cfg)
    if cfg.covariance_mode == "random":
        covariance = sample_covariance(X, scenario, seed=cfg.seed)
    else:
        covariance = expected_covariance(X, scenario)
    spectrum = music_spectrum(X, scenario, covariance=covariance)
    log_artifact(log_file, "music spectrum", write_map_csv(grid, spectrum, os.path.join(out, "music_spectrum.csv")))

    peaks = find_spectrum_peaks(spectrum, grid)[: args.peaks]
    payload = {
        "farfield": os.path.abspath(args.farfield),
        "source_deg": list(cfg.source_deg),
        "source_grid_index": nearest_index(grid, scenario.source_doa),
        "snr_db": cfg.snr_db,
        "snr_reference": SNR_REFERENCE,
        "noise_power": noise_power_for(X, scenario.snr_db),
        "covariance_mode": cfg.covariance_mode,
        "peaks": [
            {"grid_index": k, "theta_deg": math.degrees(grid.thetas[k]), "phi_deg": math.degrees(grid.phis[k]), "value_db": v}
            for k, v in peaks
        ],
    }
    log_artifact(log_file, "music", _write_json(os.path.join(out, "music.json"), payload))
    return payload


def cmd_crb(args, cfg, log_file, workers):
    out = args.output_directory
    ff, grid, X = _measurement(args, cfg)
    scenario = _scenario(cfg)
    values = crb_map(ff, X, scenario, step_deg=cfg.crb_step_deg)
    try:
        source_crb = crb_phi(ff, X, scenario, step_deg=cfg.crb_step_deg)
    except DegeneracyError as e:
        # same treatment as undefined map points
        logger.warning("Source CRB undefined: %s", e)
        source_crb = math.nan
    log_artifact(log_file, "crb map", write_map_csv(grid, values, os.path.join(out, "crb_map.csv")))
    if args.display_units:
        path = os.path.join(out, "crb_map_display.csv")
        log_artifact(log_file, "crb map (deg/100)", write_map_csv(grid, to_display_units(values), path))

    finite = values[np.isfinite(values)]
    payload = {
        "farfield": os.path.abspath(args.farfield),
        "variant": "deterministic single-source",
        "unit": "deg^2",
        "source_deg": list(cfg.source_deg),
        "source_crb": None if math.isnan(source_crb) else source_crb,
        "source_defined": not math.isnan(source_crb),
        "snr_db": cfg.snr_db,
        "snr_reference": SNR_REFERENCE,
        "snapshot_count": cfg.snapshot_count,
        "undefined_count": int(values.size - finite.size),
        "min": float(finite.min()) if finite.size else None,
        "max": float(finite.max()) if finite.size else None,
    }
    log_artifact(log_file, "crb", _write_json(os.path.join(out, "crb.json"), payload))
    return payload


def _common_parent():
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--output_directory", required=True, help="Directory for every emitted file and the run log.")
    parent.add_argument("--config", required=False, help="JSON file with run settings (defaults: configuration_templates/run_defaults.json).")
    parent.add_argument("--max_workers", type=int, default=None, help="Upper bound on worker threads (DF_EVAL_THREADS also caps it; results never depend on it).")
    parent.add_argument("--verbose", action="store_true", help="Debug-level logging.")
    parent.add_argument("--track_resources", action="store_true", help="Track system resources and runtime usage.")
    return parent


def _grid_parent():
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--theta_min", type=float, help="Lower cap bound, deg.")
    parent.add_argument("--theta_max", type=float, help="Upper cap bound, deg.")
    parent.add_argument("--grid_count", type=int, help="Number of grid DoAs.")
    return parent


def _evaluation_parent():
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--farfield", required=True, help="Far-field manifest (JSON).")
    parent.add_argument("--polarization", choices=POLARIZATIONS, help="Field component to evaluate.")
    parent.add_argument("--kind", choices=KINDS, help="directivity, or realized (modes scaled by 1/(1+j lambda)).")
    return parent


def _ambiguity_parent():
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--exclusion_radius", type=float, help="Main-lobe exclusion radius, deg.")
    parent.add_argument("--relative_threshold", type=float, help="Relative threshold of the ambiguity detector.")
    parent.add_argument("--ambiguity_reference", choices=AMBIGUITY_REFERENCES, help="Threshold reference.")
    return parent


def _selection_parent():
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--most_significant", type=int, help="Keep only the N entries with the highest modal significance.")
    return parent


def _reference_parent():
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--ref", nargs="+", help="Reference DoAs as theta phi pairs in deg, 'theta,phi;...' or a file.")
    return parent


def _scenario_parent():
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--source", nargs=2, type=float, metavar=("THETA", "PHI"), help="Source DoA, deg.")
    parent.add_argument("--snr", type=float, help="SNR in dB ('inf' for noiseless).")
    parent.add_argument("--snapshots", type=int, help="Number of snapshots.")
    parent.add_argument("--signal_power", type=float, help="Signal power (linear).")
    return parent


def build_parser():
    parser = argparse.ArgumentParser(description="Deterministic evaluation of multi-port direction-finding antenna systems.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common_parent()

    synth = sub.add_parser("synth", help="Synthesize analytic far-field sets.")
    synth_sub = synth.add_subparsers(dest="synth_command", required=True)
    uca = synth_sub.add_parser("uca", parents=[common], help="Monopole uniform circular array.")
    uca.add_argument("--elements", type=int, required=True, help="Number of monopoles.")
    uca.add_argument("--spacing", type=float, required=True, help="Element spacing in wavelengths.")
    uca.add_argument("--length", type=float, default=0.25, help="Monopole length in wavelengths.")
    modes = synth_sub.add_parser("modes", parents=[common], help="Canonical mode-like patterns.")
    modes.add_argument("--preset", choices=["canonical"], default="canonical", help="Mode preset.")
    modes.add_argument("--eigenvalues", nargs="+", type=float, help=f"Eigenvalues for {', '.join(CANONICAL_MODES)}.")
    modes.add_argument("--full_sphere", action="store_true", help="Sample 0..180 deg instead of the upper hemisphere.")
    for p in (uca, modes):
        p.add_argument("--theta_step", type=float, default=1.0, help="theta sampling step, deg.")
        p.add_argument("--phi_step", type=float, default=1.0, help="phi sampling step, deg.")
        p.add_argument("--frequency", type=float, default=1.06e9, help="Frequency tag, Hz.")
        p.set_defaults(handler=cmd_synth)

    grid = sub.add_parser("grid", parents=[common, _grid_parent()], help="Emit the DoA grid.")
    grid.set_defaults(handler=cmd_grid)

    evaluate = sub.add_parser(
        "evaluate",
        parents=[common, _grid_parent(), _evaluation_parent(), _selection_parent(), _ambiguity_parent(), _reference_parent()],
        help="Uncertainty matrix, KPI and ambiguity report.",
    )
    evaluate.set_defaults(handler=cmd_evaluate)

    modeselect = sub.add_parser(
        "modeselect",
        parents=[common, _grid_parent(), _evaluation_parent(), _selection_parent(), _ambiguity_parent()],
        help="Rank every subset of entries by KPI.",
    )
    modeselect.add_argument("--min_size", type=int, help="Smallest subset size.")
    modeselect.add_argument("--max_size", type=int, help="Largest subset size.")
    modeselect.add_argument("--tolerance_db", "--tolerance-db", dest="tolerance_db", type=float, help="Degeneracy tolerance, dB.")
    modeselect.add_argument("--best_tolerance_db", type=float, help="Co-maximal tolerance for best sets, dB.")
    modeselect.set_defaults(handler=cmd_modeselect)

    incident = sub.add_parser(
        "incident", parents=[common, _evaluation_parent(), _reference_parent()], help="Estimated incident fields."
    )
    incident.add_argument("--output_grid_step", type=float, help="Output grid step, deg.")
    incident.add_argument("--orthonormalize", action="store_true", help="Orthonormalize the entries over the output grid first.")
    incident.add_argument("--equivalence", action="store_true", help="Compare coefficient and incident-field correlations per reference pair.")
    incident.set_defaults(handler=cmd_incident)

    music = sub.add_parser(
        "music", parents=[common, _grid_parent(), _evaluation_parent(), _scenario_parent()], help="MUSIC spectrum."
    )
    music.add_argument("--covariance", choices=COVARIANCE_MODES, help="Expected or seeded random-snapshot covariance.")
    music.add_argument("--seed", type=int, help="Seed of the random-snapshot covariance.")
    music.add_argument("--peaks", type=int, default=5, help="Number of spectrum peaks to report.")
    music.set_defaults(handler=cmd_music)

    crb = sub.add_parser(
        "crb", parents=[common, _grid_parent(), _evaluation_parent(), _scenario_parent()], help="Azimuth CRB map."
    )
    crb.add_argument("--crb_step", type=float, help="Finite-difference step, deg.")
    crb.add_argument("--display_units", action="store_true", help="Also write the map in deg/100.")
    crb.set_defaults(handler=cmd_crb)
    return parser


def _overrides(args):
    overrides = {key: getattr(args, dest, None) for dest, key in OVERRIDE_KEYS.items()}
    if overrides["source_deg"] is not None:
        overrides["source_deg"] = list(overrides["source_deg"])
    refs = parse_reference_arg(getattr(args, "ref", None))
    if refs is not None:
        overrides["reference_doas_deg"] = [list(pair) for pair in refs]
    return overrides


def _command_name(args):
    return f"synth {args.synth_command}" if args.command == "synth" else args.command


def _exit_code(error):
    if isinstance(error, (ConfigError, OSError)):
        return EXIT_CONFIG
    if isinstance(error, DataValidationError):
        return EXIT_DATA
    if isinstance(error, DegeneracyError):
        return EXIT_DEGENERATE
    return EXIT_FAILURE


def run(args):
    command = _command_name(args)
    tracker = ResourceTracker() if args.track_resources else None

    run_log_file = create_instance_log_file(args.output_directory, command)
    log_begin(run_log_file, command)
    try:
        cfg = resolve_run_config(load_config(args.config), _overrides(args))
        workers = resolve_worker_count(args.max_workers)
        logger.debug("Using %d worker thread(s)", workers)
        log_settings(run_log_file, cfg.to_dict(), workers)
        _write_json(
            os.path.join(args.output_directory, "run.json"),
            {
                "command": command,
                "config": cfg.to_dict(),
                "generated_at": datetime.now().isoformat(timespec="seconds"),
            },
        )
        args.handler(args, cfg, run_log_file, workers)
    except (DfEvalError, OSError) as e:
        code = _exit_code(e)
        logger.error("%s failed: %s", command, e)
        append_log(run_log_file, f"ERROR: {e}")
        log_end(run_log_file, command, code)
        return code

    if tracker is not None:
        usage = tracker.summary()
        append_log(run_log_file, " ".join(f"{key}={value:.2f}" for key, value in usage.items()))
        print("\n--- Resource Usage Summary ---")
        print(f"Total runtime: {usage['runtime_s']:.2f} seconds")
        print(f"Total CPU time used: {usage['cpu_time_s']:.2f} seconds")
        print(f"Resident memory: {usage['memory_mb']:.2f} MB")
        print("--------------------------------")
    log_end(run_log_file, command)

    print(f"Run log saved to: {run_log_file}")
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s - %(levelname)s - %(message)s",
        stream=sys.stdout,
        force=True,
    )
    try:
        return run(args)
    except OSError as e:
        # the output directory itself could not be created
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
