"""Command-line interface.

Usage:
    ucadoa simulate scenario.yaml --out snaps.bin
    ucadoa estimate scenario.yaml --snapshots snaps.bin --spectrum-out s.csv --out peaks.json
    ucadoa experiment scenario.yaml --out summary.json
    ucadoa sweep scenario.yaml --parameter snr_db --values 0,10,20

Exit codes: 0 success, 1 usage/IO/validation error, 2 numerical failure.
"""

from __future__ import annotations

import json
import struct
import sys
from dataclasses import replace
from pathlib import Path

import click
import numpy as np
import yaml

from .errors import DoaError, ScenarioError
from .experiments import (
    ESTIMATORS,
    Scenario,
    estimate_spectrum,
    run_experiment,
    sweep,
    trial_snapshots,
)
from .covariance import OpCount, partial_from_exact
from .estimators import fit_mpm, fit_music, fit_pm, mpm_spectrum
from .signal_sim import SnapshotMatrix, exact_covariance
from .spectrum import find_peaks, scan, write_spectrum_csv

__all__ = ["cli", "load_scenario_file", "write_snapshots", "read_snapshots", "SNAPSHOT_MAGIC"]

SNAPSHOT_MAGIC = b"DOA1"
_HEADER = struct.Struct("<4sIII")  # magic, N, K, reserved


def _key_lines(text: str) -> dict[str, int]:
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return {}
    if not isinstance(node, yaml.MappingNode):
        return {}
    return {k.value: k.start_mark.line + 1 for k, _ in node.value if isinstance(k, yaml.ScalarNode)}


def load_scenario_file(path) -> Scenario:
    """Parse a YAML scenario file strictly, with line numbers in diagnostics."""
    text = Path(path).read_text()
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}" if mark is not None else ""
        raise ScenarioError(f"{path}: YAML parse error{where}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ScenarioError(f"{path}: top level must be a mapping")
    lines = _key_lines(text)
    unknown = sorted(set(data) - set(Scenario.__dataclass_fields__))
    if unknown:
        where = ", ".join(f"{k!r} (line {lines.get(k, '?')})" for k in unknown)
        raise ScenarioError(f"{path}: unknown key(s) {where}")
    try:
        return Scenario.from_dict(data)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc


def write_snapshots(x: SnapshotMatrix, path) -> None:
    s = x.samples
    n, k = s.shape
    body = np.ascontiguousarray(s, dtype="<c16").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(SNAPSHOT_MAGIC, n, k, 0))
        fh.write(body)


def read_snapshots(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise ValueError(f"{path}: truncated snapshot header")
    magic, n, k, _ = _HEADER.unpack_from(raw)
    if magic != SNAPSHOT_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + n * k * 16
    if len(raw) != expected:
        raise ValueError(f"{path}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).reshape(n, k).astype(complex)


def _fail(msg: str, code: int = 1):
    click.echo(f"error: {msg}", err=True)
    sys.exit(code)


def _load(path, seed, grid_deg, estimators) -> Scenario:
    try:
        scn = load_scenario_file(path)
        over = {}
        if seed is not None:
            over["seed"] = seed
        if grid_deg is not None:
            over["grid_deg"] = grid_deg
        if estimators:
            over["estimators"] = tuple(estimators)
        return replace(scn, **over).validate() if over else scn
    except OSError as exc:
        _fail(f"cannot read scenario: {exc}")
    except ScenarioError as exc:
        _fail(str(exc))


def _emit(text: str, out) -> None:
    if out is None:
        click.echo(text, nl=False)
    else:
        Path(out).write_text(text)


def _common(f):
    f = click.option("--out", "out", type=click.Path(dir_okay=False), default=None,
                     help="Output file (stdout when omitted, where supported).")(f)
    f = click.option("--estimator", "estimators", multiple=True, type=click.Choice(ESTIMATORS),
                     help="Estimator to run; repeatable.")(f)
    f = click.option("--grid-deg", type=float, default=None, help="Scan grid step in degrees.")(f)
    f = click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None,
                     help="Override the scenario base seed.")(f)
    return f


@click.group()
def cli():
    """Modified-propagator DOA estimation on uniform circular arrays."""


@cli.command()
@click.argument("scenario", type=click.Path())
@click.option("--trial", type=click.IntRange(min=0), default=0, show_default=True,
              help="Trial index selecting the RNG stream.")
@_common
def simulate(scenario, trial, seed, grid_deg, estimators, out):
    """Write one trial's snapshot matrix to a DOA1 binary file."""
    if out is None:
        _fail("simulate requires --out")
    scn = _load(scenario, seed, grid_deg, estimators)
    try:
        write_snapshots(trial_snapshots(scn, trial), out)
    except OSError as exc:
        _fail(f"cannot write snapshots: {exc}")


@cli.command()
@click.argument("scenario", type=click.Path())
@click.option("--snapshots", type=click.Path(), default=None,
              help="DOA1 snapshot file; synthesised from the scenario when omitted.")
@click.option("--trial", type=click.IntRange(min=0), default=0, show_default=True)
@click.option("--exact", is_flag=True,
              help="Use the asymptotic covariance instead of sampled snapshots.")
@click.option("--spectrum-out", type=click.Path(dir_okay=False), default=None,
              help="Write the scanned spectrum as CSV.")
@_common
def estimate(scenario, snapshots, trial, exact, spectrum_out, seed, grid_deg, estimators, out):
    """Estimate source directions and emit peaks JSON."""
    scn = _load(scenario, seed, grid_deg, estimators)
    if len(scn.estimators) != 1:
        _fail("estimate runs exactly one estimator; pass a single --estimator")
    name = scn.estimators[0]
    geom = scn.geometry()
    if exact and snapshots is not None:
        _fail("--exact and --snapshots are mutually exclusive")
    if exact:
        x = None
    elif snapshots is not None:
        try:
            samples = read_snapshots(snapshots)
            x = SnapshotMatrix(samples, geom)
        except (OSError, ValueError) as exc:
            _fail(str(exc))
    else:
        x = trial_snapshots(scn, trial)

    ops = OpCount()
    try:
        if x is None:
            fn = _exact_spectrum(scn, name, ops)
        else:
            fn = estimate_spectrum(x, scn.p_sources, name, ops)
    except DoaError as exc:
        doc = json.dumps({"error": {"kind": exc.kind, "message": str(exc)}, "estimator": name})
        click.echo(doc)
        if out is not None:
            Path(out).write_text(doc + "\n")
        sys.exit(2)
    sg = scan(fn, scn.grid())
    peaks = find_peaks(sg, scn.p_sources)
    doc = {
        "estimator": name,
        "peaks": [
            {
                "theta_deg": round(pk.theta_deg, 9),
                "phi_deg": round(pk.phi_deg, 9),
                "power": pk.power,
                "azimuth_indeterminate": pk.azimuth_indeterminate,
            }
            for pk in peaks
        ],
        "ops": ops.as_dict(),
    }
    try:
        if spectrum_out is not None:
            write_spectrum_csv(sg, spectrum_out)
        _emit(json.dumps(doc, indent=2) + "\n", out)
    except OSError as exc:
        _fail(str(exc))


def _exact_spectrum(scn: Scenario, name: str, ops: OpCount):
    geom = scn.geometry()
    rxx = exact_covariance(
        geom, scn.sources(), scn.noise_model(), scn.snr_db,
        noise_variance=0.0 if scn.snr_db is None else None,
    )
    p = scn.p_sources
    if name == "mpm":
        return mpm_spectrum(fit_mpm(partial_from_exact(rxx, p), ops), geom)
    if name == "pm":
        return fit_pm(rxx, p, geom, ops)
    return fit_music(rxx, p, geom, ops)


@cli.command()
@click.argument("scenario", type=click.Path())
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
@_common
def experiment(scenario, workers, seed, grid_deg, estimators, out):
    """Run the Monte Carlo experiment and emit the summary JSON."""
    scn = _load(scenario, seed, grid_deg, estimators)
    summary = run_experiment(scn, workers=workers)
    try:
        _emit(summary.to_json(), out)
    except OSError as exc:
        _fail(str(exc))


def _parse_values(parameter, raw):
    cast = float if parameter == "snr_db" else int
    try:
        return [cast(v) for v in raw.split(",") if v.strip()]
    except ValueError:
        raise click.BadParameter(f"cannot parse {raw!r} for {parameter}")


@cli.command("sweep")
@click.argument("scenario", type=click.Path())
@click.option("--parameter", required=True, type=click.Choice(["snr_db", "k_snapshots", "n_elements"]))
@click.option("--values", "raw_values", required=True, help="Comma-separated values.")
@click.option("--workers", type=click.IntRange(min=1), default=1, show_default=True)
@_common
def sweep_cmd(scenario, parameter, raw_values, workers, seed, grid_deg, estimators, out):
    """Repeat the experiment over one parameter; emits a JSON list."""
    scn = _load(scenario, seed, grid_deg, estimators)
    values = _parse_values(parameter, raw_values)
    if not values:
        _fail("--values is empty")
    results = sweep(scn, parameter, values, workers=workers)
    doc = [
        {
            "parameter": r.parameter,
            "value": r.value,
            "diagnostic": r.diagnostic,
            "summary": r.summary.as_dict() if r.summary else None,
        }
        for r in results
    ]
    try:
        _emit(json.dumps(doc, indent=2, sort_keys=True) + "\n", out)
    except OSError as exc:
        _fail(str(exc))


def main():
    cli()


if __name__ == "__main__":
    main()
