"""Scenario execution: evolution, probes, output files and the run manifest.

Each scenario writes into its own directory:

* ``trace.csv``            energy trace at the output cadence
* ``snapshot_initial.csv`` and ``snapshot_final.csv`` (``x, u``)
* ``gauge.csv``            gauge snapshot (``gauge_verify`` probe)
* ``spectrum.csv``         eigenvalues per ladder entry (``spectrum_ladder`` probe)
* ``reports.jsonl``        one JSON record per probe plus the run summary
* ``manifest.json``        written last and atomically, even after a failure

Data files contain no wall-clock values, so reruns are byte-identical.
"""

from __future__ import annotations

import enum
import hashlib
import math
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .coefficients import classify, default_time_lattice
from .config import ScenarioConfig, coefficient_set, dumps, initial_field, quasilinear_equation
from .gauge import build_gauge, verify_gauge
from .io import jsonable, sha256_file, write_csv, write_json_atomic, write_jsonl, write_rows
from .linear import ProbeRefused, gronwall_fit, integrate, reversibility_probe, smoothing_probe, wave_packet_experiment
from .quasilinear import energy_cascade_monitor, evolve_quasilinear
from .spectral import MollifierSpec, PeriodicGrid
from .spectrum import dichotomy_probe

__all__ = ["ExitCode", "RunManifest", "run", "config_hash"]


class ExitCode(enum.IntEnum):
    OK = 0
    INTERNAL = 1
    BLOWUP = 3
    GUARD = 4
    REFUSED = 5


@dataclass
class RunManifest:
    name: str
    config_hash: str
    tool_version: str
    status: str
    exit_code: int
    wall_time: float
    files: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    truncated: bool = False
    error: str | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def config_hash(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(dumps(cfg).encode("utf-8")).hexdigest()


class _Outcome:
    def __init__(self):
        self.code = ExitCode.OK
        self.records = []
        self.summary = {}
        self.truncated = False

    def flag(self, code: ExitCode):
        # a refusal or internal error outranks the evolution's own status
        order = [ExitCode.OK, ExitCode.GUARD, ExitCode.BLOWUP, ExitCode.REFUSED, ExitCode.INTERNAL]
        if order.index(code) > order.index(self.code):
            self.code = code


def _snapshot(path: Path, grid: PeriodicGrid, values) -> Path:
    return write_csv(path, {"x": grid.x, "u": values})


def _run_linear(cfg: ScenarioConfig, out: Path, outcome: _Outcome, files: list) -> None:
    grid = cfg.grid()
    coeffs = coefficient_set(cfg)
    u0 = initial_field(cfg, grid)
    run = None
    if cfg.evolve:
        mol = MollifierSpec(grid, cfg.mollifier_epsilon) if cfg.mollifier_epsilon else None
        run = integrate(
            u0,
            coeffs,
            cfg.integrator,
            n=cfg.n,
            mollifier=mol,
            track_gauged_energy="gronwall" in cfg.probes,
            keep_fields="smoothing" in cfg.probes,
        )
        files.append(write_csv(out / "trace.csv", run.trace.columns()))
        if cfg.snapshots:
            files.append(_snapshot(out / "snapshot_initial.csv", grid, u0.values))
            files.append(_snapshot(out / "snapshot_final.csv", grid, run.final.values))
        outcome.summary["evolution"] = {
            "status": run.trace.status,
            "steps": run.steps,
            "dt": run.dt,
            "t_final": run.times[-1],
            "blowup_time": run.trace.blowup_time,
        }
        if run.blowup:
            outcome.truncated = True
            outcome.flag(ExitCode.BLOWUP)
    for probe in cfg.probes:
        params = cfg.params(probe)
        try:
            rec = _linear_probe(probe, params, cfg, grid, coeffs, u0, run, out, files)
        except ProbeRefused as exc:
            rec = {"refused": str(exc)}
            outcome.flag(ExitCode.REFUSED)
        outcome.records.append({"probe": probe} | rec)


def _linear_probe(probe, params, cfg, grid, coeffs, u0, run, out, files) -> dict:
    if probe == "classify":
        times = default_time_lattice(cfg.T, int(params.get("samples", 64)))
        return classify(coeffs, grid, times).to_dict()
    if probe == "gauge_verify":
        g = build_gauge(coeffs, grid, cfg.n, float(params.get("t", 0.0)))
        files.append(write_csv(out / "gauge.csv", g.table()))
        return verify_gauge(g, coeffs, float(params.get("tol", 1e-9))).to_dict()
    if probe == "gronwall":
        if run is None:
            raise ProbeRefused("the gronwall probe needs an evolution (evolve = true)")
        fit = gronwall_fit(run.trace, params.get("energy", "auto"), allow_blowup=True)
        return {"K": fit.K, "energy": fit.energy, "min_slack": float(np.min(fit.slack)), "caveat": fit.caveat}
    if probe == "smoothing":
        if run is None:
            raise ProbeRefused("the smoothing probe needs an evolution (evolve = true)")
        refined = None
        if params.get("refine", False):
            g2 = PeriodicGrid(grid.M, 2 * grid.N)
            refined = integrate(initial_field(cfg, g2), coeffs, cfg.integrator, n=cfg.n)
        rep = smoothing_probe(run, cfg.n, coeffs, refined)
        return {"integral": rep.integral, "initial_energy": rep.initial_energy, "ratio": rep.ratio,
                "refined_ratio": rep.refined_ratio, "refinement_change": rep.refinement_change}
    if probe == "reversibility":
        t0 = float(params.get("t0", cfg.integrator.t_end))
        rep = reversibility_probe(u0, coeffs, t0, cfg.integrator, int(params.get("norm_index", 0)))
        return rep.to_dict()
    if probe == "wave_packet":
        wgrid = PeriodicGrid(float(params.get("M", 16 * math.pi)), int(params.get("N", 2048)))
        rep = wave_packet_experiment(
            float(params.get("a0", 1.0)),
            float(params.get("b0", 1.0)),
            float(params.get("L", 3.0)),
            float(params.get("k0", 16.0)),
            width=float(params.get("width", 1.0)),
            grid=wgrid,
            ramp=params.get("ramp"),
            steps_per_ramp=int(params.get("steps_per_ramp", 40)),
        )
        return rep.to_dict() | {"amplification_error": rep.amplification_error, "transit_error": rep.transit_error}
    if probe == "spectrum_ladder":
        rep = dichotomy_probe(coeffs, grid.M, params.get("ladder", (64, 128, 256)))
        files.append(write_rows(out / "spectrum.csv", ["N", "re", "im"], rep.rows()))
        return rep.to_dict()
    raise ProbeRefused(f"unknown probe {probe!r}")


def _run_quasilinear(cfg: ScenarioConfig, out: Path, outcome: _Outcome, files: list) -> None:
    grid = cfg.grid()
    eq = quasilinear_equation(cfg)
    u0 = initial_field(cfg, grid)
    mol = MollifierSpec(grid, cfg.mollifier_epsilon) if cfg.mollifier_epsilon else None
    run = evolve_quasilinear(u0, eq, cfg.integrator, mollifier=mol, keep_fields=True)
    cols = run.trace.columns()
    for name in list(run.trace.extra):
        v = np.asarray(run.trace.extra[name])
        cols[f"drift_{name}"] = np.abs(v - v[0]) / abs(v[0])
    files.append(write_csv(out / "trace.csv", cols))
    files.append(write_csv(out / "guard.csv", {"t": run.guard.t, "m": run.guard.m}))
    if cfg.snapshots:
        files.append(_snapshot(out / "snapshot_initial.csv", grid, u0.values))
        files.append(_snapshot(out / "snapshot_final.csv", grid, run.final.values))
    outcome.summary["evolution"] = {
        "status": run.status,
        "steps": run.steps,
        "steps_taken": run.steps_taken,
        "dt": run.dt,
        "t_final": run.times[-1],
        "guard": run.guard.to_dict(),
    }
    if run.status == "BLOWUP":
        outcome.truncated = True
        outcome.flag(ExitCode.BLOWUP)
    elif run.status == "GUARD":
        outcome.truncated = True
        outcome.flag(ExitCode.GUARD)
    for probe in cfg.probes:
        params = cfg.params(probe)
        if probe == "conservation":
            tol = float(params.get("tolerance", 1e-6))
            drifts = {name: run.drift(name) for name in run.trace.extra}
            rec = {"drift": drifts, "tolerance": tol, "within_tolerance": all(d <= tol for d in drifts.values())}
        else:
            rep = energy_cascade_monitor(run, eq.n, eq.kind, perturbation=float(params.get("perturbation", 0.05)), mollifier=mol)
            rec = rep.to_dict()
        outcome.records.append({"probe": probe} | rec)


def run(cfg: ScenarioConfig, out_dir=None, seed: int | None = None) -> RunManifest:
    """Execute a scenario and write its outputs under ``out_dir/<name>``.

    Never raises for scenario failures: the manifest records the exit code,
    and partial outputs stay on disk with ``truncated`` set.
    """
    if seed is not None:
        from dataclasses import replace

        cfg = replace(cfg, seed=int(seed))
    base = Path(out_dir if out_dir is not None else cfg.output_dir)
    out = base / cfg.name
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    outcome = _Outcome()
    files: list[Path] = []
    error = None
    try:
        if cfg.is_linear:
            _run_linear(cfg, out, outcome, files)
        else:
            _run_quasilinear(cfg, out, outcome, files)
    except ProbeRefused as exc:
        outcome.flag(ExitCode.REFUSED)
        error = str(exc)
    except Exception as exc:  # every failure must still produce a manifest
        outcome.flag(ExitCode.INTERNAL)
        outcome.truncated = True
        error = f"{type(exc).__name__}: {exc}"
        outcome.summary["traceback"] = traceback.format_exc(limit=8)
    try:
        summary_record = {"probe": "summary", "exit_code": int(outcome.code), "status": outcome.code.name}
        summary_record |= jsonable({k: v for k, v in outcome.summary.items() if k != "traceback"})
        files.append(write_jsonl(out / "reports.jsonl", outcome.records + [summary_record]))
    except Exception as exc:
        outcome.flag(ExitCode.INTERNAL)
        error = error or f"{type(exc).__name__}: {exc}"
    manifest = RunManifest(
        name=cfg.name,
        config_hash=config_hash(cfg),
        tool_version=__version__,
        status=outcome.code.name,
        exit_code=int(outcome.code),
        wall_time=time.perf_counter() - started,
        files={p.name: sha256_file(p) for p in files},
        summary=outcome.summary | {"probes": [r.get("probe") for r in outcome.records]},
        truncated=outcome.truncated,
        error=error,
    )
    write_json_atomic(out / "manifest.json", manifest.to_dict())
    return manifest
