"""Scenario configuration files.

A scenario is an INI file.  Expressions are written as double-quoted
strings; numbers and identifiers are bare.  Sections and keys::

    [scenario]     name, equation, n, seed, evolve, probes
    [grid]         M, N
    [coefficients] a, b, c, d, e, T               (equation = LINEAR)
    [quasilinear]  delta, c2, zumbrun_a, unsafe   (other equations)
    [initial]      u0 | modes + const | random_scale + random_modes
    [integrator]   scheme, dt, cfl_c, t_end, output_every, blowup_factor
    [mollifier]    epsilon
    [output]       dir, snapshots
    [probe:NAME]   parameters of one probe

``equation`` is ``LINEAR`` or one of the quasilinear kinds.  ``modes`` is a
comma-separated list of ``sin:J:AMP`` / ``cos:J:AMP`` entries giving an
exactly band-limited initial field.  ``random_scale`` draws a seeded
random-phase field with amplitudes ``exp(-j/scale)`` on modes
``1..random_modes``.  ``M`` may be a constant expression such as ``2*pi``.
"""

from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coefficients import NAMES, CoefficientSet, WellPosedness, classify
from .expr import ExpressionDomainError, ExpressionSyntaxError, evaluate, parse, variables
from .integrators import IntegratorConfig
from .quasilinear import QuasilinearEquation, QuasilinearKind
from .spectral import Field, PeriodicGrid

__all__ = [
    "ConfigError",
    "ScenarioConfig",
    "LINEAR",
    "LINEAR_PROBES",
    "QUASILINEAR_PROBES",
    "load_config",
    "loads",
    "dumps",
    "validate",
    "initial_field",
    "coefficient_set",
    "quasilinear_equation",
]

LINEAR = "LINEAR"
LINEAR_PROBES = ("classify", "gauge_verify", "gronwall", "smoothing", "reversibility", "wave_packet", "spectrum_ladder")
QUASILINEAR_PROBES = ("conservation", "cancellation_monitor")
ALL_PROBES = LINEAR_PROBES + QUASILINEAR_PROBES

_SECTIONS = {
    "scenario": {"name", "equation", "n", "seed", "evolve", "probes"},
    "grid": {"M", "N"},
    "coefficients": set(NAMES) | {"T"},
    "quasilinear": {"delta", "c2", "zumbrun_a", "unsafe"},
    "initial": {"u0", "modes", "const", "random_scale", "random_modes"},
    "integrator": {"scheme", "dt", "cfl_c", "t_end", "output_every", "blowup_factor"},
    "mollifier": {"epsilon"},
    "output": {"dir", "snapshots"},
}
_PROBE_KEYS = {
    "classify": {"samples"},
    "gauge_verify": {"t", "tol"},
    "gronwall": {"energy"},
    "smoothing": {"refine"},
    "reversibility": {"t0", "norm_index"},
    "wave_packet": {"a0", "b0", "L", "k0", "width", "M", "N", "ramp", "steps_per_ramp"},
    "spectrum_ladder": {"ladder"},
    "conservation": {"tolerance"},
    "cancellation_monitor": {"perturbation"},
}


class ConfigError(ValueError):
    """Parse or validation error with an optional position and field name."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None, field: str | None = None):
        self.line = line
        self.column = column
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}" + (f", column {column}" if column is not None else ""))
        if field is not None:
            where.append(f"field {field!r}")
        super().__init__(f"{message} ({'; '.join(where)})" if where else message)


@dataclass
class ScenarioConfig:
    name: str
    equation: str = LINEAR
    M: float = 2 * math.pi
    N: int = 128
    n: int = 4
    coefficients: dict = field(default_factory=lambda: {k: "0" for k in NAMES} | {"a": "1"})
    T: float = 1.0
    initial: dict = field(default_factory=lambda: {"u0": "sin(x)"})
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    mollifier_epsilon: float | None = None
    quasilinear: dict = field(default_factory=dict)
    probes: tuple = ()
    probe_params: dict = field(default_factory=dict)
    output_dir: str = "out"
    snapshots: bool = True
    seed: int = 0
    evolve: bool = True

    @property
    def is_linear(self) -> bool:
        return self.equation == LINEAR

    def grid(self) -> PeriodicGrid:
        return PeriodicGrid(self.M, self.N)

    def params(self, probe: str) -> dict:
        return dict(self.probe_params.get(probe, {}))


# --------------------------------------------------------------------------
# parsing


def _unquote(value: str) -> str:
    v = value.strip()
    if len(v) >= 2 and v[0] == v[-1] and v[0] in "\"'":
        return v[1:-1]
    return v


def _locate(text: str, section: str, key: str) -> tuple[int | None, int | None]:
    """1-based line and column of ``key``'s value inside ``[section]``."""
    current = None
    for i, line in enumerate(text.splitlines(), start=1):
        s = line.strip()
        if s.startswith("[") and s.endswith("]"):
            current = s[1:-1].strip()
            continue
        if current == section:
            m = re.match(r"\s*([^=:\s]+)\s*[=:]\s*", line)
            if m and m.group(1) == key:
                col = m.end() + 1
                if line[m.end() : m.end() + 1] in "\"'" and m.end() < len(line):
                    col += 1
                return i, col
    return None, None


class _Reader:
    def __init__(self, text: str):
        self.text = text
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.MissingSectionHeaderError as exc:
            raise ConfigError("missing section header", exc.lineno, 1) from None
        except configparser.DuplicateOptionError as exc:
            raise ConfigError(f"duplicate key {exc.option!r}", exc.lineno, 1, exc.option) from None
        except configparser.DuplicateSectionError as exc:
            raise ConfigError(f"duplicate section {exc.section!r}", exc.lineno, 1) from None
        except configparser.ParsingError as exc:
            lineno = exc.errors[0][0] if exc.errors else None
            raise ConfigError("malformed line", lineno, 1) from None
        self.cp = cp
        for sec in cp.sections():
            if sec.startswith("probe:"):
                probe = sec[len("probe:") :]
                if probe not in _PROBE_KEYS:
                    raise ConfigError(f"unknown probe section [{sec}]", self._line_of_section(sec), 1)
                allowed = _PROBE_KEYS[probe]
            elif sec in _SECTIONS:
                allowed = _SECTIONS[sec]
            else:
                raise ConfigError(f"unknown section [{sec}]", self._line_of_section(sec), 1)
            for key in cp[sec]:
                if key not in allowed:
                    line, col = _locate(text, sec, key)
                    raise ConfigError(f"unknown key {key!r} in [{sec}]", line, col, f"{sec}.{key}")

    def _line_of_section(self, sec):
        for i, line in enumerate(self.text.splitlines(), start=1):
            if line.strip() == f"[{sec}]":
                return i
        return None

    def has(self, sec, key):
        return self.cp.has_option(sec, key)

    def raw(self, sec, key, default=None):
        if not self.has(sec, key):
            return default
        return _unquote(self.cp[sec][key])

    def fail(self, sec, key, message, offset=0):
        line, col = _locate(self.text, sec, key)
        raise ConfigError(message, line, None if col is None else col + offset, f"{sec}.{key}")

    def number(self, sec, key, default=None, kind=float):
        v = self.raw(sec, key)
        if v is None:
            return default
        try:
            if kind is int:
                f = float(v)
                if f != int(f):
                    raise ValueError
                return int(f)
            return float(v)
        except ValueError:
            pass
        if kind is float:
            return self.constant(sec, key)
        self.fail(sec, key, f"expected an integer, got {v!r}")

    def constant(self, sec, key):
        src = self.raw(sec, key)
        node = self.expression(sec, key)
        if variables(node):
            self.fail(sec, key, f"expected a constant, got {src!r}")
        try:
            return float(evaluate(node))
        except ExpressionDomainError as exc:
            self.fail(sec, key, str(exc))

    def expression(self, sec, key):
        src = self.raw(sec, key)
        try:
            return parse(src)
        except ExpressionSyntaxError as exc:
            self.fail(sec, key, f"invalid expression: {exc}", exc.offset)

    def boolean(self, sec, key, default):
        if not self.has(sec, key):
            return default
        try:
            return self.cp.getboolean(sec, key)
        except ValueError:
            self.fail(sec, key, f"expected a boolean, got {self.raw(sec, key)!r}")


def _parse_modes(spec: str) -> list[tuple[str, int, float]]:
    out = []
    for item in filter(None, (s.strip() for s in spec.split(","))):
        parts = item.split(":")
        if len(parts) != 3 or parts[0] not in ("sin", "cos"):
            raise ValueError(f"mode entries look like sin:J:AMP or cos:J:AMP, got {item!r}")
        out.append((parts[0], int(parts[1]), float(parts[2])))
    if not out:
        raise ValueError("modes list is empty")
    return out


def loads(text: str, source: str = "<string>") -> ScenarioConfig:
    """Parse and validate a scenario from INI text."""
    r = _Reader(text)
    if not r.cp.has_section("scenario") or not r.has("scenario", "name"):
        raise ConfigError("[scenario] must define a name", field="scenario.name")
    name = r.raw("scenario", "name")
    equation = (r.raw("scenario", "equation") or LINEAR).upper()
    if equation != LINEAR:
        try:
            QuasilinearKind(equation)
        except ValueError:
            r.fail("scenario", "equation", f"unknown equation {equation!r}")
    probes_raw = r.raw("scenario", "probes") or ""
    probes = tuple(p.strip() for p in probes_raw.split(",") if p.strip())
    for p in probes:
        if p not in ALL_PROBES:
            r.fail("scenario", "probes", f"unknown probe {p!r}")
    coeffs = {k: "0" for k in NAMES} | {"a": "1"}
    for k in NAMES:
        if r.has("coefficients", k):
            r.expression("coefficients", k)
            coeffs[k] = r.raw("coefficients", k)
    initial = {}
    for k in ("u0", "modes"):
        if r.has("initial", k):
            initial[k] = r.raw("initial", k)
    if "u0" in initial:
        node = r.expression("initial", "u0")
        if "t" in variables(node):
            r.fail("initial", "u0", "initial data may not depend on t")
    if "modes" in initial:
        try:
            _parse_modes(initial["modes"])
        except ValueError as exc:
            r.fail("initial", "modes", str(exc))
    for k in ("const", "random_scale"):
        if r.has("initial", k):
            initial[k] = r.number("initial", k)
    if r.has("initial", "random_modes"):
        initial["random_modes"] = r.number("initial", "random_modes", kind=int)
    if not initial:
        initial = {"u0": "sin(x)"}
    integ = {}
    for k, kind in (("cfl_c", float), ("t_end", float), ("output_every", int), ("blowup_factor", float)):
        if r.has("integrator", k):
            integ[k] = r.number("integrator", k, kind=kind)
    if r.has("integrator", "scheme"):
        integ["scheme"] = r.raw("integrator", "scheme").upper()
    if r.has("integrator", "dt"):
        dt = r.raw("integrator", "dt")
        integ["dt"] = "AUTO" if dt.upper() == "AUTO" else r.number("integrator", "dt")
    try:
        integrator = IntegratorConfig(**integ)
    except ValueError as exc:
        raise ConfigError(str(exc), field="integrator") from None
    ql = {}
    for k in ("delta", "c2", "zumbrun_a"):
        if r.has("quasilinear", k):
            ql[k] = r.number("quasilinear", k)
    if r.has("quasilinear", "unsafe"):
        ql["unsafe"] = r.boolean("quasilinear", "unsafe", False)
    probe_params = {}
    for sec in r.cp.sections():
        if sec.startswith("probe:"):
            probe = sec[len("probe:") :]
            params = {}
            for key in r.cp[sec]:
                v = r.raw(sec, key)
                if probe == "spectrum_ladder" and key == "ladder":
                    try:
                        params[key] = tuple(int(s) for s in v.split(","))
                    except ValueError:
                        r.fail(sec, key, f"ladder must be a comma-separated list of integers, got {v!r}")
                elif probe == "gronwall" and key == "energy":
                    params[key] = v
                elif probe == "smoothing" and key == "refine":
                    params[key] = r.boolean(sec, key, False)
                elif key in ("N", "norm_index", "steps_per_ramp", "samples"):
                    params[key] = r.number(sec, key, kind=int)
                else:
                    params[key] = r.number(sec, key)
            probe_params[probe] = params
    cfg = ScenarioConfig(
        name=name,
        equation=equation,
        M=r.number("grid", "M", 2 * math.pi),
        N=r.number("grid", "N", 128, kind=int),
        n=r.number("scenario", "n", 4, kind=int),
        coefficients=coeffs,
        T=r.number("coefficients", "T", 1.0),
        initial=initial,
        integrator=integrator,
        mollifier_epsilon=r.number("mollifier", "epsilon", None),
        quasilinear=ql,
        probes=probes,
        probe_params=probe_params,
        output_dir=r.raw("output", "dir", "out"),
        snapshots=r.boolean("output", "snapshots", True),
        seed=r.number("scenario", "seed", 0, kind=int),
        evolve=r.boolean("scenario", "evolve", True),
    )
    validate(cfg, r)
    return cfg


def load_config(path) -> ScenarioConfig:
    """Read, parse and validate a scenario file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} does not exist")
    return loads(path.read_text(encoding="utf-8"), str(path))


# --------------------------------------------------------------------------
# validation


def coefficient_set(cfg: ScenarioConfig) -> CoefficientSet:
    return CoefficientSet(**cfg.coefficients, T=cfg.T)


def quasilinear_equation(cfg: ScenarioConfig) -> QuasilinearEquation:
    return QuasilinearEquation(cfg.equation, n=cfg.n, **cfg.quasilinear)


def initial_field(cfg: ScenarioConfig, grid: PeriodicGrid | None = None) -> Field:
    """Initial data on the scenario grid."""
    grid = grid or cfg.grid()
    init = cfg.initial
    if "u0" in init:
        vals = evaluate(parse(init["u0"]), grid.x, 0.0)
        return Field(grid, np.broadcast_to(np.asarray(vals, dtype=float), (grid.N,)))
    if "random_scale" in init:
        rng = np.random.default_rng(cfg.seed)
        jmax = int(init.get("random_modes", grid.cutoff))
        j = np.arange(1, jmax + 1)
        hat = np.zeros(grid.N // 2 + 1, dtype=complex)
        phase = rng.uniform(0.0, 2.0 * np.pi, j.size)
        hat[j] = 0.5 * grid.N * np.exp(-j / init["random_scale"]) * np.exp(1j * phase)
        hat[0] = init.get("const", 0.0) * grid.N
        return Field.from_hat(grid, hat)
    sin, cos = {}, {}
    for kind, j, amp in _parse_modes(init["modes"]):
        (sin if kind == "sin" else cos)[j] = (sin if kind == "sin" else cos).get(j, 0.0) + amp
    return Field.trig(grid, sin=sin, cos=cos, const=init.get("const", 0.0))


def validate(cfg: ScenarioConfig, reader: _Reader | None = None) -> None:
    """Cross-field checks: grid, probe compatibility, positivity and probe gates."""

    def fail(sec, key, msg):
        if reader is not None and reader.has(sec, key):
            reader.fail(sec, key, msg)
        raise ConfigError(msg, field=f"{sec}.{key}")

    try:
        grid = cfg.grid()
    except ValueError as exc:
        fail("grid", "N", str(exc))
    if cfg.n < 0:
        fail("scenario", "n", "regularity index must be non-negative")
    if cfg.mollifier_epsilon is not None and not cfg.mollifier_epsilon > 0:
        fail("mollifier", "epsilon", "mollifier epsilon must be positive")
    allowed = LINEAR_PROBES if cfg.is_linear else QUASILINEAR_PROBES
    for p in cfg.probes:
        if p not in allowed:
            fail("scenario", "probes", f"probe {p!r} is not available for equation {cfg.equation}")
    for p in cfg.probe_params:
        if p not in cfg.probes:
            raise ConfigError(f"parameters given for probe {p!r}, which is not enabled", field=f"probe:{p}")
    try:
        u0 = initial_field(cfg, grid)
    except (ValueError, ExpressionDomainError) as exc:
        fail("initial", next(iter(cfg.initial)), f"initial data cannot be evaluated: {exc}")
    if cfg.is_linear:
        _validate_linear(cfg, grid, fail)
    else:
        try:
            eq = quasilinear_equation(cfg)
        except ValueError as exc:
            raise ConfigError(str(exc), field="quasilinear") from None
        if eq.requires_positivity and not np.min(u0.values) > 0:
            j = int(np.argmin(u0.values))
            fail(
                "initial",
                next(iter(cfg.initial)),
                f"{cfg.equation} needs positive initial data; min u0 = {u0.values[j]:.6g} at x = {grid.x[j]:.6g}",
            )
        if "cancellation_monitor" in cfg.probes and not eq.is_w_form:
            fail("scenario", "probes", "cancellation_monitor needs a w-form equation (K22_W or HARRY_DYM_W)")
        if cfg.mollifier_epsilon is not None and not eq.is_w_form:
            fail("mollifier", "epsilon", "a mollified system exists only for the w-forms")


def _validate_linear(cfg: ScenarioConfig, grid: PeriodicGrid, fail) -> None:
    try:
        coeffs = coefficient_set(cfg)
        coeffs.sample(grid, 0.0)
    except (ValueError, ExpressionDomainError) as exc:
        raise ConfigError(f"coefficients cannot be evaluated: {exc}", field="coefficients") from None
    gated = {"reversibility": WellPosedness.REVERSIBLE, "smoothing": WellPosedness.SMOOTHING}
    needs_verdict = [p for p in cfg.probes if p in gated]
    needs_nondegenerate = needs_verdict + [p for p in cfg.probes if p in ("gauge_verify", "spectrum_ladder", "gronwall")]
    if needs_nondegenerate:
        t0 = cfg.params("reversibility").get("t0", cfg.integrator.t_end)
        times = np.linspace(0.0, t0 if "reversibility" in cfg.probes else cfg.T, 64)
        verdict = classify(coeffs, grid, times)
        if verdict.klass is WellPosedness.DEGENERATE:
            fail("scenario", "probes", "probes need non-degenerate dispersion; a vanishes or changes sign")
        for p in needs_verdict:
            if verdict.klass is not gated[p]:
                fail("scenario", "probes", f"probe {p!r} needs a {gated[p].value} problem, got {verdict.klass.value}")
    if "spectrum_ladder" in cfg.probes:
        if coeffs.depends_on_t:
            fail("scenario", "probes", "spectrum_ladder needs time-independent coefficients")
        ladder = cfg.params("spectrum_ladder").get("ladder", (64, 128, 256))
        if len(ladder) < 2 or any(n < 16 or n % 2 or n > 1024 for n in ladder):
            raise ConfigError("ladder needs at least two even sizes in 16..1024", field="probe:spectrum_ladder.ladder")


# --------------------------------------------------------------------------
# serialization


def _q(s: str) -> str:
    return f'"{s}"'


def _num(v) -> str:
    return repr(int(v)) if isinstance(v, (int, np.integer)) and not isinstance(v, bool) else repr(float(v))


def dumps(cfg: ScenarioConfig) -> str:
    """INI text that :func:`loads` maps back to an equal config."""
    lines = ["[scenario]", f"name = {cfg.name}", f"equation = {cfg.equation}", f"n = {cfg.n}", f"seed = {cfg.seed}"]
    lines.append(f"evolve = {'true' if cfg.evolve else 'false'}")
    lines.append(f"probes = {', '.join(cfg.probes)}")
    lines += ["", "[grid]", f"M = {_num(cfg.M)}", f"N = {cfg.N}"]
    lines += ["", "[coefficients]"]
    if cfg.is_linear:
        lines += [f"{k} = {_q(cfg.coefficients[k])}" for k in NAMES]
    lines.append(f"T = {_num(cfg.T)}")
    if cfg.quasilinear:
        lines += ["", "[quasilinear]"]
        for k, v in cfg.quasilinear.items():
            lines.append(f"{k} = {'true' if v is True else 'false' if v is False else _num(v)}")
    lines += ["", "[initial]"]
    for k, v in cfg.initial.items():
        lines.append(f"{k} = {_q(v)}" if isinstance(v, str) else f"{k} = {_num(v)}")
    ic = cfg.integrator
    lines += [
        "",
        "[integrator]",
        f"scheme = {ic.scheme.value}",
        f"dt = {ic.dt if ic.dt == 'AUTO' else _num(ic.dt)}",
        f"cfl_c = {_num(ic.cfl_c)}",
        f"t_end = {_num(ic.t_end)}",
        f"output_every = {ic.output_every}",
        f"blowup_factor = {_num(ic.blowup_factor)}",
    ]
    if cfg.mollifier_epsilon is not None:
        lines += ["", "[mollifier]", f"epsilon = {_num(cfg.mollifier_epsilon)}"]
    lines += ["", "[output]", f"dir = {cfg.output_dir}", f"snapshots = {'true' if cfg.snapshots else 'false'}"]
    for probe, params in cfg.probe_params.items():
        lines += ["", f"[probe:{probe}]"]
        for k, v in params.items():
            if isinstance(v, tuple):
                lines.append(f"{k} = {', '.join(str(i) for i in v)}")
            elif isinstance(v, bool):
                lines.append(f"{k} = {'true' if v else 'false'}")
            elif isinstance(v, str):
                lines.append(f"{k} = {v}")
            else:
                lines.append(f"{k} = {_num(v)}")
    return "\n".join(lines) + "\n"

