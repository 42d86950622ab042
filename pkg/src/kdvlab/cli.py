"""Command-line entry point.

::

    kdvlab run SCENARIO.ini [...] [--out DIR] [--seed S] [--workers W]
    kdvlab presets list
    kdvlab presets run NAME [...] | --all
    kdvlab classify SCENARIO.ini
    kdvlab spectrum SCENARIO.ini [--ladder 64,128,256]

Exit codes: 0 success, 1 internal error, 2 usage error, 3 blow-up,
4 positivity guard halt, 5 probe refused or invalid scenario.  For a batch
the code is 1 if any scenario failed internally, otherwise the largest code.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor

from . import __version__
from .coefficients import classify, default_time_lattice
from .config import ConfigError, coefficient_set, load_config
from .io import jsonable
from .presets import preset_library, preset_path
from .runner import ExitCode, run
from .spectrum import dichotomy_probe

__all__ = ["main", "batch_exit_code"]


def batch_exit_code(codes) -> int:
    codes = list(codes)
    if not codes:
        return 0
    if ExitCode.INTERNAL in codes:
        return int(ExitCode.INTERNAL)
    return int(max(codes))


def _run_one(path: str, out: str | None, seed: int | None) -> tuple[str, int, str]:
    try:
        cfg = load_config(path)
    except ConfigError as exc:
        return path, int(ExitCode.REFUSED), f"invalid scenario: {exc}"
    m = run(cfg, out_dir=out, seed=seed)
    detail = m.error or ""
    return cfg.name, m.exit_code, detail


def _run_many(paths, args) -> int:
    jobs = [(str(p), args.out, args.seed) for p in paths]
    if args.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_run_one, *zip(*jobs)))
    else:
        results = [_run_one(*j) for j in jobs]
    for name, code, detail in results:
        line = f"{name}: {ExitCode(code).name} ({code})"
        print(line + (f" {detail}" if detail else ""))
    return batch_exit_code(code for _, code, _ in results)


def _cmd_run(args) -> int:
    return _run_many(args.configs, args)


def _cmd_presets(args) -> int:
    if args.action == "list":
        for name, path in preset_library().items():
            print(f"{name}\t{path}")
        return 0
    if args.all:
        paths = list(preset_library().values())
    elif args.names:
        try:
            paths = [preset_path(n) for n in args.names]
        except KeyError as exc:
            print(f"error: {exc.args[0]}", file=sys.stderr)
            return int(ExitCode.REFUSED)
    else:
        print("error: give preset names or --all", file=sys.stderr)
        return 2
    return _run_many(paths, args)


def _load_linear(path):
    cfg = load_config(path)
    if not cfg.is_linear:
        raise ConfigError(f"{cfg.name}: this command needs a LINEAR scenario, got {cfg.equation}")
    return cfg


def _cmd_classify(args) -> int:
    try:
        cfg = _load_linear(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return int(ExitCode.REFUSED)
    verdict = classify(coefficient_set(cfg), cfg.grid(), default_time_lattice(cfg.T, args.samples))
    record = {"name": cfg.name} | verdict.to_dict()
    print(json.dumps(jsonable(record), sort_keys=True))
    return 0


def _cmd_spectrum(args) -> int:
    try:
        cfg = _load_linear(args.config)
        ladder = tuple(int(s) for s in args.ladder.split(","))
    except (ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return int(ExitCode.REFUSED)
    rep = dichotomy_probe(coefficient_set(cfg), cfg.M, ladder, workers=args.workers)
    print(f"{'N':>6} {'bandwidth':>10} {'max Re':>14} {'delta_bar':>12} {'pairing':>10}")
    for N in rep.N:
        i = rep.N.index(N)
        print(f"{N:>6} {int(rep.bandwidth[i]):>10} {rep.max_re[i]:>14.6g} {rep.delta_bar:>12.6g} {rep.pairing_error[i]:>10.3g}")
    print(f"growth exponent {rep.growth_exponent:.4g}; verdict {rep.verdict}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kdvlab", description="Variable-coefficient third-order dispersive equation lab")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def batch_opts(sp):
        sp.add_argument("--out", default=None, help="output root (default: the scenario's [output] dir)")
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        sp.add_argument("--workers", type=int, default=1, help="scenarios to run in parallel")

    sp = sub.add_parser("run", help="run scenario files")
    sp.add_argument("configs", nargs="+")
    batch_opts(sp)
    sp.set_defaults(func=_cmd_run)

    sp = sub.add_parser("presets", help="list or run bundled scenarios")
    sp.add_argument("action", choices=["list", "run"])
    sp.add_argument("names", nargs="*")
    sp.add_argument("--all", action="store_true", help="run every preset")
    batch_opts(sp)
    sp.set_defaults(func=_cmd_presets)

    sp = sub.add_parser("classify", help="print the well-posedness verdict as one JSON line")
    sp.add_argument("config")
    sp.add_argument("--samples", type=int, default=64)
    sp.set_defaults(func=_cmd_classify)

    sp = sub.add_parser("spectrum", help="discrete spectrum ladder and dichotomy verdict")
    sp.add_argument("config")
    sp.add_argument("--ladder", default="64,128,256")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=_cmd_spectrum)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return int(args.func(args))


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
