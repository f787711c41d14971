"""Command-line front end.

Subcommands: ``scenario``, ``fig1``, ``fig2``, ``pdf-dump``, ``surface-dump``.
Every invocation writes its CSV outputs plus ``<subcommand>.manifest.json``
into ``--out``. Passing that manifest back through ``--config`` re-runs
the same configuration.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from . import __version__
from .channel import despread, generate_channel, received_pilot_signal, trace_csv
from .estimator import SearchGrid, likelihood_surface
from .experiments import (
    ScenarioConfig,
    plot_sweep,
    resolve_threads,
    results_csv,
    run_scenario,
    sweep_fig1,
    sweep_fig2,
)
from .likelihood import LikelihoodParams, pdf_csv
from .pilots import Scheme, build_pilot_book, co_pilot_assignments, make_schedule

log = logging.getLogger("pilot_selflearn")


class ConfigError(ValueError):
    pass


# config key -> (ScenarioConfig field or grid part, type)
_KEYS = {
    "scheme": str,
    "snr1_db": float,
    "snr2_db": float,
    "blocks": int,
    "drops": int,
    "seed": int,
    "quad_nodes": int,
    "rho_p": float,
    "tau_p": int,
    "channel_model": str,
    "los_phase": str,
    "noiseless": bool,
    "grid_min_db": float,
    "grid_max_db": float,
    "grid_step_db": float,
    "refine_step_db": float,
    "refine_half_width_db": float,
}
_POSITIVE = {"blocks", "drops", "quad_nodes", "tau_p", "rho_p", "grid_step_db", "refine_step_db"}


def _coerce(key: str, value):
    kind = _KEYS[key]
    if kind is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{key}: expected true/false, got {value!r}")
        return value
    if kind is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)) or int(value) != value:
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        value = int(value)
    elif kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        value = float(value)
    elif not isinstance(value, str):
        raise ConfigError(f"{key}: expected a string, got {value!r}")
    if key in _POSITIVE and value <= 0:
        raise ConfigError(f"{key}: must be positive, got {value!r}")
    if key == "quad_nodes" and value < 2:
        raise ConfigError(f"quad_nodes: must be at least 2, got {value!r}")
    return value


def build_config(values: dict) -> ScenarioConfig:
    """Validate a flat key/value mapping and turn it into a ``ScenarioConfig``."""
    unknown = sorted(set(values) - set(_KEYS))
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    v = {k: _coerce(k, x) for k, x in values.items()}
    grid = SearchGrid.uniform(
        v.pop("grid_min_db", -20.0),
        v.pop("grid_max_db", 40.0),
        v.pop("grid_step_db", 1.0),
        refine_step_db=v.pop("refine_step_db", 0.1),
        refine_half_width_db=v.pop("refine_half_width_db", 1.0),
    )
    if "blocks" in v:
        v["block_count"] = v.pop("blocks")
    try:
        if "scheme" in v:
            v["scheme"] = Scheme.parse(v["scheme"])
        return ScenarioConfig(grid=grid, **v)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _read_mapping(path: Path) -> dict:
    text = path.read_text()
    if path.suffix == ".json":
        data = json.loads(text)
        # a run manifest stores its flat config under "config"
        return dict(data.get("config", data))
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: malformed config: {exc}") from exc


def load_config(path, overrides: dict | None = None) -> ScenarioConfig:
    """Read a flat TOML config (or a run manifest); ``overrides`` win over file values."""
    path = Path(path)
    try:
        values = _read_mapping(path)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    nested = [k for k, x in values.items() if isinstance(x, dict)]
    if nested:
        raise ConfigError(f"config must be flat key = value pairs; nested table(s): {', '.join(nested)}")
    values.update({k: x for k, x in (overrides or {}).items() if x is not None})
    return build_config(values)


def flat_config(cfg: ScenarioConfig) -> dict:
    """Inverse of ``build_config`` for uniform grids."""
    g = cfg.grid.beta_values_db
    step = float(g[1] - g[0]) if g.size > 1 else 1.0
    return {
        "scheme": cfg.scheme.value,
        "snr1_db": float(cfg.snr1_db),
        "snr2_db": float(cfg.snr2_db),
        "blocks": cfg.block_count,
        "drops": cfg.drops,
        "seed": cfg.seed,
        "quad_nodes": cfg.quad_nodes,
        "rho_p": float(cfg.rho_p),
        "tau_p": cfg.tau_p,
        "channel_model": cfg.channel_model.value,
        "los_phase": cfg.los_phase,
        "noiseless": cfg.noiseless,
        "grid_min_db": float(g[0]),
        "grid_max_db": float(g[-1]),
        "grid_step_db": step,
        "refine_step_db": cfg.grid.refine_step_db,
        "refine_half_width_db": cfg.grid.refine_half_width_db,
    }


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="flat TOML config file or a previous run manifest")
    p.add_argument("--seed", type=int)
    p.add_argument("--drops", type=int)
    p.add_argument("--out", type=Path, default=Path("results"))
    p.add_argument("--threads", type=int, help="worker threads, 0 = all cores (env PILOT_SELFLEARN_THREADS)")
    p.add_argument("--quad-nodes", dest="quad_nodes", type=int)


def _scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scheme", choices=[s.value for s in Scheme])
    p.add_argument("--snr1", dest="snr1_db", type=float, help="rho_p * beta_1 in dB")
    p.add_argument("--snr2", dest="snr2_db", type=float, help="rho_p * beta_2 in dB")
    p.add_argument("--blocks", type=int, help="coherence blocks I")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pilot-selflearn", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("scenario", help="NMSE for a single scenario point")
    _common(p)
    _scenario_flags(p)
    p.add_argument("--trace", action="store_true", help="also dump per-drop de-spread observations")

    p = sub.add_parser("fig1", help="NMSE versus path-loss gap, all schemes")
    _common(p)
    _scenario_flags(p)
    p.add_argument("--svg", action="store_true")

    p = sub.add_parser("fig2", help="mean NMSE versus I (left) and versus SNR (right)")
    _common(p)
    _scenario_flags(p)
    p.add_argument("--side", choices=["left", "right", "both"], default="both")
    p.add_argument("--svg", action="store_true")

    p = sub.add_parser("pdf-dump", help="tabulate the observation density")
    p.add_argument("--beta1", type=float, required=True)
    p.add_argument("--beta2", type=float, required=True)
    p.add_argument("--tmax", type=float, required=True)
    p.add_argument("--points", type=int, default=1000)
    p.add_argument("--noise-var", dest="noise_var", type=float, default=1.0)
    p.add_argument("--quad-nodes", dest="quad_nodes", type=int, default=64)
    p.add_argument("--out", type=Path, default=Path("results"))

    p = sub.add_parser("surface-dump", help="log-likelihood surface for one simulated drop")
    _common(p)
    _scenario_flags(p)
    return parser


_OVERRIDE_KEYS = ("scheme", "snr1_db", "snr2_db", "blocks", "drops", "seed", "quad_nodes")


def resolve_config(args: argparse.Namespace, **defaults) -> ScenarioConfig:
    overrides = {k: getattr(args, k, None) for k in _OVERRIDE_KEYS}
    if args.config is not None:
        return load_config(args.config, overrides)
    values = dict(defaults)
    values.update({k: x for k, x in overrides.items() if x is not None})
    return build_config(values)


def _write(out: Path, name: str, text: str, written: list) -> None:
    path = out / name
    path.write_text(text)
    written.append(name)


def _write_manifest(out: Path, command: str, argv, cfg, extra, started, written) -> None:
    manifest = {
        "tool": "pilot-selflearn",
        "version": __version__,
        "command": command,
        "argv": list(argv),
        "config": cfg,
        "seed": cfg.get("seed") if cfg else None,
        "started": started,
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "outputs": written,
        **extra,
    }
    (out / f"{command}.manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _simulate_observation(cfg: ScenarioConfig, seed_seq):
    ch_seed, noise_seed, sched_seed = seed_seq.spawn(3)
    beta1, beta2 = cfg.betas
    book = build_pilot_book(cfg.tau_p)
    schedule2 = make_schedule(cfg.scheme, cfg.block_count, sched_seed)
    channel = generate_channel(beta1, beta2, cfg.block_count, cfg.channel_model, ch_seed, los_phase=cfg.los_phase)
    y = received_pilot_signal(
        channel, book, co_pilot_assignments(schedule2), cfg.rho_p, noise_seed, noise=not cfg.noiseless
    )
    return despread(y, book, 0, cfg.rho_p)


def run(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = make_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    written: list[str] = []
    try:
        out: Path = args.out
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise OSError(f"output directory {out} is not writable")
        extra: dict = {}
        cfg_dict = None

        if args.command == "pdf-dump":
            if args.points < 1 or args.tmax <= 0:
                raise ConfigError("--points must be >= 1 and --tmax > 0")
            params = LikelihoodParams(args.beta1, args.beta2)
            t = np.linspace(0.0, args.tmax, args.points)
            _write(out, "pdf.csv", pdf_csv(t, params, args.quad_nodes, args.noise_var), written)
            extra = {"pdf": {k: getattr(args, k) for k in ("beta1", "beta2", "tmax", "points", "noise_var", "quad_nodes")}}
        else:
            threads = resolve_threads(args.threads)
            extra["threads"] = threads
            if args.command == "scenario":
                cfg = resolve_config(args)
                log.info("running %s", cfg)
                result = run_scenario(cfg, threads)
                _write(out, "scenario.csv", results_csv([result]), written)
                if args.trace:
                    children = np.random.SeedSequence(cfg.seed).spawn(cfg.drops)
                    _write(out, "trace.csv", trace_csv(_simulate_observation(cfg, s) for s in children), written)
            elif args.command == "fig1":
                cfg = resolve_config(args, snr1_db=20.0, blocks=10)
                rows = sweep_fig1(cfg, threads=threads)
                _write(out, "fig1.csv", results_csv(rows), written)
                if args.svg:
                    for y in ("nmse1", "nmse2"):
                        plot_sweep(rows, "gap", out / f"fig1_{y}.svg", y=y)
                        written.append(f"fig1_{y}.svg")
            elif args.command == "fig2":
                cfg = resolve_config(args, snr1_db=20.0, blocks=10)
                left, right = sweep_fig2(cfg, side=args.side, threads=threads)
                for name, rows, x in (("left", left, "I"), ("right", right, "snr")):
                    if rows:
                        _write(out, f"fig2_{name}.csv", results_csv(rows), written)
                        if args.svg:
                            plot_sweep(rows, x, out / f"fig2_{name}.svg")
                            written.append(f"fig2_{name}.svg")
                extra["side"] = args.side
            else:  # surface-dump
                cfg = resolve_config(args)
                obs = _simulate_observation(cfg, np.random.SeedSequence(cfg.seed).spawn(1)[0])
                axis = cfg.grid.beta_values_db
                surf = likelihood_surface(obs, axis, axis, cfg.quad_nodes)
                _write(out, "surface.csv", surf.to_csv(), written)
                _write(out, "trace.csv", trace_csv([obs]), written)
            cfg_dict = flat_config(cfg)
        _write_manifest(out, args.command, argv, cfg_dict, extra, started, written)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"pilot-selflearn: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
