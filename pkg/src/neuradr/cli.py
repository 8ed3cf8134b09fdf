"""Command-line experiment runner.

Usage::

    neuradr <command> [--config FILE] --out DIR [--set section.key=value ...]

Commands: evolve, attractor, train, explain, report, sweep.  ``--config``
takes an INI file or a ``manifest.json`` written by an earlier run.
"""
from __future__ import annotations

import argparse
import configparser
import copy
import logging
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import io
from .dynamics import DivergenceError, RelaxConfig, evolve, find_attractor
from .field import Activation, Field, Grid1D
from .kernels import (
    ContinuumKernel,
    DenseKernel,
    assemble_adr_stencil,
    capacity_report,
    explain_kernel,
    identity_kernel,
    kernel_moments,
    sample_continuum_kernel,
)
from .training import ADRParams, ParamMode, TrainConfig, fit, parameter_count, running_losses

log = logging.getLogger("neuradr")

EXIT_CONFIG = 2
EXIT_DIVERGED = 3
EXIT_INPUT = 4


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.key = key
        super().__init__(f"{key}: {message}")


def _positive(v):
    return v > 0


def _nonneg(v):
    return v >= 0


def _at_least(m):
    return lambda v: v >= m


def _unit_interval(v):
    return 0 < v <= 1


@dataclass(frozen=True)
class Option:
    kind: type | tuple  # int, float, str, bool, or a tuple of allowed strings
    default: object
    check: object = None
    rule: str = ""


# section -> key -> Option.  A default of None means "unset".
SCHEMA = {
    "grid": {
        "n": Option(int, 64, _at_least(2), ">= 2"),
        "delta": Option(float, 1.0, _positive, "> 0"),
        "origin": Option(float, 0.0),
        "boundary": Option(("periodic", "zeropad"), "periodic"),
    },
    "kernel": {
        "type": Option(("adr", "identity", "dense", "gaussian", "powerlaw"), "adr"),
        "U": Option(float, 0.0),
        "D": Option(float, 0.0),
        "R": Option(float, 0.0),
        "matrix": Option(str, None),
        "amplitude": Option(float, None),
        "sigma": Option(float, 1.0, _positive, "> 0"),
        "exponent": Option(float, 2.0, _positive, "> 0"),
        "cutoff": Option(float, 1.0, _positive, "> 0"),
    },
    "initial": {
        "profile": Option(("gaussian-bump", "step", "constant", "file"), "gaussian-bump"),
        "path": Option(str, None),
        "center": Option(float, None),
        "width": Option(float, None, _positive, "> 0"),
        "value": Option(float, 1.0),
        "normalize": Option(bool, True),
    },
    "bias": {
        "value": Option(float, 0.0),
        "path": Option(str, None),
    },
    "dynamics": {
        "activation": Option(tuple(a.value for a in Activation), "tanh"),
        "omega": Option(float, 1.0, _unit_interval, "in (0, 1]"),
        "steps": Option(int, 1, _at_least(1), ">= 1"),
        "norm_coupling": Option(float, 0.0, _nonneg, ">= 0"),
        "norm_kind": Option(("integral", "discrete"), "integral"),
    },
    "attractor": {
        "tol": Option(float, 1e-10, _positive, "> 0"),
        "max_iters": Option(int, 10_000, _at_least(0), ">= 0"),
    },
    "train": {
        "mode": Option(tuple(m.value for m in ParamMode), "homogeneous"),
        "target": Option(str, None),
        "lr": Option(float, 1.0, _positive, "> 0"),
        "tolerance": Option(float, 1e-6, _positive, "> 0"),
        "max_iters": Option(int, 5000, _at_least(1), ">= 1"),
        "gradient_mode": Option(("chain_rule", "finite_difference"), "chain_rule"),
        "step_rule": Option(("bb", "fixed"), "bb"),
        "init_U": Option(float, 0.0),
        "init_D": Option(float, 0.0),
        "init_R": Option(float, 0.0),
    },
    "explain": {
        "matrix": Option(str, None),
        "max_order": Option(int, 4, _at_least(2), ">= 2"),
    },
    "report": {
        "N": Option(int, 1000, _at_least(1), ">= 1"),
        "L": Option(int, 100, _at_least(1), ">= 1"),
        "d": Option(int, 1, _at_least(1), ">= 1"),
    },
    "sweep": {
        "key": Option(str, "train.lr"),
        "values": Option(str, None),
        "workers": Option(int, 4, _at_least(1), ">= 1"),
    },
}

PATH_KEYS = {("kernel", "matrix"), ("initial", "path"), ("bias", "path"), ("train", "target"), ("explain", "matrix")}


def _parse(section, key, raw):
    opt = SCHEMA[section][key]
    name = f"{section}.{key}"
    if raw is None or (isinstance(raw, str) and raw.strip() == "" and opt.kind is not str):
        value = None
    elif isinstance(opt.kind, tuple):
        value = str(raw).strip().lower()
        if value not in opt.kind:
            raise ConfigError(name, f"must be one of {', '.join(opt.kind)} (got {raw!r})")
    elif opt.kind is bool:
        if isinstance(raw, bool):
            value = raw
        else:
            s = str(raw).strip().lower()
            if s not in ("true", "false", "yes", "no", "1", "0", "on", "off"):
                raise ConfigError(name, f"expected a boolean (got {raw!r})")
            value = s in ("true", "yes", "1", "on")
    elif opt.kind is int:
        try:
            f = float(raw)
        except (TypeError, ValueError):
            raise ConfigError(name, f"expected an integer (got {raw!r})") from None
        if not f.is_integer():
            raise ConfigError(name, f"expected an integer (got {raw!r})")
        value = int(f)
    elif opt.kind is float:
        try:
            value = float(raw)
        except (TypeError, ValueError):
            raise ConfigError(name, f"expected a number (got {raw!r})") from None
        if not math.isfinite(value):
            raise ConfigError(name, f"must be finite (got {raw!r})")
    else:
        value = str(raw)
        if value == "":
            value = None
    if value is not None and opt.check is not None and not opt.check(value):
        raise ConfigError(name, f"must be {opt.rule} (got {value!r})")
    return value


def load_config(path=None, overrides=()) -> dict:
    """Resolve defaults, then the config file, then ``section.key=value`` overrides."""
    raw = {s: {} for s in SCHEMA}
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError("--config", f"file not found: {p}")
        if p.suffix == ".json":
            manifest = io.read_json(p)
            for s, kv in manifest.get("config", {}).items():
                for k, v in kv.items():
                    raw.setdefault(s, {})[k] = v
        else:
            cp = configparser.ConfigParser()
            cp.optionxform = str
            cp.read(p)
            for s in cp.sections():
                for k, v in cp.items(s):
                    raw.setdefault(s, {})[k] = v
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError("--set", f"expected section.key=value (got {item!r})")
        name, v = item.split("=", 1)
        s, k = name.strip().split(".", 1)
        raw.setdefault(s, {})[k] = v
    cfg = {}
    for s, kv in raw.items():
        if s not in SCHEMA:
            raise ConfigError(s, "unknown section")
        for k in kv:
            if k not in SCHEMA[s]:
                raise ConfigError(f"{s}.{k}", "unknown key")
    for s, opts in SCHEMA.items():
        cfg[s] = {}
        for k, opt in opts.items():
            v = _parse(s, k, raw[s][k]) if k in raw[s] else opt.default
            if (s, k) in PATH_KEYS and v is not None:
                v = str(Path(v).resolve())
            cfg[s][k] = v
    return cfg


def _require(cfg, section, key):
    v = cfg[section][key]
    if v is None:
        raise ConfigError(f"{section}.{key}", "is required")
    return v


class InputError(Exception):
    pass


def _load(fn, *args):
    try:
        return fn(*args)
    except (OSError, ValueError, KeyError) as exc:
        raise InputError(str(exc)) from exc


def build_grid(cfg) -> Grid1D:
    g = cfg["grid"]
    return Grid1D(g["n"], g["delta"], g["origin"], g["boundary"])


def build_profile(cfg, grid: Grid1D) -> Field:
    """Initial field from a named profile.

    gaussian-bump: ``exp(-(q - c)^2 / (2 w^2))`` with ``c`` the domain
    midpoint and ``w`` a tenth of the domain length unless given; scaled to
    unit integral norm when ``normalize`` is on.  step: ``value`` for
    ``q >= c``, else 0.  constant: ``value`` everywhere.
    """
    c = cfg["initial"]
    if c["profile"] == "file":
        return _load(io.read_field, _require(cfg, "initial", "path"), grid)
    q = grid.nodes
    center = c["center"] if c["center"] is not None else grid.origin + grid.length / 2
    if c["profile"] == "constant":
        return Field(grid, np.full(grid.n, c["value"]))
    if c["profile"] == "step":
        return Field(grid, np.where(q >= center, c["value"], 0.0))
    width = c["width"] if c["width"] is not None else grid.length / 10
    v = c["value"] * np.exp(-((q - center) ** 2) / (2 * width**2))
    if c["normalize"]:
        s = math.sqrt(float(np.dot(v, v)) * grid.delta)
        if s == 0:
            raise ConfigError("initial.width", "gaussian bump vanishes on the grid")
        v = v / s
    return Field(grid, v)


def build_bias(cfg, grid) -> Field:
    if cfg["bias"]["path"] is not None:
        return _load(io.read_field, cfg["bias"]["path"], grid)
    return Field(grid, np.full(grid.n, cfg["bias"]["value"]))


def build_kernel(cfg, grid):
    k = cfg["kernel"]
    t = k["type"]
    if t == "adr":
        return assemble_adr_stencil(k["U"], k["D"], k["R"], grid)
    if t == "identity":
        return identity_kernel(grid)
    if t == "dense":
        m = _load(io.read_matrix_csv, _require(cfg, "kernel", "matrix"))
        if m.shape != (grid.n, grid.n):
            raise InputError(f"kernel matrix is {m.shape[0]}x{m.shape[1]}, grid has {grid.n} nodes")
        return DenseKernel(m, grid)
    if t == "gaussian":
        return sample_continuum_kernel(ContinuumKernel.gaussian(k["sigma"], k["amplitude"]), grid)
    amp = 1.0 if k["amplitude"] is None else k["amplitude"]
    return sample_continuum_kernel(ContinuumKernel.power_law(k["exponent"], k["cutoff"], amp), grid)


def _relax_config(cfg) -> RelaxConfig:
    d = cfg["dynamics"]
    return RelaxConfig(d["omega"], d["steps"], d["norm_coupling"], d["norm_kind"])


def _train_config(cfg) -> TrainConfig:
    t, d = cfg["train"], cfg["dynamics"]
    return TrainConfig(
        lr=t["lr"],
        tolerance=t["tolerance"],
        max_iters=t["max_iters"],
        omega=d["omega"],
        steps=d["steps"],
        gradient_mode=t["gradient_mode"],
        activation=d["activation"],
        step_rule=t["step_rule"],
    )


def _manifest(command, cfg) -> dict:
    return {"command": command, "version": __version__, "config": cfg}


def cmd_evolve(cfg, out: Path) -> None:
    grid = build_grid(cfg)
    x = build_profile(cfg, grid)
    b = build_bias(cfg, grid)
    W = build_kernel(cfg, grid)
    traj = evolve(x, W, b, cfg["dynamics"]["activation"], _relax_config(cfg))
    io.write_trajectory_csv(out / "trajectory.csv", traj)
    io.write_field_csv(out / "initial.csv", x)
    io.write_field_csv(out / "final.csv", traj.final)
    io.write_json(out / "final.json", io.field_to_json(traj.final))
    io.write_json(out / "manifest.json", _manifest("evolve", cfg))


def cmd_attractor(cfg, out: Path) -> None:
    grid = build_grid(cfg)
    x = build_profile(cfg, grid)
    b = build_bias(cfg, grid)
    W = build_kernel(cfg, grid)
    a = cfg["attractor"]
    res = find_attractor(x, W, b, cfg["dynamics"]["activation"], cfg["dynamics"]["omega"], a["tol"], a["max_iters"])
    io.write_json(out / "attractor.json", res.to_dict())
    io.write_field_csv(out / "z_star.csv", res.z_star)
    io.write_json(out / "manifest.json", _manifest("attractor", cfg))


def cmd_train(cfg, out: Path) -> None:
    target_path = _require(cfg, "train", "target")
    grid = build_grid(cfg)
    x = build_profile(cfg, grid)
    b = build_bias(cfg, grid)
    y = _load(io.read_field, target_path, grid)
    tc = _train_config(cfg)
    t = cfg["train"]
    init = ADRParams(ParamMode.HOMOGENEOUS, t["init_U"], t["init_D"], t["init_R"])
    params0 = init.embed(t["mode"], grid.n, tc.steps)
    result = fit(params0, x, y, tc, b=b)
    io.write_json(out / "result.json", result.to_dict())
    io.write_series_csv(out / "loss.csv", ["iter", "loss"], result.loss_history)
    io.write_series_csv(out / "layer_losses.csv", ["step", "loss"], running_losses(result.params, x, y, tc, b=b))
    io.write_json(out / "manifest.json", _manifest("train", cfg))


def cmd_explain(cfg, out: Path) -> None:
    path = _require(cfg, "explain", "matrix")
    m = _load(io.read_matrix_csv, path)
    g = cfg["grid"]
    grid = Grid1D(m.shape[0], g["delta"], g["origin"], g["boundary"])
    profile = kernel_moments(DenseKernel(m, grid), cfg["explain"]["max_order"])
    io.write_json(out / "moments.json", profile.to_dict())
    io.write_json(out / "explain.json", explain_kernel(profile).to_dict())
    io.write_json(out / "manifest.json", _manifest("explain", cfg))


def cmd_report(cfg, out: Path) -> None:
    r = cfg["report"]
    cap = capacity_report(r["N"], r["L"])
    counts = {m.value: parameter_count(m, r["N"], r["L"], r["d"]) for m in ParamMode}
    io.write_json(
        out / "report.json",
        {"N": r["N"], "L": r["L"], "d": r["d"], "N_W": cap.n_weights, "log10_N_P": cap.log10_paths, "parameter_counts": counts},
    )
    io.write_json(out / "manifest.json", _manifest("report", cfg))


def cmd_sweep(cfg, out: Path) -> None:
    """Independent ``train`` runs over one swept key, one subdirectory each."""
    sw = cfg["sweep"]
    key = sw["key"]
    if "." not in key:
        raise ConfigError("sweep.key", f"expected section.key (got {key!r})")
    section, name = key.split(".", 1)
    if section not in SCHEMA or name not in SCHEMA[section]:
        raise ConfigError("sweep.key", f"unknown key {key!r}")
    raw_values = [v.strip() for v in _require(cfg, "sweep", "values").split(",") if v.strip()]
    if not raw_values:
        raise ConfigError("sweep.values", "is empty")
    _require(cfg, "train", "target")
    runs = []
    for v in raw_values:
        c = copy.deepcopy(cfg)
        c[section][name] = _parse(section, name, v)
        runs.append(c)
    dirs = [out / f"run_{i:03d}" for i in range(len(runs))]
    for d in dirs:
        d.mkdir()

    with ThreadPoolExecutor(max_workers=sw["workers"]) as pool:
        list(pool.map(cmd_train, runs, dirs))
    summary = []
    for v, d in zip(raw_values, dirs):
        res = io.read_json(d / "result.json")
        summary.append({"value": v, "dir": d.name, "converged": res["converged"], "loss": res["loss_history"][-1], "iterations": res["iterations"]})
    io.write_json(out / "sweep.json", {"key": key, "runs": summary})
    io.write_json(out / "manifest.json", _manifest("sweep", cfg))


COMMANDS = {
    "evolve": cmd_evolve,
    "attractor": cmd_attractor,
    "train": cmd_train,
    "explain": cmd_explain,
    "report": cmd_report,
    "sweep": cmd_sweep,
}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="neuradr", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="INI config or manifest.json of an earlier run")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config, args.overrides)
        with io.staged_output(args.out) as tmp:
            COMMANDS[args.command](cfg, tmp)
    except ConfigError as exc:
        print(f"neuradr: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DivergenceError as exc:
        print(f"neuradr: diverged at step {exc.step}", file=sys.stderr)
        return EXIT_DIVERGED
    except InputError as exc:
        print(f"neuradr: bad input: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"neuradr: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return 0


if __name__ == "__main__":
    sys.exit(main())
