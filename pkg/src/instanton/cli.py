"""Command line driver.

One JSON config file describes a run: which preset, parameter and grid
overrides, optimizer settings and the output directory.  Overrides can
also be given on the command line as dotted paths (``--override
optimizer.tol=1e-5``).  Exit codes: 0 converged, 1 bad configuration,
2 iteration budget exhausted (partial outputs are still written),
3 solver failure, 4 I/O failure.
"""

from __future__ import annotations

import inspect
import json
import os
import sys

import click
import numpy as np

from .errors import SolverError
from .models import ModelPreset, available, preset
from .optimize import OptimizerConfig, solve_instanton
from . import output as out

EXIT_CONVERGED = 0
EXIT_CONFIG = 1
EXIT_BUDGET = 2
EXIT_SOLVER = 3
EXIT_IO = 4

CONFIG_KEYS = ("model", "params", "grid", "optimizer", "output")
GRID_KEYS = ("nx", "nt")
# optimizer keys the config may set; "penalty" and "schedule" feed the
# continuation, the rest map directly onto OptimizerConfig fields
OPTIMIZER_KEYS = ("tol", "max_iters", "memory", "penalty", "schedule",
                  "stage_iters", "stage_tol_factor", "translation_moves",
                  "shift_interval", "shift_rounds", "checkpoint_interval")


class ConfigError(Exception):
    pass


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _parse_value(raw: str):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def _apply_override(cfg: dict, spec: str) -> None:
    if "=" not in spec:
        raise ConfigError(f"override {spec!r} is not of the form key=value")
    path, raw = spec.split("=", 1)
    keys = path.split(".")
    target = cfg
    for k in keys[:-1]:
        target = target.setdefault(k, {})
        if not isinstance(target, dict):
            raise ConfigError(f"override path {path!r} descends into a non-section key")
    target[keys[-1]] = _parse_value(raw)


def load_config(config_path: str | None, overrides: tuple[str, ...],
                output_flag: str | None) -> dict:
    cfg: dict = {}
    if config_path is not None:
        try:
            with open(config_path) as f:
                cfg = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config {config_path}: {e}")
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {config_path} is not valid JSON: {e}")
    if not isinstance(cfg, dict):
        raise ConfigError("config root must be a JSON object")
    for spec in overrides:
        _apply_override(cfg, spec)
    if output_flag is not None:
        cfg["output"] = output_flag
    for key in cfg:
        if key not in CONFIG_KEYS:
            raise ConfigError(f"unknown config key {key!r} "
                              f"(expected one of {', '.join(CONFIG_KEYS)})")
    if "model" not in cfg:
        raise ConfigError("config key 'model' is required")
    return cfg


def build_preset(cfg: dict) -> ModelPreset:
    name = cfg["model"]
    params = dict(cfg.get("params", {}))
    grid = dict(cfg.get("grid", {}))
    for key in grid:
        if key not in GRID_KEYS:
            raise ConfigError(f"unknown grid key {key!r} (expected nx, nt)")
    try:
        factory_params = _validated_params(name, params)
    except ValueError as e:
        raise ConfigError(str(e))
    try:
        return preset(name, nx=grid.get("nx"), nt=grid.get("nt"), **factory_params)
    except ValueError as e:
        raise ConfigError(str(e))


def _validated_params(name: str, params: dict) -> dict:
    """Check override names and types against the preset factory signature."""
    if name not in available():
        raise ValueError(f"unknown model {name!r}; available: {', '.join(available())}")
    from .models import _FACTORIES
    sig = inspect.signature(_FACTORIES[name])
    for key, value in params.items():
        if key not in sig.parameters or key in ("nx", "nt"):
            raise ValueError(f"unknown params key {key!r} for model {name}")
        default = sig.parameters[key].default
        if isinstance(default, (int, float)) and not isinstance(default, bool):
            if not isinstance(value, (int, float)) or isinstance(value, bool):
                raise ValueError(
                    f"params key {key!r} expects a number, got {value!r}")
    return params


def build_optimizer(cfg: dict, pre: ModelPreset) -> tuple[OptimizerConfig, float]:
    opt = dict(cfg.get("optimizer", {}))
    for key in opt:
        if key not in OPTIMIZER_KEYS:
            raise ConfigError(f"unknown optimizer key {key!r} "
                              f"(expected one of {', '.join(OPTIMIZER_KEYS)})")
    penalty = float(opt.pop("penalty", pre.penalty))
    if "schedule" in opt:
        schedule = tuple(float(v) for v in opt.pop("schedule"))
    elif penalty != pre.penalty:
        schedule = (penalty,)   # explicit penalty replaces the preset ladder
    else:
        schedule = tuple(pre.continuation) + (penalty,)
    kwargs = {
        "tol": float(opt.pop("tol", pre.tol)),
        "max_iters": int(opt.pop("max_iters", pre.max_iters)),
        "penalty_schedule": schedule,
    }
    for key in list(opt):
        kwargs[key] = opt.pop(key)
    try:
        config = OptimizerConfig(**kwargs)
    except TypeError as e:
        raise ConfigError(f"bad optimizer settings: {e}")
    return config, penalty


@click.group()
def main():
    """Transition-path solver for metastable stochastic dynamics."""


@main.command("run")
@click.option("--config", "config_path", type=click.Path(), default=None,
              help="JSON config file.")
@click.option("--output", "output_flag", type=click.Path(), default=None,
              help="Output directory (overrides the config).")
@click.option("--override", "overrides", multiple=True, metavar="KEY=VALUE",
              help="Dotted-path config override, repeatable.")
@click.option("--resume", is_flag=True,
              help="Resume from a checkpoint in the output directory.")
def run_cmd(config_path, output_flag, overrides, resume):
    """Solve the configured transition problem and write artifacts."""
    try:
        cfg = load_config(config_path, overrides, output_flag)
        pre = build_preset(cfg)
        opt_config, penalty = build_optimizer(cfg, pre)
    except ConfigError as e:
        _fail(EXIT_CONFIG, str(e))

    outdir = cfg.get("output") or f"runs/{pre.name}"
    try:
        os.makedirs(outdir, exist_ok=True)
    except OSError as e:
        _fail(EXIT_IO, f"cannot create output directory {outdir}: {e}")

    resume_state = None
    checkpoint_path = os.path.join(outdir, out.CHECKPOINT_NAME)
    if resume:
        resume_state = out.load_checkpoint(outdir)
        if resume_state is not None:
            click.echo(f"resuming from iteration {resume_state['history'][-1][0] if resume_state['history'] else 0}")
    elif os.path.exists(checkpoint_path):
        os.unlink(checkpoint_path)  # stale checkpoint from an older run

    interval = int(opt_config.checkpoint_interval or 0)

    def on_iteration(info):
        if interval > 0 and info["iteration"] > 0 and info["iteration"] % interval == 0:
            out.save_checkpoint(outdir, info)

    try:
        result = solve_instanton(pre.model, pre.u0, pre.u_target, pre.tgrid,
                                 penalty, endpoint_filter=pre.endpoint_filter,
                                 config=opt_config,
                                 on_iteration=on_iteration if interval > 0 else None,
                                 resume_state=resume_state)
    except SolverError as e:
        try:
            out.write_json(os.path.join(outdir, "meta.json"),
                           {"config": cfg, "status": "failed", "error": str(e)})
        except OSError:
            pass
        _fail(EXIT_SOLVER, f"solver failure: {e}")

    try:
        out.write_run_outputs(outdir, result, pre.model, pre.tgrid, cfg)
        if os.path.exists(checkpoint_path):
            os.unlink(checkpoint_path)
    except OSError as e:
        _fail(EXIT_IO, f"cannot write outputs to {outdir}: {e}")

    click.echo(f"status={result.status} action={result.action:.8g} "
               f"endpoint_error={result.endpoint_error:.3e} "
               f"iterations={result.iterations} wall={result.wall_time:.1f}s")
    if result.status == "converged":
        sys.exit(EXIT_CONVERGED)
    if result.status == "max_iters":
        _fail(EXIT_BUDGET, "iteration budget exhausted (partial outputs written)")
    _fail(EXIT_SOLVER, f"optimizer stopped: {result.status}")


@main.command("describe")
@click.argument("name")
@click.option("--nx", type=int, default=None)
@click.option("--nt", type=int, default=None)
def describe_cmd(name, nx, nt):
    """Print a preset's equations, parameters and endpoint summary."""
    try:
        pre = preset(name, nx=nx, nt=nt)
    except ValueError as e:
        _fail(EXIT_CONFIG, str(e))
    m = pre.model
    click.echo(f"{pre.name}: {pre.description}")
    click.echo("\nequations:")
    for line in m.equations.splitlines():
        click.echo(f"  {line}")
    click.echo("\nparameters:")
    for k, v in m.parameters.items():
        click.echo(f"  {k} = {v:g}")
    dom = m.domain
    if dom.kind == "point":
        click.echo(f"\ndomain: point system, {m.n_components} component(s)")
    else:
        click.echo(f"\ndomain: {dom.kind} [0, {dom.length:g}], {dom.n_points} points")
    click.echo(f"time grid: T = {pre.tgrid.total_time:g}, {pre.tgrid.n_steps} steps")
    forced = [n for n, f in zip(m.component_names, m.forced_components) if f]
    quiet = [n for n, f in zip(m.component_names, m.forced_components) if not f]
    click.echo(f"noise acts on: {', '.join(forced)}"
               + (f" (unforced: {', '.join(quiet)})" if quiet else ""))
    if m.sigma_apply is None:
        click.echo("noise given through its covariance only")
    click.echo(f"endpoint filter: F = {pre.endpoint_filter.describe()}")
    click.echo(f"penalty = {pre.penalty:g}"
               + (f" (continuation {pre.continuation})" if pre.continuation else "")
               + f", tol = {pre.tol:g}, max_iters = {pre.max_iters}")

    def _summary(label, u):
        click.echo(f"  {label}: " + ", ".join(
            f"{n} in [{u[i].min():.4g}, {u[i].max():.4g}]"
            for i, n in enumerate(m.component_names)))

    click.echo("endpoints:")
    _summary("start ", pre.u0)
    _summary("target", pre.u_target)


@main.command("check-gradient")
@click.option("--model", "name", required=True)
@click.option("--nx", type=int, default=None)
@click.option("--nt", type=int, default=None)
@click.option("--probes", type=int, default=10, show_default=True)
@click.option("--step", type=float, default=1.0e-5, show_default=True,
              help="Finite-difference step (must lie in [1e-7, 1e-3]).")
@click.option("--seed", type=int, default=2024, show_default=True)
@click.option("--threshold", type=float, default=1.0e-5, show_default=True)
def check_gradient_cmd(name, nx, nt, probes, step, seed, threshold):
    """Compare the adjoint gradient against central finite differences."""
    from .validation import gradient_check
    try:
        pre = preset(name, nx=nx, nt=nt)
        report = gradient_check(pre, n_probes=probes, h=step, seed=seed,
                                threshold=threshold)
    except ValueError as e:
        _fail(EXIT_CONFIG, str(e))
    except SolverError as e:
        _fail(EXIT_SOLVER, f"gradient check could not run: {e}")
    click.echo(f"model={name} probes={report.n_probes} seed={report.seed}")
    click.echo(f"worst relative error = {report.metric:.3e} "
               f"(threshold {report.threshold:g})")
    click.echo("PASS" if report.passed else "FAIL")
    sys.exit(EXIT_CONVERGED if report.passed else EXIT_SOLVER)


@main.command("refine")
@click.option("--model", "name", required=True)
@click.option("--nx", type=int, default=None)
@click.option("--nt", type=int, default=None)
@click.option("--factors", default="1,2", show_default=True,
              help="Comma-separated time-grid refinement factors (from 1, 2, 4).")
@click.option("--threshold", type=float, default=0.01, show_default=True,
              help="Maximum relative action change between successive levels.")
def refine_cmd(name, nx, nt, factors, threshold):
    """Re-solve on refined time grids and report action convergence."""
    from .validation import refinement_study
    try:
        fac = tuple(int(v) for v in factors.split(","))
    except ValueError:
        _fail(EXIT_CONFIG, f"bad factors {factors!r}; expected e.g. 1,2,4")
    try:
        pre = preset(name, nx=nx, nt=nt)
        report = refinement_study(pre, factors=fac, threshold=threshold)
    except ValueError as e:
        _fail(EXIT_CONFIG, str(e))
    except SolverError as e:
        _fail(EXIT_SOLVER, f"refinement study failed: {e}")
    actions = report.details["actions"]
    statuses = report.details["statuses"]
    for nt in sorted(actions):
        click.echo(f"nt={nt:6d}  action={actions[nt]:.8f}  ({statuses[nt]})")
    for pair, d in report.details["deltas"].items():
        click.echo(f"nt {pair}: relative action change = {d:.3e}")
    click.echo("PASS" if report.passed else "FAIL")
    sys.exit(EXIT_CONVERGED if report.passed else EXIT_SOLVER)


@main.command("accept")
@click.option("--tier", type=click.Choice(["fast", "full"]), default="fast",
              show_default=True)
@click.option("--output", "summary_path", type=click.Path(),
              default="acceptance.json", show_default=True)
def accept_cmd(tier, summary_path):
    """Run the acceptance suite and write a JSON summary."""
    from .acceptance import run_acceptance
    summary = run_acceptance(tier)
    try:
        out.write_json(summary_path, summary)
    except OSError as e:
        _fail(EXIT_IO, f"cannot write summary {summary_path}: {e}")
    for c in summary["criteria"]:
        click.echo(f"{c['id']}: {'PASS' if c['pass'] else 'FAIL'}  "
                   f"value={c['value']:.4g} threshold={c['threshold']:g} "
                   f"({c['runtime']:.1f}s)  {c['detail']}")
    click.echo(f"overall: {'PASS' if summary['pass'] else 'FAIL'} "
               f"({summary['tier']} tier)")
    sys.exit(EXIT_CONVERGED if summary["pass"] else EXIT_SOLVER)


if __name__ == "__main__":
    main()
