"""Command-line interface.

Usage:
    cvqnd verify   [--config cfg.json] [--out DIR] [--n-points N] [--q Q] [--xm X]
    cvqnd run      [--config cfg.json] [--out DIR] [--distribution] [--wigner] [--q Q] [--xm X]
    cvqnd ensemble --seed S [--config cfg.json] [--out DIR] [--q Q]
    cvqnd bench    [--config cfg.json] [--out DIR]

Exit codes: 0 success, 1 identity threshold exceeded, 2 configuration or input error.
"""

from __future__ import annotations

import functools
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import io
from .config import RunConfig, load_config
from .ensemble import EnsembleConfig, run_ensemble
from .errors import ConfigError, CVQNDError
from .gaussian import g_coherent, g_run_protocol
from .protocol import feedback_shift, pm_distribution, resolution_from_q, run_protocol, trapezoid_weights, xm_quadrature_nodes
from .state import moments, wigner
from .verification import run_matrix, summarize

EXIT_OK, EXIT_THRESHOLD, EXIT_CONFIG = 0, 1, 2

RESIDUAL_COLUMNS = ["input_label", "q", "x_m", "r7", "r11", "r12", "n_points"]


def _guarded(func):
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except (ConfigError, CVQNDError) as exc:
            click.echo(f"error: {exc}", err=True)
            sys.exit(EXIT_CONFIG)

    return wrapper


def _load(config, section: str | None, n_points, q=None, xm=None, seed=None) -> RunConfig:
    overrides: dict = {}
    if q is not None:
        overrides["q"] = q
    if xm is not None:
        overrides["x_m"] = xm
    if seed is not None:
        overrides["seed"] = seed
    cfg = load_config(config, overrides)
    if n_points is None:
        return cfg
    # keep the section's box, replace only the resolution
    owner = cfg if section is None else getattr(cfg, section)
    grid = owner.grid.model_dump()
    grid["n_points"] = n_points
    patch = {"grid": grid} if section is None else {section: {**owner.model_dump(), "grid": grid}}
    return load_config(config, {**overrides, **patch})


def _out_dir(cfg: RunConfig, out) -> Path:
    path = Path(out if out is not None else cfg.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


config_option = click.option("--config", "config", type=click.Path(dir_okay=False), default=None, help="JSON config file.")
out_option = click.option("--out", "out", type=click.Path(file_okay=False), default=None, help="Output directory.")
npoints_option = click.option("--n-points", "n_points", type=int, default=None, help="Grid points (overrides config).")


@click.group()
def cli():
    """Feedback-compensated beam-splitter QND measurement simulator."""


@cli.command()
@config_option
@out_option
@npoints_option
@click.option("--q", "q", type=float, default=None, help="Single transmission amplitude instead of the matrix.")
@click.option("--xm", "xm", type=float, default=None, help="Single outcome instead of the matrix.")
@_guarded
def verify(config, out, n_points, q, xm):
    """Check the operator identities over the verification matrix."""
    cfg = _load(config, "verify", n_points)
    v = cfg.verify
    q_values = [q] if q is not None else v.q_values
    if q is not None and not 0.0 < q < 1.0:
        raise ConfigError(f"q must lie in (0, 1), got {q}")
    xm_values = [xm] if xm is not None else v.xm_values
    rows = run_matrix(v.input_specs(), q_values, xm_values, v.grid.build())
    summary = summarize(rows, v.threshold)
    summary["errors"] = [f"{r.input_label} q={r.q:g} x_m={r.x_m:g}: {r.error}" for r in rows if r.error]
    dest = _out_dir(cfg, out)
    io.write_csv(dest / "residuals.csv", RESIDUAL_COLUMNS, [[getattr(r, c) for c in RESIDUAL_COLUMNS] for r in rows])
    io.write_json(dest / "summary.json", summary)
    status = "PASS" if summary["pass"] else "FAIL"
    click.echo(f"{status}: max residual {summary['max_residual']:.3e} over {len(rows)} cases (threshold {v.threshold:.0e})")
    sys.exit(EXIT_OK if summary["pass"] else EXIT_THRESHOLD)


@cli.command()
@config_option
@out_option
@npoints_option
@click.option("--q", "q", type=float, default=None)
@click.option("--xm", "xm", type=float, default=None)
@click.option("--distribution", is_flag=True, help="Also write the outcome density P(x_m).")
@click.option("--wigner", "with_wigner", is_flag=True, help="Also write input and output Wigner functions.")
@_guarded
def run(config, out, n_points, q, xm, distribution, with_wigner):
    """Run the protocol for one outcome x_m."""
    cfg = _load(config, None, n_points, q=q, xm=xm)
    grid = cfg.grid.build()
    spec = cfg.input.spec()
    psi_in = spec.build(grid)
    trace = run_protocol(psi_in, cfg.q, cfg.x_m)
    out_state = trace.psi_out_normalized
    dest = _out_dir(cfg, out)

    x = grid.points
    io.write_csv(
        dest / "state_out.csv",
        ["x", "re_psi", "im_psi", "abs2_psi"],
        zip(x, out_state.amps.real, out_state.amps.imag, out_state.density),
    )
    report = {
        "input_label": spec.label,
        "q": cfg.q,
        "x_m": cfg.x_m,
        "delta_x": resolution_from_q(cfg.q),
        "feedback_shift": feedback_shift(cfg.q, cfg.x_m),
        "density": trace.density,
        "x_max": grid.x_max,
        "n_points": grid.n_points,
        **moments(out_state)._asdict(),
        "input_moments": moments(psi_in)._asdict(),
    }
    if spec.kind in ("vacuum", "coherent"):
        g_out, g_density = g_run_protocol(g_coherent(spec.x0, spec.p0), cfg.q, cfg.x_m)
        report["gaussian_oracle"] = {
            "mean_x": g_out.mean_x,
            "var_x": g_out.var_x,
            "mean_p": g_out.mean_p,
            "var_p": g_out.var_p,
            "density": g_density,
        }

    if distribution or cfg.run.distribution:
        nodes = xm_quadrature_nodes(grid, cfg.q, cfg.run.xm_nodes)
        p_kraus, p_meter = pm_distribution(psi_in, cfg.q, nodes, method="both")
        io.write_csv(dest / "distribution.csv", ["x_m", "p_kraus", "p_meter"], zip(nodes, p_kraus, p_meter))
        report["distribution_integral"] = float(p_kraus @ trapezoid_weights(nodes))

    if with_wigner or cfg.run.wigner:
        axis = np.linspace(-cfg.run.wigner_x_max, cfg.run.wigner_x_max, cfg.run.wigner_points)
        for name, state in (("input", psi_in), ("output", out_state)):
            w = wigner(state, axis, axis)
            rows = ((axis[i], axis[j], w[i, j]) for i in range(axis.size) for j in range(axis.size))
            io.write_csv(dest / f"wigner_{name}.csv", ["x", "p", "W"], rows)

    io.write_json(dest / "moments.json", report)
    click.echo(f"P(x_m={cfg.x_m:g}) = {trace.density:.6g}; output <x> = {report['mean_x']:.6g}, Var(x) = {report['var_x']:.6g}")


@cli.command()
@config_option
@out_option
@npoints_option
@click.option("--q", "q", type=float, default=None)
@click.option("--seed", "seed", type=int, default=None, help="Required unless set in the config.")
@click.option("--n-trajectories", "n_trajectories", type=int, default=None, help="0 selects exact quadrature.")
@_guarded
def ensemble(config, out, n_points, q, seed, n_trajectories):
    """Sample measurement records (or integrate them exactly) and aggregate statistics."""
    cfg = _load(config, "ensemble", n_points, q=q, seed=seed)
    if cfg.seed is None:
        raise ConfigError("ensemble runs need an explicit seed (--seed or config 'seed')")
    opts = cfg.ensemble
    n_traj = opts.n_trajectories if n_trajectories is None else n_trajectories
    grid = opts.grid.build()
    ens_cfg = EnsembleConfig(
        q=cfg.q,
        seed=cfg.seed,
        n_trajectories=n_traj,
        input=cfg.input.spec(),
        x_max=grid.x_max,
        n_points=grid.n_points,
        n_max=opts.n_max,
        exact_route=opts.exact_route,
    )
    stats = run_ensemble(ens_cfg)
    dest = _out_dir(cfg, out)
    doc = {"input_label": ens_cfg.input.label, "seed": cfg.seed, **stats.to_dict()}
    io.write_json(dest / "stats.json", doc)
    io.write_csv(
        dest / "marginal.csv",
        ["x", "nonselective", "input"],
        zip(stats.marginal_grid, stats.nonselective_x_marginal, stats.input_density),
    )
    if stats.records:
        io.write_csv(
            dest / "trajectories.csv",
            ["trajectory", "x_m", "mean_x_out", "mean_p_out", "mean_x_fb"],
            ((r.trajectory, r.x_m, r.mean_x_out, r.mean_p_out, r.mean_x_fb) for r in stats.records),
        )
    gain = "n/a" if stats.gain is None else f"{stats.gain:.6g}"
    click.echo(f"{stats.mode}: nonselective Var(p) = {stats.nonselective_var_p.value:.6g}, gain = {gain}")


@cli.command()
@config_option
@out_option
@npoints_option
@_guarded
def bench(config, out, n_points):
    """Time the verification matrix and record residual convergence against grid size."""
    cfg = _load(config, None, None)
    v = cfg.verify
    sizes = [n_points] if n_points is not None else cfg.bench.n_points
    specs = v.input_specs()
    rows = []
    for n in sizes:
        grid = v.grid.model_copy(update={"n_points": n}).build()
        start = time.perf_counter()
        res = run_matrix(specs, v.q_values, v.xm_values, grid)
        elapsed = time.perf_counter() - start
        s = summarize(res, v.threshold)
        rows.append((n, s["max_r7"], s["max_r11"], s["max_r12"], s["n_errors"], elapsed))
        click.echo(f"n={n:5d}  max r7={s['max_r7']:.3e}  r11={s['max_r11']:.3e}  r12={s['max_r12']:.3e}  {elapsed:.1f}s")
    dest = _out_dir(cfg, out)
    io.write_csv(dest / "bench.csv", ["n_points", "max_r7", "max_r11", "max_r12", "n_errors", "seconds"], rows)


def main(argv=None):
    cli.main(args=argv, prog_name="cvqnd")


if __name__ == "__main__":
    main()
