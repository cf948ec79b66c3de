"""Monte Carlo measurement records, non-selective averages and photon statistics."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy.integrate import cumulative_trapezoid

from . import defaults
from .errors import CVQNDError, ParameterError
from .inputs import InputSpec
from .protocol import (
    kraus_weight_matrix,
    pm_distribution,
    resolution_from_q,
    run_protocol,
    trapezoid_weights,
    xm_quadrature_nodes,
)
from .state import (
    QuadratureGrid,
    SingleModeState,
    TwoModeState,
    beam_splitter,
    fock_basis,
    kraus_kernel,
    make_grid,
    make_vacuum,
    moments,
)

SAMPLER_NODES = 4096


def trajectory_rng(seed: int, index: int) -> np.random.Generator:
    """Independent Philox stream for trajectory ``index`` of run ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def thread_count() -> int:
    raw = os.environ.get("CVQND_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        raise ParameterError(f"CVQND_THREADS must be an integer, got {raw!r}") from None


# --- photon statistics -------------------------------------------------------


def photon_number_distribution(state, n_max: int, check: bool = True) -> np.ndarray:
    """Photon-number probabilities p_0 .. p_{n_max}.

    ``state`` is a normalized :class:`SingleModeState`, or a
    :class:`TwoModeState` whose signal mode is taken after tracing out the
    meter. With ``check`` an error is raised if more than 1e-3 of the
    probability lies above ``n_max``.
    """
    if isinstance(state, TwoModeState):
        basis = fock_basis(state.grid_s, n_max)
        overlaps = (basis * state.grid_s.weights) @ state.amps
        probs = state.grid_m.integrate(np.abs(overlaps) ** 2)
        total = state.norm_sq
    else:
        if not state.is_normalized():
            raise CVQNDError(f"photon statistics need a normalized state, norm^2 = {state.norm_sq:.10g}")
        basis = fock_basis(state.grid, n_max)
        probs = np.abs((basis * state.grid.weights) @ state.amps) ** 2
        total = state.norm_sq
    residual = total - probs.sum()
    if check and residual > defaults.PHOTON_RESIDUAL_MAX:
        raise CVQNDError(f"Fock basis up to n={n_max} misses probability {residual:.3e}")
    return probs


def mean_photon_number(probs: np.ndarray) -> float:
    return float(np.arange(probs.size) @ probs)


def transmitted_photon_distribution(psi_in: SingleModeState, q: float, n_max: int) -> np.ndarray:
    """Photon statistics of the transmitted signal after the bare beam splitter (meter traced out)."""
    two = beam_splitter(psi_in, make_vacuum(psi_in.grid), q)
    return photon_number_distribution(two, n_max)


# --- outcome sampling ----------------------------------------------------------


class XmSampler:
    """Inverse-CDF sampler for the outcome density P(x_m) of one input and q."""

    def __init__(self, psi_in: SingleModeState, q: float, n_nodes: int = SAMPLER_NODES):
        self.nodes = xm_quadrature_nodes(psi_in.grid, q, n_nodes)
        self.pdf = pm_distribution(psi_in, q, self.nodes)
        cdf = cumulative_trapezoid(self.pdf, self.nodes, initial=0.0)
        if np.any(np.diff(cdf) < 0.0):
            raise CVQNDError("tabulated CDF of x_m is not monotone")
        self.cdf = cdf / cdf[-1]

    def draw(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        return np.interp(u, self.cdf, self.nodes)


def sample_xm(psi_in: SingleModeState, q: float, rng: np.random.Generator, size=None):
    """Draw outcome(s) x_m from P(x_m) for ``psi_in`` measured with transmission ``q``."""
    return XmSampler(psi_in, q).draw(rng, size)


# --- ensembles ---------------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleConfig:
    """Settings for one ensemble run.

    ``n_trajectories = 0`` selects the exact mode: outcome averages are
    evaluated by deterministic quadrature over x_m instead of sampling.
    ``exact_route`` chooses whether that quadrature integrates the
    one-shot Kraus operator ("kraus") or the stepwise protocol output
    ("protocol"). The second needs a box wide enough to hold the
    feedback-amplified intermediate states.
    """

    q: float
    seed: int
    n_trajectories: int = 10_000
    input: InputSpec = field(default_factory=InputSpec)
    x_max: float = defaults.ENSEMBLE_X_MAX
    n_points: int = defaults.ENSEMBLE_N_POINTS
    n_max: int = 10
    exact_route: str = "kraus"
    xm_nodes: int = 2048

    def __post_init__(self):
        if self.n_trajectories < 0:
            raise ParameterError("n_trajectories must be >= 0 (0 selects exact quadrature)")
        if not 0.0 < self.q < 1.0:
            raise ParameterError(f"transmission amplitude must lie in (0, 1), got {self.q}")
        if self.exact_route not in ("kraus", "protocol"):
            raise ParameterError(f"unknown exact_route {self.exact_route!r}")

    @property
    def grid(self) -> QuadratureGrid:
        return make_grid(-self.x_max, self.x_max, self.n_points)


class TrajectoryRecord(NamedTuple):
    trajectory: int
    x_m: float
    mean_x_out: float
    var_x_out: float
    mean_p_out: float
    var_p_out: float
    mean_x_fb: float
    var_x_fb: float


class Estimate(NamedTuple):
    value: float
    stderr: float


def _variance_estimate(values) -> Estimate:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return Estimate(0.0, float("nan"))
    dev2 = (values - values.mean()) ** 2
    return Estimate(float(values.var(ddof=1)), float(dev2.std(ddof=1) / math.sqrt(values.size)))


def _estimate(values) -> Estimate:
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return Estimate(float(values.mean()), float("nan"))
    return Estimate(float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size)))


@dataclass(frozen=True, eq=False)
class EnsembleStats:
    """Aggregated ensemble results.

    Sampled runs report (value, standard error) pairs; the exact mode
    reports standard error 0. ``gain`` and SNR fields are ``None`` when
    the input has zero x mean.
    """

    mode: str
    q: float
    delta_x: float
    n_trajectories: int
    input_moments: dict
    xm_mean: Estimate
    xm_var: Estimate
    out_mean_x: Estimate
    out_var_x: Estimate
    out_mean_p: Estimate
    out_var_p: Estimate
    fb_mean_x: Estimate
    nonselective_mean_p: Estimate
    nonselective_var_p: Estimate
    nonselective_x_marginal: np.ndarray
    input_density: np.ndarray
    marginal_grid: np.ndarray
    photons_transmitted: np.ndarray
    photons_out: np.ndarray
    photons_out_stderr: np.ndarray
    snr_in: float | None
    snr_out: float | None
    gain: float | None
    records: tuple[TrajectoryRecord, ...] = ()

    @property
    def marginal_max_deviation(self) -> float:
        return float(np.max(np.abs(self.nonselective_x_marginal - self.input_density)))

    def to_dict(self) -> dict:
        est = lambda e: {"value": e.value, "stderr": e.stderr}  # noqa: E731
        return {
            "mode": self.mode,
            "q": self.q,
            "delta_x": self.delta_x,
            "n_trajectories": self.n_trajectories,
            "input_moments": self.input_moments,
            "xm_mean": est(self.xm_mean),
            "xm_var": est(self.xm_var),
            "out_mean_x": est(self.out_mean_x),
            "out_var_x": est(self.out_var_x),
            "out_mean_p": est(self.out_mean_p),
            "out_var_p": est(self.out_var_p),
            "fb_mean_x": est(self.fb_mean_x),
            "nonselective_mean_p": est(self.nonselective_mean_p),
            "nonselective_var_p": est(self.nonselective_var_p),
            "backaction_var_p": self.nonselective_var_p.value - self.input_moments["var_p"],
            "backaction_var_p_expected": 1.0 / (16.0 * self.delta_x**2),
            "nonselective_marginal_max_deviation": self.marginal_max_deviation,
            "photons_transmitted": [float(v) for v in self.photons_transmitted],
            "mean_n_transmitted": mean_photon_number(self.photons_transmitted),
            "photons_out": [float(v) for v in self.photons_out],
            "photons_out_stderr": [float(v) for v in self.photons_out_stderr],
            "snr_in": self.snr_in,
            "snr_out": self.snr_out,
            "gain": self.gain,
        }


def _snr(x0: float, var_in: float, fb_mean: float, fb_total_var: float):
    if abs(x0) < 1e-12:
        return None, None, None
    return x0 * x0 / var_in, fb_mean * fb_mean / fb_total_var, fb_mean / x0


def _run_trajectory(psi_in, q, two, sampler, seed, index, basis, weights):
    x_m = float(sampler.draw(trajectory_rng(seed, index)))
    trace = run_protocol(psi_in, q, x_m, two)
    m_out = moments(trace.psi_out_normalized)
    m_fb = moments(trace.psi_fb.normalized())
    photons = np.abs((basis * weights) @ trace.psi_out_normalized.amps) ** 2
    record = TrajectoryRecord(index, x_m, m_out.mean_x, m_out.var_x, m_out.mean_p, m_out.var_p, m_fb.mean_x, m_fb.var_x)
    return record, trace.psi_out_normalized.density, photons


def run_ensemble(cfg: EnsembleConfig) -> EnsembleStats:
    """Sample ``cfg.n_trajectories`` measurement records, or integrate exactly when it is 0."""
    grid = cfg.grid
    psi_in = cfg.input.build(grid)
    m_in = moments(psi_in)
    if cfg.n_trajectories == 0:
        return _run_exact(cfg, grid, psi_in, m_in)

    q = cfg.q
    two = beam_splitter(psi_in, make_vacuum(grid), q)
    sampler = XmSampler(psi_in, q)
    basis = fock_basis(grid, cfg.n_max)
    task = lambda i: _run_trajectory(psi_in, q, two, sampler, cfg.seed, i, basis, grid.weights)  # noqa: E731
    indices = range(cfg.n_trajectories)
    workers = thread_count()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(task, indices))
    else:
        results = [task(i) for i in indices]

    records = tuple(r[0] for r in results)
    cols = {name: np.array([getattr(r, name) for r in records]) for name in TrajectoryRecord._fields}
    marginal = np.zeros(grid.n_points)
    for _, rho, _ in results:
        marginal += rho
    marginal /= len(results)
    photons = np.array([r[2] for r in results])

    p2 = cols["var_p_out"] + cols["mean_p_out"] ** 2
    mean_p = _estimate(cols["mean_p_out"])
    ns_var_p = float(p2.mean() - mean_p.value**2)
    # stderr of the plug-in estimator, from its influence function
    infl = (p2 - p2.mean()) - 2.0 * mean_p.value * (cols["mean_p_out"] - mean_p.value)
    ns_var_p_se = float(infl.std(ddof=1) / math.sqrt(infl.size)) if infl.size > 1 else float("nan")

    fb_mean = _estimate(cols["mean_x_fb"])
    fb_total_var = float(cols["var_x_fb"].mean() + cols["mean_x_fb"].var())
    snr_in, snr_out, gain = _snr(m_in.mean_x, m_in.var_x, fb_mean.value, fb_total_var)

    return EnsembleStats(
        mode="sampled",
        q=q,
        delta_x=resolution_from_q(q),
        n_trajectories=cfg.n_trajectories,
        input_moments=m_in._asdict(),
        xm_mean=_estimate(cols["x_m"]),
        xm_var=_variance_estimate(cols["x_m"]),
        out_mean_x=_estimate(cols["mean_x_out"]),
        out_var_x=_estimate(cols["var_x_out"]),
        out_mean_p=mean_p,
        out_var_p=_estimate(cols["var_p_out"]),
        fb_mean_x=fb_mean,
        nonselective_mean_p=mean_p,
        nonselective_var_p=Estimate(ns_var_p, ns_var_p_se),
        nonselective_x_marginal=marginal,
        input_density=psi_in.density,
        marginal_grid=grid.points,
        photons_transmitted=transmitted_photon_distribution(psi_in, q, cfg.n_max),
        photons_out=photons.mean(axis=0),
        photons_out_stderr=photons.std(axis=0, ddof=1) / math.sqrt(len(results)) if len(results) > 1 else np.zeros(cfg.n_max + 1),
        snr_in=snr_in,
        snr_out=snr_out,
        gain=gain,
        records=records,
    )


def _exact_outputs(cfg, grid, psi_in, nodes):
    """Unnormalized selective outputs for every x_m node, as rows of a matrix."""
    q = cfg.q
    if cfg.exact_route == "kraus":
        return kraus_kernel(grid.points[None, :], nodes[:, None], resolution_from_q(q)) * psi_in.amps[None, :]
    two = beam_splitter(psi_in, make_vacuum(grid), q)
    pm = pm_distribution(psi_in, q, nodes, completeness_tol=1e-6)
    keep = pm > 1e-14 * pm.max()
    rows = np.zeros((nodes.size, grid.n_points), dtype=complex)
    for k in np.flatnonzero(keep):
        rows[k] = run_protocol(psi_in, q, float(nodes[k]), two).psi_out.amps
    return rows


def _run_exact(cfg: EnsembleConfig, grid, psi_in, m_in) -> EnsembleStats:
    q = cfg.q
    dx = resolution_from_q(q)
    # resolve the outcome kernel (width delta_x) with at least 8 nodes per width
    half = grid.x_max + defaults.XM_SPAN_WIDTHS * dx
    n_nodes = max(cfg.xm_nodes, int(math.ceil(2.0 * half / (dx / 8.0))) + 1)
    nodes = xm_quadrature_nodes(grid, q, n_nodes)
    w = trapezoid_weights(nodes)

    rows = _exact_outputs(cfg, grid, psi_in, nodes)
    dens = np.abs(rows) ** 2
    pm = grid.integrate(dens)
    total = float(pm @ w)
    if abs(total - psi_in.norm_sq) > 1e-8:
        raise CVQNDError(f"x_m quadrature misses probability: {total:.12f}")

    x = grid.points
    marginal = w @ dens
    mean_x_sel = grid.integrate(dens * x) / np.where(pm > 0, pm, 1.0)
    var_x_sel = grid.integrate(dens * x * x) / np.where(pm > 0, pm, 1.0) - mean_x_sel**2

    phi = np.fft.fft(rows, axis=1)
    pw = np.abs(phi) ** 2
    pnorm = pw.sum(axis=1)
    pnorm = np.where(pnorm > 0, pnorm, 1.0)
    pk = grid.wavenumbers / 2.0
    mean_p_sel = (pw @ pk) / pnorm
    p2_sel = (pw @ (pk * pk)) / pnorm
    ns_mean_p = float(w @ (pm * mean_p_sel))
    ns_var_p = float(w @ (pm * p2_sel)) - ns_mean_p**2

    basis = fock_basis(grid, cfg.n_max)
    photons = w @ (np.abs(rows @ (basis * grid.weights).T) ** 2)

    def avg(values) -> Estimate:
        return Estimate(float(w @ (pm * values)), 0.0)

    xm_mean = float(w @ (pm * nodes))
    xm_var = float(w @ (pm * nodes**2)) - xm_mean**2
    fb_mean_x = mean_x_sel / q
    fb_total_var = float(w @ (pm * (var_x_sel / q**2 + fb_mean_x**2))) - float(w @ (pm * fb_mean_x)) ** 2
    fb_mean = avg(fb_mean_x)
    snr_in, snr_out, gain = _snr(m_in.mean_x, m_in.var_x, fb_mean.value, fb_total_var)

    return EnsembleStats(
        mode="exact",
        q=q,
        delta_x=dx,
        n_trajectories=0,
        input_moments=m_in._asdict(),
        xm_mean=Estimate(xm_mean, 0.0),
        xm_var=Estimate(xm_var, 0.0),
        out_mean_x=avg(mean_x_sel),
        out_var_x=avg(var_x_sel),
        out_mean_p=Estimate(ns_mean_p, 0.0),
        out_var_p=avg(p2_sel - mean_p_sel**2),
        fb_mean_x=fb_mean,
        nonselective_mean_p=Estimate(ns_mean_p, 0.0),
        nonselective_var_p=Estimate(ns_var_p, 0.0),
        nonselective_x_marginal=marginal,
        input_density=psi_in.density,
        marginal_grid=grid.points,
        photons_transmitted=transmitted_photon_distribution(psi_in, q, cfg.n_max),
        photons_out=photons,
        photons_out_stderr=np.zeros(cfg.n_max + 1),
        snr_in=snr_in,
        snr_out=snr_out,
        gain=gain,
    )


class SNRReport(NamedTuple):
    snr_in: float
    snr_out: float
    gain: float


def snr_report(cfg: EnsembleConfig) -> SNRReport:
    """Signal-to-noise of the x quadrature before and after feedback amplification."""
    if cfg.input.kind != "coherent":
        raise ParameterError("SNR report needs a coherent input")
    if cfg.input.x0 == 0.0:
        raise ParameterError("SNR is undefined for x0 = 0")
    stats = run_ensemble(cfg)
    return SNRReport(stats.snr_in, stats.snr_out, stats.gain)
