"""The three-step feedback-compensated beam-splitter measurement and its one-shot equivalent.

Step 1 mixes the input with vacuum and reads the meter quadrature,
step 2 displaces the signal by (1 - q^2)/q * x_m, step 3 squeezes x by q.
The composite equals the Gaussian Kraus operator with resolution
delta_x = q / (2 sqrt(1 - q^2)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import defaults
from .errors import CVQNDError, ParameterError
from .state import (
    QuadratureGrid,
    SingleModeState,
    TwoModeState,
    apply_displacement,
    apply_qnd_kraus,
    apply_squeeze,
    beam_splitter,
    condition_meter,
    kraus_kernel,
    l2_distance,
    make_vacuum,
)


def _check_q(q: float):
    if not 0.0 < q < 1.0:
        raise ParameterError(f"transmission amplitude must lie in (0, 1), got {q}")


def resolution_from_q(q: float) -> float:
    """Measurement resolution delta_x, from 4 delta_x^2 = q^2 / (1 - q^2)."""
    _check_q(q)
    return q / (2.0 * math.sqrt(1.0 - q * q))


def feedback_shift(q: float, x_m: float) -> float:
    """Feedback displacement (1 - q^2)/q * x_m."""
    _check_q(q)
    return (1.0 - q * q) / q * x_m


@dataclass(frozen=True)
class ProtocolParams:
    q: float

    def __post_init__(self):
        _check_q(self.q)

    @property
    def reflectivity(self) -> float:
        return 1.0 - self.q**2

    @property
    def delta_x(self) -> float:
        return resolution_from_q(self.q)

    @property
    def gain(self) -> float:
        """Feedback gain g with Delta x = g * x_m."""
        return (1.0 - self.q**2) / self.q


@dataclass(frozen=True, eq=False)
class ProtocolTrace:
    psi_in: SingleModeState
    two_mode: TwoModeState
    psi_bs: SingleModeState
    psi_fb: SingleModeState
    psi_out: SingleModeState
    psi_out_normalized: SingleModeState
    q: float
    x_m: float
    density: float


def run_protocol(
    psi_in: SingleModeState, q: float, x_m: float, two_mode: TwoModeState | None = None
) -> ProtocolTrace:
    """Run beam splitter, homodyne conditioning, feedback and squeeze for one outcome.

    ``two_mode`` may carry a precomputed ``beam_splitter(psi_in, vacuum, q)``
    so repeated outcomes for the same input skip the mixing step.
    """
    _check_q(q)
    if two_mode is None:
        two_mode = beam_splitter(psi_in, make_vacuum(psi_in.grid), q)
    psi_bs, density = condition_meter(two_mode, x_m, q)
    psi_bs.check_boundary()
    psi_fb = apply_displacement(psi_bs, feedback_shift(q, x_m))
    psi_out = apply_squeeze(psi_fb, q)
    if density <= 0.0:
        raise CVQNDError(f"outcome x_m = {x_m} has zero probability density")
    return ProtocolTrace(
        psi_in=psi_in,
        two_mode=two_mode,
        psi_bs=psi_bs,
        psi_fb=psi_fb,
        psi_out=psi_out,
        psi_out_normalized=psi_out.scaled(1.0 / math.sqrt(density)),
        q=q,
        x_m=x_m,
        density=density,
    )


class Residuals(NamedTuple):
    r7: float
    r11: float
    r12: float


def identity_residuals(
    psi_in: SingleModeState, q: float, x_m: float, two_mode: TwoModeState | None = None
) -> Residuals:
    """L2 distances between the stepwise states and their Kraus-operator forms.

    r7:  squeezed output vs. Kraus(psi_in)
    r11: bare beam-splitter output vs. D(-shift) S(1/q) Kraus(psi_in)
    r12: post-feedback state vs. S(1/q) Kraus(psi_in)

    None of the states are renormalized.
    """
    trace = run_protocol(psi_in, q, x_m, two_mode)
    kraus = apply_qnd_kraus(psi_in, x_m, resolution_from_q(q))
    amplified = apply_squeeze(kraus, 1.0 / q)
    restored = apply_displacement(amplified, -feedback_shift(q, x_m))
    return Residuals(
        r7=l2_distance(trace.psi_out, kraus),
        r11=l2_distance(trace.psi_bs, restored),
        r12=l2_distance(trace.psi_fb, amplified),
    )


# --- outcome distribution ---------------------------------------------------


def xm_quadrature_nodes(grid: QuadratureGrid, q: float, n_nodes: int = defaults.XM_MIN_NODES) -> np.ndarray:
    """Uniform x_m nodes covering the box widened by 8 resolution widths on each side."""
    half = grid.x_max + defaults.XM_SPAN_WIDTHS * resolution_from_q(q)
    return np.linspace(-half, half, max(int(n_nodes), defaults.XM_MIN_NODES))


def trapezoid_weights(nodes: np.ndarray) -> np.ndarray:
    w = np.empty_like(nodes)
    d = np.diff(nodes)
    w[0], w[-1] = d[0] / 2.0, d[-1] / 2.0
    w[1:-1] = (d[:-1] + d[1:]) / 2.0
    return w


def kraus_weight_matrix(grid: QuadratureGrid, xm_nodes, delta_x: float) -> np.ndarray:
    """Matrix of squared Kraus kernels, shape (len(xm_nodes), n_points)."""
    return kraus_kernel(grid.points[None, :], np.asarray(xm_nodes)[:, None], delta_x) ** 2


def _pm_kraus(psi_in: SingleModeState, q: float, xm_nodes) -> np.ndarray:
    weights = kraus_weight_matrix(psi_in.grid, xm_nodes, resolution_from_q(q))
    return psi_in.grid.integrate(weights * psi_in.density[None, :])


def _pm_meter(psi_in: SingleModeState, q: float, xm_nodes, two_mode: TwoModeState | None = None) -> np.ndarray:
    if two_mode is None:
        two_mode = beam_splitter(psi_in, make_vacuum(psi_in.grid), q)
    c = math.sqrt(1.0 - q * q)
    out = np.zeros(len(xm_nodes))
    for k, x_m in enumerate(xm_nodes):
        # readings beyond the meter axis carry no amplitude under the boundary policy
        if two_mode.grid_m.contains(c * x_m):
            out[k] = condition_meter(two_mode, x_m, q)[1]
    return out


def pm_distribution(
    psi_in: SingleModeState,
    q: float,
    xm_grid,
    method: str = "kraus",
    completeness_tol: float = 1e-5,
):
    """Outcome density P(x_m) tabulated on ``xm_grid``.

    ``method`` is "kraus" (norm of the Kraus-operated state), "meter"
    (norm of the conditioned beam-splitter output) or "both", which
    returns the pair ``(kraus, meter)``. The tabulation must capture the
    whole distribution: its trapezoid integral has to match the input
    norm within ``completeness_tol``.
    """
    _check_q(q)
    xm_grid = np.asarray(xm_grid, dtype=float)
    if method not in ("kraus", "meter", "both"):
        raise ParameterError(f"unknown method {method!r}")
    results = []
    if method in ("kraus", "both"):
        results.append(_pm_kraus(psi_in, q, xm_grid))
    if method in ("meter", "both"):
        results.append(_pm_meter(psi_in, q, xm_grid))
    w = trapezoid_weights(xm_grid)
    for pm in results:
        total = float(pm @ w)
        if abs(total - psi_in.norm_sq) > completeness_tol:
            raise CVQNDError(
                f"x_m grid [{xm_grid[0]:.4g}, {xm_grid[-1]:.4g}] misses probability: "
                f"integral {total:.8f} vs norm {psi_in.norm_sq:.8f}"
            )
    return tuple(results) if method == "both" else results[0]
