"""Wavefunction-on-a-grid representation of one- and two-mode states.

Units: [x, p] = i/2, so the vacuum has variance 1/4 in both quadratures,
psi_vac(x) = (2/pi)^{1/4} exp(-x^2) and p acts as -(i/2) d/dx.

All states are immutable. Every operation returns a new state.
"""

from __future__ import annotations

import contextlib
import contextvars
import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.signal import resample

from . import defaults
from .errors import BoundaryLeakError, GridError, NormDriftError, ParameterError

MAX_FOCK = 20
REFINE = 4


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform, origin-symmetric sampling of one quadrature axis."""

    x_min: float
    x_max: float
    n_points: int

    def __post_init__(self):
        if self.n_points < 16:
            raise GridError(f"need at least 16 grid points, got {self.n_points}")
        if not self.x_min < self.x_max:
            raise GridError(f"x_min={self.x_min} must be below x_max={self.x_max}")
        if not math.isclose(self.x_min, -self.x_max, rel_tol=0.0, abs_tol=1e-12 * self.x_max):
            raise GridError(f"grid must be symmetric about 0, got [{self.x_min}, {self.x_max}]")

    @property
    def step(self) -> float:
        return (self.x_max - self.x_min) / (self.n_points - 1)

    @cached_property
    def points(self) -> np.ndarray:
        x = self.x_min + self.step * np.arange(self.n_points)
        x.flags.writeable = False
        return x

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid-rule weights."""
        w = np.full(self.n_points, self.step)
        w[0] = w[-1] = 0.5 * self.step
        w.flags.writeable = False
        return w

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        k = 2.0 * np.pi * np.fft.fftfreq(self.n_points, d=self.step)
        k.flags.writeable = False
        return k

    def integrate(self, values, axis=-1):
        """Trapezoid quadrature along ``axis``."""
        values = np.moveaxis(np.asarray(values), axis, -1)
        return values @ self.weights

    def contains(self, x) -> bool:
        return bool(self.x_min <= x <= self.x_max)


def make_grid(x_min: float, x_max: float, n_points: int) -> QuadratureGrid:
    return QuadratureGrid(float(x_min), float(x_max), int(n_points))


def reference_grid() -> QuadratureGrid:
    return make_grid(-defaults.GRID_X_MAX, defaults.GRID_X_MAX, defaults.GRID_N_POINTS)


def _pad(values: np.ndarray) -> np.ndarray:
    padded = np.zeros(values.shape[0] + 4, dtype=values.dtype)
    padded[2:-2] = values
    return padded


def _cubic(x0: float, step: float, padded: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Piecewise 4-point cubic (Lagrange) interpolation of uniform samples.

    ``padded`` holds the samples with two zeros on each side (see ``_pad``),
    so the interpolant vanishes beyond the table.
    """
    t = (x - x0) / step
    i = np.floor(t)
    f = t - i
    j = np.clip(i.astype(np.intp) + 1, 0, padded.shape[0] - 4)  # padded index of node i-1
    fm1, fp1, fm2 = f - 1.0, f + 1.0, f - 2.0
    f_fm1 = f * fm1
    fp1_fm2 = fp1 * fm2
    out = (-f_fm1 * fm2 / 6.0) * padded.take(j)
    out += (fp1_fm2 * fm1 / 2.0) * padded.take(j + 1)
    out -= (fp1_fm2 * f / 2.0) * padded.take(j + 2)
    out += (fp1 * f_fm1 / 6.0) * padded.take(j + 3)
    return out


def interpolate(grid: QuadratureGrid, values: np.ndarray, x, refine: int = 1) -> np.ndarray:
    """Cubic interpolation of grid samples at arbitrary points.

    With ``refine > 1`` the samples are first band-limited upsampled by that
    factor (Fourier zero-padding) and the cubic runs on the finer table.
    Points outside ``[x_min, x_max]`` evaluate to 0.
    """
    x = np.asarray(x, dtype=float)
    if refine > 1:
        values = resample(values, refine * grid.n_points)
    out = _cubic(grid.x_min, grid.step / refine, _pad(values), x)
    outside = (x < grid.x_min) | (x > grid.x_max)
    if np.any(outside):
        out = np.where(outside, 0.0, out)
    return out


def _check_same_grid(a: QuadratureGrid, b: QuadratureGrid):
    if a != b:
        raise GridError(f"grid mismatch: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class SingleModeState:
    """Complex wavefunction sampled on a grid; not necessarily normalized."""

    grid: QuadratureGrid
    amps: np.ndarray

    def __post_init__(self):
        amps = np.array(self.amps, dtype=complex)
        if amps.shape != (self.grid.n_points,):
            raise GridError(f"amplitude shape {amps.shape} does not match grid size {self.grid.n_points}")
        amps.flags.writeable = False
        object.__setattr__(self, "amps", amps)

    @cached_property
    def norm_sq(self) -> float:
        return float(self.grid.integrate(np.abs(self.amps) ** 2))

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.amps) ** 2

    def is_normalized(self, tol: float = defaults.NORMALIZED_TOL) -> bool:
        return abs(self.norm_sq - 1.0) <= tol

    def normalized(self) -> SingleModeState:
        if self.norm_sq == 0.0:
            raise NormDriftError("cannot normalize a zero state")
        return SingleModeState(self.grid, self.amps / math.sqrt(self.norm_sq))

    def scaled(self, factor: complex) -> SingleModeState:
        return SingleModeState(self.grid, self.amps * factor)

    @cached_property
    def _fine(self) -> np.ndarray:
        fine = _pad(resample(self.amps, REFINE * self.grid.n_points))
        fine.flags.writeable = False
        return fine

    def __call__(self, x) -> np.ndarray:
        """Evaluate psi at arbitrary points (cubic on a Fourier-refined table)."""
        x = np.asarray(x, dtype=float)
        out = _cubic(self.grid.x_min, self.grid.step / REFINE, self._fine, x)
        outside = (x < self.grid.x_min) | (x > self.grid.x_max)
        if np.any(outside):
            out = np.where(outside, 0.0, out)
        return out

    def check_boundary(self, rtol: float = defaults.BOUNDARY_RTOL) -> SingleModeState:
        peak = np.max(np.abs(self.amps))
        if peak == 0.0:
            return self
        edge = max(abs(self.amps[0]), abs(self.amps[-1]))
        if edge > rtol * peak:
            raise BoundaryLeakError(
                f"state does not fit in [{self.grid.x_min}, {self.grid.x_max}]: "
                f"edge/peak amplitude ratio {edge / peak:.3e} > {rtol:.0e}"
            )
        return self


def superpose(states, coefficients) -> SingleModeState:
    """Linear combination sum_k c_k |state_k>, renormalized."""
    states = list(states)
    grid = states[0].grid
    amps = np.zeros(grid.n_points, dtype=complex)
    for c, s in zip(coefficients, states):
        _check_same_grid(grid, s.grid)
        amps += c * s.amps
    return SingleModeState(grid, amps).normalized()


# --- state preparation -----------------------------------------------------


def make_vacuum(grid: QuadratureGrid) -> SingleModeState:
    return make_coherent(grid, 0.0, 0.0)


def make_coherent(grid: QuadratureGrid, x0: float, p0: float) -> SingleModeState:
    """Coherent state with <x> = x0, <p> = p0."""
    x = grid.points
    amps = (2.0 / np.pi) ** 0.25 * np.exp(-((x - x0) ** 2) + 2j * p0 * x)
    return SingleModeState(grid, amps).check_boundary()


def _fock_table(x: np.ndarray, n_max: int) -> np.ndarray:
    """Rows psi_0..psi_{n_max} evaluated at ``x`` via the stable three-term recurrence."""
    u = math.sqrt(2.0) * x
    table = np.empty((n_max + 1, x.size))
    table[0] = 2.0**0.25 * np.pi**-0.25 * np.exp(-0.5 * u * u)
    if n_max >= 1:
        table[1] = math.sqrt(2.0) * u * table[0]
    for n in range(1, n_max):
        table[n + 1] = math.sqrt(2.0 / (n + 1)) * u * table[n] - math.sqrt(n / (n + 1)) * table[n - 1]
    return table


def make_fock(grid: QuadratureGrid, n: int) -> SingleModeState:
    """Photon-number eigenstate |n> as a Hermite-Gaussian wavefunction."""
    if not 0 <= n <= MAX_FOCK:
        raise ParameterError(f"Fock index must be in [0, {MAX_FOCK}], got {n}")
    state = SingleModeState(grid, _fock_table(grid.points, n)[n])
    if abs(state.norm_sq - 1.0) > 1e-8:
        raise NormDriftError(f"|{n}> is not resolved on this grid (norm^2 = {state.norm_sq:.10f})")
    return state.check_boundary()


def fock_basis(grid: QuadratureGrid, n_max: int) -> np.ndarray:
    """Matrix whose rows are psi_0..psi_{n_max} on ``grid``."""
    if not 0 <= n_max <= MAX_FOCK:
        raise ParameterError(f"n_max must be in [0, {MAX_FOCK}], got {n_max}")
    return _fock_table(grid.points, n_max)


# --- single-mode observables -----------------------------------------------


def inner_product(a: SingleModeState, b: SingleModeState) -> complex:
    _check_same_grid(a.grid, b.grid)
    return complex(a.grid.integrate(np.conj(a.amps) * b.amps))


def l2_distance(a: SingleModeState, b: SingleModeState) -> float:
    _check_same_grid(a.grid, b.grid)
    return math.sqrt(float(a.grid.integrate(np.abs(a.amps - b.amps) ** 2)))


class Moments(NamedTuple):
    mean_x: float
    var_x: float
    mean_p: float
    var_p: float


def _p_weights(state: SingleModeState):
    """Momentum-space probabilities and the matching p values (p = k/2)."""
    phi = np.fft.fft(state.amps)
    prob = np.abs(phi) ** 2
    return state.grid.wavenumbers / 2.0, prob / prob.sum()


def moments(state: SingleModeState) -> Moments:
    """First and second moments of x and p for a normalized state.

    x moments are trapezoid integrals over |psi|^2. p moments are taken from
    the discrete Fourier transform (spectral derivative), which is exact for
    band-limited states that vanish at the box edges.
    """
    if not state.is_normalized():
        raise NormDriftError(f"moments need a normalized state, norm^2 = {state.norm_sq:.12g}")
    x = state.grid.points
    rho = state.density / state.norm_sq
    mean_x = float(state.grid.integrate(x * rho))
    var_x = float(state.grid.integrate((x - mean_x) ** 2 * rho))
    p, w = _p_weights(state)
    mean_p = float(p @ w)
    var_p = float(((p - mean_p) ** 2) @ w)
    return Moments(mean_x, var_x, mean_p, var_p)


def p_moments_unnormalized(state: SingleModeState) -> tuple[float, float]:
    """Return (<psi|p|psi>, <psi|p^2|psi>) without normalizing."""
    p, w = _p_weights(state)
    return float(p @ w) * state.norm_sq, float((p * p) @ w) * state.norm_sq


# --- single-mode transformations -------------------------------------------


_NORM_GUARD = contextvars.ContextVar("norm_guard", default=True)


@contextlib.contextmanager
def norm_guard_disabled():
    """Skip norm-drift errors inside the block (diagnostics on under-resolved grids)."""
    token = _NORM_GUARD.set(False)
    try:
        yield
    finally:
        _NORM_GUARD.reset(token)


def _check_norm(before: float, after: float, what: str):
    if before == 0.0 or not _NORM_GUARD.get():
        return
    drift = abs(after - before) / before
    if drift > defaults.NORM_DRIFT_RTOL:
        raise NormDriftError(f"{what}: relative norm drift {drift:.2e} exceeds {defaults.NORM_DRIFT_RTOL:.0e}")


def apply_displacement(state: SingleModeState, dx: float) -> SingleModeState:
    """Translate psi(x) -> psi(x - dx) with a band-limited (Fourier) shift."""
    grid = state.grid
    if dx == 0.0:
        return state
    x = grid.points
    leaving = (x + dx < grid.x_min) | (x + dx > grid.x_max)
    peak = np.max(np.abs(state.amps))
    if np.any(leaving) and np.max(np.abs(state.amps[leaving]), initial=0.0) > defaults.BOUNDARY_RTOL * peak:
        raise BoundaryLeakError(f"displacement by {dx} pushes the state out of [{grid.x_min}, {grid.x_max}]")
    phase = np.exp(-1j * grid.wavenumbers * dx)
    # the FFT grid starts at x_min; a pure translation is independent of that origin
    shifted = np.fft.ifft(np.fft.fft(state.amps) * phase)
    out = SingleModeState(grid, shifted).check_boundary()
    _check_norm(state.norm_sq, out.norm_sq, "displacement")
    return out


def apply_squeeze(state: SingleModeState, s: float) -> SingleModeState:
    """Scale the x quadrature by ``s``: psi(x) -> psi(x/s)/sqrt(s)."""
    if not s > 0.0:
        raise ParameterError(f"squeeze factor must be positive, got {s}")
    if s == 1.0:
        return state
    x = state.grid.points
    out = SingleModeState(state.grid, state(x / s) / math.sqrt(s)).check_boundary()
    _check_norm(state.norm_sq, out.norm_sq, f"squeeze by {s}")
    return out


def kraus_kernel(x, x_m: float, delta_x: float):
    """Amplitude profile (2 pi dx^2)^{-1/4} exp(-(x_m - x)^2 / (4 dx^2))."""
    if not delta_x > 0.0:
        raise ParameterError(f"resolution must be positive, got {delta_x}")
    return (2.0 * np.pi * delta_x**2) ** -0.25 * np.exp(-((x_m - x) ** 2) / (4.0 * delta_x**2))


def apply_qnd_kraus(state: SingleModeState, x_m: float, delta_x: float) -> SingleModeState:
    """Apply the x-diagonal Gaussian measurement operator for outcome ``x_m``."""
    return SingleModeState(state.grid, kraus_kernel(state.grid.points, x_m, delta_x) * state.amps)


def wigner(state: SingleModeState, x_grid, p_grid) -> np.ndarray:
    """Wigner function W[i, j] = W(x_grid[i], p_grid[j]).

    W(x, p) = (2/pi) int psi*(x + y) psi(x - y) exp(4 i p y) dy.
    """
    x_grid = np.atleast_1d(np.asarray(x_grid, dtype=float))
    p_grid = np.atleast_1d(np.asarray(p_grid, dtype=float))
    h = state.grid.step
    span = state.grid.x_max - state.grid.x_min
    y = h * np.arange(-state.grid.n_points + 1, state.grid.n_points)
    y = y[np.abs(y) <= span]
    psi = state.normalized()
    out = np.empty((x_grid.size, p_grid.size))
    kernel = np.exp(4j * np.outer(y, p_grid))
    for i, x0 in enumerate(x_grid):
        corr = np.conj(psi(x0 + y)) * psi(x0 - y)
        out[i] = (2.0 / np.pi) * h * (corr @ kernel).real
    return out


# --- two-mode states --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class TwoModeState:
    """Joint wavefunction Psi(x_S, x_M) of a signal and a meter mode.

    A state produced by :func:`beam_splitter` keeps its input factors and
    mixing angle, so single cuts through it (as needed for conditioning)
    are evaluated directly from the inputs instead of re-interpolating the
    dense matrix. The dense ``amps`` matrix is built on first access.
    """

    grid_s: QuadratureGrid
    grid_m: QuadratureGrid
    signal: SingleModeState | None = None
    meter: SingleModeState | None = None
    q: float | None = None
    dense: np.ndarray | None = None

    def _rotated(self, xs, xm):
        c = math.sqrt(1.0 - self.q**2)
        return self.signal(self.q * xs + c * xm) * self.meter(c * xs - self.q * xm)

    @cached_property
    def amps(self) -> np.ndarray:
        if self.dense is not None:
            a = np.array(self.dense, dtype=complex)
        else:
            xs = self.grid_s.points[:, None]
            xm = self.grid_m.points[None, :]
            a = self._rotated(xs, xm)
        a.flags.writeable = False
        return a

    @cached_property
    def norm_sq(self) -> float:
        return float(self.grid_s.integrate(self.grid_m.integrate(np.abs(self.amps) ** 2), axis=0))

    def sampled_norm_sq(self, max_step: float = 0.05) -> float:
        """Joint norm from a strided sub-grid (step <= ``max_step``).

        Trapezoid sums of smooth, decaying integrands converge
        spectrally, so the coarse sum still resolves the norm to far
        better than the drift tolerance while costing a fraction of the
        dense evaluation.
        """
        if self.dense is not None or "amps" in self.__dict__:
            return self.norm_sq
        stride_s = max(1, int(max_step / self.grid_s.step))
        stride_m = max(1, int(max_step / self.grid_m.step))
        xs = self.grid_s.points[::stride_s, None]
        xm = self.grid_m.points[None, ::stride_m]
        total = np.sum(np.abs(self._rotated(xs, xm)) ** 2)
        return float(total) * stride_s * self.grid_s.step * stride_m * self.grid_m.step

    def signal_cut(self, x_M: float) -> np.ndarray:
        """Psi(x_S, x_M) for all signal grid points at one meter value."""
        if self.dense is None:
            return self._rotated(self.grid_s.points, x_M)
        return np.array([interpolate(self.grid_m, row, x_M) for row in self.amps])


def beam_splitter(signal: SingleModeState, meter: SingleModeState, q: float) -> TwoModeState:
    """Mix signal and meter on a beam splitter with transmission amplitude ``q``.

    Psi(x_S, x_M) = signal(q x_S + c x_M) * meter(c x_S - q x_M), c = sqrt(1 - q^2).
    """
    if not 0.0 < q < 1.0:
        raise ParameterError(f"transmission amplitude must lie in (0, 1), got {q}")
    _check_same_grid(signal.grid, meter.grid)
    two = TwoModeState(signal.grid, meter.grid, signal=signal, meter=meter, q=float(q))
    _check_norm(signal.norm_sq * meter.norm_sq, two.sampled_norm_sq(), "beam splitter")
    return two


def meter_marginal(two: TwoModeState) -> np.ndarray:
    """Homodyne density rho(x_M) = int |Psi(x_S, x_M)|^2 dx_S on the meter grid."""
    return two.grid_s.integrate(np.abs(two.amps) ** 2, axis=0)


def condition_meter(two: TwoModeState, x_m: float, q: float) -> tuple[SingleModeState, float]:
    """Signal state conditioned on the rescaled homodyne outcome ``x_m``.

    The meter is read at x_M = sqrt(1 - q^2) x_m. The returned state carries
    the Jacobian sqrt(1 - q^2), so its squared norm is the probability
    density of ``x_m`` itself.
    """
    if not 0.0 < q < 1.0:
        raise ParameterError(f"transmission amplitude must lie in (0, 1), got {q}")
    c = math.sqrt(1.0 - q**2)
    x_M = c * x_m
    if not two.grid_m.contains(x_M):
        raise GridError(f"meter value x_M = {x_M:.6g} (x_m = {x_m:.6g}) lies outside the meter grid")
    cut = two.signal_cut(x_M) * math.sqrt(c)
    psi = SingleModeState(two.grid_s, cut)
    return psi, psi.norm_sq
