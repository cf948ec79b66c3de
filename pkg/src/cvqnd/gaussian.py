"""Exact moment propagation for Gaussian states.

Serves as an analytic cross-check of the grid engine. Phase-space vectors
are ordered (x, p) per mode, i.e. (x_S, p_S, x_M, p_M) for two modes, and
the vacuum covariance is diag(1/4, 1/4).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError

VACUUM_VARIANCE = 0.25


@dataclass(frozen=True, eq=False)
class GaussianMoments:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        cov = np.array(self.cov, dtype=float)
        if mean.ndim != 1 or mean.size % 2 or cov.shape != (mean.size, mean.size):
            raise ParameterError(f"inconsistent shapes: mean {mean.shape}, cov {cov.shape}")
        if not np.allclose(cov, cov.T, atol=1e-12):
            raise ParameterError("covariance matrix is not symmetric")
        if np.min(np.linalg.eigvalsh(cov)) <= 0.0:
            raise ParameterError("covariance matrix is not positive definite")
        for k in range(mean.size // 2):
            block = cov[2 * k : 2 * k + 2, 2 * k : 2 * k + 2]
            if np.linalg.det(block) < VACUUM_VARIANCE**2 - 1e-12:
                raise ParameterError(f"mode {k} violates the uncertainty relation")
        mean.flags.writeable = False
        cov.flags.writeable = False
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def n_modes(self) -> int:
        return self.mean.size // 2

    @property
    def mean_x(self) -> float:
        return float(self.mean[0])

    @property
    def mean_p(self) -> float:
        return float(self.mean[1])

    @property
    def var_x(self) -> float:
        return float(self.cov[0, 0])

    @property
    def var_p(self) -> float:
        return float(self.cov[1, 1])

    def mode(self, k: int) -> GaussianMoments:
        sl = slice(2 * k, 2 * k + 2)
        return GaussianMoments(self.mean[sl], self.cov[sl, sl])


def g_vacuum() -> GaussianMoments:
    return GaussianMoments(np.zeros(2), VACUUM_VARIANCE * np.eye(2))


def g_coherent(x0: float, p0: float) -> GaussianMoments:
    return GaussianMoments([x0, p0], VACUUM_VARIANCE * np.eye(2))


def g_product(a: GaussianMoments, b: GaussianMoments) -> GaussianMoments:
    n = a.mean.size
    cov = np.zeros((n + b.mean.size,) * 2)
    cov[:n, :n] = a.cov
    cov[n:, n:] = b.cov
    return GaussianMoments(np.concatenate([a.mean, b.mean]), cov)


def beam_splitter_matrix(q: float) -> np.ndarray:
    """Phase-space map (x_in, p_in, x_vac, p_vac) -> (x_S, p_S, x_M, p_M).

    The same real orthogonal mixing acts on both quadratures:
    x_S = q x_in + c x_vac, x_M = c x_in - q x_vac, c = sqrt(1 - q^2).
    """
    c = math.sqrt(1.0 - q * q)
    return np.kron(np.array([[q, c], [c, -q]]), np.eye(2))


def g_beam_splitter(sig: GaussianMoments, met: GaussianMoments, q: float) -> GaussianMoments:
    if sig.n_modes != 1 or met.n_modes != 1:
        raise ParameterError("beam splitter takes two single-mode inputs")
    if not 0.0 < q < 1.0:
        raise ParameterError(f"transmission amplitude must lie in (0, 1), got {q}")
    joint = g_product(sig, met)
    m = beam_splitter_matrix(q)
    return GaussianMoments(m @ joint.mean, m @ joint.cov @ m.T)


def normal_pdf(x: float, mean: float, var: float) -> float:
    return math.exp(-((x - mean) ** 2) / (2.0 * var)) / math.sqrt(2.0 * math.pi * var)


def g_condition_x(two: GaussianMoments, value: float, q: float | None = None) -> tuple[GaussianMoments, float]:
    """Condition the signal mode on a homodyne reading x_M = ``value`` of the meter.

    Returns the conditional signal moments and the density of the reading.
    When ``q`` is given the density refers to the rescaled outcome
    x_m = x_M / sqrt(1 - q^2) (it is multiplied by the Jacobian sqrt(1 - q^2)).
    """
    if two.n_modes != 2:
        raise ParameterError("conditioning needs a two-mode state")
    s = slice(0, 2)
    var_m = two.cov[2, 2]
    if var_m <= 0.0:
        raise ParameterError("singular conditioning variance")
    cross = two.cov[s, 2]
    mean = two.mean[s] + cross * (value - two.mean[2]) / var_m
    cov = two.cov[s, s] - np.outer(cross, cross) / var_m
    density = normal_pdf(value, two.mean[2], var_m)
    if q is not None:
        density *= math.sqrt(1.0 - q * q)
    return GaussianMoments(mean, cov), density


def g_displace(g: GaussianMoments, dx: float) -> GaussianMoments:
    return GaussianMoments(g.mean + np.array([dx, 0.0]), g.cov)


def g_squeeze(g: GaussianMoments, s: float) -> GaussianMoments:
    if not s > 0.0:
        raise ParameterError(f"squeeze factor must be positive, got {s}")
    m = np.diag([s, 1.0 / s])
    return GaussianMoments(m @ g.mean, m @ g.cov @ m)


def g_run_protocol(g_in: GaussianMoments, q: float, x_m: float) -> tuple[GaussianMoments, float]:
    """Beam splitter, homodyne conditioning, feedback shift and squeeze for Gaussian input."""
    c = math.sqrt(1.0 - q * q)
    two = g_beam_splitter(g_in, g_vacuum(), q)
    cond, density = g_condition_x(two, c * x_m, q)
    fed = g_displace(cond, (1.0 - q * q) / q * x_m)
    return g_squeeze(fed, q), density
