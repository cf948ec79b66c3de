"""Operator-identity checks over a matrix of inputs, transmissions and outcomes."""

from __future__ import annotations

import math
from dataclasses import dataclass

from . import defaults
from .errors import CVQNDError, NormDriftError
from .inputs import InputSpec, random_superpositions
from .protocol import identity_residuals
from .state import QuadratureGrid, beam_splitter, make_grid, make_vacuum, norm_guard_disabled


def default_inputs(
    n_random: int = defaults.VERIFY_N_RANDOM, seed: int = defaults.VERIFY_RANDOM_SEED
) -> list[InputSpec]:
    fixed = [InputSpec("vacuum"), InputSpec("coherent", x0=0.5), InputSpec("fock", n=1)]
    return fixed + random_superpositions(n_random, defaults.VERIFY_MAX_FOCK, seed)


def verification_grid(n_points: int = defaults.VERIFY_N_POINTS) -> QuadratureGrid:
    return make_grid(-defaults.VERIFY_X_MAX, defaults.VERIFY_X_MAX, n_points)


@dataclass(frozen=True)
class ResidualRow:
    input_label: str
    q: float
    x_m: float
    r7: float
    r11: float
    r12: float
    n_points: int
    error: str = ""

    @property
    def worst(self) -> float:
        return max(self.r7, self.r11, self.r12)


def run_matrix(
    inputs: list[InputSpec],
    q_values,
    xm_values,
    grid: QuadratureGrid,
) -> list[ResidualRow]:
    """Residuals r7, r11, r12 for every (input, q, x_m) combination.

    Boundary leaks are recorded as infinite residuals with the error
    message. Norm drift on under-resolved grids is recorded as an error
    too, but the residuals are still evaluated with the drift guard off
    so that convergence can be followed down to coarse grids.
    """
    rows = []
    for spec in inputs:
        try:
            psi = spec.build(grid)
        except CVQNDError as exc:
            rows += [_failed(spec, q, x_m, grid, exc) for q in q_values for x_m in xm_values]
            continue
        for q in q_values:
            drift = None
            try:
                two = beam_splitter(psi, make_vacuum(grid), q)
            except NormDriftError as exc:
                drift = exc
                with norm_guard_disabled():
                    two = beam_splitter(psi, make_vacuum(grid), q)
            except CVQNDError as exc:
                rows += [_failed(spec, q, x_m, grid, exc) for x_m in xm_values]
                continue
            for x_m in xm_values:
                rows.append(_case(spec, psi, q, x_m, two, grid, drift))
    return rows


def _case(spec, psi, q, x_m, two, grid, drift) -> ResidualRow:
    try:
        if drift is None:
            r = identity_residuals(psi, q, x_m, two)
        else:
            with norm_guard_disabled():
                r = identity_residuals(psi, q, x_m, two)
    except NormDriftError as exc:
        with norm_guard_disabled():
            try:
                r = identity_residuals(psi, q, x_m, two)
            except CVQNDError as inner:
                return _failed(spec, q, x_m, grid, inner)
        drift = exc
    except CVQNDError as exc:
        return _failed(spec, q, x_m, grid, exc)
    error = "" if drift is None else f"{type(drift).__name__}: {drift}"
    return ResidualRow(spec.label, q, x_m, r.r7, r.r11, r.r12, grid.n_points, error=error)


def _failed(spec, q, x_m, grid, exc) -> ResidualRow:
    inf = math.inf
    return ResidualRow(spec.label, q, x_m, inf, inf, inf, grid.n_points, error=f"{type(exc).__name__}: {exc}")


def summarize(rows: list[ResidualRow], threshold: float = defaults.IDENTITY_THRESHOLD) -> dict:
    worst = max(row.worst for row in rows)
    return {
        "n_cases": len(rows),
        "max_r7": max(row.r7 for row in rows),
        "max_r11": max(row.r11 for row in rows),
        "max_r12": max(row.r12 for row in rows),
        "max_residual": worst,
        "threshold": threshold,
        "n_errors": sum(1 for row in rows if row.error),
        "pass": bool(worst <= threshold) and not any(row.error for row in rows),
    }
