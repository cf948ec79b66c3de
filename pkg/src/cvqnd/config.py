"""JSON run configuration. Unknown keys are rejected; physical ranges are re-validated."""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from . import defaults
from .errors import ConfigError, CVQNDError
from .inputs import InputSpec
from .state import QuadratureGrid, make_grid
from .verification import default_inputs


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class GridConfig(_Strict):
    x_min: Optional[float] = None
    x_max: float = defaults.GRID_X_MAX
    n_points: int = defaults.GRID_N_POINTS

    @model_validator(mode="after")
    def _valid_grid(self):
        try:
            self.build()
        except CVQNDError as exc:
            raise ValueError(str(exc)) from None
        return self

    def build(self) -> QuadratureGrid:
        x_min = -self.x_max if self.x_min is None else self.x_min
        return make_grid(x_min, self.x_max, self.n_points)


class InputConfig(_Strict):
    kind: Literal["vacuum", "coherent", "fock", "superposition"] = "vacuum"
    x0: float = 0.0
    p0: float = 0.0
    n: int = Field(0, ge=0, le=20)
    # each coefficient is a real number or a [re, im] pair
    coefficients: list[float | tuple[float, float]] = []

    def spec(self) -> InputSpec:
        coeffs = tuple(complex(c[0], c[1]) if isinstance(c, tuple) else complex(c) for c in self.coefficients)
        return InputSpec(self.kind, self.x0, self.p0, self.n, coeffs)

    @model_validator(mode="after")
    def _valid_spec(self):
        try:
            self.spec()
        except CVQNDError as exc:
            raise ValueError(str(exc)) from None
        return self


def _check_q(q: float) -> float:
    if not (math.isfinite(q) and 0.0 < q < 1.0):
        raise ValueError(f"q must lie in (0, 1), got {q}")
    return q


class VerifyConfig(_Strict):
    grid: GridConfig = GridConfig(x_max=defaults.VERIFY_X_MAX, n_points=defaults.VERIFY_N_POINTS)
    inputs: Optional[list[InputConfig]] = None
    n_random: int = Field(defaults.VERIFY_N_RANDOM, ge=0)
    random_seed: int = defaults.VERIFY_RANDOM_SEED
    q_values: list[float] = list(defaults.VERIFY_Q_VALUES)
    xm_values: list[float] = list(defaults.VERIFY_XM_VALUES)
    threshold: float = Field(defaults.IDENTITY_THRESHOLD, gt=0.0)

    @field_validator("q_values")
    @classmethod
    def _qs(cls, v):
        if not v:
            raise ValueError("q_values must not be empty")
        return [_check_q(q) for q in v]

    @field_validator("xm_values")
    @classmethod
    def _xms(cls, v):
        if not v:
            raise ValueError("xm_values must not be empty")
        return v

    def input_specs(self) -> list[InputSpec]:
        if self.inputs is None:
            return default_inputs(self.n_random, self.random_seed)
        return [c.spec() for c in self.inputs]


class RunOptions(_Strict):
    distribution: bool = False
    wigner: bool = False
    wigner_x_max: float = Field(4.0, gt=0.0)
    wigner_points: int = Field(81, ge=3)
    xm_nodes: int = Field(1024, ge=defaults.XM_MIN_NODES)


class EnsembleOptions(_Strict):
    grid: GridConfig = GridConfig(x_max=defaults.ENSEMBLE_X_MAX, n_points=defaults.ENSEMBLE_N_POINTS)
    n_trajectories: int = Field(10_000, ge=0)
    n_max: int = Field(10, ge=0, le=20)
    exact_route: Literal["kraus", "protocol"] = "kraus"


class BenchOptions(_Strict):
    n_points: list[int] = [256, 512, 1024, 2048]


class RunConfig(_Strict):
    q: float = 1.0 / math.sqrt(2.0)
    x_m: float = 1.0
    seed: Optional[int] = None
    input: InputConfig = InputConfig()
    grid: GridConfig = GridConfig()
    run: RunOptions = RunOptions()
    verify: VerifyConfig = VerifyConfig()
    ensemble: EnsembleOptions = EnsembleOptions()
    bench: BenchOptions = BenchOptions()
    out: str = "out"

    @field_validator("q")
    @classmethod
    def _q(cls, v):
        return _check_q(v)


def _merge(base: dict, overrides: dict) -> dict:
    out = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out


def load_config(path: str | Path | None = None, overrides: dict | None = None) -> RunConfig:
    """Read a JSON config (or defaults when ``path`` is None) and apply nested overrides."""
    raw: dict = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        if not isinstance(raw, dict):
            raise ConfigError("config root must be a JSON object")
    if overrides:
        raw = _merge(raw, overrides)
    try:
        return RunConfig.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(str(exc)) from None
