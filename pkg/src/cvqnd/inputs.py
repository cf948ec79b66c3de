"""Named input states: vacuum, coherent, Fock and Fock superpositions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .state import QuadratureGrid, SingleModeState, make_coherent, make_fock, make_vacuum, superpose

KINDS = ("vacuum", "coherent", "fock", "superposition")


@dataclass(frozen=True)
class InputSpec:
    kind: str = "vacuum"
    x0: float = 0.0
    p0: float = 0.0
    n: int = 0
    # Fock-basis amplitudes |0>, |1>, ...; renormalized on build
    coefficients: tuple[complex, ...] = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown input kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "superposition" and not any(abs(c) > 0 for c in self.coefficients):
            raise ParameterError("superposition needs at least one nonzero coefficient")

    @property
    def label(self) -> str:
        if self.kind == "coherent":
            return f"coherent({self.x0:g},{self.p0:g})"
        if self.kind == "fock":
            return f"fock({self.n})"
        if self.kind == "superposition":
            return "superposition(" + ",".join(f"{complex(c):.4g}" for c in self.coefficients) + ")"
        return "vacuum"

    def build(self, grid: QuadratureGrid) -> SingleModeState:
        if self.kind == "vacuum":
            return make_vacuum(grid)
        if self.kind == "coherent":
            return make_coherent(grid, self.x0, self.p0)
        if self.kind == "fock":
            return make_fock(grid, self.n)
        basis = [make_fock(grid, k) for k in range(len(self.coefficients))]
        return superpose(basis, self.coefficients)


def random_superpositions(n_states: int, max_fock: int, seed: int) -> list[InputSpec]:
    """Random complex-Gaussian superpositions of |0> .. |max_fock>, reproducible from ``seed``."""
    rng = np.random.default_rng(seed)
    specs = []
    for _ in range(n_states):
        c = rng.normal(size=max_fock + 1) + 1j * rng.normal(size=max_fock + 1)
        c /= np.linalg.norm(c)
        specs.append(InputSpec(kind="superposition", coefficients=tuple(complex(v) for v in c)))
    return specs
