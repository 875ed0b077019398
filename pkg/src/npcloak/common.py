"""Result containers and error types shared by the 2D and 3D solvers."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .sources import ModeCoefficients
from .structure import ContrastPair


class ResonanceError(ArithmeticError):
    """A per-mode system is exactly singular (only possible at zero loss)."""

    def __init__(self, mode, message=None):
        self.mode = mode
        super().__init__(message or f"mode {mode} is exactly resonant; the system is singular")


class TruncationError(RuntimeError):
    """Mode truncation too short for the requested tolerance."""


class UnsupportedRegime(ValueError):
    pass


class AccuracyWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class LayerDensities:
    """Per-mode density coefficients on the core (``phi_i``) and outer (``phi_e``) interfaces.

    Mode layout follows the source coefficients they were solved from.
    ``limit`` flags a zero-loss solve in a regime whose physical limit is
    resonant (results are a limit value, not an asymptotic one).
    """

    dimension: int
    n: np.ndarray
    m: np.ndarray
    phi_i: np.ndarray
    phi_e: np.ndarray
    coeffs: ModeCoefficients
    contrast: ContrastPair
    limit: bool = False

    @property
    def n_max(self) -> int:
        return self.coeffs.n_max

    def scaled(self, factor: complex) -> "LayerDensities":
        return LayerDensities(self.dimension, self.n, self.m, self.phi_i * factor,
                              self.phi_e * factor, self.coeffs.scaled(factor),
                              self.contrast, self.limit)


@dataclass(frozen=True, eq=False)
class EnergyResult:
    E_delta: float
    per_mode: np.ndarray
    method: Literal["series-exact", "estimate", "source-identity"]
    n: np.ndarray
    m: np.ndarray
