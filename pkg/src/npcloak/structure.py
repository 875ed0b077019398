"""Core-shell-matrix geometry, material contrasts and critical radii."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, replace
from typing import Optional


class ConfigError(ValueError):
    """Raised when a configuration violates its invariants."""


@dataclass(frozen=True)
class StructureConfig:
    """Concentric core (radius ``r_i``) inside a shell (outer radius ``r_e``).

    The matrix has permittivity 1, the shell ``eps_s + i*delta`` and the
    core ``eps_c``.  ``delta = 0`` is accepted so that limits can be
    inspected; the solvers decide whether a given mode is solvable.
    """

    dimension: int
    r_i: float
    r_e: float
    eps_c: float
    eps_s: float
    delta: float = 0.0

    def __post_init__(self):
        if self.dimension not in (2, 3):
            raise ConfigError(f"dimension must be 2 or 3, got {self.dimension}")
        if not (0.0 < self.r_i < self.r_e):
            raise ConfigError(f"need 0 < r_i < r_e, got r_i={self.r_i}, r_e={self.r_e}")
        if not self.eps_c > 0.0:
            raise ConfigError(f"core permittivity must be positive, got {self.eps_c}")
        if not self.eps_s < 0.0:
            raise ConfigError(f"shell permittivity must be negative, got {self.eps_s}")
        if not self.delta >= 0.0:
            raise ConfigError(f"loss parameter must be >= 0, got {self.delta}")
        for name in ("r_i", "r_e", "eps_c", "eps_s", "delta"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")

    @property
    def rho(self) -> float:
        return self.r_i / self.r_e

    def with_delta(self, delta: float) -> "StructureConfig":
        return replace(self, delta=float(delta))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "StructureConfig":
        return cls(**data)


@dataclass(frozen=True)
class ContrastPair:
    z_i: complex
    z_e: complex


def contrast_parameters(cfg: StructureConfig) -> ContrastPair:
    """Diagonal entries of the contrast operator for the layered system.

    >>> contrast_parameters(StructureConfig(2, 1.0, 2.0, 3.0, -1.0)).z_i
    (0.25+0j)
    """
    d = complex(0.0, cfg.delta)
    z_i = (cfg.eps_c + cfg.eps_s + d) / (2.0 * (cfg.eps_c - cfg.eps_s - d))
    z_e = (1.0 + cfg.eps_s + d) / (2.0 * (1.0 - cfg.eps_s - d))
    return ContrastPair(z_i, z_e)


def is_plasmonic_match(cfg: StructureConfig) -> bool:
    """True when the shell's real permittivity is exactly -1."""
    return cfg.eps_s == -1.0


def critical_radius(cfg: StructureConfig) -> Optional[float]:
    """Source radius separating resonant from non-resonant behaviour (2D only)."""
    if cfg.dimension != 2 or not is_plasmonic_match(cfg):
        return None
    if cfg.eps_c == 1.0:
        return math.sqrt(cfg.r_e**3 / cfg.r_i)
    return cfg.r_e**2 / cfg.r_i


def bounded_safe_radius(cfg: StructureConfig) -> Optional[float]:
    """Radius beyond which the potential stays bounded as delta -> 0.

    Only defined for the 2D regime eps_s = -1, eps_c != 1.
    """
    if cfg.dimension != 2 or not is_plasmonic_match(cfg) or cfg.eps_c == 1.0:
        return None
    return cfg.r_e**3 / cfg.r_i**2
