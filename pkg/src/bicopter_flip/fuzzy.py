"""Two-rule Takagi-Sugeno blend of the ARMA and hover-LQR feedback.

The scheduling variable is ``gamma = |wrap(psi)|`` of the measured pitch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class EmptyRuleBase(ValueError):
    pass


@dataclass(frozen=True)
class FuzzyConfig:
    gamma_lo: float = math.radians(20.0)
    gamma_hi: float = math.radians(60.0)

    def __post_init__(self):
        if not 0.0 <= self.gamma_lo < self.gamma_hi <= math.pi:
            raise ValueError(
                f"need 0 <= gamma_lo < gamma_hi <= pi, got {self.gamma_lo}, {self.gamma_hi}"
            )

    @classmethod
    def from_degrees(cls, lo_deg: float, hi_deg: float) -> "FuzzyConfig":
        return cls(math.radians(lo_deg), math.radians(hi_deg))


def wrap_angle(psi):
    """Map to ``[-pi, pi]`` via ``psi - 2 pi round(psi / 2 pi)``."""
    psi = np.asarray(psi, dtype=float)
    twopi = 2.0 * np.pi
    return psi - twopi * np.round(psi / twopi)


def memberships(gamma, cfg: FuzzyConfig = FuzzyConfig()):
    """Complementary piecewise-linear memberships ``(mu_arma, mu_lqr)``."""
    gamma = np.asarray(gamma, dtype=float)
    # small slack for rounding in |wrap(psi)|
    if np.any(gamma < -1e-12) or np.any(gamma > np.pi + 1e-12) or not np.all(np.isfinite(gamma)):
        raise ValueError("gamma must lie in [0, pi]")
    mu_lqr = np.clip((cfg.gamma_hi - gamma) / (cfg.gamma_hi - cfg.gamma_lo), 0.0, 1.0)
    return 1.0 - mu_lqr, mu_lqr


def blend(u_arma, u_lqr, mu_arma, mu_lqr):
    """Normalized weighted average of the two consequents."""
    mu_arma = np.asarray(mu_arma, dtype=float)
    mu_lqr = np.asarray(mu_lqr, dtype=float)
    den = mu_arma + mu_lqr
    if np.any(den <= 0):
        raise EmptyRuleBase("both memberships are zero")
    u_arma = np.asarray(u_arma, dtype=float)
    u_lqr = np.asarray(u_lqr, dtype=float)
    return (mu_arma[..., None] * u_arma + mu_lqr[..., None] * u_lqr) / den[..., None]
