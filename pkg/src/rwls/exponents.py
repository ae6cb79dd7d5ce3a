"""Closed-form CLE arm exponents as functions of the loop-soup intensity.

The intensity ``alpha`` in (0, 1/2] and the CLE parameter ``kappa`` in
(8/3, 4] are in increasing bijection.  All three exponents are evaluated at
``kappa(alpha)``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

KAPPA_MIN = 8.0 / 3.0
KAPPA_MAX = 4.0


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha <= 0.5:
        raise ValueError(f"alpha must lie in (0, 1/2], got {alpha}")


def alpha_of_kappa(kappa: float) -> float:
    # kappa = 8/3 is accepted as the closed endpoint (alpha = 0)
    if not KAPPA_MIN <= kappa <= KAPPA_MAX:
        raise ValueError(f"kappa must lie in (8/3, 4], got {kappa}")
    return (3.0 * kappa - 8.0) * (6.0 - kappa) / (4.0 * kappa)


def kappa_of_alpha(alpha: float) -> float:
    """Root of ``3k^2 + (4a - 26)k + 48 = 0`` in (8/3, 4]."""
    _check_alpha(alpha)
    disc = 4.0 * alpha * alpha - 52.0 * alpha + 25.0
    return (13.0 - 2.0 * alpha - math.sqrt(max(disc, 0.0))) / 3.0


def eta(kappa: float) -> float:
    return (12.0 - kappa) * (kappa + 4.0) / (8.0 * kappa)


def eta_bdy4(kappa: float) -> float:
    return 2.0 * (12.0 - kappa) / kappa


def eta_bdy2(kappa: float) -> float:
    return 8.0 / kappa - 1.0


def xi_interior(alpha: float) -> float:
    """Interior four-arm exponent."""
    return eta(kappa_of_alpha(alpha))


def xi_bdy4(alpha: float) -> float:
    """Boundary four-arm exponent."""
    return eta_bdy4(kappa_of_alpha(alpha))


def xi_bdy2(alpha: float) -> float:
    """Boundary two-arm exponent."""
    return eta_bdy2(kappa_of_alpha(alpha))


def xi_bdy2_direct(alpha: float) -> float:
    """Boundary two-arm exponent written directly in ``alpha``."""
    _check_alpha(alpha)
    return 24.0 / (13.0 - 2.0 * alpha - math.sqrt(4.0 * alpha * alpha - 52.0 * alpha + 25.0)) - 1.0


def beta(alpha: float) -> float:
    """Summation margin ``min((xi - 2)/2, 1/2)``; defined for alpha < 1/2 only."""
    _check_alpha(alpha)
    if alpha >= 0.5:
        raise ValueError("beta is only defined for alpha < 1/2")
    return min((xi_interior(alpha) - 2.0) / 2.0, 0.5)


def pi_weight(alpha: float, d1: float, d2: float) -> float:
    """``(d2/d1)^(-2-beta(alpha))``."""
    if not 0 < d1 < d2:
        raise ValueError("need 0 < d1 < d2")
    return (d2 / d1) ** (-2.0 - beta(alpha))


@dataclass(frozen=True)
class ExponentTable:
    alpha: float
    kappa: float
    xi_interior: float
    xi_bdy4: float
    xi_bdy2: float
    beta: float | None

    @classmethod
    def at(cls, alpha: float) -> "ExponentTable":
        kappa = kappa_of_alpha(alpha)
        return cls(
            alpha=alpha,
            kappa=kappa,
            xi_interior=eta(kappa),
            xi_bdy4=eta_bdy4(kappa),
            xi_bdy2=eta_bdy2(kappa),
            beta=beta(alpha) if alpha < 0.5 else None,
        )

    def as_dict(self) -> dict:
        return asdict(self)
