"""Model parameters and the VIX <-> hidden-state algebra.

The model has a fast variance factor Y (mean reversion rate 1/epsilon) and
a slow CIR factor Z (rate kappa); instantaneous variance of the index is
Y + Z.  Forward-integrating the factor expectations over the 30-day VIX
window gives VIX^2 as a weighted combination of the current state (y, z)
and the long-run level theta.  All variance quantities are decimal
annualized variances; VIX levels are in index points (x100 convention).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .exceptions import DomainError, InfeasibleStateError

#: VIX horizon in years, fixed by the index definition.
TAU0 = 30.0 / 365.0


@dataclass(frozen=True)
class ModelParams:
    """The six calibrated model parameters plus the risk-free rate.

    kappa   mean-reversion rate of the slow factor Z (1/year)
    theta   long-run variance level of Z
    sigma   vol-of-vol of Z
    rho     correlation between the index and Z shocks (calibration
            bound [-1, 0]; the model itself admits [-1, 1])
    epsilon fast time-scale (years)
    w3_eps  skew-correction coefficient of the fast factor
    r       risk-free rate (1/year)
    """

    kappa: float
    theta: float
    sigma: float
    rho: float
    epsilon: float
    w3_eps: float
    r: float = 0.02

    def __post_init__(self):
        if self.kappa <= 0 or self.theta <= 0 or self.sigma <= 0:
            raise ValueError(
                f"kappa, theta, sigma must be positive, got "
                f"({self.kappa}, {self.theta}, {self.sigma})"
            )
        if self.epsilon <= 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if not -1.0 <= self.rho <= 0.0:
            raise ValueError(f"rho must lie in [-1, 0], got {self.rho}")
        if self.kappa * self.epsilon >= 1.0:
            raise ValueError(
                f"time scales not separated: kappa*epsilon = "
                f"{self.kappa * self.epsilon:.4f} >= 1"
            )

    @property
    def feller_ok(self) -> bool:
        """Feller condition of the slow factor (recorded, never enforced)."""
        return 2.0 * self.kappa * self.theta > self.sigma**2


@dataclass(frozen=True)
class HiddenState:
    """Per-date latent variance pair: y fast factor, z slow factor."""

    y: float
    z: float

    def __post_init__(self):
        if self.y < 0 or self.z < 0:
            raise ValueError(f"state must be non-negative, got ({self.y}, {self.z})")


@dataclass(frozen=True)
class VixWeights:
    """Epsilon-dependent VIX weights and their epsilon -> 0 limits.

    VIX^2/100^2 = a1*y + a2*z + (a3 + a4)*theta, with a1 + a3 = 1 and
    a2 + a4 = 1 by construction.
    """

    a1: float
    a2: float
    a3: float
    a4: float
    a2_star: float
    a4_star: float
    tau0: float = TAU0


@dataclass(frozen=True)
class QuadratureConfig:
    """Settings for the Fourier-inversion and density quadratures.

    contour_shift is the imaginary offset of the complex contour; the
    payoff transform only converges for shifts above 1.
    """

    contour_shift: float = 1.5
    truncation: float = 200.0
    abs_tol: float = 1e-8
    rel_tol: float = 1e-8
    max_nodes: int = 200_000

    def __post_init__(self):
        if self.contour_shift <= 1.0:
            raise ValueError(
                f"contour_shift must exceed 1 for payoff-transform "
                f"convergence, got {self.contour_shift}"
            )
        if self.truncation <= 0:
            raise ValueError("truncation must be positive")
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("tolerances must be positive")


@dataclass(frozen=True)
class PriceDecomposition:
    """Leading term, first-order correction, and their sum for one option."""

    leading: float
    correction: float
    short_maturity_warning: bool = False

    @property
    def total(self) -> float:
        return self.leading + self.correction


def vix_weights(kappa: float, epsilon: float) -> VixWeights:
    """Weights of the exact 30-day forward-variance integration.

    The limits a2*, a4* are computed from their own closed forms, never by
    substituting a small epsilon.
    """
    if kappa <= 0 or epsilon <= 0:
        raise DomainError(f"kappa and epsilon must be positive, got ({kappa}, {epsilon})")
    if kappa * epsilon >= 1.0:
        raise DomainError(
            f"kappa*epsilon = {kappa * epsilon:.4f} >= 1: the 1/(1-kappa*eps) "
            "factor degenerates"
        )
    a1 = epsilon / TAU0 * -math.expm1(-TAU0 / epsilon)
    b = -math.expm1(-kappa * TAU0) / (kappa * TAU0)
    a2 = b + (b - a1) / (1.0 - kappa * epsilon)
    a2_star = 2.0 * b
    return VixWeights(a1=a1, a2=a2, a3=1.0 - a1, a4=1.0 - a2,
                      a2_star=a2_star, a4_star=1.0 - a2_star)


def heston_star_weights(kappa: float) -> tuple[float, float]:
    """(b2*, b4*) of the one-factor benchmark: VIX^2/100^2 = b2* z + b4* theta."""
    if kappa <= 0:
        raise DomainError(f"kappa must be positive, got {kappa}")
    b2 = -math.expm1(-kappa * TAU0) / (kappa * TAU0)
    return b2, 1.0 - b2


def vix_from_state(state: HiddenState, params: ModelParams,
                   weights: VixWeights | None = None) -> float:
    """Model VIX level (index points) implied by the hidden state."""
    w = weights if weights is not None else vix_weights(params.kappa, params.epsilon)
    radicand = w.a1 * state.y + w.a2 * state.z + (w.a3 + w.a4) * params.theta
    if radicand < 0:
        raise DomainError(
            f"negative VIX^2 radicand {radicand}: corrupted state {state}"
        )
    return 100.0 * math.sqrt(radicand)


def vix_limit_from_z(z: float, params: ModelParams,
                     weights: VixWeights | None = None) -> float:
    """Epsilon -> 0 limit VIX level: 100*sqrt(a2* z + (1 + a4*) theta)."""
    w = weights if weights is not None else vix_weights(params.kappa, params.epsilon)
    radicand = w.a2_star * z + (1.0 + w.a4_star) * params.theta
    if radicand < 0:
        raise DomainError(f"negative limit-VIX^2 radicand {radicand}")
    return 100.0 * math.sqrt(radicand)


def z_from_vix_given_y(vix: float, y: float, params: ModelParams,
                       weights: VixWeights | None = None) -> float:
    """Invert the VIX relation for z at a given fast-factor level y."""
    if vix <= 0:
        raise DomainError(f"vix must be positive, got {vix}")
    if y < 0:
        raise DomainError(f"y must be non-negative, got {y}")
    w = weights if weights is not None else vix_weights(params.kappa, params.epsilon)
    z = ((vix / 100.0) ** 2 - w.a1 * y - (w.a3 + w.a4) * params.theta) / w.a2
    if z < 0:
        raise InfeasibleStateError(
            f"implied z = {z:.6g} < 0: y = {y} is too large for VIX = {vix}"
        )
    return z


def y_max_for_vix(vix: float, params: ModelParams,
                  weights: VixWeights | None = None) -> float:
    """Largest y compatible with the VIX level (z >= 0 feasibility bound)."""
    if vix <= 0:
        raise DomainError(f"vix must be positive, got {vix}")
    w = weights if weights is not None else vix_weights(params.kappa, params.epsilon)
    ymax = ((vix / 100.0) ** 2 - (w.a3 + w.a4) * params.theta) / w.a1
    if ymax < 0:
        raise InfeasibleStateError(
            f"VIX = {vix} below the state-free floor: no feasible (y, z)"
        )
    return ymax


def z_from_vix_heston(vix: float, kappa: float, theta: float) -> float:
    """Invert the one-factor benchmark VIX relation for its variance state."""
    if vix <= 0:
        raise DomainError(f"vix must be positive, got {vix}")
    b2, b4 = heston_star_weights(kappa)
    z = ((vix / 100.0) ** 2 - b4 * theta) / b2
    if z < 0:
        raise InfeasibleStateError(
            f"implied Heston z = {z:.6g} < 0 for VIX = {vix}"
        )
    return z


def vix_from_z_heston(z: float, kappa: float, theta: float) -> float:
    """Forward map of the one-factor benchmark: 100*sqrt(b2* z + b4* theta)."""
    b2, b4 = heston_star_weights(kappa)
    radicand = b2 * z + b4 * theta
    if radicand < 0:
        raise DomainError(f"negative benchmark VIX^2 radicand {radicand}")
    return 100.0 * math.sqrt(radicand)
