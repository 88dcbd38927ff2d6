"""SPX option pricing by single complex-contour Fourier integration.

The leading term prices under the effective one-factor dynamics obtained
by averaging out the fast factor: a Heston model with mean reversion
kappa, long-run variance 2*theta, vol-of-vol sqrt(2)*sigma, correlation
rho/sqrt(2) and initial variance 2z.  The correction term adds the fast
factor's skew effect, proportional to w3_eps, on the same contour with
the same nodes.

Branch handling: d(k) is the square root chosen so that
kappa + i*rho*sigma*k + d(k) -> 0 as k -> 0 (d = -principal root), which
makes the characteristic function exactly 1 at k = 0.  All exponentials
are arranged as exp(tau*d) with Re(d) <= 0, so nothing grows along the
contour.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .exceptions import CharFnOverflowError, DomainError, QuadratureError
from .model import HiddenState, ModelParams, PriceDecomposition, QuadratureConfig
from .quadrature import integrate_with_tail_doubling

#: below this maturity the asymptotic expansion is not trusted; results
#: carry a warning flag instead of failing
SHORT_MATURITY = 1.0 / 365.0

_EXP_CAP = 700.0  # double overflows just above exp(709)


@dataclass(frozen=True)
class SpxOptionSpec:
    """One SPX option: spot and strike in index points, maturity in years."""

    x: float
    strike: float
    tau: float
    is_call: bool = True

    def __post_init__(self):
        if self.x <= 0 or self.strike <= 0:
            raise ValueError(
                f"spot and strike must be positive, got ({self.x}, {self.strike})"
            )
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


@dataclass(frozen=True)
class CharFnTerms:
    """All k-dependent pieces of the transform at one (tau, k)."""

    C: complex
    D: complex
    d: complex
    g: complex
    b: complex
    f0_hat: complex
    f1_hat: complex


def effective_heston(params: ModelParams) -> tuple[float, float, float, float]:
    """(kappa, theta, sigma, rho) of the averaged one-factor dynamics."""
    return (params.kappa, 2.0 * params.theta,
            math.sqrt(2.0) * params.sigma, params.rho / math.sqrt(2.0))


def _cf_terms(tau, k, kappa, theta_e, sigma_e, rho_e):
    """C, D, d, g and E = exp(tau*d) for the Heston transform.

    Vectorized over k.  exp(C + v0*D) is the characteristic function of
    the de-trended log price under (kappa, theta_e, sigma_e, rho_e)
    dynamics started at variance v0.
    """
    beta = kappa + 1j * rho_e * sigma_e * k
    d = -np.sqrt(sigma_e**2 * (k * k - 1j * k) + beta * beta)
    g = (beta + d) / (beta - d)
    E = np.exp(tau * d)
    one_gE = 1.0 - g * E
    C = kappa * theta_e / sigma_e**2 * (
        (beta + d) * tau - 2.0 * np.log(one_gE / (1.0 - g))
    )
    D = (beta + d) / sigma_e**2 * (1.0 - E) / one_gE
    return C, D, d, g, E


def _correction_factors(tau, d, g, E):
    """Closed-form time integrals f0_hat, f1_hat of the correction term."""
    gE = g * E
    denom = gE - 1.0
    f1 = (E * (g * g * (E - 1.0) - 2.0 * tau * d * g + 1.0) - 1.0) / (d * denom**2)
    f0 = ((2.0 * tau * d * g + g * g - 1.0) / (d * d * g * denom)
          + (tau * d * g - g - 1.0) / (d * d * g))
    return f0, f1


def _b_coeff(k, w3_eps):
    return -0.5 * w3_eps * (1j * k**3 + k * k)


def char_fn_G(tau: float, k: complex, xi: float, params: ModelParams) -> complex:
    """Characteristic-function factor exp(C + xi*D) at one (tau, k).

    xi is the initial variance of the effective dynamics (2z for the
    two-factor model).  tau = 0 returns exactly 1 for any k.
    """
    if tau < 0:
        raise DomainError(f"tau must be non-negative, got {tau}")
    if tau == 0:
        return 1.0 + 0.0j
    ke, te, se, re_ = effective_heston(params)
    C, D, _, _, _ = _cf_terms(tau, np.asarray([k], dtype=complex), ke, te, se, re_)
    expo = C[0] + xi * D[0]
    if expo.real > _EXP_CAP:
        raise CharFnOverflowError(
            f"Re(C + xi*D) = {expo.real:.1f} exceeds the exponent range at "
            f"k = {k}; truncation is set too wide"
        )
    return cmath.exp(expo)


def correction_factors(tau: float, k: complex,
                       params: ModelParams) -> tuple[complex, complex, complex]:
    """(f0_hat, f1_hat, b) at one (tau, k); b carries w3_eps."""
    if tau <= 0:
        raise DomainError(f"tau must be positive, got {tau}")
    ke, te, se, re_ = effective_heston(params)
    karr = np.asarray([k], dtype=complex)
    _, _, d, g, E = _cf_terms(tau, karr, ke, te, se, re_)
    if abs(g[0] * E[0] - 1.0) < 1e-13:
        raise DomainError(
            f"g*exp(tau*d) = 1 within tolerance at k = {k}: pole in the "
            "correction factors; perturb k on the contour"
        )
    f0, f1 = _correction_factors(tau, d, g, E)
    return f0[0], f1[0], _b_coeff(k, params.w3_eps)


def char_fn_terms(tau: float, k: complex, params: ModelParams) -> CharFnTerms:
    """All transform pieces at one (tau, k), for diagnostics and tests."""
    ke, te, se, re_ = effective_heston(params)
    karr = np.asarray([k], dtype=complex)
    C, D, d, g, E = _cf_terms(tau, karr, ke, te, se, re_)
    if tau > 0:
        f0, f1 = _correction_factors(tau, d, g, E)
        f0, f1 = f0[0], f1[0]
    else:
        f0 = f1 = 0.0 + 0.0j
    return CharFnTerms(C=C[0], D=D[0], d=d[0], g=g[0],
                       b=_b_coeff(k, params.w3_eps), f0_hat=f0, f1_hat=f1)


def _fourier_call(x, strike, tau, r, kappa, theta_e, sigma_e, rho_e, v0,
                  corr_scale, quad):
    """Single-strike wrapper over the shared batch contour pass."""
    leading, correction = _fourier_call_batch(
        x, [strike], tau, r, kappa, theta_e, sigma_e, rho_e, v0, corr_scale,
        quad)
    return leading[0], correction[0]


def price_spx_call(spec: SpxOptionSpec, state: HiddenState, params: ModelParams,
                   quad: QuadratureConfig = QuadratureConfig()) -> PriceDecomposition:
    """Approximate SPX call price: leading term plus fast-factor correction."""
    leading, correction = _fourier_call(
        spec.x, spec.strike, spec.tau, params.r,
        *effective_heston(params), 2.0 * state.z, params.w3_eps, quad,
    )
    return PriceDecomposition(
        leading=leading, correction=correction,
        short_maturity_warning=spec.tau < SHORT_MATURITY,
    )


def price_spx_put(spec: SpxOptionSpec, state: HiddenState, params: ModelParams,
                  quad: QuadratureConfig = QuadratureConfig()) -> PriceDecomposition:
    """SPX put via put-call parity; the parity shift sits in the leading term."""
    call = price_spx_call(spec, state, params, quad)
    shift = -spec.x + spec.strike * math.exp(-params.r * spec.tau)
    return PriceDecomposition(
        leading=call.leading + shift, correction=call.correction,
        short_maturity_warning=call.short_maturity_warning,
    )


def price_spx(spec: SpxOptionSpec, state: HiddenState, params: ModelParams,
              quad: QuadratureConfig = QuadratureConfig()) -> PriceDecomposition:
    """Dispatch on spec.is_call."""
    if spec.is_call:
        return price_spx_call(spec, state, params, quad)
    return price_spx_put(spec, state, params, quad)


def _fourier_call_batch(x, strikes, tau, r, kappa, theta_e, sigma_e, rho_e,
                        v0, corr_scale, quad):
    """Contour pass shared by a whole strike grid.

    The transform terms are strike-independent; only the payoff
    transform differs per strike, so the grid costs barely more than a
    single option.  Returns (leading[], correction[]).
    """
    strikes = [float(k) for k in strikes]
    if min(strikes) <= 0:
        raise DomainError("strikes must be positive")
    alpha = quad.contour_shift
    q = r * tau + math.log(x)
    log_ks = np.array([math.log(k) for k in strikes])
    with_corr = corr_scale != 0.0

    def integrand(u):
        k = u + 1j * alpha
        C, D, d, g, E = _cf_terms(tau, k, kappa, theta_e, sigma_e, rho_e)
        expo = (C + v0 * D - 1j * k * q)[None, :] \
            + (1.0 + 1j * k)[None, :] * log_ks[:, None]
        worst = expo.real.max()
        if worst > _EXP_CAP:
            raise CharFnOverflowError(
                f"transform exponent {worst:.1f} out of range on the contour")
        base = np.exp(expo) / (1j * k - k * k)
        if not with_corr:
            return base
        f0, f1 = _correction_factors(tau, d, g, E)
        corr = _b_coeff(k, corr_scale) * (0.5 * kappa * theta_e * f0 + v0 * f1)
        return np.concatenate([base, base * corr[None, :]], axis=0)

    scale = 2.0 * math.pi * math.exp(r * tau)
    vals, _, _ = integrate_with_tail_doubling(
        integrand, quad.truncation,
        abs_tol=quad.abs_tol * max(strikes) * scale,
        rel_tol=quad.rel_tol, max_nodes=quad.max_nodes,
    )
    vals = vals * math.exp(-r * tau) / (2.0 * math.pi)
    n = len(strikes)
    leading, correction = [], []
    for i in range(n):
        total = vals[i] + (vals[n + i] if with_corr else 0.0)
        if abs(total.imag) > 1e-10 * max(1.0, abs(total.real)):
            raise QuadratureError(
                f"imaginary residue {total.imag:.3e} at strike {strikes[i]}",
                estimate=total.real,
            )
        leading.append(float(vals[i].real))
        correction.append(float(vals[n + i].real) if with_corr else 0.0)
    return leading, correction


def price_spx_strike_batch(x: float, strikes, tau: float, state: HiddenState,
                           params: ModelParams,
                           quad: QuadratureConfig = QuadratureConfig()
                           ) -> list[PriceDecomposition]:
    """Call decompositions for a strike grid in one contour pass."""
    if len(strikes) == 0:
        return []
    ke, te, se, re_ = effective_heston(params)
    leading, correction = _fourier_call_batch(
        x, strikes, tau, params.r, ke, te, se, re_, 2.0 * state.z,
        params.w3_eps, quad)
    warn = tau < SHORT_MATURITY
    return [PriceDecomposition(leading=l, correction=c,
                               short_maturity_warning=warn)
            for l, c in zip(leading, correction)]


def price_heston_call_batch(x: float, strikes, tau: float, r: float,
                            kappa: float, theta: float, sigma: float,
                            rho: float, v0: float,
                            quad: QuadratureConfig = QuadratureConfig()
                            ) -> list[float]:
    """One-factor benchmark calls for a strike grid in one contour pass."""
    if len(strikes) == 0:
        return []
    leading, _ = _fourier_call_batch(x, strikes, tau, r, kappa, theta, sigma,
                                     rho, v0, 0.0, quad)
    return leading


def price_heston_call(x: float, strike: float, tau: float, r: float,
                      kappa: float, theta: float, sigma: float, rho: float,
                      v0: float,
                      quad: QuadratureConfig = QuadratureConfig()) -> float:
    """One-factor Heston benchmark call on the same contour machinery."""
    if x <= 0 or strike <= 0 or tau <= 0:
        raise DomainError("x, strike, tau must be positive")
    if not -1.0 <= rho <= 1.0:
        raise DomainError(f"rho must lie in [-1, 1], got {rho}")
    leading, _ = _fourier_call(x, strike, tau, r, kappa, theta, sigma, rho,
                               v0, 0.0, quad)
    return leading


def price_heston_put(x: float, strike: float, tau: float, r: float,
                     kappa: float, theta: float, sigma: float, rho: float,
                     v0: float,
                     quad: QuadratureConfig = QuadratureConfig()) -> float:
    call = price_heston_call(x, strike, tau, r, kappa, theta, sigma, rho, v0, quad)
    return call - x + strike * math.exp(-r * tau)
