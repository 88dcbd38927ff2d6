"""VIX option pricing by real quadrature against a non-central chi-square.

The slow factor's conditional law is a scaled non-central chi-square, so
the leading VIX call term is a one-dimensional integral of the payoff
against that density evaluated with the limit weights.  The correction
term adds the fast factor's transient (y - z term) and the first-order
weight correction, both gated by the same payoff indicator.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .exceptions import DomainError, QuadratureError
from .model import (HiddenState, ModelParams, PriceDecomposition,
                    QuadratureConfig, VixWeights, heston_star_weights,
                    vix_weights)
from .quadrature import integrate


@dataclass(frozen=True)
class VixOptionSpec:
    """One VIX option: strike in VIX points, maturity in years."""

    strike: float
    tau: float
    is_call: bool = True

    def __post_init__(self):
        if self.strike < 0:
            raise ValueError(f"strike must be non-negative, got {self.strike}")
        if self.tau <= 0:
            raise ValueError(f"tau must be positive, got {self.tau}")


@dataclass(frozen=True)
class Ncx2Params:
    """Scaled non-central chi-square law of a CIR factor at horizon tau.

    dof = 4*kappa*theta/sigma^2, scale delta = (1-e^{-kappa tau}) sigma^2
    / (4 kappa), noncentrality lam = z e^{-kappa tau} / delta; the factor
    value is delta * zeta with zeta ~ ncx2(dof, lam).
    """

    dof: float
    lam: float
    delta: float

    def __post_init__(self):
        if self.dof <= 0 or self.delta <= 0 or self.lam < 0:
            raise ValueError(
                f"need dof > 0, delta > 0, lam >= 0, got "
                f"({self.dof}, {self.lam}, {self.delta})"
            )

    @classmethod
    def from_cir(cls, kappa: float, theta: float, sigma: float, z: float,
                 tau: float) -> "Ncx2Params":
        if tau <= 0:
            raise DomainError(f"tau must be positive, got {tau}")
        decay = math.exp(-kappa * tau)
        delta = (1.0 - decay) * sigma**2 / (4.0 * kappa)
        return cls(dof=4.0 * kappa * theta / sigma**2,
                   lam=z * decay / delta, delta=delta)


def ncx2_pdf(zeta, params: Ncx2Params, max_terms: int = 100_000):
    """Non-central chi-square density via its Poisson mixture of central
    chi-square densities, each term evaluated in log space.

    Accepts scalar or array zeta; negative arguments give zero density.
    """
    zeta = np.asarray(zeta, dtype=float)
    scalar = zeta.ndim == 0
    zeta = np.atleast_1d(zeta)
    out = np.zeros_like(zeta)
    pos = zeta > 0
    half = params.lam / 2.0
    if half == 0.0:
        n_terms = 1
    else:
        # Poisson weights are negligible beyond ~12 standard deviations
        n_terms = int(math.ceil(half + 12.0 * math.sqrt(half + 1.0))) + 30
    if n_terms > max_terms:
        raise QuadratureError(
            f"ncx2 series needs {n_terms} terms > budget {max_terms} "
            f"(lam = {params.lam}); widen the budget"
        )
    j = np.arange(n_terms)
    log_pois = -half + j * math.log(half) - gammaln(j + 1) if half > 0 \
        else np.array([0.0])
    m_half = params.dof / 2.0 + j  # half-dof of each central term
    zp = zeta[pos]
    log_chi2 = ((m_half[:, None] - 1.0) * np.log(zp)[None, :]
                - zp[None, :] / 2.0
                - m_half[:, None] * math.log(2.0)
                - gammaln(m_half)[:, None])
    out[pos] = np.exp(logsumexp(log_chi2 + log_pois[:, None], axis=0))
    if np.any(zeta == 0.0):
        at0 = math.inf if params.dof < 2.0 else 0.0
        if params.dof == 2.0:
            at0 = 0.5 * math.exp(-half)
        out[zeta == 0.0] = at0
    return float(out[0]) if scalar else out


def _sqrt_call_payoff(v, slope, intercept, strike):
    """(100*sqrt(slope*v + intercept) - K)+ gated at its kink threshold."""
    v = np.asarray(v, dtype=float)
    vstar = ((strike / 100.0) ** 2 - intercept) / slope
    gate = v >= vstar
    out = np.zeros_like(v)
    out[gate] = 100.0 * np.sqrt(slope * v[gate] + intercept) - strike
    return np.maximum(out, 0.0), vstar


def payoff_h0(v, params: ModelParams, strike: float,
              weights: VixWeights | None = None):
    """Leading VIX call payoff as a function of the slow-factor value v."""
    w = weights if weights is not None else vix_weights(params.kappa, params.epsilon)
    out, _ = _sqrt_call_payoff(v, w.a2_star, (1.0 + w.a4_star) * params.theta,
                               strike)
    return out if np.ndim(v) else float(out)


def payoff_h1star(v, state: HiddenState, tau: float, params: ModelParams,
                  strike: float, weights: VixWeights | None = None):
    """First-order payoff correction, frozen at the time-t value of y - z.

    The e^{-tau/epsilon} transient underflows to exactly 0 once
    tau/epsilon > ~745, which is the correct limit behavior.
    """
    if tau <= 0:
        raise DomainError(f"tau must be positive, got {tau}")
    w = weights if weights is not None else vix_weights(params.kappa, params.epsilon)
    v = np.asarray(v, dtype=float)
    slope, intercept = w.a2_star, (1.0 + w.a4_star) * params.theta
    vstar = ((strike / 100.0) ** 2 - intercept) / slope
    gate = v >= vstar
    transient = math.exp(-tau / params.epsilon) if tau / params.epsilon < 745 else 0.0
    numer = (2.0 * transient * w.a1 * (state.y - state.z)
             + params.kappa * params.epsilon * w.a2_star * (v - params.theta))
    out = np.zeros_like(v)
    out[gate] = 100.0 * numer[gate] / (4.0 * np.sqrt(slope * v[gate] + intercept))
    return out if np.ndim(v) else float(out)


def _integrate_payoff(rows, ncx2: Ncx2Params, vstar: float,
                      quad: QuadratureConfig, kinks=()):
    """Integrate payoff rows against the ncx2 density over [zeta*, inf).

    rows maps an array of factor values v to an (m, n) payoff array; the
    kink at vstar is the lower endpoint and any further payoff kinks
    (batched strikes) become panel edges, so each panel sees a smooth
    integrand.  The upper limit starts at the mean plus 40 mixed-moment
    standard deviations and doubles until the tail adds less than abs_tol.
    """
    zstar = max(vstar / ncx2.delta, 0.0)
    zmax = (ncx2.dof + ncx2.lam
            + 40.0 * math.sqrt(2.0 * (ncx2.dof + 2.0 * ncx2.lam)))
    zmax = max(zmax, zstar * 1.5 + 10.0)

    def integrand(zeta):
        return rows(ncx2.delta * zeta) * ncx2_pdf(zeta, ncx2)

    total, err, nodes = integrate(integrand, zstar, zmax, quad.abs_tol,
                                  quad.rel_tol, quad.max_nodes,
                                  breakpoints=[v / ncx2.delta for v in kinks])
    lo = zmax
    for _ in range(6):
        tail, terr, tn = integrate(integrand, lo, 2.0 * lo, quad.abs_tol,
                                   quad.rel_tol, max(quad.max_nodes - nodes, 1000),
                                   initial_panels=4)
        nodes += tn
        total = total + tail
        err = err + terr
        if np.all(np.abs(tail) < quad.abs_tol):
            return total, err
        lo *= 2.0
    raise QuadratureError("ncx2 tail not under abs_tol after 6 doublings",
                          estimate=total, error_estimate=err)


def price_vix_call(spec: VixOptionSpec, state: HiddenState, params: ModelParams,
                   quad: QuadratureConfig = QuadratureConfig(),
                   include_correction: bool = True) -> PriceDecomposition:
    """VIX call: leading term plus fast-factor correction.

    include_correction=False prices the epsilon -> 0 limit (the
    "uncorrected" surface), which depends on z only.
    """
    return price_vix_strike_batch([spec.strike], spec.tau, state, params,
                                  quad, include_correction)[0]


def price_vix_strike_batch(strikes, tau: float, state: HiddenState,
                           params: ModelParams,
                           quad: QuadratureConfig = QuadratureConfig(),
                           include_correction: bool = True
                           ) -> list[PriceDecomposition]:
    """Call decompositions for a strike grid in one density pass.

    The non-central chi-square density dominates the cost and is shared
    by every strike; each strike contributes its own gated payoff rows.
    """
    strikes = [float(k) for k in strikes]
    if not strikes:
        return []
    w = vix_weights(params.kappa, params.epsilon)
    ncx2 = Ncx2Params.from_cir(params.kappa, params.theta, params.sigma,
                               state.z, tau)
    slope, intercept = w.a2_star, (1.0 + w.a4_star) * params.theta
    vstar_min = min(((k / 100.0) ** 2 - intercept) / slope for k in strikes)

    def rows(v):
        parts = [_sqrt_call_payoff(v, slope, intercept, k)[0] for k in strikes]
        if include_correction:
            parts += [payoff_h1star(v, state, tau, params, k, w)
                      for k in strikes]
        return np.stack(parts)

    kinks = [((k / 100.0) ** 2 - intercept) / slope for k in strikes]
    vals, _ = _integrate_payoff(rows, ncx2, vstar_min, quad, kinks=kinks)
    disc = math.exp(-params.r * tau)
    n = len(strikes)
    out = []
    for i in range(n):
        out.append(PriceDecomposition(
            leading=disc * float(vals[i]),
            correction=disc * float(vals[n + i]) if include_correction else 0.0,
        ))
    return out


def price_vix_heston_strike_batch(strikes, tau: float, z: float, kappa: float,
                                  theta: float, sigma: float, r: float,
                                  quad: QuadratureConfig = QuadratureConfig()
                                  ) -> list[float]:
    """One-factor benchmark VIX calls for a strike grid in one pass."""
    strikes = [float(k) for k in strikes]
    if not strikes:
        return []
    b2, b4 = heston_star_weights(kappa)
    ncx2 = Ncx2Params.from_cir(kappa, theta, sigma, z, tau)
    slope, intercept = b2, b4 * theta
    vstar_min = min(((k / 100.0) ** 2 - intercept) / slope for k in strikes)

    def rows(v):
        return np.stack([_sqrt_call_payoff(v, slope, intercept, k)[0]
                         for k in strikes])

    kinks = [((k / 100.0) ** 2 - intercept) / slope for k in strikes]
    vals, _ = _integrate_payoff(rows, ncx2, vstar_min, quad, kinks=kinks)
    disc = math.exp(-r * tau)
    return [disc * float(vals[i]) for i in range(len(strikes))]


def vix_forward(tau: float, state: HiddenState, params: ModelParams,
                quad: QuadratureConfig = QuadratureConfig(),
                include_correction: bool = True) -> float:
    """Model VIX forward at horizon tau: the K = 0 call un-discounted."""
    zero = price_vix_call(VixOptionSpec(strike=0.0, tau=tau), state, params,
                          quad, include_correction)
    return zero.total * math.exp(params.r * tau)


def price_vix_put(spec: VixOptionSpec, state: HiddenState, params: ModelParams,
                  quad: QuadratureConfig = QuadratureConfig(),
                  include_correction: bool = True) -> PriceDecomposition:
    """VIX put via parity against the model VIX forward (extension).

    put = call - e^{-r tau} (F - K) with F the un-discounted K = 0 call.
    The parity shift sits in the leading term.
    """
    call = price_vix_call(spec, state, params, quad, include_correction)
    forward_level = vix_forward(spec.tau, state, params, quad, include_correction)
    disc = math.exp(-params.r * spec.tau)
    shift = -disc * (forward_level - spec.strike)
    return PriceDecomposition(leading=call.leading + shift,
                              correction=call.correction)


def price_vix(spec: VixOptionSpec, state: HiddenState, params: ModelParams,
              quad: QuadratureConfig = QuadratureConfig(),
              include_correction: bool = True) -> PriceDecomposition:
    """Dispatch on spec.is_call."""
    if spec.is_call:
        return price_vix_call(spec, state, params, quad, include_correction)
    return price_vix_put(spec, state, params, quad, include_correction)


def price_vix_call_heston(spec: VixOptionSpec, z: float, kappa: float,
                          theta: float, sigma: float, r: float,
                          quad: QuadratureConfig = QuadratureConfig()) -> float:
    """VIX call under the one-factor benchmark (exact, no expansion)."""
    if z < 0:
        raise DomainError(f"z must be non-negative, got {z}")
    return price_vix_heston_strike_batch([spec.strike], spec.tau, z, kappa,
                                         theta, sigma, r, quad)[0]


def price_vix_put_heston(spec: VixOptionSpec, z: float, kappa: float,
                         theta: float, sigma: float, r: float,
                         quad: QuadratureConfig = QuadratureConfig()) -> float:
    call = price_vix_call_heston(spec, z, kappa, theta, sigma, r, quad)
    fwd = price_vix_call_heston(VixOptionSpec(strike=0.0, tau=spec.tau), z,
                                kappa, theta, sigma, r, quad)
    disc = math.exp(-r * spec.tau)
    return call - (fwd - disc * spec.strike)
