"""Two-step joint calibration to VIX and SPX option quotes.

Step 1 fits the variance-process parameters to VIX options, with each
date's hidden state pinned to that date's VIX close: the one-factor
benchmark determines its state z_i uniquely, while the two-factor model
keeps one degree of freedom, resolved by a per-date one-dimensional fit
over the fast factor y_i (z_i follows from the VIX constraint).  Step 2
fits the index-leg parameters (rho for the benchmark, rho and w3_eps for
the two-factor model) to SPX options, holding step-1 output fixed.

All optimizer work runs on unconstrained coordinates via logit
transforms of the bounded parameters; Nelder-Mead with seeded random
restarts does the outer search.  Dates are evaluated serially inside
each objective call, which keeps results bitwise reproducible for a
given seed (the per-date fits are independent and could be fanned out,
at the cost of reduction-order effects in the objective sum).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize, minimize_scalar
from scipy.special import expit, logit

from .exceptions import InfeasibleStateError, MssvError, QuadratureError
from .model import (HiddenState, ModelParams, QuadratureConfig,
                    vix_weights, y_max_for_vix, z_from_vix_given_y,
                    z_from_vix_heston)
from .spx import price_heston_call_batch, price_spx_strike_batch
from .vix import price_vix_heston_strike_batch, price_vix_strike_batch

_PENALTY = 1e8


@dataclass(frozen=True)
class Quote:
    """One option observation reduced to what pricing needs."""

    strike: float
    tau: float
    is_call: bool
    price: float


@dataclass(frozen=True)
class DateSlice:
    """All quotes of one trade date plus that date's underlying closes."""

    date: str
    spx_level: float | None
    vix_level: float | None
    vix_quotes: tuple[Quote, ...] = ()
    spx_quotes: tuple[Quote, ...] = ()


@dataclass(frozen=True)
class CalibrationConfig:
    """Optimizer settings and parameter bounds."""

    max_iter: int = 200
    ftol: float = 1e-9
    xtol: float = 1e-6
    restarts: int = 3
    inner_xtol: float = 1e-6
    seed: int = 0
    weight_floor: float = 0.1
    bounds: dict = field(default_factory=lambda: {
        "kappa": (1e-3, 20.0),
        "theta": (1e-5, 1.0),
        "sigma": (1e-3, 3.0),
        "rho": (-1.0, 0.0),
        "epsilon": (1e-4, 0.1),
        "w3_eps": (-0.5, 0.5),
    })

    def __post_init__(self):
        if self.weight_floor <= 0:
            raise ValueError("weight_floor must be positive")
        for name, (lo, hi) in self.bounds.items():
            if lo >= hi:
                raise ValueError(f"empty bound for {name}: ({lo}, {hi})")


@dataclass
class CalibrationResult:
    model: str
    params: dict
    states: list
    step_objectives: list
    trace: list
    n_skipped_dates: int = 0

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "params": self.params,
            "states": self.states,
            "step_objectives": self.step_objectives,
            "trace": self.trace,
            "n_skipped_dates": self.n_skipped_dates,
        }


def weighted_sse(model_prices, market_prices, floor: float = 0.1) -> float:
    """Sum of squared residuals scaled by 1/(floor + market price)."""
    model_prices = np.asarray(model_prices, dtype=float)
    market_prices = np.asarray(market_prices, dtype=float)
    if model_prices.shape != market_prices.shape:
        raise ValueError(
            f"length mismatch: {model_prices.shape} vs {market_prices.shape}"
        )
    resid = (model_prices - market_prices) / (floor + market_prices)
    return float(resid @ resid)


class _Box:
    """Logit map between a bounded box and unconstrained coordinates."""

    def __init__(self, bounds):
        self.lo = np.array([b[0] for b in bounds])
        self.hi = np.array([b[1] for b in bounds])

    def to_internal(self, x):
        frac = (np.asarray(x, dtype=float) - self.lo) / (self.hi - self.lo)
        return logit(np.clip(frac, 1e-12, 1.0 - 1e-12))

    def to_external(self, u):
        return self.lo + (self.hi - self.lo) * expit(np.asarray(u, dtype=float))

    def snap(self, x, tol=1e-3):
        """Snap components within tol of a boundary onto it."""
        x = np.array(x, dtype=float)
        span = self.hi - self.lo
        x[np.abs(x - self.lo) < tol * span] = self.lo[np.abs(x - self.lo) < tol * span]
        x[np.abs(x - self.hi) < tol * span] = self.hi[np.abs(x - self.hi) < tol * span]
        return x


def _nelder_mead(fun, x0, box: _Box, cfg: CalibrationConfig, trace, step):
    """Restarted Nelder-Mead in transformed coordinates.

    Records the running-best objective per evaluation in trace (the
    accepted-step sequence, non-increasing by construction).
    """
    rng = np.random.default_rng(cfg.seed)
    best = None
    starts = [box.to_internal(x0)]
    for _ in range(max(cfg.restarts - 1, 0)):
        starts.append(box.to_internal(x0) + rng.normal(0.0, 1.0, size=len(x0)))

    running = [math.inf]

    def wrapped(u):
        val = fun(box.to_external(u))
        if val < running[0]:
            running[0] = val
            trace.append({"step": step, "eval": len(trace), "objective": val})
        return val

    for u0 in starts:
        res = minimize(wrapped, u0, method="Nelder-Mead",
                       options={"maxiter": cfg.max_iter, "fatol": cfg.ftol,
                                "xatol": cfg.xtol, "adaptive": True})
        if best is None or res.fun < best.fun:
            best = res
    x = box.snap(box.to_external(best.x))
    return x, float(fun(x))


def _date_wsse(prices, quotes, floor):
    return weighted_sse(prices, [q.price for q in quotes], floor)


def _group_by_tau(quotes):
    groups = {}
    for i, q in enumerate(quotes):
        groups.setdefault(q.tau, []).append(i)
    return groups


def _vix_quote_prices(quotes, pricer, r):
    """Batch-price VIX quotes grouped by maturity; puts via parity
    against the zero-strike call (the discounted forward)."""
    prices = np.empty(len(quotes))
    for tau, idx in _group_by_tau(quotes).items():
        strikes = [quotes[i].strike for i in idx]
        need_fwd = any(not quotes[i].is_call for i in idx)
        batch = pricer(strikes + ([0.0] if need_fwd else []), tau)
        disc = math.exp(-r * tau)
        for j, i in enumerate(idx):
            call = batch[j]
            if quotes[i].is_call:
                prices[i] = call
            else:
                prices[i] = call - batch[-1] + disc * quotes[i].strike
    return prices


def _spx_quote_prices(quotes, x, pricer, r):
    """Batch-price SPX quotes grouped by maturity; puts via parity."""
    prices = np.empty(len(quotes))
    for tau, idx in _group_by_tau(quotes).items():
        strikes = [quotes[i].strike for i in idx]
        batch = pricer(strikes, tau)
        disc = math.exp(-r * tau)
        for j, i in enumerate(idx):
            call = batch[j]
            if quotes[i].is_call:
                prices[i] = call
            else:
                prices[i] = call - x + disc * quotes[i].strike
    return prices


def _total_with_penalty(per_date, skipped):
    if not per_date:
        return _PENALTY
    total = sum(per_date)
    if skipped:
        total += skipped * 10.0 * float(np.median(per_date))
    return total


# ---------------------------------------------------------------------------
# one-factor benchmark
# ---------------------------------------------------------------------------

def _heston_step1_objective(slices, r, floor, quad):
    def fun(x):
        kappa, theta, sigma = x
        per_date, skipped = [], 0
        for sl in slices:
            try:
                z = z_from_vix_heston(sl.vix_level, kappa, theta)
                prices = _vix_quote_prices(
                    sl.vix_quotes,
                    lambda ks, tau: price_vix_heston_strike_batch(
                        ks, tau, z, kappa, theta, sigma, r, quad),
                    r)
                per_date.append(_date_wsse(prices, sl.vix_quotes, floor))
            except (InfeasibleStateError, QuadratureError, MssvError):
                skipped += 1
        return _total_with_penalty(per_date, skipped)
    return fun


def _heston_step2_objective(slices, states, kappa, theta, sigma, r, floor, quad):
    def fun(x):
        rho = float(x[0])
        per_date, skipped = [], 0
        for sl in slices:
            z = states.get(sl.date)
            if z is None or not sl.spx_quotes or sl.spx_level is None:
                continue
            try:
                prices = _spx_quote_prices(
                    sl.spx_quotes, sl.spx_level,
                    lambda ks, tau: price_heston_call_batch(
                        sl.spx_level, ks, tau, r, kappa, theta, sigma, rho,
                        z, quad),
                    r)
                per_date.append(_date_wsse(prices, sl.spx_quotes, floor))
            except (QuadratureError, MssvError):
                skipped += 1
        return _total_with_penalty(per_date, skipped)
    return fun


def calibrate_heston(slices, cfg: CalibrationConfig = CalibrationConfig(),
                     quad: QuadratureConfig = QuadratureConfig(),
                     r: float = 0.02,
                     x0: dict | None = None) -> CalibrationResult:
    """Two-step benchmark calibration: (kappa, theta, sigma) on VIX
    options with z_i pinned by the VIX close, then rho on SPX options."""
    usable = [sl for sl in slices if sl.vix_level and sl.vix_quotes]
    if not usable:
        raise MssvError("no dates with VIX quotes and a VIX close")
    trace = []
    start = x0 or {"kappa": 3.0, "theta": 0.04, "sigma": 0.5}
    b = cfg.bounds
    box1 = _Box([b["kappa"], b["theta"], b["sigma"]])
    fun1 = _heston_step1_objective(usable, r, cfg.weight_floor, quad)
    (kappa, theta, sigma), obj1 = _nelder_mead(
        fun1, [start["kappa"], start["theta"], start["sigma"]],
        box1, cfg, trace, "step1")

    states, skipped = {}, 0
    for sl in usable:
        try:
            states[sl.date] = z_from_vix_heston(sl.vix_level, kappa, theta)
        except InfeasibleStateError:
            skipped += 1

    box2 = _Box([b["rho"]])
    fun2 = _heston_step2_objective(slices, states, kappa, theta, sigma, r,
                                   cfg.weight_floor, quad)
    (rho,), obj2 = _nelder_mead(fun2, [-0.7], box2, cfg, trace, "step2")

    return CalibrationResult(
        model="heston",
        params={"kappa": kappa, "theta": theta, "sigma": sigma, "rho": rho,
                "r": r},
        states=[{"date": d, "z": z} for d, z in sorted(states.items())],
        step_objectives=[obj1, obj2],
        trace=trace,
        n_skipped_dates=skipped,
    )


# ---------------------------------------------------------------------------
# two-factor model
# ---------------------------------------------------------------------------

def inner_state_fit(date_slice: DateSlice, kappa: float, theta: float,
                    sigma: float, epsilon: float, r: float,
                    quad: QuadratureConfig = QuadratureConfig(),
                    floor: float = 0.1, xtol: float = 1e-6):
    """Fit the date's hidden state under the VIX-close constraint.

    The constraint z = z(y) is linear and exact, so the two-dimensional
    per-date fit reduces losslessly to a bounded search over y alone.
    Returns (state, objective).
    """
    if not date_slice.vix_quotes or not date_slice.vix_level:
        raise MssvError(f"date {date_slice.date} has no VIX data")
    params = ModelParams(kappa=kappa, theta=theta, sigma=sigma, rho=-0.5,
                         epsilon=epsilon, w3_eps=0.0, r=r)
    w = vix_weights(kappa, epsilon)
    ymax = y_max_for_vix(date_slice.vix_level, params, w)

    def objective(y):
        try:
            z = z_from_vix_given_y(date_slice.vix_level, y, params, w)
            state = HiddenState(y=y, z=z)
        except InfeasibleStateError:
            return _PENALTY
        prices = _vix_quote_prices(
            date_slice.vix_quotes,
            lambda ks, tau: [d.total for d in price_vix_strike_batch(
                ks, tau, state, params, quad)],
            r)
        return _date_wsse(prices, date_slice.vix_quotes, floor)

    res = minimize_scalar(objective, bounds=(0.0, ymax), method="bounded",
                          options={"xatol": xtol})
    y = float(res.x)
    z = z_from_vix_given_y(date_slice.vix_level, y, params, w)
    return HiddenState(y=y, z=z), float(res.fun)


def _msv_step1_objective(slices, r, floor, quad, xtol):
    def fun(x):
        kappa, theta, sigma, epsilon = x
        if kappa * epsilon >= 0.999:
            return _PENALTY * (1.0 + kappa * epsilon)
        per_date, skipped = [], 0
        for sl in slices:
            try:
                _, obj = inner_state_fit(sl, kappa, theta, sigma, epsilon, r,
                                         quad, floor, xtol)
                per_date.append(obj)
            except (InfeasibleStateError, QuadratureError, MssvError):
                skipped += 1
        return _total_with_penalty(per_date, skipped)
    return fun


def _msv_step2_objective(slices, states, kappa, theta, sigma, epsilon, r,
                         floor, quad):
    def fun(x):
        rho, w3 = float(x[0]), float(x[1])
        try:
            params = ModelParams(kappa=kappa, theta=theta, sigma=sigma,
                                 rho=rho, epsilon=epsilon, w3_eps=w3, r=r)
        except ValueError:
            return _PENALTY
        per_date, skipped = [], 0
        for sl in slices:
            st = states.get(sl.date)
            if st is None or not sl.spx_quotes or sl.spx_level is None:
                continue
            try:
                prices = _spx_quote_prices(
                    sl.spx_quotes, sl.spx_level,
                    lambda ks, tau: [d.total for d in price_spx_strike_batch(
                        sl.spx_level, ks, tau, st, params, quad)],
                    r)
                per_date.append(_date_wsse(prices, sl.spx_quotes, floor))
            except (QuadratureError, MssvError):
                skipped += 1
        return _total_with_penalty(per_date, skipped)
    return fun


def calibrate_msv(slices, cfg: CalibrationConfig = CalibrationConfig(),
                  quad: QuadratureConfig = QuadratureConfig(),
                  r: float = 0.02,
                  x0: dict | None = None) -> CalibrationResult:
    """Two-step two-factor calibration.

    Step 1 searches (kappa, theta, sigma, epsilon) with a nested
    per-date fit of (y_i, z_i); step 2 searches (rho, w3_eps) on SPX
    quotes.  Step 2 never touches step-1 output.
    """
    usable = [sl for sl in slices if sl.vix_level and sl.vix_quotes]
    if not usable:
        raise MssvError("no dates with VIX quotes and a VIX close")
    trace = []
    start = x0 or {"kappa": 3.0, "theta": 0.03, "sigma": 0.4, "epsilon": 0.02}
    b = cfg.bounds
    box1 = _Box([b["kappa"], b["theta"], b["sigma"], b["epsilon"]])
    fun1 = _msv_step1_objective(usable, r, cfg.weight_floor, quad, cfg.inner_xtol)
    (kappa, theta, sigma, epsilon), obj1 = _nelder_mead(
        fun1, [start["kappa"], start["theta"], start["sigma"], start["epsilon"]],
        box1, cfg, trace, "step1")

    states, skipped = {}, 0
    for sl in usable:
        try:
            st, _ = inner_state_fit(sl, kappa, theta, sigma, epsilon, r, quad,
                                    cfg.weight_floor, cfg.inner_xtol)
            states[sl.date] = st
        except (InfeasibleStateError, MssvError):
            skipped += 1

    box2 = _Box([b["rho"], b["w3_eps"]])
    fun2 = _msv_step2_objective(slices, states, kappa, theta, sigma, epsilon,
                                r, cfg.weight_floor, quad)
    (rho, w3), obj2 = _nelder_mead(fun2, [-0.7, 0.01], box2, cfg, trace, "step2")

    return CalibrationResult(
        model="msv",
        params={"kappa": kappa, "theta": theta, "sigma": sigma, "rho": rho,
                "epsilon": epsilon, "w3_eps": w3, "r": r},
        states=[{"date": d, "y": st.y, "z": st.z}
                for d, st in sorted(states.items())],
        step_objectives=[obj1, obj2],
        trace=trace,
        n_skipped_dates=skipped,
    )
