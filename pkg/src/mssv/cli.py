"""Command-line interface.

Subcommands: price-spx, price-vix, calibrate, imvol-surface, validate,
error-report, make-synthetic.  A flat KEY=value config file can supply
any option; explicit flags win.  Exit codes: 0 success, 1 usage,
2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import datetime as dt
import json
import math
import sys

import numpy as np

from . import __version__
from .calibration import CalibrationConfig, calibrate_heston, calibrate_msv
from .data import (FilterRules, apply_filters, error_report, load_quotes,
                   make_synthetic_quotes, split_train_test, to_date_slices,
                   write_error_table_csv, write_quotes_csv)
from .exceptions import DataError, MssvError
from .impvol import bs_implied_vol, vix_normal_implied_vol, write_surface_csv
from .mc import McConfig, McModelParams, mc_price_spx_strikes, mc_price_vix_strikes
from .model import (HiddenState, ModelParams, QuadratureConfig,
                    vix_from_state, vix_limit_from_z)
from .spx import SpxOptionSpec, price_heston_call, price_spx
from .vix import VixOptionSpec, price_vix, price_vix_call_heston

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERICAL = 0, 1, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _g(x: float) -> str:
    return f"{x:.10g}"


def read_config(path) -> dict:
    """Flat KEY=value file; blank lines and # comments ignored."""
    out = {}
    try:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise DataError(f"bad config line: {line!r}")
                key, val = line.split("=", 1)
                out[key.strip()] = val.strip()
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    return out


_PARAM_KEYS = ("kappa", "theta", "sigma", "rho", "epsilon", "w3_eps", "r")
_QUAD_KEYS = ("contour_shift", "truncation", "abs_tol", "rel_tol", "max_nodes")
_MC_KEYS = ("paths", "seed", "steps_per_eps", "scheme")


def _merged(args, key, default=None, cast=float):
    """Flag value if given, else config value, else default."""
    val = getattr(args, key.replace("-", "_"), None)
    if val is not None:
        return val
    cfg = getattr(args, "_config", {})
    if key in cfg:
        return cast(cfg[key]) if cast is not None else cfg[key]
    return default


def _model_params(args) -> ModelParams:
    vals = {}
    defaults = {"r": 0.02}
    for key in _PARAM_KEYS:
        v = _merged(args, key, defaults.get(key))
        if v is None:
            raise DataError(f"missing model parameter {key!r} (flag or config)")
        vals[key] = float(v)
    return ModelParams(**vals)


def _quad_config(args) -> QuadratureConfig:
    kw = {}
    for key in _QUAD_KEYS:
        cast = int if key == "max_nodes" else float
        v = _merged(args, key, None, cast)
        if v is not None:
            kw[key] = cast(v)
    return QuadratureConfig(**kw)


def _mc_config(args) -> McConfig:
    kw = {}
    for key in _MC_KEYS:
        cast = str if key == "scheme" else int
        v = _merged(args, key, None, cast)
        if v is not None:
            kw[key] = cast(v)
    return McConfig(**kw)


def _state(args) -> HiddenState:
    y = _merged(args, "y")
    z = _merged(args, "z")
    if y is None or z is None:
        raise DataError("hidden state requires --y and --z")
    return HiddenState(y=float(y), z=float(z))


def _floats(text) -> list[float]:
    return [float(t) for t in str(text).split(",") if t]


def _add_param_flags(p):
    p.add_argument("--config", help="flat KEY=value config file")
    for key in _PARAM_KEYS:
        p.add_argument(f"--{key.replace('_', '-')}", type=float, dest=key)
    for key in _QUAD_KEYS:
        cast = int if key == "max_nodes" else float
        p.add_argument(f"--{key.replace('_', '-')}", type=cast, dest=key)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_price_spx(args):
    params = _model_params(args)
    state = _state(args)
    quad = _quad_config(args)
    print("strike      leading          correction       total")
    for k in _floats(args.strikes):
        spec = SpxOptionSpec(x=args.x, strike=k, tau=args.tau,
                             is_call=not args.put)
        d = price_spx(spec, state, params, quad)
        warn = "  [short-maturity: asymptotics not trusted]" \
            if d.short_maturity_warning else ""
        print(f"{_g(k):<11} {_g(d.leading):<16} {_g(d.correction):<16} "
              f"{_g(d.total)}{warn}")
    return EXIT_OK


def cmd_price_vix(args):
    params = _model_params(args)
    state = _state(args)
    quad = _quad_config(args)
    corrected = not args.uncorrected
    print("strike      leading          correction       total")
    for k in _floats(args.strikes):
        spec = VixOptionSpec(strike=k, tau=args.tau, is_call=not args.put)
        d = price_vix(spec, state, params, quad, include_correction=corrected)
        print(f"{_g(k):<11} {_g(d.leading):<16} {_g(d.correction):<16} {_g(d.total)}")
    return EXIT_OK


def _load_slices(args):
    quotes, rejects = load_quotes(args.quotes)
    if rejects:
        print(f"rejected {len(rejects)} malformed rows "
              f"(first: line {rejects[0].line}: {rejects[0].reason})",
              file=sys.stderr)
    if not args.no_filters:
        quotes, stats = apply_filters(quotes, FilterRules())
        print(f"filters: kept {stats.kept}, removed "
              f"{stats.removed_by_volume} by volume, "
              f"{stats.removed_by_price} by price, "
              f"{stats.removed_by_expiry} by expiry", file=sys.stderr)
    if args.split_date:
        split = dt.date.fromisoformat(args.split_date)
        train, test = split_train_test(quotes, split)
        quotes = train if args.use == "train" else test
        print(f"split at {split}: using {args.use} set "
              f"({len(quotes)} quotes)", file=sys.stderr)
    if not quotes:
        raise DataError("no quotes left after filtering/splitting")
    return to_date_slices(quotes)


def _round_floats(obj, digits=10):
    if isinstance(obj, float):
        return float(f"{obj:.{digits}g}")
    if isinstance(obj, dict):
        return {k: _round_floats(v, digits) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v, digits) for v in obj]
    return obj


def cmd_calibrate(args):
    slices = _load_slices(args)
    cfg = CalibrationConfig(
        max_iter=int(_merged(args, "max_iter", 200, int)),
        restarts=int(_merged(args, "restarts", 3, int)),
        seed=int(_merged(args, "seed", 0, int)),
    )
    quad = _quad_config(args)
    r = float(_merged(args, "r", 0.02))
    if args.model == "heston":
        result = calibrate_heston(slices, cfg, quad, r=r)
    else:
        result = calibrate_msv(slices, cfg, quad, r=r)
    doc = _round_floats(result.as_dict())
    with open(args.out, "w") as fh:
        json.dump(doc, fh, indent=2)
    print(f"wrote {args.out}")
    for key, val in result.params.items():
        print(f"{key} = {_g(val)}")
    print(f"objectives: step1 = {_g(result.step_objectives[0])}, "
          f"step2 = {_g(result.step_objectives[1])}")
    if result.n_skipped_dates:
        print(f"skipped dates: {result.n_skipped_dates}")
    return EXIT_OK


def cmd_imvol_surface(args):
    params = _model_params(args)
    quad = _quad_config(args)
    state = _state(args)
    z0 = float(_merged(args, "uncorrected_z", state.z))
    strikes = _floats(args.strikes)
    taus = _floats(args.taus)
    corrected = np.empty((len(strikes), len(taus)))
    uncorrected = np.empty_like(corrected)

    if args.kind == "vix":
        level_c = vix_from_state(state, params)
        level_u = vix_limit_from_z(z0, params)
        state_u = HiddenState(y=z0, z=z0)
        for j, tau in enumerate(taus):
            for i, k in enumerate(strikes):
                pc = price_vix(VixOptionSpec(k, tau), state, params, quad).total
                pu = price_vix(VixOptionSpec(k, tau), state_u, params, quad,
                               include_correction=False).total
                corrected[i, j] = vix_normal_implied_vol(pc, level_c, k, tau)
                uncorrected[i, j] = vix_normal_implied_vol(pu, level_u, k, tau)
    else:
        x = float(_merged(args, "x", 2000.0))
        for j, tau in enumerate(taus):
            for i, k in enumerate(strikes):
                pc = price_spx(SpxOptionSpec(x, k, tau), state, params, quad).total
                d0 = price_spx(SpxOptionSpec(x, k, tau),
                               HiddenState(y=z0, z=z0),
                               ModelParams(kappa=params.kappa, theta=params.theta,
                                           sigma=params.sigma, rho=params.rho,
                                           epsilon=params.epsilon, w3_eps=0.0,
                                           r=params.r), quad)
                corrected[i, j] = bs_implied_vol(pc, x, k, tau, params.r)
                uncorrected[i, j] = bs_implied_vol(d0.leading, x, k, tau, params.r)

    write_surface_csv(args.out_corrected, strikes, taus, corrected)
    write_surface_csv(args.out_uncorrected, strikes, taus, uncorrected)
    write_surface_csv(args.out_diff, strikes, taus, corrected - uncorrected)
    print(f"wrote {args.out_corrected}, {args.out_uncorrected}, {args.out_diff}")
    return EXIT_OK


def cmd_validate(args):
    params = _model_params(args)
    state = _state(args)
    quad = _quad_config(args)
    mc_cfg = _mc_config(args)
    mp = McModelParams.from_split(params, eta=float(_merged(args, "eta", -1.0)))
    x = float(_merged(args, "x", 2000.0))
    failures = 0

    spx_strikes = _floats(args.spx_strikes)
    if spx_strikes:
        tau = float(args.spx_tau)
        ests = mc_price_spx_strikes(mp, state, x, spx_strikes, tau, mc_cfg)
        print(f"SPX tau={_g(tau)} x={_g(x)} paths={mc_cfg.paths} "
              f"(scheme={mc_cfg.scheme}, eta={_g(mp.eta)}, nu={_g(mp.nu)})")
        print("strike      analytic         mc               se            dev/se")
        for k, est in zip(spx_strikes, ests):
            a = price_spx(SpxOptionSpec(x, k, tau), state, params, quad).total
            dev = (a - est.mean) / est.standard_error
            flag = "" if abs(dev) <= 3 else "  OUTSIDE 3SE"
            failures += abs(dev) > 3
            print(f"{_g(k):<11} {_g(a):<16} {_g(est.mean):<16} "
                  f"{_g(est.standard_error):<13} {dev:+.2f}{flag}")

    vix_strikes = _floats(args.vix_strikes)
    if vix_strikes:
        tau = float(args.vix_tau)
        ests = mc_price_vix_strikes(mp, state, vix_strikes, tau, mc_cfg)
        print(f"VIX tau={_g(tau)} paths={mc_cfg.paths}")
        print("strike      analytic         mc               se            dev/se")
        for k, est in zip(vix_strikes, ests):
            a = price_vix(VixOptionSpec(k, tau), state, params, quad).total
            dev = (a - est.mean) / est.standard_error
            flag = "" if abs(dev) <= 3 else "  OUTSIDE 3SE"
            failures += abs(dev) > 3
            print(f"{_g(k):<11} {_g(a):<16} {_g(est.mean):<16} "
                  f"{_g(est.standard_error):<13} {dev:+.2f}{flag}")
    print(f"points outside 3 SE: {failures}")
    return EXIT_OK


def _price_slice_both(sl, heston_doc, msv_doc, quad):
    """Model prices for every quote of one date slice under both fits."""
    h_par = heston_doc["params"]
    m_par = msv_doc["params"]
    h_state = {s["date"]: s["z"] for s in heston_doc["states"]}.get(sl.date)
    m_state = {s["date"]: (s["y"], s["z"]) for s in msv_doc["states"]}.get(sl.date)
    if h_state is None or m_state is None:
        return None
    params = ModelParams(kappa=m_par["kappa"], theta=m_par["theta"],
                         sigma=m_par["sigma"], rho=m_par["rho"],
                         epsilon=m_par["epsilon"], w3_eps=m_par["w3_eps"],
                         r=m_par["r"])
    state = HiddenState(y=m_state[0], z=m_state[1])
    out = []
    for q in sl.vix_quotes:
        spec = VixOptionSpec(q.strike, q.tau, q.is_call)
        ph = price_vix_call_heston(spec, h_state, h_par["kappa"],
                                   h_par["theta"], h_par["sigma"],
                                   h_par["r"], quad)
        pm = price_vix(spec, state, params, quad).total
        out.append(("VIX", q, ph, pm))
    for q in sl.spx_quotes:
        ph = price_heston_call(sl.spx_level, q.strike, q.tau, h_par["r"],
                               h_par["kappa"], h_par["theta"], h_par["sigma"],
                               h_par["rho"], h_state, quad)
        pm = price_spx(SpxOptionSpec(sl.spx_level, q.strike, q.tau, q.is_call),
                       state, params, quad).total
        out.append(("SPX", q, ph, pm))
    return out


def cmd_error_report(args):
    slices = _load_slices(args)
    quad = _quad_config(args)
    with open(args.heston_result) as fh:
        heston_doc = json.load(fh)
    with open(args.msv_result) as fh:
        msv_doc = json.load(fh)

    rows, skipped = [], 0
    for sl in slices:
        priced = _price_slice_both(sl, heston_doc, msv_doc, quad)
        if priced is None:
            skipped += 1
            continue
        rows.extend(priced)
    if not rows:
        raise DataError("no dates shared by both calibration results")

    class _Q:  # quote shim carrying just what error_report reads
        def __init__(self, und, q):
            self.underlying_kind = und
            self.tau = q.tau
            self.mid_price = q.price

    quotes = [_Q(und, q) for und, q, _, _ in rows]
    rep_h = error_report([ph for _, _, ph, _ in rows], quotes)
    rep_m = error_report([pm for _, _, _, pm in rows], quotes)
    write_error_table_csv(args.out, rep_h, rep_m)
    print(f"wrote {args.out} ({len(rows)} options, {skipped} dates skipped)")
    for und in ("SPX", "VIX"):
        h = rep_h.cell(und, "total")
        m = rep_m.cell(und, "total")
        if h.count:
            print(f"{und}: heston mean {_g(h.mean)}, ours mean {_g(m.mean)}, "
                  f"o/h {_g(100 * m.mean / h.mean)}%")
    return EXIT_OK


def cmd_make_synthetic(args):
    params = _model_params(args)
    rng = np.random.default_rng(int(_merged(args, "state_seed", 1, int)))
    start = dt.date.fromisoformat(args.start_date)
    states = []
    for i in range(args.n_dates):
        date = start + dt.timedelta(days=7 * i)
        y = params.theta * math.exp(0.5 * rng.standard_normal())
        z = params.theta * math.exp(0.5 * rng.standard_normal())
        states.append((date.isoformat(), HiddenState(y=y, z=z)))
    quotes = make_synthetic_quotes(
        params, states, spx_level=float(_merged(args, "x", 2000.0)),
        noise=args.noise, seed=int(_merged(args, "seed", 0, int)),
        quad=_quad_config(args))
    write_quotes_csv(args.out, quotes)
    print(f"wrote {args.out} ({len(quotes)} quotes, {args.n_dates} dates)")
    return EXIT_OK


# ---------------------------------------------------------------------------

def build_parser() -> _Parser:
    p = _Parser(prog="mssv", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("price-spx", help="price SPX options on a strike grid")
    _add_param_flags(sp)
    sp.add_argument("--x", type=float, required=True)
    sp.add_argument("--strikes", required=True, help="comma-separated")
    sp.add_argument("--tau", type=float, required=True)
    sp.add_argument("--y", type=float)
    sp.add_argument("--z", type=float)
    sp.add_argument("--put", action="store_true")
    sp.set_defaults(func=cmd_price_spx)

    vp = sub.add_parser("price-vix", help="price VIX options on a strike grid")
    _add_param_flags(vp)
    vp.add_argument("--strikes", required=True)
    vp.add_argument("--tau", type=float, required=True)
    vp.add_argument("--y", type=float)
    vp.add_argument("--z", type=float)
    vp.add_argument("--put", action="store_true")
    vp.add_argument("--uncorrected", action="store_true",
                    help="leading term only (epsilon -> 0 surface)")
    vp.set_defaults(func=cmd_price_vix)

    cp = sub.add_parser("calibrate", help="two-step calibration from quotes")
    _add_param_flags(cp)
    cp.add_argument("--model", choices=["heston", "msv"], required=True)
    cp.add_argument("--quotes", required=True)
    cp.add_argument("--out", required=True)
    cp.add_argument("--split-date")
    cp.add_argument("--use", choices=["train", "test"], default="train")
    cp.add_argument("--no-filters", action="store_true")
    cp.add_argument("--max-iter", type=int, dest="max_iter")
    cp.add_argument("--restarts", type=int)
    cp.add_argument("--seed", type=int)
    cp.set_defaults(func=cmd_calibrate)

    ip = sub.add_parser("imvol-surface",
                        help="corrected/uncorrected implied-vol grids")
    _add_param_flags(ip)
    ip.add_argument("--kind", choices=["spx", "vix"], required=True)
    ip.add_argument("--x", type=float)
    ip.add_argument("--y", type=float)
    ip.add_argument("--z", type=float)
    ip.add_argument("--uncorrected-z", type=float, dest="uncorrected_z")
    ip.add_argument("--strikes", required=True)
    ip.add_argument("--taus", required=True)
    ip.add_argument("--out-corrected", required=True)
    ip.add_argument("--out-uncorrected", required=True)
    ip.add_argument("--out-diff", required=True)
    ip.set_defaults(func=cmd_imvol_surface)

    vl = sub.add_parser("validate", help="Monte Carlo vs analytic report")
    _add_param_flags(vl)
    vl.add_argument("--x", type=float)
    vl.add_argument("--y", type=float)
    vl.add_argument("--z", type=float)
    vl.add_argument("--eta", type=float)
    vl.add_argument("--spx-strikes", default="", dest="spx_strikes")
    vl.add_argument("--spx-tau", type=float, default=0.25, dest="spx_tau")
    vl.add_argument("--vix-strikes", default="", dest="vix_strikes")
    vl.add_argument("--vix-tau", type=float, default=30 / 365, dest="vix_tau")
    vl.add_argument("--paths", type=int)
    vl.add_argument("--seed", type=int)
    vl.add_argument("--steps-per-eps", type=int, dest="steps_per_eps")
    vl.add_argument("--scheme", choices=["exact", "euler"])
    vl.set_defaults(func=cmd_validate)

    ep = sub.add_parser("error-report",
                        help="bucketed two-model error tables from quotes")
    _add_param_flags(ep)
    ep.add_argument("--quotes", required=True)
    ep.add_argument("--heston-result", required=True, dest="heston_result")
    ep.add_argument("--msv-result", required=True, dest="msv_result")
    ep.add_argument("--out", required=True)
    ep.add_argument("--split-date")
    ep.add_argument("--use", choices=["train", "test"], default="train")
    ep.add_argument("--no-filters", action="store_true")
    ep.set_defaults(func=cmd_error_report)

    mp = sub.add_parser("make-synthetic",
                        help="generate a synthetic quote CSV from known parameters")
    _add_param_flags(mp)
    mp.add_argument("--out", required=True)
    mp.add_argument("--n-dates", type=int, default=6, dest="n_dates")
    mp.add_argument("--start-date", default="2016-01-05", dest="start_date")
    mp.add_argument("--x", type=float)
    mp.add_argument("--noise", type=float, default=0.0)
    mp.add_argument("--seed", type=int)
    mp.add_argument("--state-seed", type=int, dest="state_seed")
    mp.set_defaults(func=cmd_make_synthetic)

    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args._config = read_config(args.config) if getattr(args, "config", None) else {}
    try:
        return args.func(args)
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (MssvError, ValueError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
