"""Pricing and joint calibration of SPX and VIX options under a
two-factor multiscale stochastic volatility model."""

from .exceptions import (CharFnOverflowError, DataError, DomainError,
                         InfeasibleStateError, MssvError, NoRootError,
                         QuadratureError)
from .model import (TAU0, HiddenState, ModelParams, PriceDecomposition,
                    QuadratureConfig, VixWeights, heston_star_weights,
                    vix_from_state, vix_from_z_heston, vix_limit_from_z,
                    vix_weights, y_max_for_vix, z_from_vix_given_y,
                    z_from_vix_heston)
from .spx import (CharFnTerms, SpxOptionSpec, char_fn_G, char_fn_terms,
                  correction_factors, price_heston_call, price_heston_call_batch,
                  price_heston_put, price_spx, price_spx_call, price_spx_put,
                  price_spx_strike_batch)
from .vix import (Ncx2Params, VixOptionSpec, ncx2_pdf, payoff_h0,
                  payoff_h1star, price_vix, price_vix_call,
                  price_vix_call_heston, price_vix_heston_strike_batch,
                  price_vix_put, price_vix_put_heston, price_vix_strike_batch,
                  vix_forward)
from .impvol import (ImpliedVolPoint, bs_call_price, bs_implied_vol,
                     vix_normal_implied_vol, vix_normal_price)
from .mc import (McConfig, McEstimate, McModelParams, mc_price_spx,
                 mc_price_spx_strikes, mc_price_vix, mc_price_vix_strikes,
                 simulate_terminal, simulate_variance_terminal,
                 spectral_coefficient)
from .calibration import (CalibrationConfig, CalibrationResult, DateSlice,
                          Quote, calibrate_heston, calibrate_msv,
                          inner_state_fit, weighted_sse)
from .data import (FilterRules, OptionQuote, apply_filters, error_report,
                   load_quotes, make_synthetic_quotes, split_train_test,
                   to_date_slices, write_quotes_csv)

__version__ = "0.1.0"
