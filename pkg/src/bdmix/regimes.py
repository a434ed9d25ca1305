"""Regime-resolved mixing rates for the n-server queue at load 1 - n^(-alpha).

Each traffic regime carries a named constant:

  alpha >= 1        rate = (sqrt(n mu) - sqrt(lam))^2          constant 1
  alpha in (1/2,1)  rate = C_n (sqrt(n mu) - sqrt(lam))^2      C_n -> 1
  alpha = 1/2       rate = mu H_n                              H_n -> 1/1781
  alpha in (0,1/2)  rate = mu D_n (or mu D-bar_n, integer lam) D_n -> 1/25
  fixed load c < 1  rate = mu L_n (mean-field, via l_n)        L_n -> (1-c)-ish

C_n and H_n need n >= 110; below that the dispatcher falls back to the
unconditional spectral lower bound and says so in the regime tag. All rates
are lower bounds on the spectral gap, hence on the chi-square decay rate.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

from .bdchain import RegimeSpec
from .poincare import _G1_CAP, _G2_CAP, _G3_CAP, g_constants
from .spectral import beta_hat_lower_bound

_INTEGER_TOL = 1e-9
_NEAR_INTEGER_TOL = 1e-6
_HALF_TOL = 1e-12
_MIN_N_UNIFORM = 110

_ASYMPTOTES = {
    "super_nds": 1.0,
    "super_hw": 1.0,
    "halfin_whitt": 1.0 / 1781.0,
    "sub_hw": 1.0 / 25.0,
    "sub_hw_integer": 1.0,
    "super_hw_zeta_fallback": 0.5,
}


@dataclass(frozen=True)
class MixingRateBound:
    """A certified lower bound on the mixing rate.

    rate is in the chain's time units; constant is the regime's named
    prefactor (in (0, 1]); asymptote is that constant's n -> infinity limit.
    """

    rate: float
    regime: str
    constant: float
    asymptote: float

    def __post_init__(self):
        if not (self.rate > 0.0 and math.isfinite(self.rate)):
            raise ValueError(f"rate must be positive and finite, got {self.rate}")
        if not 0.0 < self.constant <= 1.0:
            raise ValueError(f"constant must lie in (0, 1], got {self.constant}")


def c_n(n: int, alpha: float) -> float:
    """Prefactor for alpha in (1/2, 1), n >= 110, from the capped g-family.

    C_n = 1/(1 + 3.48 (384 n^(2-4a) + 395.93 n^(3-6a))); tends to 1. For
    alpha >= 1 the rate needs no correction (singleton route) and C_n is
    identically 1.
    """
    if alpha >= 1.0:
        return 1.0
    if not 0.5 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (1/2, 1) or at least 1, got {alpha}")
    if n < _MIN_N_UNIFORM:
        raise ValueError(f"n must be at least {_MIN_N_UNIFORM}, got {n}")
    corr = _G1_CAP * float(n) ** (2.0 - 4.0 * alpha) + _G2_CAP * float(n) ** (
        3.0 - 6.0 * alpha
    )
    return 1.0 / (1.0 + _G3_CAP * corr)


def h_n(n: int) -> float:
    """Prefactor at alpha = 1/2, n >= 110: H_n = 1/(4(1 + g3 (g1 + g2)))."""
    g = g_constants(n, 0.5)
    return 1.0 / (4.0 * (1.0 + g["g3"] * (g["g1"] + g["g2"])))


def d_n(n: int, alpha: float, lambda_is_integer: bool = False) -> float:
    """Prefactor for alpha in (0, 1/2), in units of mu.

    With lam = n - n^(1-alpha): the drift rate gamma = 1 - n/((n-lam)(n-lam+1))
    is the whole story when lam is an integer (D-bar_n = gamma); otherwise the
    constant-b correction divides it down to D_n = gamma/(1 + 24(lam+1)^2/lam^2).
    """
    if not 0.0 < alpha < 0.5:
        raise ValueError(f"alpha must lie in (0, 1/2), got {alpha}")
    lam = n - float(n) ** (1.0 - alpha)
    if lam < 3.0:
        raise ValueError(f"regime needs lam >= 3, got {lam}")
    gap = n - lam
    gamma = 1.0 - n / (gap * (gap + 1.0))
    if gamma <= 0.0:
        raise ValueError("contraction rate nonpositive; n too small for this alpha")
    if lambda_is_integer:
        return gamma
    return gamma / (1.0 + 24.0 * (lam + 1.0) ** 2 / lam**2)


def l_n(n: int, lam: float, mu: float = 1.0) -> tuple[float, float]:
    """Mean-field mixing rate for fixed load lam/(n mu) = c < 1.

    Uses the geometric potential with base z = min of three candidates; the
    rate is mu over the closed-form Poincare constant
    1 + 1/(n/(lam z) - 1) + 1/(lam (z-1)(n/(lam z) - 1)). Returns the rate
    together with the z that produced it.
    """
    lam_eff = lam / mu
    if not 0.0 < lam_eff < n:
        raise ValueError(f"need 0 < lam/mu < n, got {lam_eff}")
    z = min(
        1.0 + 1.0 / math.log(n),
        0.5 * (1.0 + n / lam_eff),
        1.0 + 1.0 / math.sqrt(lam_eff),
    )
    slack = n / (lam_eff * z) - 1.0
    gamma = lam_eff * (z - 1.0) * slack
    c_p = 1.0 + 1.0 / slack + 1.0 / gamma
    return mu / c_p, z


def zeta_spectral_bound(spec: RegimeSpec) -> float:
    """Unconditional spectral lower bound mu * min{sqrt(rho)/2, (sqrt n - sqrt lam)^2}."""
    return beta_hat_lower_bound(spec)


def _lambda_is_integer(spec: RegimeSpec) -> bool:
    lam_eff = spec.lam / spec.mu
    frac = abs(lam_eff - round(lam_eff))
    if frac <= _INTEGER_TOL:
        return round(lam_eff) >= 1
    if frac <= _NEAR_INTEGER_TOL:
        warnings.warn(
            f"lam/mu = {lam_eff} is within {frac:.1e} of an integer but outside the "
            "integer tolerance; using the fractional constant",
            stacklevel=3,
        )
    return False


def theorem1_rate(spec: RegimeSpec) -> MixingRateBound:
    """Dispatch the regime-resolved mixing rate for an alpha-parameterized spec.

    For alpha in [1/2, 1) with n < 110 the named constants are unproven, so
    the rate falls back to zeta_spectral_bound and the regime tag says so.
    """
    if spec.alpha is None:
        raise ValueError("spec has no alpha (single-server chain); no regime to dispatch")
    n, alpha, mu = spec.n, spec.alpha, spec.mu
    lam_eff = spec.lam / mu
    burke = (math.sqrt(n) - math.sqrt(lam_eff)) ** 2  # (sqrt(n mu)-sqrt(lam))^2 / mu
    if alpha >= 1.0:
        return MixingRateBound(
            rate=mu * burke,
            regime="super_nds",
            constant=1.0,
            asymptote=_ASYMPTOTES["super_nds"],
        )
    if abs(alpha - 0.5) <= _HALF_TOL:
        if n >= _MIN_N_UNIFORM:
            h = h_n(n)
            return MixingRateBound(
                rate=mu * h,
                regime="halfin_whitt",
                constant=h,
                asymptote=_ASYMPTOTES["halfin_whitt"],
            )
        return _zeta_fallback(spec)
    if alpha > 0.5:
        if n >= _MIN_N_UNIFORM:
            c = c_n(n, alpha)
            return MixingRateBound(
                rate=c * mu * burke,
                regime="super_hw",
                constant=c,
                asymptote=_ASYMPTOTES["super_hw"],
            )
        return _zeta_fallback(spec)
    if _lambda_is_integer(spec):
        d = d_n(n, alpha, lambda_is_integer=True)
        return MixingRateBound(
            rate=mu * d,
            regime="sub_hw_integer",
            constant=d,
            asymptote=_ASYMPTOTES["sub_hw_integer"],
        )
    d = d_n(n, alpha, lambda_is_integer=False)
    return MixingRateBound(
        rate=mu * d, regime="sub_hw", constant=d, asymptote=_ASYMPTOTES["sub_hw"]
    )


def _zeta_fallback(spec: RegimeSpec) -> MixingRateBound:
    rate = zeta_spectral_bound(spec)
    return MixingRateBound(
        rate=rate,
        regime="super_hw_zeta_fallback",
        constant=1.0,
        asymptote=_ASYMPTOTES["super_hw_zeta_fallback"],
    )


def mixing_time_bound(
    spec: RegimeSpec, chi0: float, eps: float, lambda_is_integer: bool | None = None
) -> float:
    """Time for the chi divergence to certifiably drop from chi0 to eps.

    Uses the regime's literal prefactor (e.g. 4 n^(2 alpha - 1) log(chi0/eps)
    for alpha >= 1); returns 0 when eps >= chi0. Time is in the chain's
    units, so the prefactors carry a 1/mu.
    """
    if chi0 <= 0.0 or eps <= 0.0:
        raise ValueError("chi0 and eps must be positive")
    if eps >= chi0:
        return 0.0
    if spec.alpha is None:
        raise ValueError("spec has no alpha (single-server chain)")
    n, alpha, mu = spec.n, spec.alpha, spec.mu
    log_ratio = math.log(chi0 / eps)
    if alpha >= 1.0:
        return 4.0 * float(n) ** (2.0 * alpha - 1.0) * log_ratio / mu
    if abs(alpha - 0.5) <= _HALF_TOL:
        if n >= _MIN_N_UNIFORM:
            return log_ratio / (h_n(n) * mu)
        return log_ratio / zeta_spectral_bound(spec)
    if alpha > 0.5:
        if n >= _MIN_N_UNIFORM:
            return 4.0 * float(n) ** (2.0 * alpha - 1.0) * log_ratio / (c_n(n, alpha) * mu)
        return log_ratio / zeta_spectral_bound(spec)
    if lambda_is_integer is None:
        lambda_is_integer = _lambda_is_integer(spec)
    return log_ratio / (d_n(n, alpha, lambda_is_integer) * mu)
