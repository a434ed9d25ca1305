"""Drift certificates: potentials V with (L V)(q) <= -gamma V(q) + b(q) 1_K(q).

Each traffic regime gets its own potential shape. Away from the petite set K
the potential contracts at rate gamma; inside K the excess is paid by b. The
pair (gamma, b, K) is everything downstream machinery needs, so certificates
are plain data and can be re-verified state by state on any window.

Rates enter only through lam/mu: a certificate built at service rate 1 for
arrival rate lam/mu scales to (lam, mu) by multiplying gamma and b by mu.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .bdchain import BirthDeathChain, RegimeSpec, generator_apply

_REGIME_TAGS = frozenset(
    {"super_hw", "sub_hw_integer", "sub_hw_fractional", "mean_field", "mminf", "custom"}
)
_INTEGER_TOL = 1e-9
_SMALL_N_LIMIT = 7


@dataclass(frozen=True)
class LyapunovFunction:
    """A potential on queue lengths.

    evaluate accepts an int or an integer array and returns float values;
    params records the constants the potential was built from.
    """

    evaluate: Callable
    params: dict
    regime_tag: str

    def __post_init__(self):
        if self.regime_tag not in _REGIME_TAGS:
            raise ValueError(f"unknown regime_tag {self.regime_tag!r}")


@dataclass(frozen=True)
class DriftCertificate:
    """Certified drift data (V, gamma, K, b).

    States with nonpositive b are pruned at construction time, so K is
    exactly the support of b. B_max = max b is the constant-b relaxation.
    slack is the worst pointwise violation found by the most recent
    certify_drift run (None until certified; at or below the tolerance for
    a sound certificate).
    """

    V: LyapunovFunction
    gamma: float
    K: tuple = ()
    b: dict = field(default_factory=dict)
    slack: float | None = None

    def __post_init__(self):
        if not (self.gamma > 0.0 and math.isfinite(self.gamma)):
            raise ValueError(f"gamma must be positive and finite, got {self.gamma}")
        kept = {int(q): float(v) for q, v in self.b.items() if v > 0.0}
        if not kept:
            raise ValueError("b has no positive entries; nothing to certify")
        if any(not math.isfinite(v) for v in kept.values()):
            raise ValueError("b contains non-finite entries")
        object.__setattr__(self, "b", kept)
        object.__setattr__(self, "K", tuple(sorted(kept)))

    @property
    def B_max(self) -> float:
        return max(self.b.values())


def _as_array_fn(fn: Callable) -> Callable:
    def wrapped(q):
        arr = np.asarray(q)
        out = fn(arr.astype(float))
        return float(out) if np.ndim(q) == 0 else out

    return wrapped


def _rate_lv(lam: float, mu: float, n: int, V: Callable, q: int) -> float:
    # generator applied to V at an interior state, straight from the rate law
    death = mu * min(q, n)
    up = V(q + 1) - V(q)
    down = V(q - 1) - V(q) if q > 0 else 0.0
    return lam * up + death * down


def super_hw_certificate(spec: RegimeSpec) -> DriftCertificate:
    """Exponential-well certificate for lam/(n mu) = 1 - n^(-alpha), alpha > 1/2.

    V(q) = r^|q-(n-1)| with r = sqrt(n mu/lam) contracts at
    gamma = (sqrt(n mu)-sqrt(lam))^2 off K = {floor(2 lam/mu)-n, ..., n-1}.
    For n > 7 the excess b is closed-form (constant on the bulk of K, a
    larger value at n-1); for 2 <= n <= 7 the closed forms are too loose, so
    b is read off numerically at the same gamma.
    """
    if spec.alpha is None or spec.alpha <= 0.5:
        raise ValueError("exponential-well certificate needs alpha > 1/2")
    n, mu = spec.n, spec.mu
    lam_eff = spec.lam / mu
    alpha = spec.alpha
    r = math.sqrt(n / lam_eff)
    gamma_eff = (math.sqrt(n) - math.sqrt(lam_eff)) ** 2

    def _v(q):
        return np.power(r, np.abs(q - (n - 1)))

    V = LyapunovFunction(
        evaluate=_as_array_fn(_v),
        params={"r": r, "n": n, "lam": spec.lam, "mu": mu, "alpha": alpha},
        regime_tag="super_hw",
    )
    k_lo = max(int(math.floor(2.0 * lam_eff)) - n, 0)
    ks = range(k_lo, n)
    if n > _SMALL_N_LIMIT:
        c = n ** (1.0 - 2.0 * alpha) / (1.0 - n ** (-alpha))
        b_bulk = c * math.exp(c)
        b_last = max(
            n ** (1.0 - alpha) * (1.0 + 1.0 / (4.0 * (n**alpha - 1.0))),
            (lam_eff + (n - 1)) * (r - 1.0) + gamma_eff,
        )
        b_eff = {q: b_bulk for q in ks}
        b_eff[n - 1] = b_last
    else:
        b_eff = {q: _rate_lv(lam_eff, 1.0, n, _v, q) + gamma_eff * _v(q) for q in ks}
    return DriftCertificate(
        V=V, gamma=mu * gamma_eff, K=tuple(ks), b={q: mu * v for q, v in b_eff.items()}
    )


def _sub_hw_potential(n: int, lam_eff: float) -> tuple[Callable, dict]:
    gap = n - lam_eff
    theta = math.log1p(1.0 / gap)
    zeta = gap * math.exp(-gap * theta)  # makes the two branches meet at q = n
    frac = lam_eff - math.floor(lam_eff)
    fractional = frac > _INTEGER_TOL and frac < 1.0 - _INTEGER_TOL

    def _v(q):
        q = np.asarray(q, dtype=float)
        below = np.abs(q - lam_eff)
        if fractional:
            below = np.where(q == math.floor(lam_eff), 1.0 + frac, below)
            below = np.where(q == math.ceil(lam_eff), 2.0 - frac, below)
        above = zeta * np.exp(theta * (q - lam_eff))
        return np.where(q <= n, below, above)

    params = {"theta": theta, "zeta": zeta, "lam_eff": lam_eff, "n": n, "fractional": fractional}
    return _v, params


def sub_hw_certificate(spec: RegimeSpec) -> DriftCertificate:
    """Linear-hat certificate for alpha in (0, 1/2), lam/mu >= 3.

    V grows like |q - lam| below n and like a matched exponential above;
    gamma = 1 - n/((n-lam)(n-lam+1)). For integer lam the petite set is the
    single state {lam} with b = 2 lam; otherwise K is the four states around
    lam with the constant b = ceil(lam)+2 (rates in units of mu).
    """
    if spec.alpha is None or not 0.0 < spec.alpha < 0.5:
        raise ValueError("linear-hat certificate needs alpha in (0, 1/2)")
    n, mu = spec.n, spec.mu
    lam_eff = spec.lam / mu
    if lam_eff < 3.0:
        raise ValueError(f"certificate needs lam/mu >= 3, got {lam_eff}")
    gap = n - lam_eff
    gamma_eff = 1.0 - n / (gap * (gap + 1.0))
    if gamma_eff <= 0.0:
        raise ValueError("contraction rate is nonpositive; regime assumptions violated")
    _v, params = _sub_hw_potential(n, lam_eff)
    frac_flag = params["fractional"]
    if frac_flag:
        k_states = range(int(math.floor(lam_eff)) - 1, int(math.ceil(lam_eff)) + 2)
        b_eff = {q: float(math.ceil(lam_eff)) + 2.0 for q in k_states}
        tag = "sub_hw_fractional"
    else:
        center = int(round(lam_eff))
        b_eff = {center: 2.0 * lam_eff}
        tag = "sub_hw_integer"
    V = LyapunovFunction(
        evaluate=_as_array_fn(_v),
        params={**params, "mu": mu, "gamma_eff": gamma_eff},
        regime_tag=tag,
    )
    return DriftCertificate(
        V=V,
        gamma=mu * gamma_eff,
        K=tuple(b_eff),
        b={q: mu * v for q, v in b_eff.items()},
    )


def choose_z(n: int, lam_eff: float) -> float:
    """Geometric base for the mean-field potential.

    Three candidate bases keep gamma bounded away from zero across the whole
    load range; the smallest is always feasible (z < n/lam).
    """
    return min(
        1.0 + 1.0 / math.log(n),
        0.5 * (1.0 + n / lam_eff),
        1.0 + 1.0 / math.sqrt(lam_eff),
    )


def mean_field_certificate(spec: RegimeSpec, z: float | None = None) -> DriftCertificate:
    """Geometric certificate for lam/n bounded away from 1 (fixed load c < 1).

    V = z^((q-n)+); gamma = lam(z-1)(n/(lam z) - 1) and b is constant on
    K = {0..n}, equal to B = gamma + lam(z-1). z defaults to choose_z and
    must lie in the open interval (1, n mu/lam).
    """
    n, mu = spec.n, spec.mu
    lam_eff = spec.lam / mu
    if z is None:
        z = choose_z(n, lam_eff)
    elif not 1.0 < z < n / lam_eff:
        raise ValueError(f"z must lie in (1, n mu/lam) = (1, {n / lam_eff}), got {z}")
    gamma_eff = lam_eff * (z - 1.0) * (n / (lam_eff * z) - 1.0)
    if gamma_eff <= 0.0:
        raise ValueError("contraction rate is nonpositive; load too close to 1")
    big_b = gamma_eff + lam_eff * (z - 1.0)

    def _v(q):
        q = np.asarray(q, dtype=float)
        return np.where(q >= n, np.power(z, q - n), 1.0)

    V = LyapunovFunction(
        evaluate=_as_array_fn(_v),
        params={"z": z, "n": n, "lam": spec.lam, "mu": mu, "gamma_eff": gamma_eff},
        regime_tag="mean_field",
    )
    b_eff = {q: big_b for q in range(n + 1)}
    return DriftCertificate(
        V=V,
        gamma=mu * gamma_eff,
        K=tuple(range(n + 1)),
        b={q: mu * v for q, v in b_eff.items()},
    )


def mminf_certificate(lam: float, mu: float) -> DriftCertificate:
    """Distance-to-mean certificate for the infinite-server queue.

    Needs lam/mu to be a positive integer so V = |q - lam/mu| is centered on
    a state; then gamma = mu exactly and K = {lam/mu} with b = 2 lam (the
    drift inequality holds with equality everywhere).
    """
    a = lam / mu
    if abs(a - round(a)) > _INTEGER_TOL or round(a) < 1:
        raise ValueError(f"lam/mu must be a positive integer, got {a}")
    center = int(round(a))

    def _v(q):
        return np.abs(np.asarray(q, dtype=float) - center)

    V = LyapunovFunction(
        evaluate=_as_array_fn(_v),
        params={"center": center, "lam": lam, "mu": mu},
        regime_tag="mminf",
    )
    return DriftCertificate(V=V, gamma=mu, K=(center,), b={center: 2.0 * lam})


def certify_drift(chain: BirthDeathChain, cert: DriftCertificate, tol: float = 1e-9) -> dict:
    """Check (L V)(q) <= -gamma V(q) + b(q) 1_K(q) for q <= q_max - 1.

    The boundary state is excluded because reflection distorts L V there.
    The tolerance is relative: each state may violate by at most
    tol * max(1, gamma V(q)). The report carries the worst raw violation
    (slack, positive = inequality broken by that much) and the state where
    the scaled violation is largest; the slack is also recorded on the
    certificate.
    """
    w = chain.q_max
    if max(cert.K) > w - 1:
        raise ValueError("window too small: K reaches the reflecting boundary")
    states = np.arange(w + 1)
    vvals = cert.V.evaluate(states)
    lv = generator_apply(chain, vvals)
    bk = np.zeros(w + 1)
    for q, v in cert.b.items():
        bk[q] = v
    lhs = lv[:w] + cert.gamma * vvals[:w] - bk[:w]
    scale = np.maximum(1.0, cert.gamma * vvals[:w])
    scaled = lhs / scale
    worst_state = int(np.argmax(scaled))
    slack = float(np.max(lhs))
    passed = bool(scaled[worst_state] <= tol)
    object.__setattr__(cert, "slack", slack)
    return {
        "pass": passed,
        "slack": slack,
        "worst_state": worst_state,
        "tol": tol,
        "checked_states": w,
    }


def extract_drift(chain: BirthDeathChain, V: LyapunovFunction, K) -> tuple[float, dict]:
    """Best (gamma, b) for a given potential and petite set, read off the chain.

    gamma is the largest rate at which V contracts everywhere off K (boundary
    excluded); b(q) = max((L V + gamma V)(q), 0) on K. The resulting
    certificate passes certify_drift by construction.
    """
    w = chain.q_max
    k_set = {int(q) for q in K}
    if not k_set:
        raise ValueError("K must be nonempty")
    if max(k_set) > w - 1:
        raise ValueError("window too small: K reaches the reflecting boundary")
    states = np.arange(w + 1)
    vvals = np.asarray(V.evaluate(states), dtype=float)
    lv = generator_apply(chain, vvals)
    mask = np.ones(w + 1, dtype=bool)
    mask[w] = False
    for q in k_set:
        mask[q] = False
    if not mask.any():
        raise ValueError("no states outside K to read the contraction rate from")
    if np.any(vvals[mask] <= 0.0):
        raise ValueError("V must be positive outside K")
    gamma = float(np.min(-lv[mask] / vvals[mask]))
    if gamma <= 0.0:
        raise ValueError(f"no negative drift outside K (best rate {gamma:.3e})")
    # shaved by one part in 1e14 so rounding at states with large V can never
    # push the certified inequality past certify_drift's tolerance
    gamma *= 1.0 - 1e-14
    b = {q: float(max(lv[q] + gamma * vvals[q], 0.0)) for q in sorted(k_set)}
    return gamma, b
