"""Finite-time queue statistics driven by the regime mixing rates.

Every bound here has the same shape: a stationary envelope plus a transient
term e^(-rate t) chi0, with rate from the regime dispatch. The chi0 factor is
the chi divergence of the initial law from stationarity, so all bounds are
fully computable from the spec and the initial condition.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln, logsumexp

from .bdchain import RegimeSpec, StateDistribution, build_mmn, choose_truncation, stationary
from .regimes import d_n, l_n, theorem1_rate

_N0_FLOOR = 65


@dataclass(frozen=True)
class TailBoundSpec:
    """Parameter pack for the tail machinery: exponent tilt and tail level."""

    delta: float
    theta_n: float
    x: float
    chi0: float


def make_tail_spec(spec: RegimeSpec, delta: float, x: float, chi0: float) -> TailBoundSpec:
    """Bundle tail parameters; theta_n = log(n mu/lam)/(1+delta)."""
    if delta <= 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    lam_eff = spec.lam / spec.mu
    theta = math.log(spec.n / lam_eff) / (1.0 + delta)
    return TailBoundSpec(delta=delta, theta_n=theta, x=x, chi0=chi0)


def mgf(dist: StateDistribution, theta: float, center: float = 0.0) -> float:
    """E[e^(theta (Q - center))], window plus geometric tail extrapolation.

    When the distribution carries tail mass, the tail is modeled as geometric
    with the ratio of the last two window probabilities, scaled to the exact
    tail mass (for the n-server stationary law this model is exact). The
    extrapolation diverges when ratio * e^theta >= 1.
    """
    lp = dist.log_probs
    w = lp.shape[0] - 1
    states = np.arange(w + 1, dtype=float)
    finite = np.isfinite(lp)
    terms = [lp[finite] + theta * (states[finite] - center)]
    if dist.tail_mass > 0.0:
        p_last, p_prev = float(dist.probs[-1]), float(dist.probs[-2])
        if p_last <= 0.0 or p_prev <= 0.0:
            raise ValueError("cannot extrapolate tail: trailing probabilities vanish")
        r = p_last / p_prev
        if r >= 1.0:
            raise ValueError(f"cannot extrapolate tail: trailing ratio {r} >= 1")
        if r * math.exp(theta) >= 1.0:
            raise ValueError("divergent geometric tail: ratio * e^theta >= 1")
        log_tail = (
            math.log(dist.tail_mass)
            + math.log1p(-r)
            + theta * (w + 1 - center)
            - math.log1p(-r * math.exp(theta))
        )
        terms.append(np.array([log_tail]))
    return float(math.exp(logsumexp(np.concatenate(terms))))


def mgf_steady_bound(spec: RegimeSpec, delta: float, enforce_validity: bool = True) -> dict:
    """Stationary MGF bound E[e^(theta_n (Q-n))] <= 1 + 1/delta, with the true value.

    theta_n = log(n mu/lam)/(1+delta). The bound needs n >= n0 with
    n0 = max(65, 2^(1/alpha)); below that the closed form is unproven and the
    call raises unless enforce_validity=False, in which case the report is
    marked out of range.
    """
    if delta <= 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    if spec.alpha is None:
        raise ValueError("stationary MGF bound needs an alpha-parameterized spec")
    n0 = max(_N0_FLOOR, 2.0 ** (1.0 / spec.alpha))
    in_range = spec.n >= n0
    if enforce_validity and not in_range:
        raise ValueError(f"n = {spec.n} is below the validity threshold n0 = {n0:.1f}")
    n = spec.n
    lam_eff = spec.lam / spec.mu
    rho = lam_eff / n
    theta = math.log(n / lam_eff) / (1.0 + delta)
    qs = np.arange(n, dtype=float)
    lw = qs * math.log(lam_eff) - gammaln(qs + 1.0)  # unnormalized log weights, q < n
    lw_n = n * math.log(lam_eff) - gammaln(n + 1.0)
    # numerator: tilted mass below n, plus the geometric block at and above n
    num_terms = np.concatenate(
        [lw + theta * (qs - n), [lw_n - math.log1p(-rho * math.exp(theta))]]
    )
    den_terms = np.concatenate([lw, [lw_n - math.log1p(-rho)]])
    value = float(math.exp(logsumexp(num_terms) - logsumexp(den_terms)))
    bound = 1.0 + 1.0 / delta
    return {
        "theta": theta,
        "bound": bound,
        "value": value,
        "n0": n0,
        "valid": value <= bound,
        "in_validity_range": in_range,
    }


def _regime_rate(spec: RegimeSpec, mean_field: bool) -> float:
    if mean_field:
        return l_n(spec.n, spec.lam, spec.mu)[0]
    return theorem1_rate(spec).rate


def mean_queue_envelope(spec: RegimeSpec, t: float, chi0: float, mean_field: bool = False) -> float:
    """Bound on |E Q_t - E Q_inf|: e^(-rate t) sqrt(2) (n + n^alpha) chi0.

    The mean-field variant replaces the prefactor by n and the rate by the
    mean-field rate.
    """
    rate = _regime_rate(spec, mean_field)
    if mean_field:
        return math.exp(-rate * t) * spec.n * chi0
    return math.exp(-rate * t) * math.sqrt(2.0) * (spec.n + float(spec.n) ** spec.alpha) * chi0


def tail_threshold(spec: RegimeSpec, x: float) -> float:
    """Queue level at which the scaled excess eps_n (Q - n) crosses x."""
    return spec.n + x / spec.epsilon


def tail_bound(
    spec: RegimeSpec,
    t: float,
    x: float,
    chi0: float,
    delta: float | None = None,
    mean_field: bool = False,
) -> float:
    """Bound on P[eps_n (Q_t - n) > x]: (1 + e^(-rate t) chi0) sqrt(e x) e^(-x/2).

    For alpha < 1/2 the stationary tail is thinner and the bound gains the
    factor sqrt(e^(-2 n^(1-2 alpha)/7)/2 + 6 n^(2 alpha - 1)). delta is
    accepted for interface parity with the tilted-MGF machinery but the
    closed form already carries the optimized tilt, so it is unused.
    """
    if x <= 0.0:
        raise ValueError(f"x must be positive, got {x}")
    if delta is not None and delta <= 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    rate = _regime_rate(spec, mean_field)
    base = (1.0 + math.exp(-rate * t) * chi0) * math.sqrt(math.e * x) * math.exp(-0.5 * x)
    if not mean_field and spec.alpha is not None and spec.alpha < 0.5:
        n = float(spec.n)
        extra = math.sqrt(
            0.5 * math.exp(-2.0 * n ** (1.0 - 2.0 * spec.alpha) / 7.0)
            + 6.0 * n ** (2.0 * spec.alpha - 1.0)
        )
        base *= extra
    return base


def idle_prob_bound(spec: RegimeSpec, t: float, chi0: float, kappa: float = 1.0) -> dict:
    """Bound on the idle-server probability P[Q_t < n].

    alpha > 1/2: upper bound 4 e pi n^(1/2-alpha)
                 + 2 sqrt(e pi) n^(1/4-alpha/2) e^(-rate t) chi0.
    alpha < 1/2: lower bound 1 - kappa n^(alpha-1/2) e^(-n^(1/2-alpha))
                 - e^(-rate t) chi0 (kappa is the undetermined stationary
                 prefactor; 1 by default).
    There is no closed form at alpha = 1/2. The prefactors are proven for
    n >= max(65, 2^(1/alpha)); smaller n is reported but flagged.
    """
    if spec.alpha is None:
        raise ValueError("idle probability bound needs an alpha-parameterized spec")
    alpha = spec.alpha
    n = float(spec.n)
    if abs(alpha - 0.5) <= 1e-12:
        raise ValueError("no closed-form idle bound at alpha = 1/2")
    in_range = spec.n >= max(_N0_FLOOR, 2.0 ** (1.0 / alpha))
    rate = theorem1_rate(spec).rate
    if alpha > 0.5:
        value = 4.0 * math.e * math.pi * n ** (0.5 - alpha) + 2.0 * math.sqrt(
            math.e * math.pi
        ) * n ** (0.25 - 0.5 * alpha) * math.exp(-rate * t) * chi0
        return {
            "value": value,
            "direction": "upper",
            "rate": rate,
            "in_validity_range": in_range,
        }
    value = (
        1.0
        - kappa * n ** (alpha - 0.5) * math.exp(-(n ** (0.5 - alpha)))
        - math.exp(-rate * t) * chi0
    )
    return {
        "value": value,
        "direction": "lower",
        "rate": rate,
        "in_validity_range": in_range,
    }


def variance_bound_check(spec: RegimeSpec, mean_field: bool = False, mass_tol: float = 1e-12) -> dict:
    """Exact stationary variance against its regime bound.

    The variance is computed on a window holding all but mass_tol of the mass,
    plus the geometric tail's moments in closed form. The bound is
    2 (n^alpha + n)^2 for alpha-parameterized specs and n^2 for mean-field.
    """
    chain = build_mmn(spec, choose_truncation(spec, mass_tol))
    nu = stationary(chain)
    w = chain.q_max
    qs = np.arange(w + 1, dtype=float)
    e1 = float(np.dot(nu.probs, qs))
    e2 = float(np.dot(nu.probs, qs * qs))
    rho = spec.lam / (spec.n * spec.mu)
    p_w = float(nu.probs[-1])
    # geometric tail moments: nu(W+j) = nu(W) rho^j for j >= 1
    s0 = p_w * rho / (1.0 - rho)
    s1 = p_w * rho / (1.0 - rho) ** 2
    s2 = p_w * rho * (1.0 + rho) / (1.0 - rho) ** 3
    e1 += w * s0 + s1
    e2 += w * w * s0 + 2.0 * w * s1 + s2
    var = e2 - e1 * e1
    if mean_field:
        bound = float(spec.n) ** 2
    else:
        if spec.alpha is None:
            raise ValueError("variance bound needs alpha or mean_field=True")
        bound = 2.0 * (float(spec.n) ** spec.alpha + spec.n) ** 2
    return {"variance": var, "bound": bound, "valid": var <= bound}


def moment_gap_bound(p: StateDistribution, q: StateDistribution, k: int) -> float:
    """Bound |E_p Q^k - E_q Q^k| <= chi(p, q) sqrt(Var_q(Q^k)) (window moments)."""
    from .transient import chi_square as _chi2

    if k < 1:
        raise ValueError(f"k must be a positive integer, got {k}")
    w = q.probs.shape[0] - 1
    qs = np.arange(w + 1, dtype=float)
    fk = qs**k
    ek = float(np.dot(q.probs, fk))
    e2k = float(np.dot(q.probs, fk * fk))
    var_k = e2k - ek * ek
    if var_k < 0.0:
        warnings.warn(f"moment variance {var_k:.3e} clamped to 0", stacklevel=2)
        var_k = 0.0
    return math.sqrt(_chi2(p, q)) * math.sqrt(var_k)


def chi_variational_check(p: StateDistribution, q: StateDistribution, g_family=None) -> dict:
    """Check the variational form: sup_g (E_p g - E_q g)^2 / Var_q(g) = chi^2.

    Every probe in g_family lower-bounds chi_square(p, q); the likelihood
    ratio g = p/q attains it exactly (Var_q(p/q) and the squared mean shift
    both equal chi^2). Probes with vanishing variance under q are skipped.
    g_family defaults to linear, quadratic and exponential test functions.
    """
    from .transient import chi_square as _chi2

    c2 = _chi2(p, q)
    w = p.probs.shape[0]
    states = np.arange(w, dtype=float)
    if g_family is None:
        g_family = [states, states**2, np.exp(-states / max(w - 1, 1))]
    ratios = []
    skipped = 0
    for g in g_family:
        g = np.asarray(g, dtype=float)
        eq = float(np.dot(q.probs, g))
        var_q = float(np.dot(q.probs, (g - eq) ** 2))
        if var_q <= 1e-30:
            skipped += 1
            continue
        ep = float(np.dot(p.probs, g))
        ratios.append((ep - eq) ** 2 / var_q)
    opt = np.where(q.probs > 0.0, p.probs / np.where(q.probs > 0.0, q.probs, 1.0), 0.0)
    eq = float(np.dot(q.probs, opt))
    var_q = float(np.dot(q.probs, (opt - eq) ** 2))
    attained = 0.0
    if var_q > 1e-30:
        ep = float(np.dot(p.probs, opt))
        attained = (ep - eq) ** 2 / var_q
    best = max(ratios) if ratios else 0.0
    err = abs(attained - c2)
    return {
        "chi_square": c2,
        "best_probe_lb": best,
        "attained": attained,
        "attained_abs_err": err,
        "n_skipped": skipped,
        "ok": bool(best <= c2 + 1e-12 and err <= 1e-10 * max(1.0, c2)),
    }


def simulate_queue(
    spec: RegimeSpec, t: float, n_paths: int, seed: int, q0: int = 0
) -> dict:
    """Event-driven simulation of the n-server queue to time t.

    All paths start at q0; events are drawn path-by-path in vectorized
    rounds (exponential waits at the current total rate, then a birth/death
    coin). Returns the sample mean of Q_t and its standard error.
    """
    if t < 0.0 or n_paths < 1:
        raise ValueError("need t >= 0 and at least one path")
    rng = np.random.default_rng(seed)
    lam, mu, n = spec.lam, spec.mu, spec.n
    q = np.full(n_paths, q0, dtype=np.int64)
    clock = np.zeros(n_paths)
    active = np.ones(n_paths, dtype=bool)
    while active.any():
        idx = np.flatnonzero(active)
        total = lam + mu * np.minimum(q[idx], n)
        waits = rng.exponential(1.0, idx.size) / total
        clock[idx] += waits
        done = clock[idx] > t
        active[idx[done]] = False
        live = idx[~done]
        if live.size == 0:
            continue
        birth_p = lam / (lam + mu * np.minimum(q[live], n))
        coins = rng.random(live.size)
        q[live] = np.where(coins < birth_p, q[live] + 1, np.maximum(q[live] - 1, 0))
    mean = float(q.mean())
    se = float(q.std(ddof=1) / math.sqrt(n_paths))
    return {"mean": mean, "se": se, "n_paths": n_paths, "t": t}
