"""Birth-death chains on a truncated window with exact stationary laws.

States are queue lengths q = 0..q_max. A chain is described by its birth and
death rate arrays; the generator acts as

    (L f)(q) = birth(q) (f(q+1) - f(q)) + death(q) (f(q-1) - f(q))

with the birth rate dropped at q_max (reflecting truncation). Stationary
probabilities are reported as the exact untruncated values whenever the rate
law has a known analytic tail (M/M/1, M/M/n, M/M/inf), with the leftover mass
beyond the window carried separately in ``tail_mass``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gammainc, gammaln, logsumexp

_MASS_TOL_MAX = 1e-6
_Q_MAX_LIMIT = 10**8


@dataclass(frozen=True)
class RegimeSpec:
    """Load parametrization of an M/M/n queue.

    The offered load is tied to the server count through
    ``n - lam/mu = n**(1 - alpha)``, so ``alpha`` measures how deep in heavy
    traffic the system sits; ``epsilon = 1 - lam/(n*mu)`` is the idle
    fraction. For n = 1 the exponent is undefined and ``alpha`` is None.

    Parameters
    ----------
    n : int
        Number of servers, n >= 1.
    alpha : float or None
        Heavy-traffic exponent; None for n = 1.
    lam : float
        Arrival rate, 0 < lam < n * mu.
    mu : float
        Per-server service rate, mu > 0.
    epsilon : float
        Spare-capacity fraction 1 - lam/(n*mu).
    """

    n: int
    alpha: float | None
    lam: float
    mu: float
    epsilon: float

    def __post_init__(self) -> None:
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        if self.mu <= 0.0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if not 0.0 < self.lam < self.n * self.mu:
            raise ValueError(
                f"lam must lie in (0, n*mu) = (0, {self.n * self.mu}), got {self.lam}"
            )

    @classmethod
    def from_alpha(cls, n: int, alpha: float, mu: float = 1.0) -> "RegimeSpec":
        """Build a spec from the heavy-traffic exponent: lam = mu*(n - n**(1-alpha))."""
        if n < 2:
            raise ValueError(f"from_alpha requires n >= 2, got n={n}")
        if alpha <= 0.0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        lam = mu * (n - n ** (1.0 - alpha))
        return cls(n=n, alpha=float(alpha), lam=lam, mu=mu, epsilon=n ** (-alpha))

    @classmethod
    def from_lambda(cls, n: int, lam: float, mu: float = 1.0) -> "RegimeSpec":
        """Build a spec from the arrival rate, recovering alpha when n >= 2."""
        if lam <= 0.0 or lam >= n * mu:
            raise ValueError(f"lam must lie in (0, n*mu), got {lam}")
        if n == 1:
            return cls(n=1, alpha=None, lam=float(lam), mu=mu, epsilon=1.0 - lam / mu)
        alpha = 1.0 - math.log(n - lam / mu) / math.log(n)
        return cls(n=n, alpha=alpha, lam=float(lam), mu=mu, epsilon=1.0 - lam / (n * mu))


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.asarray(a, dtype=float).copy()
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class BirthDeathChain:
    """Truncated birth-death chain.

    ``kind`` records the rate law ("mm1", "mmn", "mminf", or "custom"); for
    the named laws the fields n/lam/mu allow the window to be regrown, while
    custom chains are defined only by their arrays.
    """

    birth: np.ndarray
    death: np.ndarray
    q_max: int
    kind: str
    n: int | None = None
    lam: float | None = None
    mu: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("mm1", "mmn", "mminf", "custom"):
            raise ValueError(f"unknown chain kind {self.kind!r}")
        birth = _readonly(self.birth)
        death = _readonly(self.death)
        if birth.shape != (self.q_max + 1,) or death.shape != (self.q_max + 1,):
            raise ValueError(
                f"rate arrays must have length q_max+1 = {self.q_max + 1}, "
                f"got {birth.shape} and {death.shape}"
            )
        if death[0] != 0.0:
            raise ValueError("death rate at state 0 must be zero")
        if np.any(birth[:-1] <= 0.0) or np.any(death[1:] <= 0.0):
            raise ValueError("interior birth and death rates must be positive")
        object.__setattr__(self, "birth", birth)
        object.__setattr__(self, "death", death)


@dataclass(frozen=True)
class StateDistribution:
    """Probability vector on the window plus mass beyond it.

    ``probs[q]`` is the probability of state q for q = 0..q_max;
    ``tail_mass`` is whatever the window does not account for, so
    ``sum(probs) + tail_mass = 1`` within 1e-12. ``log_probs`` carries the
    natural logs (-inf where the probability is exactly zero).
    """

    probs: np.ndarray
    tail_mass: float
    log_probs: np.ndarray

    def __post_init__(self) -> None:
        probs = _readonly(self.probs)
        log_probs = _readonly(self.log_probs)
        if probs.shape != log_probs.shape:
            raise ValueError("probs and log_probs must have the same shape")
        if np.any(probs < 0.0) or self.tail_mass < -1e-15:
            raise ValueError("probabilities must be nonnegative")
        total = math.fsum(probs.tolist()) + self.tail_mass
        if abs(total - 1.0) > 1e-12:
            raise ValueError(f"window mass plus tail must be 1, got {total!r}")
        if np.any(np.isnan(log_probs)):
            raise ValueError("log_probs must not contain NaN")
        with np.errstate(over="ignore"):
            diff = np.abs(np.exp(log_probs) - probs)
        if np.any(diff > 1e-14 * np.maximum(probs, 1e-300)):
            raise ValueError("log_probs inconsistent with probs")
        object.__setattr__(self, "probs", probs)
        object.__setattr__(self, "log_probs", log_probs)


def from_probs(probs: np.ndarray, tail_mass: float = 0.0) -> StateDistribution:
    """Wrap a probability vector, deriving log_probs.

    The stored linear vector is exp(log_probs): below ~e^-128 a double
    cannot hold log(p) accurately enough for exp to round-trip within the
    class invariant, so the log twin is primary and the linear one derived.
    """
    probs = np.asarray(probs, dtype=float)
    if np.any(probs < 0.0):
        raise ValueError("probabilities must be nonnegative")
    with np.errstate(divide="ignore"):
        log_probs = np.log(probs)
    return StateDistribution(
        probs=np.exp(log_probs), tail_mass=float(tail_mass), log_probs=log_probs
    )


def dirac(q: int, q_max: int) -> StateDistribution:
    """Point mass at state q on a window of size q_max+1."""
    if not 0 <= q <= q_max:
        raise ValueError(f"state {q} outside window 0..{q_max}")
    probs = np.zeros(q_max + 1)
    probs[q] = 1.0
    return from_probs(probs)


def uniform(lo: int, hi: int, q_max: int) -> StateDistribution:
    """Uniform law on states lo..hi inclusive."""
    if not 0 <= lo <= hi <= q_max:
        raise ValueError(f"range {lo}..{hi} outside window 0..{q_max}")
    probs = np.zeros(q_max + 1)
    probs[lo : hi + 1] = 1.0 / (hi - lo + 1)
    return from_probs(probs)


def build_mmn(spec: RegimeSpec, q_max: int) -> BirthDeathChain:
    """M/M/n chain on 0..q_max: constant births, deaths mu*min(q, n)."""
    if q_max < spec.n + 10:
        raise ValueError(f"q_max must be at least n+10 = {spec.n + 10}, got {q_max}")
    if spec.lam >= spec.n * spec.mu:
        raise ValueError("unstable queue: lam >= n*mu")
    q = np.arange(q_max + 1)
    birth = np.full(q_max + 1, spec.lam)
    death = spec.mu * np.minimum(q, spec.n).astype(float)
    kind = "mm1" if spec.n == 1 else "mmn"
    return BirthDeathChain(
        birth=birth, death=death, q_max=q_max, kind=kind, n=spec.n, lam=spec.lam, mu=spec.mu
    )


def build_mminf(lam: float, mu: float, q_max: int) -> BirthDeathChain:
    """M/M/inf chain on 0..q_max: deaths q*mu; the Poisson(lam/mu) tail
    beyond q_max must not exceed 1e-12."""
    if lam <= 0.0 or mu <= 0.0:
        raise ValueError("lam and mu must be positive")
    a = lam / mu
    tail = float(gammainc(q_max + 1, a))
    if tail > 1e-12:
        raise ValueError(
            f"q_max={q_max} leaves Poisson tail {tail:.3e} > 1e-12; increase the window"
        )
    q = np.arange(q_max + 1)
    birth = np.full(q_max + 1, float(lam))
    death = mu * q.astype(float)
    return BirthDeathChain(
        birth=birth, death=death, q_max=q_max, kind="mminf", n=None, lam=float(lam), mu=float(mu)
    )


def extend_window(chain: BirthDeathChain, q_max: int) -> BirthDeathChain:
    """Rebuild the chain's rate law on a larger window (named kinds only)."""
    if q_max <= chain.q_max:
        raise ValueError("new window must be strictly larger")
    if chain.kind == "custom":
        raise ValueError("custom chains carry no rate law beyond their window")
    q = np.arange(q_max + 1)
    birth = np.full(q_max + 1, chain.lam)
    if chain.kind == "mminf":
        death = chain.mu * q.astype(float)
    else:
        death = chain.mu * np.minimum(q, chain.n).astype(float)
    return BirthDeathChain(
        birth=birth, death=death, q_max=q_max, kind=chain.kind,
        n=chain.n, lam=chain.lam, mu=chain.mu,
    )


def _mmn_log_weights(n: int, rho_single: float, q_max: int) -> tuple[np.ndarray, float, float]:
    # log of unnormalized pi(q), log normalizer over ALL states, log rho at the shared-pool tail
    q = np.arange(q_max + 1)
    log_a = math.log(rho_single)  # rho_single = lam/mu
    log_c = np.where(
        q <= n,
        q * log_a - gammaln(q + 1.0),
        n * log_a - gammaln(n + 1.0) + (q - n) * (log_a - math.log(n)),
    )
    log_rho = log_a - math.log(n)  # lam/(n mu) < 1
    head = [k * log_a - gammaln(k + 1.0) for k in range(n)]
    log_tail_from_n = n * log_a - gammaln(n + 1.0) - math.log1p(-math.exp(log_rho))
    log_z = logsumexp(head + [log_tail_from_n])
    return log_c, float(log_z), float(log_rho)


def stationary(chain: BirthDeathChain) -> StateDistribution:
    """Stationary law of the chain.

    For mm1/mmn/mminf the probabilities are the exact untruncated values and
    ``tail_mass`` is the closed-form mass beyond the window; for custom
    chains the window is normalized and the tail is zero. Everything is
    assembled in the log domain.
    """
    if chain.kind in ("mm1", "mmn"):
        log_c, log_z, log_rho = _mmn_log_weights(chain.n, chain.lam / chain.mu, chain.q_max)
        log_probs = log_c - log_z
        # geometric tail beyond q_max, still relative to the full normalizer
        log_tail = (
            chain.n * math.log(chain.lam / chain.mu)
            - gammaln(chain.n + 1.0)
            + (chain.q_max + 1 - chain.n) * log_rho
            - math.log1p(-math.exp(log_rho))
            - log_z
        )
        tail_mass = math.exp(log_tail)
    elif chain.kind == "mminf":
        a = chain.lam / chain.mu
        q = np.arange(chain.q_max + 1)
        log_probs = q * math.log(a) - gammaln(q + 1.0) - a
        tail_mass = float(gammainc(chain.q_max + 1, a))
    else:
        log_r = np.concatenate(
            [[0.0], np.cumsum(np.log(chain.birth[:-1]) - np.log(chain.death[1:]))]
        )
        log_probs = log_r - logsumexp(log_r)
        tail_mass = 0.0
    # absorb float rounding so window mass + tail hits 1 to full precision;
    # the shift happens in the log domain and probs are re-derived from the
    # shifted logs so the two stay consistent even at very negative logs
    total = math.fsum(np.exp(log_probs).tolist()) + tail_mass
    log_probs = log_probs - math.log(total)
    probs = np.exp(log_probs)
    tail_mass = tail_mass / total
    return StateDistribution(probs=probs, tail_mass=tail_mass, log_probs=log_probs)


def generator_apply(chain: BirthDeathChain, f: np.ndarray) -> np.ndarray:
    """Apply the reflecting-truncation generator to f (birth dropped at q_max)."""
    f = np.asarray(f, dtype=float)
    if f.shape != (chain.q_max + 1,):
        raise ValueError(f"f must have length q_max+1 = {chain.q_max + 1}")
    out = np.zeros_like(f)
    out[:-1] += chain.birth[:-1] * (f[1:] - f[:-1])
    out[1:] += chain.death[1:] * (f[:-1] - f[1:])
    return out


def choose_truncation(spec: RegimeSpec, mass_tol: float = 1e-12) -> int:
    """Smallest window whose stationary tail mass is below mass_tol.

    The result is never below n+10; windows beyond 1e8 states are refused.
    mass_tol must lie in (0, 1e-6].
    """
    if not 0.0 < mass_tol <= _MASS_TOL_MAX:
        raise ValueError(f"mass_tol must lie in (0, {_MASS_TOL_MAX}], got {mass_tol}")
    n = spec.n
    log_a = math.log(spec.lam / spec.mu)
    log_rho = log_a - math.log(n)
    head = [k * log_a - gammaln(k + 1.0) for k in range(n)]
    log_tail_from_n = n * log_a - gammaln(n + 1.0) - math.log1p(-math.exp(log_rho))
    log_z = logsumexp(head + [log_tail_from_n])
    # tail(W) = c_n * rho^(W+1-n) / (1-rho) / Z <= mass_tol, solve for W
    log_c_n = n * log_a - gammaln(n + 1.0)
    need = (
        math.log(mass_tol) - log_c_n + math.log1p(-math.exp(log_rho)) + log_z
    ) / log_rho
    q_max = max(n + 10, n - 1 + math.ceil(need))
    if q_max > _Q_MAX_LIMIT:
        raise ValueError(f"required window {q_max} exceeds {_Q_MAX_LIMIT} states")
    return int(q_max)


def choose_truncation_mminf(lam: float, mu: float, mass_tol: float = 1e-12) -> int:
    """Smallest window with Poisson(lam/mu) tail mass below mass_tol."""
    if not 0.0 < mass_tol <= _MASS_TOL_MAX:
        raise ValueError(f"mass_tol must lie in (0, {_MASS_TOL_MAX}], got {mass_tol}")
    a = lam / mu
    q_max = int(a) + 10
    while gammainc(q_max + 1, a) > mass_tol:
        q_max = 2 * q_max + 1
        if q_max > _Q_MAX_LIMIT:
            raise ValueError(f"required window exceeds {_Q_MAX_LIMIT} states")
    lo, hi = int(a), q_max  # first window obeying the tolerance is in (lo, hi]
    while lo + 1 < hi:
        mid = (lo + hi) // 2
        if gammainc(mid + 1, a) > mass_tol:
            lo = mid
        else:
            hi = mid
    return max(hi, int(math.ceil(a)) + 10)
