"""Spectral gap of the truncated generator, plus closed-form lower bounds.

Under detailed balance the generator restricted to the window is similar to a
symmetric tridiagonal matrix, so its two smallest eigenvalues come from LAPACK
bisection in O(q_max) memory. The smallest must be ~0 (the stationary
direction); the second smallest is the gap of the reflecting truncation.

Truncation inflates the gap (reflection at q_max shifts spectrum upward), so
for chains with a known rate law the window is doubled until the gap moves by
less than 1e-9; a chain of kind "custom" has no rate law beyond its window and
is solved exactly as given.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .bdchain import BirthDeathChain, RegimeSpec, extend_window, stationary

_RESIDUAL_LIMIT = 1e-9
_REFINE_TOL = 1e-9
_WINDOW_LIMIT = 10**8


class ConvergenceError(RuntimeError):
    """A numerical procedure failed to converge."""


@dataclass(frozen=True)
class SpectralResult:
    """Spectral gap report.

    Fields
    ------
    gap : second smallest eigenvalue of -L on the final window
    beta_hat_lb : closed-form lower bound on the gap (0.0 when none applies)
    q_max_used : window at which the reported gap was computed
    residual : |smallest eigenvalue|, which should be ~0
    converged : residual <= 1e-8 * gap
    """

    gap: float
    beta_hat_lb: float
    q_max_used: int
    residual: float
    converged: bool


def _window_eigs(chain: BirthDeathChain) -> tuple[float, float]:
    # Similarity transform D^(1/2) L D^(-1/2) with D = diag(stationary) turns
    # -L into a symmetric tridiagonal matrix; entries only need the rates.
    birth = chain.birth.copy()
    birth[-1] = 0.0
    diag = birth + chain.death
    off = -np.sqrt(chain.birth[:-1] * chain.death[1:])
    w = eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(0, 1))
    return float(w[0]), float(w[1])


def _lower_bound(chain: BirthDeathChain) -> float:
    if chain.kind in ("mm1", "mmn"):
        spec = RegimeSpec.from_lambda(chain.n, chain.lam, chain.mu)
        return beta_hat_lower_bound(spec)
    if chain.kind == "mminf":
        return chain.mu  # |q - lam/mu| is an exact eigenfunction with eigenvalue mu
    return 0.0


def spectral_gap(chain: BirthDeathChain) -> SpectralResult:
    """Spectral gap of the chain, window-refined for rate-law chains.

    Chains of kind mm1/mmn/mminf are re-solved on doubled windows until two
    consecutive gaps agree within 1e-9 (absolute); custom chains are solved
    once on their given window. A smallest eigenvalue with |eig| > 1e-9 means
    the assembled matrix is not a generator and raises ConvergenceError.
    """
    cur = chain
    eig0, gap = _window_eigs(cur)
    if abs(eig0) > _RESIDUAL_LIMIT:
        raise ConvergenceError(
            f"smallest eigenvalue {eig0:.3e} is not ~0; broken chain or window"
        )
    if cur.kind != "custom":
        while True:
            next_q = 2 * cur.q_max
            if next_q > _WINDOW_LIMIT:
                raise ConvergenceError(
                    f"gap did not stabilize below window limit {_WINDOW_LIMIT:.0e}"
                )
            nxt = extend_window(cur, next_q)
            eig0, gap_next = _window_eigs(nxt)
            if abs(eig0) > _RESIDUAL_LIMIT:
                raise ConvergenceError(
                    f"smallest eigenvalue {eig0:.3e} is not ~0 at q_max {next_q}"
                )
            cur = nxt
            if abs(gap_next - gap) < _REFINE_TOL:
                gap = gap_next
                break
            gap = gap_next
    residual = abs(eig0)
    return SpectralResult(
        gap=gap,
        beta_hat_lb=_lower_bound(chain),
        q_max_used=cur.q_max,
        residual=residual,
        converged=residual <= 1e-8 * gap,
    )


def dirichlet_form(chain: BirthDeathChain, f: np.ndarray) -> float:
    """Dirichlet energy sum_x nu(x) birth(x) (f(x+1)-f(x))^2 on the window."""
    f = np.asarray(f, dtype=float)
    if f.shape != (chain.q_max + 1,):
        raise ValueError("f must be a vector on the chain's window")
    nu = stationary(chain).probs
    df = f[1:] - f[:-1]
    return float(np.dot(nu[:-1] * chain.birth[:-1], df * df))


def variance(chain: BirthDeathChain, f: np.ndarray) -> float:
    """Stationary variance of f on the window."""
    f = np.asarray(f, dtype=float)
    if f.shape != (chain.q_max + 1,):
        raise ValueError("f must be a vector on the chain's window")
    nu = stationary(chain).probs
    mean = float(np.dot(nu, f))
    d = f - mean
    return float(np.dot(nu, d * d))


def rayleigh(chain: BirthDeathChain, f: np.ndarray) -> float:
    """Rayleigh quotient E(f,f)/Var(f); constant f is rejected."""
    var = variance(chain, f)
    if var <= 0.0 or not math.isfinite(var):
        raise ValueError("f is constant (or numerically so); Rayleigh quotient undefined")
    return dirichlet_form(chain, f) / var


def _candidate_ks(lam_eff: float, n: int) -> np.ndarray:
    if n <= 200_000:
        return np.arange(1, n + 1, dtype=float)
    # the minimand is unimodal in k with minimum near lam_eff
    center = int(min(max(round(lam_eff), 1), n))
    lo = max(1, center - 5)
    hi = min(n, center + 5)
    ks = set(range(lo, hi + 1)) | {1, 2, n - 1, n}
    return np.array(sorted(ks), dtype=float)


def beta_hat_lower_bound(spec: RegimeSpec) -> float:
    """Closed-form gap lower bound min{sqrt(rho)/2, (sqrt(n)-sqrt(lam/mu))^2}*mu."""
    lam_eff = spec.lam / spec.mu
    a = 0.5 * math.sqrt(lam_eff / spec.n)
    b = (math.sqrt(spec.n) - math.sqrt(lam_eff)) ** 2
    return min(a, b) * spec.mu


def van_doorn_bound(spec: RegimeSpec) -> float:
    """Tridiagonal-minorization gap lower bound for the n-server queue."""
    lam_eff = spec.lam / spec.mu
    ks = _candidate_ks(lam_eff, spec.n)
    inner = lam_eff + ks - np.sqrt(lam_eff * (ks - 1.0)) - np.sqrt(lam_eff * ks)
    tail = (math.sqrt(spec.n) - math.sqrt(lam_eff)) ** 2
    return float(min(float(np.min(inner)), tail)) * spec.mu


def f_star_bound(spec: RegimeSpec) -> float:
    """Variational gap estimate min_k {(sqrt(lam)-sqrt(k))^2 + sqrt(lam)/(sqrt(k)+sqrt(k-1))}."""
    lam_eff = spec.lam / spec.mu
    ks = _candidate_ks(lam_eff, spec.n)
    rt = math.sqrt(lam_eff)
    vals = (rt - np.sqrt(ks)) ** 2 + rt / (np.sqrt(ks) + np.sqrt(ks - 1.0))
    return float(np.min(vals)) * spec.mu
