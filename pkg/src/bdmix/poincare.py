"""Poincare machinery: local variance bounds on the petite set, stitched into
a global constant C_P with Var(f) <= C_P E(f, f), hence chi decay e^(-t/C_P).

Three local methods
-------------------
canonical_path      weighted path counting over K's edges; works on any
                    contiguous K, optionally with a reweighted measure
truncation          inherit an outer chain's global constant on K
closed_form_super_hw  the g-family corrections C_b = g1 n^(2-4a) + g2 n^(3-6a)

Stitching: C_P = (1 + tau * C_b)/gamma where tau is the mean of the drift
excess b over the conditional stationary measure on K. A singleton K needs
no local bound at all: C_P = 1/gamma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .bdchain import BirthDeathChain, RegimeSpec, build_mmn, stationary
from .lyapunov import (
    DriftCertificate,
    mean_field_certificate,
    sub_hw_certificate,
    super_hw_certificate,
)
from .spectral import dirichlet_form, spectral_gap, variance

_METHODS = frozenset({"canonical_path", "truncation", "closed_form_super_hw"})
_G1_CAP = 384.0
_G2_CAP = 395.93
_G3_CAP = 3.48


@dataclass(frozen=True)
class LocalPoincareBound:
    """Variance control on a petite set K.

    c_local bounds sup_f Var_m(f) / sum_(k in K) m(k) birth(k) (f(k+1)-f(k))^2
    with m the (possibly reweighted) conditional measure on K; weight records
    the reweighting when one was used.
    """

    c_local: float
    method: str
    K: tuple
    weight: dict | None = None

    def __post_init__(self):
        if self.method not in _METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if self.c_local < 0.0 or not math.isfinite(self.c_local):
            raise ValueError(f"c_local must be finite and nonnegative, got {self.c_local}")


@dataclass(frozen=True)
class PoincareCertificate:
    """Global variance bound Var <= c_p * E; mixing_rate is exactly 1/c_p."""

    c_p: float
    provenance: str
    components: dict
    mixing_rate: float = 0.0

    def __post_init__(self):
        if not (self.c_p > 0.0 and math.isfinite(self.c_p)):
            raise ValueError(f"c_p must be positive and finite, got {self.c_p}")
        object.__setattr__(self, "mixing_rate", 1.0 / self.c_p)


def _check_contiguous(K) -> tuple:
    ks = tuple(sorted(int(q) for q in K))
    if not ks:
        raise ValueError("K must be nonempty")
    if ks[-1] - ks[0] + 1 != len(ks):
        raise ValueError("K must be a contiguous block of states")
    return ks


def _conditional_measure(chain: BirthDeathChain, ks: tuple) -> np.ndarray:
    if ks[-1] > chain.q_max:
        raise ValueError("K exceeds the chain's window")
    nu = stationary(chain).probs[list(ks)]
    tot = float(nu.sum())
    if tot <= 0.0:
        raise ValueError("stationary mass on K vanishes")
    return nu / tot


def canonical_path_constant(chain: BirthDeathChain, K, measure: dict | None = None) -> LocalPoincareBound:
    """Path-counting local constant on a contiguous petite set.

    For each interior edge (k, k+1), all pairs x <= k < y load the edge with
    m(x) m(y) (y - x); the constant is the worst load over the edge's
    capacity m(k) birth(k). A singleton K has no edges and gets 0. Passing
    measure (strictly positive on K) reweights the conditional stationary
    measure m proportionally.
    """
    ks = _check_contiguous(K)
    if len(ks) == 1:
        return LocalPoincareBound(c_local=0.0, method="canonical_path", K=ks, weight=measure)
    m = _conditional_measure(chain, ks)
    if measure is not None:
        w = np.array([float(measure.get(q, 0.0)) for q in ks])
        if np.any(w <= 0.0):
            raise ValueError("measure must be strictly positive on K")
        m = m * w
        m = m / float(m.sum())
    x = np.array(ks, dtype=float)
    cum_m = np.cumsum(m)
    cum_xm = np.cumsum(x * m)
    tot_m = cum_m[-1]
    tot_xm = cum_xm[-1]
    # edge load via prefix sums: sum_(x<=k<y) m(x)m(y)(y-x)
    num = cum_m[:-1] * (tot_xm - cum_xm[:-1]) - cum_xm[:-1] * (tot_m - cum_m[:-1])
    birth = chain.birth[list(ks[:-1])]
    cap = m[:-1] * birth
    if np.any(cap <= 0.0):
        raise ValueError("an edge in K has zero capacity")
    c_local = float(np.max(num / cap))
    return LocalPoincareBound(c_local=c_local, method="canonical_path", K=ks, weight=measure)


def truncation_local_bound(outer_c_p: float, chain: BirthDeathChain, K) -> LocalPoincareBound:
    """Inherit an outer chain's global constant as a local constant on K.

    Valid because any f on K extends constantly outside K without adding
    Dirichlet energy, so the outer variance bound restricts to K.
    """
    ks = _check_contiguous(K)
    if ks[-1] > chain.q_max:
        raise ValueError("K exceeds the chain's window")
    if not (outer_c_p > 0.0 and math.isfinite(outer_c_p)):
        raise ValueError(f"outer_c_p must be positive and finite, got {outer_c_p}")
    return LocalPoincareBound(c_local=outer_c_p, method="truncation", K=ks)


def g_constants(n: int, alpha: float) -> dict:
    """Closed-form correction constants for lam/(n mu) = 1 - n^(-alpha).

    Valid for alpha in [1/2, 1) and n >= 110. g1, g2, g3 are capped at 384,
    395.93 and 3.48 (the caps are the proven uniform bounds; the raw values
    exceed them only for moderate n at alpha = 1/2). Also returns the
    roughly-uniform envelope constants L and U and the combination
    c_b = g1 n^(2-4 alpha) + g2 n^(3-6 alpha).
    """
    if not 0.5 <= alpha < 1.0:
        raise ValueError(f"alpha must lie in [1/2, 1), got {alpha}")
    if n < 110:
        raise ValueError(f"n must be at least 110, got {n}")
    na = float(n) ** alpha
    inv = 1.0 / na  # n^(-alpha)
    base = (1.0 - 1.0 / (na - 2.0) ** 2) ** n
    root = math.sqrt(1.0 - 2.0 * inv - 1.0 / n)
    stir = math.exp(1.0 / (12.0 * math.floor(n - 2.0 * n ** (1.0 - alpha))))
    l_k = base * root / (stir * (2.0 + n ** (alpha - 1.0)))
    u_k = stir * root / (2.0 * base)
    ql = l_k * (1.0 - inv)
    c = n ** (1.0 - 2.0 * alpha) / (1.0 - inv)
    base2 = base * base
    pre = math.exp(5.0 / (24.0 * n)) * (1.0 - 2.0 * inv - 1.0 / n)
    u1 = (1.0 + 1.0 / (4.0 * (na - 1.0))) * pre / ((1.0 - inv) * base2)
    g1_raw = u1 / ql
    g2_raw = 0.5 * (c * math.exp(c)) ** 2 * pre / (base2 * ql)
    g3_raw = (1.0 + 1.0 / (4.0 * (na - 1.0))) * u_k + 2.0 * n ** (
        1.0 - 2.0 * alpha
    ) * math.exp(c) * l_k / (1.0 - inv)
    g1 = min(g1_raw, _G1_CAP)
    g2 = min(g2_raw, _G2_CAP)
    g3 = min(g3_raw, _G3_CAP)
    c_b = g1 * n ** (2.0 - 4.0 * alpha) + g2 * n ** (3.0 - 6.0 * alpha)
    return {
        "L": l_k,
        "U": u_k,
        "QL": ql,
        "U1": u1,
        "g1": g1,
        "g2": g2,
        "g3": g3,
        "g1_raw": g1_raw,
        "g2_raw": g2_raw,
        "g3_raw": g3_raw,
        "c_b": c_b,
    }


def weighted_poincare_super_hw(spec: RegimeSpec) -> LocalPoincareBound:
    """Closed-form local constant C_b on the exponential-well petite set.

    The bound controls the b-weighted variance on K: Var over the measure
    proportional to b times the conditional stationary law. For alpha above
    1/2 the drift excess b itself is recorded as the weight; at alpha = 1/2
    exactly the same closed form applies with the formula petite set.
    """
    if spec.alpha is None or not 0.5 <= spec.alpha < 1.0:
        raise ValueError("closed form needs alpha in [1/2, 1)")
    if spec.n < 110:
        raise ValueError(
            f"closed-form constants are proven only for n >= 110, got {spec.n}"
        )
    g = g_constants(spec.n, spec.alpha)
    lam_eff = spec.lam / spec.mu
    k_lo = max(int(math.floor(2.0 * lam_eff)) - spec.n, 0)
    ks = tuple(range(k_lo, spec.n))
    weight = None
    if spec.alpha > 0.5:
        cert = super_hw_certificate(spec)
        ks = tuple(sorted(cert.K))
        weight = dict(cert.b)
    return LocalPoincareBound(
        c_local=g["c_b"] / spec.mu, method="closed_form_super_hw", K=ks, weight=weight
    )


def roughly_uniform_bounds(spec: RegimeSpec) -> dict:
    """Envelope L n^(alpha-1) <= nu_K(x) <= U n^(alpha-1) on the petite set.

    For the n-server chain with alpha in (1/2, 1) and n >= 110 the
    conditional stationary measure on the exponential-well petite set is
    flat to within the constants L, U of g_constants; the report carries
    both formula constants and the exact measure's extremes.
    """
    if spec.alpha is None or not 0.5 < spec.alpha < 1.0:
        raise ValueError("roughly-uniform envelope needs alpha in (1/2, 1)")
    if spec.n < 110:
        raise ValueError(f"roughly-uniform envelope needs n >= 110, got {spec.n}")
    lam_eff = spec.lam / spec.mu
    k_lo = max(int(math.floor(2.0 * lam_eff)) - spec.n, 0)
    ks = tuple(range(k_lo, spec.n))
    chain = build_mmn(spec, q_max=spec.n + 10)
    m = _conditional_measure(chain, ks)
    g = g_constants(spec.n, spec.alpha)
    scale = float(spec.n) ** (spec.alpha - 1.0)
    lo = g["L"] * scale
    hi = g["U"] * scale
    return {
        "L": g["L"],
        "U": g["U"],
        "lo": lo,
        "hi": hi,
        "nu_min": float(m.min()),
        "nu_max": float(m.max()),
        "holds": bool(lo <= m.min() and m.max() <= hi),
    }


def singleton_certificate(gamma: float, K=None) -> PoincareCertificate:
    """C_P = 1/gamma when the petite set is a single state.

    With |K| = 1 the local variance vanishes, so the drift rate alone is the
    Poincare constant's inverse.
    """
    if K is not None:
        ks = tuple(K)
        if len(ks) != 1:
            raise ValueError(f"singleton route needs |K| = 1, got {len(ks)} states")
    if not (gamma > 0.0 and math.isfinite(gamma)):
        raise ValueError(f"gamma must be positive and finite, got {gamma}")
    return PoincareCertificate(
        c_p=1.0 / gamma, provenance="singleton", components={"gamma": gamma}
    )


def stitch(gamma: float, tau_mass: float, c_b: float) -> PoincareCertificate:
    """Combine drift rate, conditional excess mass and local constant.

    C_P = (1 + tau_mass * c_b)/gamma with tau_mass = E[b | K] under the
    conditional stationary measure; units must agree (tau_mass in rate
    units, c_b in time units).
    """
    if not (gamma > 0.0 and math.isfinite(gamma)):
        raise ValueError(f"gamma must be positive and finite, got {gamma}")
    if tau_mass < 0.0 or c_b < 0.0:
        raise ValueError("tau_mass and c_b must be nonnegative")
    c_p = (1.0 + tau_mass * c_b) / gamma
    return PoincareCertificate(
        c_p=c_p,
        provenance="stitching",
        components={"gamma": gamma, "tau_mass": tau_mass, "c_b": c_b},
    )


def constant_b_certificate(gamma: float, big_b: float, c_local: float) -> PoincareCertificate:
    """C_P = (1 + B * c_local)/gamma from the constant-b relaxation b <= B 1_K."""
    if not (gamma > 0.0 and math.isfinite(gamma)):
        raise ValueError(f"gamma must be positive and finite, got {gamma}")
    if big_b < 0.0 or c_local < 0.0:
        raise ValueError("big_b and c_local must be nonnegative")
    c_p = (1.0 + big_b * c_local) / gamma
    return PoincareCertificate(
        c_p=c_p,
        provenance="constant_b",
        components={"gamma": gamma, "big_b": big_b, "c_local": c_local},
    )


def excess_mass(chain: BirthDeathChain, cert: DriftCertificate) -> float:
    """Mean drift excess E[b | K] under the conditional stationary measure."""
    ks = _check_contiguous(cert.K)
    m = _conditional_measure(chain, ks)
    return float(sum(mi * cert.b[q] for mi, q in zip(m, ks)))


def stitched_certificate(spec: RegimeSpec) -> PoincareCertificate:
    """Full pipeline for alpha in (1/2, 1), n >= 110: drift + g-family stitch."""
    cert = super_hw_certificate(spec)
    chain = build_mmn(spec, q_max=spec.n + 10)
    tau_mass = excess_mass(chain, cert)
    local = weighted_poincare_super_hw(spec)
    out = stitch(cert.gamma, tau_mass, local.c_local)
    comps = dict(out.components)
    comps.update({"n": spec.n, "alpha": spec.alpha, "K": cert.K})
    return PoincareCertificate(c_p=out.c_p, provenance=out.provenance, components=comps)


def sub_hw_poincare(spec: RegimeSpec) -> PoincareCertificate:
    """Constant-b pipeline for alpha in (0, 1/2): hat potential + closed-form local bound."""
    cert = sub_hw_certificate(spec)
    lam_eff = spec.lam / spec.mu
    big_b = max(math.ceil(lam_eff) + 2.0, 2.0 * lam_eff) * spec.mu
    c_local = 12.0 * (lam_eff + 1.0) ** 2 / lam_eff**3 / spec.mu
    out = constant_b_certificate(cert.gamma, big_b, c_local)
    comps = dict(out.components)
    comps.update({"n": spec.n, "alpha": spec.alpha, "K": cert.K})
    return PoincareCertificate(c_p=out.c_p, provenance=out.provenance, components=comps)


def mean_field_poincare(spec: RegimeSpec) -> PoincareCertificate:
    """Constant-b pipeline for fixed load: geometric potential + truncation.

    The local constant on K = {0..n} is inherited from the infinite-server
    chain, whose Poincare constant is exactly 1/mu.
    """
    cert = mean_field_certificate(spec)
    out = constant_b_certificate(cert.gamma, cert.B_max, 1.0 / spec.mu)
    comps = dict(out.components)
    comps.update({"n": spec.n, "z": cert.V.params["z"]})
    return PoincareCertificate(c_p=out.c_p, provenance=out.provenance, components=comps)


def _probe_basis(chain: BirthDeathChain, nu) -> list:
    """Deterministic probe functions: eigenfunction, indicators, polynomials,
    exponentials. The second eigenfunction comes from the symmetrized window
    matrix; its exponent is clipped so underflowed stationary states cannot
    overflow the back-transform."""
    w = chain.q_max
    states = np.arange(w + 1, dtype=float)
    mean = float(np.dot(nu.probs, states))
    sd = math.sqrt(max(float(np.dot(nu.probs, (states - mean) ** 2)), 1e-300))
    basis = []
    if w >= 1:
        birth = chain.birth.copy()
        birth[-1] = 0.0
        diag = birth + chain.death
        off = -np.sqrt(chain.birth[:-1] * chain.death[1:])
        _, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(1, 1))
        f2 = vecs[:, 0] * np.exp(np.minimum(-0.5 * nu.log_probs, 350.0))
        basis.append(("eigenfunction", f2))
    cum = np.cumsum(nu.probs)
    for level in (0.1, 0.25, 0.5, 0.75, 0.9):
        m = int(np.searchsorted(cum, level))
        basis.append((f"indicator_le_{m}", (states <= m).astype(float)))
    z = (states - mean) / sd
    for p in (1, 2, 3):
        basis.append((f"poly_{p}", z**p))
    for s, tag in ((1.0, "pos"), (-1.0, "neg")):
        basis.append((f"exp_bulk_{tag}", np.exp(np.clip(s * z / 4.0, -350.0, 350.0))))
        basis.append((f"exp_window_{tag}", np.exp(s * states / max(w, 1))))
    return basis


def verify_poincare(
    chain: BirthDeathChain, cert: PoincareCertificate, n_tests: int = 32, seed: int = 0
) -> dict:
    """Probe Var(f) <= c_p E(f, f) + 1e-9 with a fixed seeded family.

    The family always includes the window's second eigenfunction (the probe
    an unsound constant fails first), prefix indicators at mass quantiles,
    centered polynomials and exponentials, plus n_tests seeded random
    mixtures of these. The certificate's rate is also checked against the
    spectral gap. The report names the worst probe.
    """
    nu = stationary(chain)
    basis = _probe_basis(chain, nu)
    cols = []
    for _, f in basis:
        va = variance(chain, f)
        if va > 1e-30:
            cols.append(f / math.sqrt(va))
    probes = list(basis)
    if cols:
        rng = np.random.default_rng(seed)
        mat = np.column_stack(cols)
        for i in range(n_tests):
            probes.append((f"mixture_{i}", mat @ rng.standard_normal(mat.shape[1])))
    worst = 0.0
    worst_probe = None
    probes_ok = True
    checked = 0
    for name, f in probes:
        en = dirichlet_form(chain, f)
        if en <= 0.0:
            continue
        va = variance(chain, f)
        checked += 1
        if va > cert.c_p * en * (1.0 + 1e-9) + 1e-9:
            probes_ok = False
        ratio = va / (cert.c_p * en)
        if ratio > worst:
            worst = ratio
            worst_probe = name
    gap = spectral_gap(chain).gap
    gap_ok = bool(cert.mixing_rate <= gap + 1e-9)
    return {
        "ok": probes_ok and gap_ok,
        "probes_ok": probes_ok,
        "gap_ok": gap_ok,
        "max_ratio": worst,
        "worst_probe": worst_probe,
        "n_probes": checked,
        "gap": gap,
        "mixing_rate": cert.mixing_rate,
    }
