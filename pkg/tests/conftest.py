"""Shared helpers for the test suite.

refined_gap caches the expensive window-refined spectral solves so the
soundness grid pays for each (n, alpha) cell once; later test modules reuse
the cached results.
"""

from __future__ import annotations

import functools

from bdmix import (
    BirthDeathChain,
    RegimeSpec,
    SpectralResult,
    build_mmn,
    choose_truncation,
    spectral_gap,
)

SEED = 20260816


@functools.lru_cache(maxsize=None)
def refined_gap(n: int, alpha: float) -> SpectralResult:
    """Window-refined spectral gap for the n-server chain at load exponent alpha."""
    spec = RegimeSpec.from_alpha(n, alpha)
    chain = build_mmn(spec, choose_truncation(spec, 1e-12))
    return spectral_gap(chain)


def mmn_chain(n: int, alpha: float, mass_tol: float = 1e-12) -> BirthDeathChain:
    """Fresh n-server chain on its automatic truncation window."""
    spec = RegimeSpec.from_alpha(n, alpha)
    return build_mmn(spec, choose_truncation(spec, mass_tol))


def as_custom(chain: BirthDeathChain) -> BirthDeathChain:
    """Rewrap a chain as custom-kind so spectral_gap solves the window as given."""
    return BirthDeathChain(
        birth=chain.birth.copy(), death=chain.death.copy(), q_max=chain.q_max, kind="custom"
    )
