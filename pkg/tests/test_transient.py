"""Uniformized evolution and the chi-square / total-variation divergences."""

from __future__ import annotations

import math

import numpy as np
import pytest
from conftest import SEED, as_custom
from scipy.linalg import eigh_tridiagonal

from bdmix import (
    BirthDeathChain,
    RegimeSpec,
    build_mmn,
    chi,
    chi_square,
    decay_trace,
    dirac,
    from_probs,
    spectral_gap,
    stationary,
    tv_distance,
    uniform,
)
from bdmix.transient import evolve


def mm1_chain(q_max=40):
    return build_mmn(RegimeSpec.from_lambda(1, 0.25), q_max)


class TestEvolve:
    def test_time_zero_is_identity(self):
        chain = mm1_chain()
        pi0 = dirac(0, 40)
        out = evolve(chain, pi0, 0.0)
        assert np.array_equal(out.probs, pi0.probs)

    def test_argument_validation(self):
        chain = mm1_chain()
        pi0 = dirac(0, 40)
        with pytest.raises(ValueError):
            evolve(chain, pi0, -1.0)
        with pytest.raises(ValueError):
            evolve(chain, pi0, 1.0, tol=0.0)
        with pytest.raises(ValueError):
            evolve(chain, pi0, 1.0, tol=1e-5)
        with pytest.raises(ValueError):
            evolve(chain, pi0, 1e8)  # t * Lambda beyond the series budget

    def test_mass_deficit_bounded_by_tol(self):
        chain = mm1_chain()
        out = evolve(chain, dirac(0, 40), 3.0, tol=1e-12)
        assert 0.0 <= out.tail_mass <= 2e-12

    def test_semigroup_property(self):
        chain = build_mmn(RegimeSpec.from_lambda(4, 3.0), 97)
        pi0 = dirac(0, 97)
        one_shot = evolve(chain, pi0, 2.0, tol=1e-12)
        two_step = evolve(chain, evolve(chain, pi0, 0.7, tol=1e-12), 1.3, tol=1e-12)
        assert float(np.abs(one_shot.probs - two_step.probs).sum()) <= 1e-11

    def test_preserves_stationarity(self):
        chain = build_mmn(RegimeSpec.from_lambda(4, 3.0), 97)
        nu = stationary(chain)
        out = evolve(chain, nu, 5.0)
        renorm = from_probs(out.probs / math.fsum(out.probs.tolist()))
        assert tv_distance(renorm, nu) <= 1e-13

    def test_output_twins_consistent(self):
        chain = mm1_chain()
        out = evolve(chain, dirac(0, 40), 1.0)
        assert np.array_equal(np.exp(out.log_probs), out.probs)


class TestChiSquare:
    def test_exact_identities(self):
        nu1 = stationary(mm1_chain(19))
        assert chi_square(dirac(0, 19), nu1) == pytest.approx(1.0 / 3.0, rel=1e-12)
        nu4 = stationary(build_mmn(RegimeSpec.from_lambda(4, 3.0), 97))
        assert chi_square(dirac(0, 97), nu4) == pytest.approx(25.5, rel=1e-12)
        assert chi(dirac(0, 97), nu4) == pytest.approx(5.049752469181039, rel=1e-12)

    def test_zero_on_equal_laws(self):
        nu = stationary(build_mmn(RegimeSpec.from_lambda(4, 3.0), 97))
        assert chi_square(nu, nu) == 0.0

    def test_window_mismatch_rejected(self):
        with pytest.raises(ValueError):
            chi_square(dirac(0, 10), dirac(0, 11))

    def test_absolute_continuity_on_window(self):
        p = uniform(0, 3, 5)
        q = from_probs(np.array([0.5, 0.5, 0.0, 0.0, 0.0, 0.0]))
        with pytest.raises(ValueError, match="absolute continuity"):
            chi_square(p, q)

    def test_absolute_continuity_on_tail(self):
        probs = np.full(4, 0.25 * (1.0 - 1e-9))
        p = from_probs(probs, tail_mass=1e-9)
        q = uniform(0, 3, 3)  # no tail mass at all
        with pytest.raises(ValueError, match="absolute continuity"):
            chi_square(p, q)

    def test_log_domain_ratios_for_tiny_reference(self):
        # reference mass 1e-310 at one state underflows the direct ratio
        q = np.array([1.0 - 1e-310, 1e-310])
        p = np.array([1.0 - 1e-305, 1e-305])
        val = chi_square(from_probs(p), from_probs(q))
        assert math.isfinite(val) and val > 0.0

    def test_dominates_squared_tv(self):
        rng = np.random.default_rng(SEED)
        for _ in range(32):
            size = int(rng.integers(2, 30))
            p = rng.uniform(0.0, 1.0, size)
            q = rng.uniform(0.05, 1.0, size)
            p /= p.sum()
            q /= q.sum()
            pd, qd = from_probs(p), from_probs(q)
            assert tv_distance(pd, qd) <= 0.5 * chi(pd, qd) + 1e-15


class TestTvDistance:
    def test_point_mass_vs_geometric(self):
        nu = stationary(mm1_chain(19))
        assert tv_distance(dirac(0, 19), nu) == pytest.approx(0.25, rel=1e-12)

    def test_symmetry(self):
        nu = stationary(mm1_chain(19))
        u = uniform(0, 4, 19)
        assert tv_distance(u, nu) == tv_distance(nu, u)


class TestDecayTrace:
    def test_frozen_single_server_trace(self):
        """Window-40 point-mass trace against an independently computed reference.

        The t <= 10 rows were frozen from a matrix-exponential computation at
        1e-9 relative; the t = 40 row is below the linear-domain noise floor
        of that method, so it was frozen from four agreeing relative-accurate
        computations instead (two single-shot uniformizations, one fresh
        matrix exponential, one incremental pass).
        """
        rows = decay_trace(mm1_chain(40), dirac(0, 40), [1.0, 5.0, 10.0, 40.0])
        frozen = {
            1.0: (0.259857456798652, 0.06752589785386329, 0.1029971684051658),
            5.0: (0.04243289464792061, 0.00180055054820153, 0.010231430861696998),
            10.0: (0.007901165323833661, 6.242841347455149e-05, 0.001350412911151388),
        }
        for row in rows[:3]:
            c, c2, tv = frozen[row["t"]]
            assert row["chi"] == pytest.approx(c, rel=1e-9)
            assert row["chi_square"] == pytest.approx(c2, rel=1e-9)
            assert row["tv"] == pytest.approx(tv, rel=1e-9)
        last = rows[3]
        assert last["chi"] == pytest.approx(1.6871120432652387e-06, rel=1e-6)
        assert last["tv"] == pytest.approx(1.2465952404315730e-07, rel=1e-6)

    def test_chi_nonincreasing(self):
        grid = [0.5 * k for k in range(1, 81)]
        rows = decay_trace(mm1_chain(40), dirac(0, 40), grid)
        chis = [r["chi"] for r in rows]
        for earlier, later in zip(chis, chis[1:]):
            assert later <= earlier * (1.0 + 1e-9) + 1e-15

    def test_tv_below_half_chi_along_trace(self):
        rows = decay_trace(mm1_chain(40), dirac(0, 40), [0.5, 1.0, 2.0, 5.0])
        for row in rows:
            assert row["tv"] <= 0.5 * row["chi"] + 1e-15

    def test_mass_deficit_reported_not_hidden(self):
        rows = decay_trace(mm1_chain(40), dirac(0, 40), [1.0, 2.0, 3.0])
        deficits = [r["mass_deficit"] for r in rows]
        assert all(0.0 <= d <= 1e-11 for d in deficits)
        assert deficits == sorted(deficits)  # accumulates monotonically

    def test_grid_must_ascend(self):
        with pytest.raises(ValueError):
            decay_trace(mm1_chain(), dirac(0, 40), [1.0, 0.5])

    def test_row_keys(self):
        (row,) = decay_trace(mm1_chain(), dirac(0, 40), [1.0])
        assert set(row) == {"t", "chi", "chi_square", "tv", "mass_deficit"}


class TestSpectralConsistency:
    """The asymptotic log-chi slope must reproduce the window's spectral gap."""

    @pytest.mark.parametrize(
        "n, lam, q_max, frozen_gap",
        [
            (1, 0.25, 19, 0.26231165940486256),
            (4, 3.0, 97, 0.07547727683299338),
        ],
    )
    def test_decay_slope_matches_window_gap(self, n, lam, q_max, frozen_gap):
        base = build_mmn(RegimeSpec.from_lambda(n, lam), q_max)
        chain = as_custom(base)  # solve this window exactly, no refinement
        gap = spectral_gap(chain).gap
        assert gap == pytest.approx(frozen_gap, rel=1e-12)
        nu = stationary(chain)
        # tilt the stationary law along the second eigenfunction so the
        # slowest mode carries O(1) weight from the start
        birth = chain.birth.copy()
        birth[-1] = 0.0
        diag = birth + chain.death
        off = -np.sqrt(chain.birth[:-1] * chain.death[1:])
        _, vecs = eigh_tridiagonal(diag, off, select="i", select_range=(1, 1))
        f2 = vecs[:, 0] * np.exp(-0.5 * nu.log_probs)
        probs = nu.probs * (1.0 + 0.5 * f2 / np.abs(f2).max())
        pi0 = from_probs(probs / probs.sum())
        t1, t2 = 2.0, 4.0
        chi1 = chi(evolve(chain, pi0, t1, tol=1e-15), nu)
        chi2 = chi(evolve(chain, pi0, t2, tol=1e-15), nu)
        slope = -(math.log(chi2) - math.log(chi1)) / (t2 - t1)
        assert 0.98 <= slope / gap <= 1.02
