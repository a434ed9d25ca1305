"""Local and global variance bounds: closed forms, path counting, stitching."""

from __future__ import annotations

import math

import numpy as np
import pytest
from conftest import SEED, as_custom

from bdmix import (
    BirthDeathChain,
    PoincareCertificate,
    RegimeSpec,
    build_mmn,
    canonical_path_constant,
    choose_truncation,
    constant_b_certificate,
    excess_mass,
    g_constants,
    mean_field_poincare,
    roughly_uniform_bounds,
    singleton_certificate,
    spectral_gap,
    stationary,
    stitch,
    stitched_certificate,
    sub_hw_poincare,
    super_hw_certificate,
    truncation_local_bound,
    verify_poincare,
    weighted_poincare_super_hw,
)
from bdmix.regimes import d_n

FROZEN_CB = {
    (110, 0.6): 1.7195939971805352,
    (110, 0.75): 0.03003824332049671,
    (500, 0.6): 0.47479805615539855,
    (500, 0.75): 0.005143104307152741,
    (2000, 0.6): 0.1982836872814492,
    (2000, 0.75): 0.0011550865934516377,
}

FROZEN_EXCESS = {
    (110, 0.6): 1.0247219494847313,
    (110, 0.75): 0.5532371007098943,
    (500, 0.6): 0.8301623249610711,
    (500, 0.75): 0.5126564329119342,
    (2000, 0.6): 0.7368706365646979,
    (2000, 0.75): 0.49704425620332937,
}

# (n, alpha) -> (c_p, mixing_rate) for the full stitched pipeline
FROZEN_STITCHED = {
    (110, 0.6): (27.437224773536336, 0.036446834847689),
    (110, 0.75): (42.01935771856022, 0.02379855510162388),
    (500, 0.6): (19.094240813442788, 0.05237181251511067),
    (500, 0.75): (89.25398046987584, 0.011203982105173567),
    (2000, 0.6): (20.855112759559304, 0.047949872605777814),
    (2000, 0.75): (178.6887748035178, 0.005596322438830183),
}


class TestGConstants:
    def test_frozen_reference_cell(self):
        g = g_constants(110, 0.75)
        assert set(g) == {"L", "U", "QL", "U1", "g1", "g2", "g3", "g1_raw", "g2_raw", "g3_raw", "c_b"}
        assert g["L"] == pytest.approx(0.37515004834927673, rel=1e-12)
        assert g["U"] == pytest.approx(0.5380348913183103, rel=1e-12)
        assert g["g1"] == pytest.approx(3.302425453377425, rel=1e-12)
        assert g["g2"] == pytest.approx(0.018682556581719575, rel=1e-12)
        assert g["g3"] == pytest.approx(0.6234320984588069, rel=1e-12)
        assert g["c_b"] == pytest.approx(0.03003824332049671, rel=1e-12)

    def test_frozen_combination_grid(self):
        for (n, a), c_b in FROZEN_CB.items():
            g = g_constants(n, a)
            assert g["c_b"] == pytest.approx(c_b, rel=1e-12), f"(n={n}, a={a})"
            recomputed = g["g1"] * n ** (2.0 - 4.0 * a) + g["g2"] * n ** (3.0 - 6.0 * a)
            assert g["c_b"] == pytest.approx(recomputed, rel=1e-14)

    def test_caps_engage_at_critical_exponent(self):
        g = g_constants(110, 0.5)
        assert g["g1_raw"] == pytest.approx(237.43941914029725, rel=1e-12)
        assert g["g2_raw"] == pytest.approx(1166.4862294347809, rel=1e-12)
        assert g["g1"] == g["g1_raw"]
        assert g["g2"] == 395.93
        assert g["g3"] == pytest.approx(2.750028095126202, rel=1e-12)
        assert g["g1"] <= 384.0 and g["g2"] <= 395.93 and g["g3"] <= 3.48

    def test_raw_constants_asymptotics(self):
        g = g_constants(10**10, 0.75)
        assert g["g1_raw"] == pytest.approx(2.0, rel=1e-2)
        assert g["g2_raw"] < 1e-9
        g = g_constants(10**8, 0.5)
        assert g["g1_raw"] == pytest.approx(2.0 * math.e**3, rel=1e-2)
        assert g["g2_raw"] == pytest.approx(math.e**5, rel=1e-2)

    def test_validation(self):
        with pytest.raises(ValueError):
            g_constants(110, 0.4)
        with pytest.raises(ValueError):
            g_constants(110, 1.0)
        with pytest.raises(ValueError):
            g_constants(100, 0.75)


class TestWeightedLocalBound:
    def test_reweighted_well(self):
        spec = RegimeSpec.from_alpha(110, 0.75)
        cert = super_hw_certificate(spec)
        bound = weighted_poincare_super_hw(spec)
        assert bound.c_local == pytest.approx(0.03003824332049671, rel=1e-12)
        assert bound.method == "closed_form_super_hw"
        assert bound.K == tuple(sorted(cert.K))
        assert bound.weight == dict(cert.b)

    def test_critical_exponent_formula_set(self):
        bound = weighted_poincare_super_hw(RegimeSpec.from_alpha(110, 0.5))
        assert bound.c_local == pytest.approx(633.3694191402973, rel=1e-12)
        assert bound.K == tuple(range(89, 110))
        assert bound.weight is None

    def test_rate_scaling(self):
        slow = weighted_poincare_super_hw(RegimeSpec.from_alpha(110, 0.75, mu=1.0))
        fast = weighted_poincare_super_hw(RegimeSpec.from_alpha(110, 0.75, mu=2.0))
        assert fast.c_local == pytest.approx(0.5 * slow.c_local, rel=1e-14)

    def test_validation(self):
        with pytest.raises(ValueError):
            weighted_poincare_super_hw(RegimeSpec.from_alpha(110, 0.4))
        with pytest.raises(ValueError):
            weighted_poincare_super_hw(RegimeSpec.from_alpha(100, 0.75))


class TestRoughlyUniform:
    def test_frozen_envelope(self):
        r = roughly_uniform_bounds(RegimeSpec.from_alpha(110, 0.75))
        assert r["holds"]
        assert r["lo"] == pytest.approx(0.11583954, rel=1e-6)
        assert r["hi"] == pytest.approx(0.16613543, rel=1e-6)
        assert r["nu_min"] == pytest.approx(0.13844603, rel=1e-6)
        assert r["nu_max"] == pytest.approx(0.14554444, rel=1e-6)
        assert r["lo"] <= r["nu_min"] <= r["nu_max"] <= r["hi"]

    def test_validation(self):
        with pytest.raises(ValueError):
            roughly_uniform_bounds(RegimeSpec.from_alpha(110, 0.5))
        with pytest.raises(ValueError):
            roughly_uniform_bounds(RegimeSpec.from_alpha(100, 0.75))


class TestCanonicalPath:
    def test_uniform_three_state_value(self):
        chain = BirthDeathChain(
            birth=np.full(3, 2.1),
            death=np.array([0.0, 2.1, 2.1]),
            q_max=2,
            kind="custom",
        )
        bound = canonical_path_constant(chain, (0, 1, 2))
        assert bound.c_local == pytest.approx(10.0 / 21.0, rel=1e-14)
        assert bound.method == "canonical_path"

    def test_frozen_well_constant(self):
        spec = RegimeSpec.from_alpha(110, 0.75)
        cert = super_hw_certificate(spec)
        chain = build_mmn(spec, choose_truncation(spec, 1e-12))
        ks = tuple(range(min(cert.K), max(cert.K) + 1))
        bound = canonical_path_constant(chain, ks)
        assert bound.c_local == pytest.approx(0.054989680554752396, rel=1e-12)

    def test_singleton_has_no_edges(self):
        chain = build_mmn(RegimeSpec.from_lambda(1, 0.25), 19)
        assert canonical_path_constant(chain, (5,)).c_local == 0.0

    def test_variance_bound_is_sound(self):
        chain = BirthDeathChain(
            birth=np.full(3, 2.1),
            death=np.array([0.0, 2.1, 2.1]),
            q_max=2,
            kind="custom",
        )
        ks = (0, 1, 2)
        c_l = canonical_path_constant(chain, ks).c_local
        nu = stationary(chain).probs[list(ks)]
        m = nu / nu.sum()
        birth = chain.birth[list(ks[:-1])]
        rng = np.random.default_rng(SEED)
        for _ in range(100):
            f = rng.uniform(-1.0, 1.0, 3)
            var = float(np.dot(m, (f - np.dot(m, f)) ** 2))
            edge = float(np.dot(m[:-1] * birth, np.diff(f) ** 2))
            assert var <= c_l * edge + 1e-12

    def test_reweighting_changes_the_constant(self):
        chain = build_mmn(RegimeSpec.from_lambda(1, 0.25), 19)
        plain = canonical_path_constant(chain, (2, 3, 4))
        tilted = canonical_path_constant(chain, (2, 3, 4), measure={2: 1.0, 3: 5.0, 4: 1.0})
        assert tilted.weight == {2: 1.0, 3: 5.0, 4: 1.0}
        assert tilted.c_local != plain.c_local

    def test_validation(self):
        chain = build_mmn(RegimeSpec.from_lambda(1, 0.25), 19)
        with pytest.raises(ValueError, match="nonempty"):
            canonical_path_constant(chain, ())
        with pytest.raises(ValueError, match="contiguous"):
            canonical_path_constant(chain, (1, 3))
        with pytest.raises(ValueError, match="exceeds"):
            canonical_path_constant(chain, (18, 19, 20))
        with pytest.raises(ValueError, match="strictly positive"):
            canonical_path_constant(chain, (2, 3, 4), measure={2: 1.0, 3: 0.0, 4: 1.0})


class TestTruncationInheritance:
    def test_passthrough(self):
        chain = build_mmn(RegimeSpec.from_lambda(1, 0.25), 19)
        bound = truncation_local_bound(4.0, chain, (0, 1, 2))
        assert bound.c_local == 4.0
        assert bound.method == "truncation"
        assert bound.K == (0, 1, 2)

    def test_validation(self):
        chain = build_mmn(RegimeSpec.from_lambda(1, 0.25), 19)
        with pytest.raises(ValueError, match="positive and finite"):
            truncation_local_bound(0.0, chain, (0, 1))
        with pytest.raises(ValueError, match="positive and finite"):
            truncation_local_bound(math.inf, chain, (0, 1))
        with pytest.raises(ValueError, match="exceeds"):
            truncation_local_bound(1.0, chain, (19, 20))


class TestCertificateAlgebra:
    def test_singleton(self):
        cert = singleton_certificate(0.25)
        assert cert.c_p == 4.0
        assert cert.mixing_rate == 0.25
        assert cert.provenance == "singleton"
        assert singleton_certificate(2.0, K=(7,)).c_p == 0.5
        with pytest.raises(ValueError, match="singleton"):
            singleton_certificate(1.0, K=(3, 4))
        with pytest.raises(ValueError, match="gamma"):
            singleton_certificate(0.0)

    def test_stitch(self):
        cert = stitch(0.5, 0.2, 3.0)
        assert cert.c_p == pytest.approx(3.2, rel=1e-15)
        assert cert.provenance == "stitching"
        assert cert.c_p * cert.mixing_rate == pytest.approx(1.0, rel=1e-15)
        assert stitch(0.7, 0.0, 5.0).c_p == pytest.approx(1.0 / 0.7, rel=1e-15)
        with pytest.raises(ValueError, match="gamma"):
            stitch(0.0, 0.2, 3.0)
        with pytest.raises(ValueError, match="nonnegative"):
            stitch(0.5, -0.1, 3.0)

    def test_constant_b(self):
        cert = constant_b_certificate(2.0, 3.0, 0.5)
        assert cert.c_p == pytest.approx(1.25, rel=1e-15)
        assert cert.provenance == "constant_b"
        with pytest.raises(ValueError, match="nonnegative"):
            constant_b_certificate(2.0, 3.0, -0.5)

    def test_container_validation(self):
        with pytest.raises(ValueError, match="c_p"):
            PoincareCertificate(c_p=0.0, provenance="external", components={})
        with pytest.raises(ValueError, match="c_p"):
            PoincareCertificate(c_p=math.inf, provenance="external", components={})
        assert PoincareCertificate(c_p=2.0, provenance="external", components={}).mixing_rate == 0.5


class TestStitchedPipeline:
    def test_frozen_excess_mass(self):
        for (n, a), s in FROZEN_EXCESS.items():
            spec = RegimeSpec.from_alpha(n, a)
            cert = super_hw_certificate(spec)
            chain = build_mmn(spec, q_max=n + 10)
            assert excess_mass(chain, cert) == pytest.approx(s, rel=1e-12), f"(n={n}, a={a})"

    def test_frozen_certificates(self):
        for (n, a), (c_p, rate) in FROZEN_STITCHED.items():
            cert = stitched_certificate(RegimeSpec.from_alpha(n, a))
            assert cert.c_p == pytest.approx(c_p, rel=1e-11), f"(n={n}, a={a})"
            assert cert.mixing_rate == pytest.approx(rate, rel=1e-11), f"(n={n}, a={a})"
            assert set(cert.components) == {"K", "alpha", "c_b", "gamma", "n", "tau_mass"}

    def test_stitch_identity(self):
        cert = stitched_certificate(RegimeSpec.from_alpha(110, 0.75))
        c = cert.components
        assert cert.c_p == pytest.approx(
            (1.0 + c["tau_mass"] * c["c_b"]) / c["gamma"], rel=1e-14
        )


class TestSubHwPipeline:
    def test_rate_matches_formula_constant(self):
        for n, a in [(100, 0.25), (1000, 0.25)]:
            spec = RegimeSpec.from_alpha(n, a)
            cert = sub_hw_poincare(spec)
            assert cert.mixing_rate == pytest.approx(d_n(n, spec.alpha), rel=1e-14)
            assert set(cert.components) == {"K", "alpha", "big_b", "c_local", "gamma", "n"}

    def test_constant_b_identity(self):
        spec = RegimeSpec.from_alpha(100, 0.25)
        cert = sub_hw_poincare(spec)
        c = cert.components
        assert cert.c_p == pytest.approx((1.0 + c["big_b"] * c["c_local"]) / c["gamma"], rel=1e-14)
        lam = spec.lam / spec.mu
        assert c["c_local"] == pytest.approx(12.0 * (lam + 1.0) ** 2 / lam**3, rel=1e-14)


class TestMeanFieldPipeline:
    def test_frozen_certificates(self):
        frozen = {5.0: 1.1244848856637528, 10.0: 1.2024016920605924, 50.0: 2.517441322282321}
        for lam, c_p in frozen.items():
            cert = mean_field_poincare(RegimeSpec.from_lambda(100, lam))
            assert cert.c_p == pytest.approx(c_p, rel=1e-12)
            assert set(cert.components) == {"big_b", "c_local", "gamma", "n", "z"}
            assert cert.components["c_local"] == 1.0


class TestVerifyPoincare:
    @staticmethod
    def chain400():
        base = build_mmn(RegimeSpec.from_lambda(1, 0.25), 400)
        return as_custom(base)

    def test_sound_constant_accepted(self):
        chain = self.chain400()
        gap = spectral_gap(chain).gap
        cert = PoincareCertificate(c_p=1.0 / gap, provenance="external", components={})
        rep = verify_poincare(chain, cert)
        assert set(rep) == {
            "ok", "probes_ok", "gap_ok", "max_ratio", "worst_probe",
            "n_probes", "gap", "mixing_rate",
        }
        assert rep["ok"] and rep["probes_ok"] and rep["gap_ok"]
        assert 0.999 <= rep["max_ratio"] <= 1.0 + 1e-9
        assert rep["n_probes"] >= 14
        assert rep["gap"] == pytest.approx(gap, rel=1e-12)

    def test_undersized_constant_rejected(self):
        chain = self.chain400()
        gap = spectral_gap(chain).gap
        cert = PoincareCertificate(c_p=0.5 / gap, provenance="external", components={})
        rep = verify_poincare(chain, cert)
        assert not rep["ok"]
        assert not rep["probes_ok"]
        assert not rep["gap_ok"]
        assert rep["worst_probe"] == "eigenfunction"
        assert rep["max_ratio"] == pytest.approx(2.0, rel=1e-6)

    def test_seeded_mixtures_are_deterministic(self):
        chain = self.chain400()
        cert = PoincareCertificate(c_p=4.5, provenance="external", components={})
        a = verify_poincare(chain, cert, n_tests=8, seed=3)
        b = verify_poincare(chain, cert, n_tests=8, seed=3)
        assert a == b
