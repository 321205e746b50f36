"""Tests for the Sellmeier evaluators and validity-range handling.

The numeric oracles here are literal hand substitutions of the published
coefficients, written out independently of the constants file so a typo
in either place shows up as a disagreement.
"""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from freqconv import dispersion


def eimerl_no_squared(lam_um):
    # Hand copy of the BBO ordinary-ray fit, Eimerl et al. (1987).
    return 2.7405 + 0.0184 / (lam_um**2 - 0.0179) - 0.0155 * lam_um**2


def eimerl_ne_squared(lam_um):
    return 2.3730 + 0.0128 / (lam_um**2 - 0.0156) - 0.0044 * lam_um**2


def jundt_ne_squared(lam_um, temp_c):
    # Hand copy of the congruent LiNbO3 extraordinary fit, Jundt (1997).
    f = (temp_c - 24.5) * (temp_c + 570.82)
    return (
        5.35583
        + 4.629e-7 * f
        + (0.100473 + 3.862e-8 * f) / (lam_um**2 - (0.20692 - 0.89e-8 * f) ** 2)
        + (100.0 + 2.657e-5 * f) / (lam_um**2 - 11.34927**2)
        - 1.5334e-2 * lam_um**2
    )


def edwards_no_squared(lam_um, temp_c):
    # Hand copy of the congruent LiNbO3 ordinary fit, Edwards and
    # Lawrence (1984).
    f = (temp_c - 24.5) * (temp_c + 570.50)
    return (
        4.9048
        + (0.11775 + 2.2314e-8 * f) / (lam_um**2 - (0.21802 - 2.9671e-8 * f) ** 2)
        + 2.1429e-8 * f
        - 0.027153 * lam_um**2
    )


class TestBBO:
    def test_matches_hand_substitution_ordinary(self):
        for lam_nm in (626.342, 313.171, 1051.140, 532.0):
            got = dispersion.refractive_index("bbo", lam_nm * 1e-9, "o")
            want = math.sqrt(eimerl_no_squared(lam_nm * 1e-3))
            assert got == pytest.approx(want, abs=1e-12)

    def test_matches_hand_substitution_extraordinary(self):
        for lam_nm in (626.342, 313.171, 1064.0):
            got = dispersion.refractive_index("bbo", lam_nm * 1e-9, "e")
            want = math.sqrt(eimerl_ne_squared(lam_nm * 1e-3))
            assert got == pytest.approx(want, abs=1e-12)

    def test_known_values(self):
        assert dispersion.refractive_index("bbo", 626.342e-9, "o") == pytest.approx(
            1.66840, abs=5e-5
        )
        assert dispersion.refractive_index("bbo", 313.171e-9, "o") == pytest.approx(
            1.72293, abs=5e-5
        )
        assert dispersion.refractive_index("bbo", 313.171e-9, "e") == pytest.approx(
            1.58989, abs=5e-5
        )

    def test_negative_uniaxial(self):
        n_o = dispersion.refractive_index("bbo", 532e-9, "o")
        n_e = dispersion.refractive_index("bbo", 532e-9, "e")
        assert n_e < n_o

    def test_temperature_ignored(self):
        a = dispersion.refractive_index("bbo", 626.342e-9, "o")
        b = dispersion.refractive_index("bbo", 626.342e-9, "o", temperature_c=80.0)
        assert a == b


class TestLithiumNiobate:
    def test_matches_hand_substitution_extraordinary(self):
        for lam_nm, t_c in [(1051.140, 196.5), (1549.850, 196.5), (626.342, 24.5)]:
            got = dispersion.refractive_index("linbo3", lam_nm * 1e-9, "e", t_c)
            want = math.sqrt(jundt_ne_squared(lam_nm * 1e-3, t_c))
            assert got == pytest.approx(want, abs=1e-12)

    def test_matches_hand_substitution_ordinary(self):
        for lam_nm, t_c in [(1051.140, 24.5), (1549.850, 196.5)]:
            got = dispersion.refractive_index("linbo3", lam_nm * 1e-9, "o", t_c)
            want = math.sqrt(edwards_no_squared(lam_nm * 1e-3, t_c))
            assert got == pytest.approx(want, abs=1e-12)

    def test_known_values(self):
        got = dispersion.refractive_index("linbo3", 1051.140e-9, "e", 196.5)
        assert got == pytest.approx(2.16536, abs=1e-5)
        got = dispersion.refractive_index("linbo3", 1051.140e-9, "o", 24.5)
        assert got == pytest.approx(2.23297, abs=1e-5)

    def test_requires_temperature(self):
        with pytest.raises(ValueError):
            dispersion.refractive_index("linbo3", 1051e-9, "e")

    def test_index_rises_with_temperature_in_nir(self):
        cold = dispersion.refractive_index("linbo3", 1051e-9, "e", 30.0)
        hot = dispersion.refractive_index("linbo3", 1051e-9, "e", 200.0)
        assert hot > cold


class TestValidityRanges:
    def test_bbo_below_band(self):
        with pytest.raises(dispersion.OutOfBandError):
            dispersion.refractive_index("bbo", 150e-9, "o")

    def test_bbo_above_band(self):
        with pytest.raises(dispersion.OutOfBandError):
            dispersion.refractive_index("bbo", 2000e-9, "o")

    def test_linbo3_below_band(self):
        with pytest.raises(dispersion.OutOfBandError):
            dispersion.refractive_index("linbo3", 350e-9, "e", 100.0)

    def test_linbo3_temperature_out_of_range(self):
        with pytest.raises(dispersion.OutOfBandError):
            dispersion.refractive_index("linbo3", 1051e-9, "e", 300.0)
        with pytest.raises(dispersion.OutOfBandError):
            dispersion.refractive_index("linbo3", 1051e-9, "e", 10.0)

    def test_array_with_one_bad_sample_rejected(self):
        lam = np.array([500e-9, 700e-9, 5000e-9])
        with pytest.raises(dispersion.OutOfBandError):
            dispersion.refractive_index("linbo3", lam, "e", 100.0)

    def test_band_edges_accepted(self):
        lo, hi = dispersion.get_material("bbo").band_m
        dispersion.refractive_index("bbo", lo, "o")
        dispersion.refractive_index("bbo", hi, "o")


class TestAngleTunedIndex:
    def test_limits(self):
        lam = 313.171e-9
        n_o = dispersion.refractive_index("bbo", lam, "o")
        n_e = dispersion.refractive_index("bbo", lam, "e")
        assert dispersion.extraordinary_index_at_angle(
            "bbo", lam, 0.0
        ) == pytest.approx(n_o, abs=1e-12)
        assert dispersion.extraordinary_index_at_angle(
            "bbo", lam, math.pi / 2
        ) == pytest.approx(n_e, abs=1e-12)

    def test_hand_substitution_midangle(self):
        lam = 313.171e-9
        theta = math.radians(38.12)
        n_o = math.sqrt(eimerl_no_squared(0.313171))
        n_e = math.sqrt(eimerl_ne_squared(0.313171))
        want = 1.0 / math.sqrt(
            math.cos(theta) ** 2 / n_o**2 + math.sin(theta) ** 2 / n_e**2
        )
        got = dispersion.extraordinary_index_at_angle("bbo", lam, theta)
        assert got == pytest.approx(want, abs=1e-12)

    @given(theta=st.floats(0.0, math.pi / 2))
    @settings(max_examples=50, deadline=None)
    def test_bounded_by_principal_indices(self, theta):
        lam = 532e-9
        n = dispersion.extraordinary_index_at_angle("bbo", lam, theta)
        n_o = dispersion.refractive_index("bbo", lam, "o")
        n_e = dispersion.refractive_index("bbo", lam, "e")
        assert n_e - 1e-12 <= n <= n_o + 1e-12


class TestGeneralBehavior:
    @given(lam_nm=st.floats(190.0, 1600.0))
    @settings(max_examples=80, deadline=None)
    def test_bbo_index_physical(self, lam_nm):
        for pol in ("o", "e"):
            n = dispersion.refractive_index("bbo", lam_nm * 1e-9, pol)
            assert 1.4 < n < 2.1
            assert math.isfinite(n)

    @given(
        lam_nm=st.floats(400.0, 4000.0),
        t_c=st.floats(20.0, 250.0),
    )
    @settings(max_examples=80, deadline=None)
    def test_linbo3_index_physical(self, lam_nm, t_c):
        for pol in ("o", "e"):
            n = dispersion.refractive_index("linbo3", lam_nm * 1e-9, pol, t_c)
            assert 1.9 < n < 2.6
            assert math.isfinite(n)

    def test_vectorized_matches_scalar(self):
        lam = np.array([500e-9, 626.342e-9, 1051.14e-9])
        vec = dispersion.refractive_index("linbo3", lam, "e", 150.0)
        scl = [dispersion.refractive_index("linbo3", x, "e", 150.0) for x in lam]
        assert np.allclose(vec, scl, rtol=0, atol=0)

    def test_unknown_material_and_polarization(self):
        with pytest.raises(ValueError):
            dispersion.refractive_index("quartz", 500e-9, "o")
        with pytest.raises(ValueError):
            dispersion.refractive_index("bbo", 500e-9, "x")

    def test_constants_digest_stable(self):
        d1 = dispersion.constants_sha256()
        d2 = dispersion.constants_sha256()
        assert d1 == d2
        assert len(d1) == 64
        assert set(d1) <= set("0123456789abcdef")
