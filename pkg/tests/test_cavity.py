"""Tests for the bow-tie enhancement cavity module.

Oracles: element-by-element hand compositions of the reduced ray
matrices (Kogelnik & Li 1966; Hanna 1969), a closed-form stability
window from folding the symmetric ring into an equivalent lens guide,
direct algebraic checks of the circulating-power self-consistency
relation (Adams & Ferguson 1992), and textbook Fresnel formulas.
Design-target values carry wide bands; frozen regression values from
this implementation carry tight ones.
"""

import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st

from freqconv import beamline as bl
from freqconv import cavity as cv
from freqconv.focusing import sigma_optimized_h

WAVELENGTH = 626.342e-9

# Frozen eigenmode regression values (this implementation, R = 50 mm).
LONG_CRYSTAL_W = (25.950070e-6, 16.734990e-6)
LONG_SECONDARY_W = (226.662532e-6, 225.102498e-6)
LONG_ZETA = (2.133439, 0.887266)
SHORT_CRYSTAL_W = (36.719638e-6, 23.593086e-6)
SHORT_SECONDARY_W = (154.930301e-6, 154.393130e-6)
SHORT_ZETA = (1.073400, 0.443133)
WALKOFF_B = 16.20652

# Reference design targets for the same geometry.
LONG_CRYSTAL_TARGET = (26.0e-6, 16.8e-6)
LONG_SECONDARY_TARGET = (218.6e-6, 217.8e-6)
SHORT_CRYSTAL_TARGET = (36.7e-6, 23.6e-6)
SHORT_SECONDARY_TARGET = (155.3e-6, 154.3e-6)


@pytest.fixture(scope="module")
def eig_long():
    return cv.solve_eigenmode(cv.long_layout())


@pytest.fixture(scope="module")
def eig_short():
    return cv.solve_eigenmode(cv.short_layout())


@pytest.fixture(scope="module")
def calib():
    return cv.calibrate_buildup()


@pytest.fixture(scope="module")
def optimized():
    return (cv.optimize_layout(527.6e-3), cv.optimize_layout(290e-3))


def plane_window(l_long_m, r_mirror_m, alpha_rad, length_m, n, plane):
    """Independent closed-form stability window in d_mc.

    Folding the symmetric ring about the crystal center reduces each
    plane to a periodic lens guide: focal length f of the off-axis
    mirror, spacing d1 = d_mc + half-crystal equivalent length and
    d2 = l_long/2.  The half-trace is 1 - 2*u/W with u = d1 - f and
    W = f^2/(d2 - f), so d_mc is stable on (f - eq, f - eq + W).
    """
    if plane == "tangential":
        f = 0.5 * r_mirror_m * math.cos(alpha_rad / 2.0)
        eq = length_m / (2.0 * n**3)
    else:
        f = 0.5 * r_mirror_m / math.cos(alpha_rad / 2.0)
        eq = length_m / (2.0 * n)
    d2 = l_long_m / 2.0
    if d2 <= f:
        return None
    w = f * f / (d2 - f)
    return (f - eq, f - eq + w)


def layout_with(d_mc_m=24.2e-3, l_long_m=527.6e-3, alpha_deg=30.0,
                crystal_length_m=10e-3):
    return cv.BowtieLayout(
        d_mc_m=d_mc_m,
        l_long_m=l_long_m,
        alpha_full_rad=math.radians(alpha_deg),
        r_mirror_m=50e-3,
        crystal=cv.bbo_brewster_crystal(length_m=crystal_length_m),
        wavelength_m=WAVELENGTH,
    )


@st.composite
def stable_layouts(draw):
    """Layouts drawn strictly inside the overlap stability window."""
    l_long = draw(st.floats(0.20, 0.80))
    alpha = draw(st.floats(0.0, 0.7))
    ell = draw(st.floats(0.004, 0.015))
    crystal = cv.bbo_brewster_crystal(length_m=ell)
    template = cv.BowtieLayout(25e-3, l_long, alpha, 50e-3, crystal,
                               WAVELENGTH)
    n = template.fundamental_index()
    wt = plane_window(l_long, 50e-3, alpha, ell, n, "tangential")
    ws = plane_window(l_long, 50e-3, alpha, ell, n, "sagittal")
    assume(wt is not None and ws is not None)
    lo = max(wt[0], ws[0])
    hi = min(wt[1], ws[1])
    assume(hi > lo)
    frac = draw(st.floats(0.05, 0.95))
    return replace(template, d_mc_m=lo + frac * (hi - lo))


@st.composite
def any_layouts(draw):
    """Valid layouts with no stability guarantee."""
    return cv.BowtieLayout(
        d_mc_m=draw(st.floats(1e-3, 0.2)),
        l_long_m=draw(st.floats(0.15, 1.0)),
        alpha_full_rad=draw(st.floats(0.0, 0.8)),
        r_mirror_m=draw(st.floats(0.025, 0.2)),
        crystal=cv.bbo_brewster_crystal(
            length_m=draw(st.floats(0.002, 0.02))),
        wavelength_m=WAVELENGTH,
    )


class TestRoundTrip:
    def test_matches_element_composition(self):
        lay = cv.long_layout()
        for plane, idx in (("tangential", 0), ("sagittal", 1)):
            m = cv.round_trip_matrix(lay, plane)
            elements = cv.round_trip_elements(lay)
            composed = bl.compose(elements)[idx]
            assert np.allclose(m, composed, rtol=0, atol=1e-15)

    def test_hand_composed_matrix_oracle(self):
        # Multiply the reduced matrices by hand for the long layout.
        # The reference plane is the crystal center in in-crystal
        # coordinates, so the tangential chain carries the Brewster
        # face magnification n explicitly at each face.
        lay = cv.long_layout()
        n = lay.fundamental_index()
        half = lay.alpha_full_rad / 2.0

        def space(d):
            return np.array([[1.0, d], [0.0, 1.0]])

        for plane in ("tangential", "sagittal"):
            if plane == "tangential":
                f = 0.5 * lay.r_mirror_m * math.cos(half)
                exit_scale = np.diag([1.0 / n, n])
                enter_scale = np.diag([n, 1.0 / n])
            else:
                f = 0.5 * lay.r_mirror_m / math.cos(half)
                exit_scale = np.eye(2)
                enter_scale = np.eye(2)
            p_half = space(lay.crystal.length_m / (2.0 * n))
            lens = np.array([[1.0, 0.0], [-1.0 / f, 1.0]])
            arm = space(lay.l_long_m / 2.0) @ lens @ space(lay.d_mc_m)
            ret = space(lay.d_mc_m) @ lens @ space(lay.l_long_m / 2.0)
            full = p_half @ enter_scale @ ret @ arm @ exit_scale @ p_half
            got = cv.round_trip_matrix(lay, plane)
            assert np.allclose(got, full, rtol=1e-12, atol=1e-12)

    def test_center_matrix_similar_to_slab_equivalent(self):
        # Conjugating by the face magnification turns the center
        # referenced matrix into the textbook chain built from the
        # Brewster slab equivalent lengths (Hanna 1969), so the traces
        # agree exactly.
        lay = cv.long_layout()
        n = lay.fundamental_index()
        half = lay.alpha_full_rad / 2.0

        def space(d):
            return np.array([[1.0, d], [0.0, 1.0]])

        f = 0.5 * lay.r_mirror_m * math.cos(half)
        eq = lay.crystal.length_m / (2.0 * n**3)
        lens = np.array([[1.0, 0.0], [-1.0 / f, 1.0]])
        arm = space(lay.l_long_m / 2.0) @ lens @ space(lay.d_mc_m)
        ret = space(lay.d_mc_m) @ lens @ space(lay.l_long_m / 2.0)
        slab_chain = space(eq) @ ret @ arm @ space(eq)
        scale = np.diag([n, 1.0 / n])
        conjugated = scale @ slab_chain @ np.linalg.inv(scale)
        got = cv.round_trip_matrix(lay, "tangential")
        assert np.allclose(got, conjugated, rtol=1e-12, atol=1e-10)
        assert np.trace(got) == pytest.approx(np.trace(slab_chain),
                                              rel=1e-12)

    def test_layout_a_stable_both_planes(self):
        lay = cv.long_layout()
        assert cv.stability_margin(lay, "tangential") < 1.0
        assert cv.stability_margin(lay, "sagittal") < 1.0

    def test_alpha_zero_tiny_crystal_degenerate(self):
        # With no fold angle and a vanishing crystal the two planes
        # see identical optics up to the Brewster face magnification,
        # which conjugates but cannot change the physics.
        lay = layout_with(alpha_deg=0.0, crystal_length_m=1e-9)
        n = lay.fundamental_index()
        scale = np.diag([n, 1.0 / n])
        m_t = cv.round_trip_matrix(lay, "tangential")
        m_s = cv.round_trip_matrix(lay, "sagittal")
        deconjugated = np.linalg.inv(scale) @ m_t @ scale
        assert np.allclose(deconjugated, m_s, rtol=0, atol=1e-6)
        # residual slab-length asymmetry scales with the 1 nm crystal
        assert np.trace(m_t) == pytest.approx(np.trace(m_s), rel=1e-6)

    def test_alpha_zero_differs_only_by_crystal_terms(self):
        # At zero fold angle the mirrors are plane-symmetric, so after
        # removing the face magnification the planes differ only
        # through the slab equivalent lengths; compensating the length
        # difference with d_mc swaps the matrices exactly.
        lay = layout_with(alpha_deg=0.0)
        n = lay.fundamental_index()
        eq_t = lay.crystal.length_m / (2.0 * n**3)
        eq_s = lay.crystal.length_m / (2.0 * n)
        shift = eq_s - eq_t
        scale = np.diag([n, 1.0 / n])
        m_t_shifted = cv.round_trip_matrix(
            replace(lay, d_mc_m=lay.d_mc_m + shift), "tangential"
        )
        deconjugated = np.linalg.inv(scale) @ m_t_shifted @ scale
        m_s = cv.round_trip_matrix(lay, "sagittal")
        assert np.allclose(deconjugated, m_s, rtol=1e-10, atol=1e-10)

    @settings(max_examples=150, deadline=None)
    @given(any_layouts())
    def test_determinant_unity(self, lay):
        for plane in ("tangential", "sagittal"):
            m = cv.round_trip_matrix(lay, plane)
            # relative unimodularity: the absolute rounding floor of
            # A*D - B*C scales with the term magnitudes
            magnitude = max(1.0, abs(m[0, 0] * m[1, 1])
                            + abs(m[0, 1] * m[1, 0]))
            assert abs(np.linalg.det(m) - 1.0) < 1e-12 * magnitude


class TestEigenmode:
    def test_long_crystal_waists(self, eig_long):
        w = eig_long.crystal_waists
        assert w.w0_t == pytest.approx(LONG_CRYSTAL_TARGET[0], rel=0.05)
        assert w.w0_s == pytest.approx(LONG_CRYSTAL_TARGET[1], rel=0.05)
        assert w.w0_t == pytest.approx(LONG_CRYSTAL_W[0], rel=1e-6)
        assert w.w0_s == pytest.approx(LONG_CRYSTAL_W[1], rel=1e-6)

    def test_long_secondary_waists(self, eig_long):
        w = eig_long.secondary_waists
        assert w.w0_t == pytest.approx(LONG_SECONDARY_TARGET[0], rel=0.05)
        assert w.w0_s == pytest.approx(LONG_SECONDARY_TARGET[1], rel=0.05)
        assert w.w0_t == pytest.approx(LONG_SECONDARY_W[0], rel=1e-6)
        assert w.w0_s == pytest.approx(LONG_SECONDARY_W[1], rel=1e-6)

    def test_short_crystal_waists(self, eig_short):
        w = eig_short.crystal_waists
        assert w.w0_t == pytest.approx(SHORT_CRYSTAL_TARGET[0], rel=0.05)
        assert w.w0_s == pytest.approx(SHORT_CRYSTAL_TARGET[1], rel=0.05)
        assert w.w0_t == pytest.approx(SHORT_CRYSTAL_W[0], rel=1e-6)
        assert w.w0_s == pytest.approx(SHORT_CRYSTAL_W[1], rel=1e-6)

    def test_short_secondary_waists(self, eig_short):
        w = eig_short.secondary_waists
        assert w.w0_t == pytest.approx(SHORT_SECONDARY_TARGET[0], rel=0.05)
        assert w.w0_s == pytest.approx(SHORT_SECONDARY_TARGET[1], rel=0.05)
        assert w.w0_t == pytest.approx(SHORT_SECONDARY_W[0], rel=1e-6)
        assert w.w0_s == pytest.approx(SHORT_SECONDARY_W[1], rel=1e-6)

    def test_crystal_ellipticity(self, eig_long, eig_short):
        for eig in (eig_long, eig_short):
            w = eig.crystal_waists
            assert w.w0_t / w.w0_s == pytest.approx(1.55, abs=0.05)

    def test_secondary_nearly_circular(self, eig_long, eig_short):
        assert eig_long.secondary_waists.ellipticity <= 1.01
        assert eig_short.secondary_waists.ellipticity <= 1.01

    def test_waists_at_reference_planes(self, eig_long):
        # Crystal waists sit at the crystal center and the secondary
        # waist at the long-path midpoint, both exact by symmetry.
        z_r_c = math.pi * eig_long.crystal_waists.w0_s**2 / WAVELENGTH
        z_r_s = math.pi * eig_long.secondary_waists.w0_s**2 / WAVELENGTH
        assert abs(eig_long.crystal_waists.z_t) < 1e-9 * z_r_c
        assert abs(eig_long.crystal_waists.z_s) < 1e-9 * z_r_c
        assert abs(eig_long.secondary_waists.z_t) < 1e-9 * z_r_s
        assert abs(eig_long.secondary_waists.z_s) < 1e-9 * z_r_s

    def test_zeta_wiring(self, eig_long):
        # zeta_x belongs to the walk-off (sagittal) axis: the
        # fundamental is horizontally polarized, so the optic axis and
        # the walk-off displacement lie in the vertical plane.
        lay = cv.long_layout()
        n = lay.fundamental_index()
        ell = lay.crystal.length_m

        def zeta(w0):
            return ell * WAVELENGTH / (2 * math.pi * n * w0**2)

        assert eig_long.zeta_x == pytest.approx(
            zeta(eig_long.crystal_waists.w0_s), rel=1e-9)
        assert eig_long.zeta_y == pytest.approx(
            zeta(eig_long.crystal_waists.w0_t), rel=1e-9)
        assert eig_long.zeta_x == pytest.approx(LONG_ZETA[0], rel=1e-5)
        assert eig_long.zeta_y == pytest.approx(LONG_ZETA[1], rel=1e-5)

    def test_zeta_short(self, eig_short):
        assert eig_short.zeta_x == pytest.approx(SHORT_ZETA[0], rel=1e-5)
        assert eig_short.zeta_y == pytest.approx(SHORT_ZETA[1], rel=1e-5)

    def test_walkoff_parameter(self, eig_long, eig_short):
        assert eig_long.walkoff_b == pytest.approx(16.4, abs=0.5)
        assert eig_long.walkoff_b == pytest.approx(WALKOFF_B, rel=1e-5)
        assert eig_short.walkoff_b == pytest.approx(eig_long.walkoff_b,
                                                    rel=1e-12)

    def test_stability_margins_recorded(self, eig_long):
        assert eig_long.stability_t == pytest.approx(0.072443, abs=1e-5)
        assert eig_long.stability_s == pytest.approx(0.065923, abs=1e-5)

    def test_unstable_geometry_raises(self):
        lay = layout_with(d_mc_m=100e-3)
        with pytest.raises(cv.Unstable) as err:
            cv.solve_eigenmode(lay)
        assert err.value.margin >= 1.0
        assert err.value.plane in ("tangential", "sagittal")

    def test_round_trip_self_consistency(self, eig_long, eig_short):
        for lay, eig in ((cv.long_layout(), eig_long),
                         (cv.short_layout(), eig_short)):
            beam = bl.AstigmaticBeam(
                q_t=eig.q_t, q_s=eig.q_s, wavelength_m=lay.wavelength_m,
                ambient_index=lay.fundamental_index(),
            )
            out = bl.propagate(beam, cv.round_trip_elements(lay))
            assert abs(out.q_t - eig.q_t) < 1e-9 * abs(eig.q_t)
            assert abs(out.q_s - eig.q_s) < 1e-9 * abs(eig.q_s)

    @settings(max_examples=120, deadline=None)
    @given(stable_layouts())
    def test_round_trip_residual_property(self, lay):
        eig = cv.solve_eigenmode(lay)
        beam = bl.AstigmaticBeam(
            q_t=eig.q_t, q_s=eig.q_s, wavelength_m=lay.wavelength_m,
            ambient_index=lay.fundamental_index(),
        )
        out = bl.propagate(beam, cv.round_trip_elements(lay))
        assert abs(out.q_t - eig.q_t) < 1e-9 * abs(eig.q_t)
        assert abs(out.q_s - eig.q_s) < 1e-9 * abs(eig.q_s)

    @settings(max_examples=120, deadline=None)
    @given(any_layouts())
    def test_stability_iff_eigenmode(self, lay):
        stable = (cv.stability_margin(lay, "tangential") < 1.0
                  and cv.stability_margin(lay, "sagittal") < 1.0)
        if stable:
            eig = cv.solve_eigenmode(lay)
            assert eig.q_t.imag > 0 and eig.q_s.imag > 0
        else:
            with pytest.raises(cv.Unstable):
                cv.solve_eigenmode(lay)


class TestStabilityScan:
    def test_window_contains_design_point(self):
        scan = cv.stability_scan(cv.long_layout(), "d_mc_m",
                                 np.linspace(0.020, 0.030, 201))
        assert len(scan.windows_both) == 1
        lo, hi = scan.windows_both[0]
        assert lo < 24.2e-3 < hi

    def test_edges_match_closed_form(self):
        lay = cv.long_layout()
        scan = cv.stability_scan(lay, "d_mc_m",
                                 np.linspace(0.020, 0.030, 201))
        n = lay.fundamental_index()
        for plane, windows in (("tangential", scan.windows_t),
                               ("sagittal", scan.windows_s)):
            lo, hi = plane_window(lay.l_long_m, lay.r_mirror_m,
                                  lay.alpha_full_rad,
                                  lay.crystal.length_m, n, plane)
            assert windows[0][0] == pytest.approx(lo, abs=2e-7)
            assert windows[0][1] == pytest.approx(hi, abs=2e-7)

    def test_edges_have_unit_margin(self):
        lay = cv.long_layout()
        scan = cv.stability_scan(lay, "d_mc_m",
                                 np.linspace(0.020, 0.030, 201))
        for edge in scan.windows_t[0]:
            margin = cv.stability_margin(
                replace(lay, d_mc_m=edge), "tangential")
            assert margin == pytest.approx(1.0, abs=1e-6)

    def test_alpha_zero_windows_near_coincident(self):
        lay = layout_with(alpha_deg=0.0, crystal_length_m=1e-9)
        # Pick a sweep that brackets the degenerate window.
        scan = cv.stability_scan(lay, "d_mc_m",
                                 np.linspace(0.022, 0.030, 161))
        lo_t, hi_t = scan.windows_t[0]
        lo_s, hi_s = scan.windows_s[0]
        assert lo_t == pytest.approx(lo_s, abs=1e-8)
        assert hi_t == pytest.approx(hi_s, abs=1e-8)


class TestOptimizer:
    def test_long_design_recovered(self, optimized):
        opt_a, _ = optimized
        assert math.degrees(opt_a.layout.alpha_full_rad) == pytest.approx(
            30.0, abs=1.0)
        assert opt_a.layout.d_mc_m == pytest.approx(24.2e-3, abs=0.3e-3)

    def test_short_angle_recovered(self, optimized):
        _, opt_b = optimized
        assert math.degrees(opt_b.layout.alpha_full_rad) == pytest.approx(
            28.6, abs=1.0)

    def test_ellipticity_constraint_met(self, optimized):
        for opt in optimized:
            assert opt.secondary_ellipticity <= 1.01

    def test_conversion_ratio(self, optimized):
        opt_a, opt_b = optimized
        assert opt_b.focus.h / opt_a.focus.h == pytest.approx(0.92,
                                                              abs=0.03)

    def test_short_recovers_target_waists(self, optimized):
        _, opt_b = optimized
        w = opt_b.eigenmode.crystal_waists
        assert w.w0_t == pytest.approx(SHORT_CRYSTAL_TARGET[0], rel=0.05)
        assert w.w0_s == pytest.approx(SHORT_CRYSTAL_TARGET[1], rel=0.05)

    def test_windows_centered_at_optimum(self, optimized):
        # The returned geometry puts d_mc at the common center of the
        # two per-plane stability windows, which is where they overlap
        # maximally and both beam waists are stationary.
        for opt in optimized:
            lay = opt.layout
            n = lay.fundamental_index()
            centers = []
            for plane in ("tangential", "sagittal"):
                lo, hi = plane_window(lay.l_long_m, lay.r_mirror_m,
                                      lay.alpha_full_rad,
                                      lay.crystal.length_m, n, plane)
                centers.append(0.5 * (lo + hi))
            width = abs(centers[0] - centers[1])
            assert width < 1e-7
            assert lay.d_mc_m == pytest.approx(centers[0], abs=1e-7)

    def test_infeasible_cap(self):
        with pytest.raises(cv.Infeasible):
            cv.optimize_layout(527.6e-3, ellipticity_cap=1.0001)


class TestBuildup:
    def test_gamma_zero_closed_form(self):
        t1, loss = 0.016, 0.010
        sol = cv.buildup_solve(1.0, t1, loss, 0.0)
        denom = (1.0 - math.sqrt((1 - t1) * (1 - loss)))**2
        assert sol.p_circ_w == pytest.approx(t1 / denom, rel=1e-12)
        assert sol.p_sh_internal_w == 0.0

    def test_matched_passive_cavity(self):
        # T1 equal to the round-trip loss is the impedance-matched
        # point; the buildup is then 1/T1 at any drive power.
        t1 = 0.016
        sol = cv.buildup_solve(2.0, t1, t1, 0.0)
        assert sol.p_circ_w == pytest.approx(2.0 / t1, rel=1e-9)
        assert sol.impedance_residual == pytest.approx(0.0, abs=1e-12)

    def test_low_power_slope(self, calib):
        slope = cv.conversion_slope(calib.t1, calib.l_passive,
                                    calib.gamma_per_w, 1e-6, 1e-4)
        assert slope == pytest.approx(2.00, abs=0.01)

    def test_high_power_slope(self, calib):
        slope = cv.conversion_slope(calib.t1, calib.l_passive,
                                    calib.gamma_per_w, 5.0, 20.0)
        assert 0.9 <= slope <= 1.1

    def test_operating_point_conversions(self, calib):
        sol = cv.buildup_solve(calib.p_operating_w, calib.t1,
                               calib.l_passive, calib.gamma_per_w,
                               calib.r_brewster)
        assert sol.conversion_main == pytest.approx(0.42, abs=0.02)
        assert sol.conversion_total == pytest.approx(0.50, abs=0.02)
        assert sol.p_sh_main_w == pytest.approx(0.760, rel=0.10)

    def test_brewster_split_identity(self, calib):
        sol = cv.buildup_solve(1.8, calib.t1, calib.l_passive,
                               calib.gamma_per_w, calib.r_brewster)
        assert sol.conversion_main == pytest.approx(
            (1 - calib.r_brewster) * sol.conversion_total, rel=1e-12)

    def test_impedance_match_value(self, calib):
        t1 = cv.impedance_match_T1(calib.l_passive, calib.gamma_per_w,
                                   1.0)
        assert t1 == pytest.approx(0.016, abs=0.004)
        assert t1 == pytest.approx(0.016, abs=1e-6)

    def test_impedance_match_passive_identity(self):
        assert cv.impedance_match_T1(0.012, 0.0, 1.0) == pytest.approx(
            0.012, rel=1e-12)

    def test_impedance_match_monotone_in_power(self, calib):
        t1s = [cv.impedance_match_T1(calib.l_passive, calib.gamma_per_w,
                                     p) for p in (0.5, 1.0, 2.0)]
        assert t1s[0] < t1s[1] < t1s[2]

    def test_impedance_match_maximizes_circulating(self, calib):
        t1_star = cv.impedance_match_T1(calib.l_passive,
                                        calib.gamma_per_w, 1.0)
        best = cv.buildup_solve(1.0, t1_star, calib.l_passive,
                                calib.gamma_per_w).p_circ_w
        for t1 in (t1_star - 0.002, t1_star + 0.002):
            other = cv.buildup_solve(1.0, t1, calib.l_passive,
                                     calib.gamma_per_w).p_circ_w
            assert other < best

    def test_circulating_power_monotone(self, calib):
        powers = np.linspace(0.05, 20.0, 40)
        circ = [cv.buildup_solve(float(p), calib.t1, calib.l_passive,
                                 calib.gamma_per_w).p_circ_w
                for p in powers]
        assert all(b > a for a, b in zip(circ, circ[1:]))

    def test_conversion_monotone_below_crossover(self, calib):
        # Fixed input coupling supports rising conversion only while
        # the conversion loss gamma*P_circ stays below the matched
        # budget; the efficiency peaks where gamma*P_circ equals
        # 2*(1 - sqrt((1-T1)(1-L))) and rolls over beyond it.  Verify
        # monotone growth below the crossover drive power.
        x = (1 - calib.t1) * (1 - calib.l_passive)
        p_circ_peak = 2 * (1 - math.sqrt(x)) / calib.gamma_per_w
        delta = 1 - math.sqrt(x * (1 - calib.gamma_per_w * p_circ_peak))
        p_in_peak = p_circ_peak * delta**2 / calib.t1
        powers = np.geomspace(1e-3, 0.9 * p_in_peak, 30)
        conv = [cv.buildup_solve(float(p), calib.t1, calib.l_passive,
                                 calib.gamma_per_w).conversion_total
                for p in powers]
        assert np.all(np.diff(conv) > 0)

    def test_output_power_monotone_past_crossover(self, calib):
        # The harmonic output itself keeps growing even where the
        # conversion efficiency has rolled over.
        powers = np.geomspace(1e-3, 50.0, 40)
        out = [cv.buildup_solve(float(p), calib.t1, calib.l_passive,
                                calib.gamma_per_w).p_sh_internal_w
               for p in powers]
        assert np.all(np.diff(out) > 0)

    def test_calibration_values_frozen(self, calib):
        assert calib.l_passive == pytest.approx(0.00955575, abs=2e-7)
        assert calib.gamma_per_w == pytest.approx(1.027116e-4, rel=1e-4)

    def test_calibration_inconsistent(self):
        with pytest.raises(cv.Inconsistent):
            cv.calibrate_buildup(conversion_main=0.99)

    @settings(max_examples=150, deadline=None)
    @given(
        p_in=st.floats(1e-6, 50.0),
        t1=st.floats(1e-3, 0.2),
        loss=st.floats(0.0, 0.05),
        gamma=st.floats(0.0, 1e-2),
    )
    def test_fixed_point_residual_property(self, p_in, t1, loss, gamma):
        sol = cv.buildup_solve(p_in, t1, loss, gamma)
        assert sol.p_circ_w >= 0.0
        assert abs(sol.residual_w) < 1e-9 * p_in


class TestFresnel:
    @staticmethod
    def hand_fresnel(n1, n2, theta1, pol):
        theta2 = math.asin(n1 * math.sin(theta1) / n2)
        c1, c2 = math.cos(theta1), math.cos(theta2)
        if pol == "s":
            r = (n1 * c1 - n2 * c2) / (n1 * c1 + n2 * c2)
        else:
            r = (n2 * c1 - n1 * c2) / (n2 * c1 + n1 * c2)
        return r * r

    def test_sh_reflectance_expected_band(self, eig_long):
        from freqconv.dispersion import get_material, refractive_index
        n_f = cv.long_layout().fundamental_index()
        n_sh = refractive_index(get_material("bbo"), WAVELENGTH / 2, "e")
        r = cv.brewster_sh_reflectance(
            n_sh, cv.internal_brewster_incidence(n_f))
        assert r == pytest.approx(0.16, abs=0.03)
        assert r == pytest.approx(
            self.hand_fresnel(n_sh, 1.0,
                              cv.internal_brewster_incidence(n_f), "s"),
            rel=1e-12)

    def test_p_polarization_brewster_zero(self):
        n = 1.6684016
        r, _ = cv.fresnel_power(1.0, n, math.atan(n), "p")
        assert r < 1e-12
        r_int, _ = cv.fresnel_power(n, 1.0, math.atan(1.0 / n), "p")
        assert r_int < 1e-12

    def test_normal_incidence(self):
        n = 1.46
        expected = ((n - 1) / (n + 1))**2
        for pol in ("s", "p"):
            r, t = cv.fresnel_power(1.0, n, 0.0, pol)
            assert r == pytest.approx(expected, rel=1e-12)
            assert t == pytest.approx(1 - expected, rel=1e-12)

    def test_total_internal_reflection_raises(self):
        with pytest.raises(cv.TotalInternalReflection):
            cv.fresnel_power(1.6684, 1.0, 0.8)

    @settings(max_examples=200)
    @given(
        n1=st.floats(1.0, 2.5),
        n2=st.floats(1.0, 2.5),
        theta=st.floats(0.0, 1.4),
        pol=st.sampled_from(["s", "p"]),
    )
    def test_energy_conservation(self, n1, n2, theta, pol):
        assume(n1 * math.sin(theta) / n2 < 0.999)
        r, t = cv.fresnel_power(n1, n2, theta, pol)
        assert 0.0 <= r <= 1.0
        assert r + t == pytest.approx(1.0, abs=1e-12)
        assert self.hand_fresnel(n1, n2, theta, pol) == pytest.approx(
            r, abs=1e-12)


class TestOutputCorrection:
    def test_stigmatic_beam_needs_no_lens(self):
        beam = bl.AstigmaticBeam.from_waists(100e-6, 100e-6,
                                             WAVELENGTH / 2)
        fix = cv.equalizing_lens(beam)
        assert math.isinf(fix.focal_m)
        assert fix.axis == "none"

    def test_waist_offset_crossing_at_midpoint(self):
        # Equal waist sizes with a longitudinal offset dz cross at
        # dz/2 by symmetry: an exact geometric oracle.
        dz = 4e-3
        beam = bl.AstigmaticBeam.from_waists(
            30e-6, 30e-6, WAVELENGTH / 2, z_t_m=0.0, z_s_m=-dz)
        fix = cv.equalizing_lens(beam, scan_range_m=0.3)
        assert fix.distance_from_m1_m == pytest.approx(dz / 2, rel=1e-6)

    def test_lens_merges_beam_parameters(self):
        dz = 4e-3
        beam = bl.AstigmaticBeam.from_waists(
            30e-6, 30e-6, WAVELENGTH / 2, z_t_m=0.0, z_s_m=-dz)
        fix = cv.equalizing_lens(beam, scan_range_m=0.3)
        corrected = bl.propagate(beam, [
            bl.free_space(fix.distance_from_m1_m),
            bl.cylindrical_lens(fix.focal_m, fix.axis),
        ])
        assert abs(corrected.q_t - corrected.q_s) < 1e-9 * abs(
            corrected.q_t)

    def test_doubling_offset_strengthens_lens(self):
        strengths = []
        for dz in (2e-3, 4e-3, 8e-3):
            beam = bl.AstigmaticBeam.from_waists(
                30e-6, 30e-6, WAVELENGTH / 2, z_t_m=0.0, z_s_m=-dz)
            fix = cv.equalizing_lens(beam, scan_range_m=0.3)
            strengths.append(1.0 / fix.focal_m)
        assert strengths[0] < strengths[1] < strengths[2]

    def test_doubling_size_mismatch_strengthens_lens(self):
        strengths = []
        for w_s in (27e-6, 24e-6, 18e-6):
            beam = bl.AstigmaticBeam.from_waists(30e-6, w_s,
                                                 WAVELENGTH / 2)
            fix = cv.equalizing_lens(beam, scan_range_m=0.3)
            strengths.append(1.0 / fix.focal_m)
        assert strengths[0] < strengths[1] < strengths[2]

    def test_short_layout_correction_lens_band(self, eig_short):
        # Reference values for the compact geometry's external
        # correction: f = 7.5 cm about 5.8 cm beyond the output
        # mirror, with wide bands because the substrate is unstated.
        # The inherited-mode harmonic leaves this cavity nearly round,
        # so no downstream spot-size crossing exists and the model
        # cannot produce these values; the test records that gap and
        # is expected to fail (see the output_correction docstring).
        fix = cv.output_correction(cv.short_layout(), eig_short)
        assert 0.05 <= fix.focal_m <= 0.11
        assert 0.04 <= fix.distance_from_m1_m <= 0.08


class TestConversionObjective:
    def test_h_ratio_between_layouts(self, eig_long, eig_short):
        h_long = sigma_optimized_h(eig_long.walkoff_b, eig_long.zeta_x,
                                   eig_long.zeta_y)
        h_short = sigma_optimized_h(eig_short.walkoff_b,
                                    eig_short.zeta_x, eig_short.zeta_y)
        ratio = h_short.h / h_long.h
        assert ratio == pytest.approx(0.92, abs=0.03)
        assert ratio == pytest.approx(0.914541, rel=1e-4)

    def test_frozen_h_values(self, eig_long, eig_short):
        h_long = sigma_optimized_h(eig_long.walkoff_b, eig_long.zeta_x,
                                   eig_long.zeta_y)
        h_short = sigma_optimized_h(eig_short.walkoff_b,
                                    eig_short.zeta_x, eig_short.zeta_y)
        assert h_long.h == pytest.approx(0.033208, rel=1e-4)
        assert h_short.h == pytest.approx(0.030370, rel=1e-4)
