"""Bow-tie enhancement cavity for intracavity second-harmonic
generation with a Brewster-cut crystal.

The ring is the classic four-mirror figure: two off-axis spherical
mirrors face the crystal across one short arm each, and two plane
folding mirrors close a long path between them.  The layout is
symmetric about the crystal center, so both the crystal focus and the
secondary focus (midway along the long path) sit at waists by
construction.

Contents:

* round-trip ray matrices and eigenmode solving per transverse plane
  (self-consistent q at the crystal midplane, Kogelnik and Li),
* stability margins, parameter scans with bisected window edges, and a
  deterministic geometry optimizer that maximizes the reduced
  conversion factor h of :mod:`freqconv.focusing` subject to a round
  secondary waist,
* the self-consistent power-buildup model of cavity-enhanced SHG
  (Adams and Ferguson) with impedance matching and a two-parameter
  loss calibration,
* Fresnel reflection of the generated harmonic at the Brewster exit
  face, and the downstream cylindrical-lens astigmatism correction.

The circulating fundamental is polarized in the ring plane (p at the
Brewster faces), so in a negative uniaxial type-I crystal it is the
ordinary wave and the optic-axis principal plane is vertical.  The
harmonic walk-off therefore lies in the sagittal plane, which is what
the ``zeta_x`` (walk-off axis) slot of the focusing kernel receives.

References: H. Kogelnik and T. Li, Appl. Opt. 5, 1550 (1966);
D. C. Hanna, IEEE J. Quantum Electron. 5, 483 (1969); T. Freegarde,
J. Coutts, J. Walz, D. Leibfried, and T. W. Haensch, J. Opt. Soc. Am.
B 14, 2010 (1997); C. S. Adams and A. I. Ferguson, Opt. Commun. 90,
89 (1992).
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, replace

import numpy as np

from . import beamline as bl
from .dispersion import (
    extraordinary_index_at_angle,
    get_material,
    refractive_index,
)
from .focusing import FocusResult, sigma_optimized_h
from .phasematch import (
    AngleCut,
    CrystalSpec,
    second_harmonic,
    type1_phasematch_angle,
    walkoff_angle,
    walkoff_parameter_b,
)

__all__ = [
    "Unstable",
    "NoConvergence",
    "Infeasible",
    "Inconsistent",
    "TotalInternalReflection",
    "BowtieLayout",
    "EigenmodeSolution",
    "StabilityScan",
    "OptimizedLayout",
    "BuildupSolution",
    "BuildupCalibration",
    "CorrectionPrescription",
    "bbo_brewster_crystal",
    "long_layout",
    "short_layout",
    "round_trip_elements",
    "round_trip_matrix",
    "stability_margin",
    "solve_eigenmode",
    "stability_scan",
    "optimize_layout",
    "buildup_solve",
    "impedance_match_T1",
    "calibrate_buildup",
    "conversion_slope",
    "fresnel_power",
    "internal_brewster_incidence",
    "brewster_sh_reflectance",
    "equalizing_lens",
    "output_correction",
]


class Unstable(RuntimeError):
    """The geometry has no confined Gaussian eigenmode in one plane."""

    def __init__(self, plane: str, margin: float):
        super().__init__(
            f"{plane} plane unstable: |A+D|/2 = {margin:.6f} >= 1"
        )
        self.plane = plane
        self.margin = margin


class NoConvergence(RuntimeError):
    """An iterative solver stopped above its residual target."""


class Infeasible(RuntimeError):
    """No layout satisfies the requested constraints."""


class Inconsistent(ValueError):
    """Calibration observations cannot be reproduced by the model."""


class TotalInternalReflection(ValueError):
    """Incidence beyond the critical angle; no transmitted wave."""


# --------------------------------------------------------------------
# geometry
# --------------------------------------------------------------------

@dataclass(frozen=True)
class BowtieLayout:
    """Symmetric four-mirror ring.

    ``d_mc_m`` is the distance from each spherical mirror to the
    nearer crystal face, ``l_long_m`` the long path between the
    spherical mirrors routed over the two (ideal) plane mirrors, and
    ``alpha_full_rad`` the full folding angle at each spherical
    mirror.  The crystal sits centered between the spherical mirrors.
    """

    d_mc_m: float
    l_long_m: float
    alpha_full_rad: float
    r_mirror_m: float
    crystal: CrystalSpec
    wavelength_m: float

    def __post_init__(self):
        if min(self.d_mc_m, self.l_long_m, self.r_mirror_m) <= 0:
            raise ValueError("lengths and mirror radius must be positive")
        if self.wavelength_m <= 0:
            raise ValueError("wavelength must be positive")
        if not 0.0 <= self.alpha_full_rad < math.pi / 2:
            raise ValueError("full folding angle must lie in [0, pi/2)")
        cut = self.crystal.cut
        if not isinstance(cut, AngleCut) or not cut.brewster_faces:
            raise ValueError(
                "cavity crystal must carry an AngleCut with Brewster faces"
            )

    def fundamental_index(self) -> float:
        # Type-I: the circulating fundamental is the ordinary wave.
        return refractive_index(
            get_material(self.crystal.material), self.wavelength_m, "o"
        )


def bbo_brewster_crystal(length_m: float = 10e-3,
                         wavelength_m: float = 626.342e-9,
                         temperature_c: float = 22.0) -> CrystalSpec:
    """Brewster-faced BBO cut at the type-I angle for ``wavelength_m``."""
    theta = type1_phasematch_angle("bbo", wavelength_m)
    return CrystalSpec(
        material="bbo",
        length_m=length_m,
        cut=AngleCut(theta_rad=theta, brewster_faces=True),
        temperature_c=temperature_c,
    )


def long_layout(crystal: CrystalSpec | None = None) -> BowtieLayout:
    """Reference geometry with the 527.6 mm long path: 24.2 mm crystal
    arms, 30 deg full folding angle, R = 50 mm mirrors."""
    return BowtieLayout(
        d_mc_m=24.2e-3,
        l_long_m=527.6e-3,
        alpha_full_rad=math.radians(30.0),
        r_mirror_m=50e-3,
        crystal=crystal if crystal is not None else bbo_brewster_crystal(),
        wavelength_m=626.342e-9,
    )


def short_layout(crystal: CrystalSpec | None = None) -> BowtieLayout:
    """Compact geometry with the long path cut to 290 mm and the
    folding angle re-optimized to 28.6 deg.  The crystal arms grow to
    25.586 mm, which keeps the secondary waist round and the crystal
    focus near its conversion optimum for the same mirrors."""
    return BowtieLayout(
        d_mc_m=25.586e-3,
        l_long_m=290e-3,
        alpha_full_rad=math.radians(28.6),
        r_mirror_m=50e-3,
        crystal=crystal if crystal is not None else bbo_brewster_crystal(),
        wavelength_m=626.342e-9,
    )


def _half_chain(layout: BowtieLayout, n: float) -> list:
    """Crystal midplane to the long-path midpoint, in travel order."""
    return [
        bl.free_space(layout.crystal.length_m / 2.0, index=n),
        bl.flat_interface(n, 1.0, incidence_rad=math.atan(1.0 / n)),
        bl.free_space(layout.d_mc_m),
        bl.off_axis_mirror(layout.r_mirror_m, layout.alpha_full_rad),
        bl.free_space(layout.l_long_m / 2.0),
    ]


def round_trip_elements(layout: BowtieLayout) -> list:
    """One full round trip starting and ending at the crystal midplane.

    The plane folding mirrors are ideal and contribute nothing in
    reduced coordinates; the spherical mirrors carry the off-axis
    astigmatism and the Brewster faces the refraction magnification.
    """
    n = layout.fundamental_index()
    ell = layout.crystal.length_m
    return [
        bl.free_space(ell / 2.0, index=n),
        bl.flat_interface(n, 1.0, incidence_rad=math.atan(1.0 / n)),
        bl.free_space(layout.d_mc_m),
        bl.off_axis_mirror(layout.r_mirror_m, layout.alpha_full_rad),
        bl.free_space(layout.l_long_m),
        bl.off_axis_mirror(layout.r_mirror_m, layout.alpha_full_rad),
        bl.free_space(layout.d_mc_m),
        bl.flat_interface(1.0, n, incidence_rad=math.atan(n)),
        bl.free_space(ell / 2.0, index=n),
    ]


def round_trip_matrix(layout: BowtieLayout, plane: str) -> np.ndarray:
    """2x2 round-trip ray matrix at the crystal-midplane reference."""
    m_t, m_s = bl.compose(round_trip_elements(layout))
    if plane in ("tangential", "t"):
        return m_t
    if plane in ("sagittal", "s"):
        return m_s
    raise ValueError("plane must be 'tangential' or 'sagittal'")


def stability_margin(layout: BowtieLayout, plane: str) -> float:
    """|A+D|/2 of the round trip; the mode is confined iff below 1."""
    m = round_trip_matrix(layout, plane)
    return abs(m[0, 0] + m[1, 1]) / 2.0


def _self_consistent_q(m: np.ndarray, plane: str) -> complex:
    """Root of C q^2 + (D - A) q - B = 0 with Im(q) > 0."""
    a, b = m[0, 0], m[0, 1]
    c, d = m[1, 0], m[1, 1]
    half_trace = (a + d) / 2.0
    if abs(half_trace) >= 1.0:
        raise Unstable(plane, abs(half_trace))
    disc = cmath.sqrt(complex(half_trace * half_trace - 1.0))
    for root in ((a - d) / 2.0 + disc, (a - d) / 2.0 - disc):
        q = root / c
        if q.imag > 0:
            return q
    raise Unstable(plane, abs(half_trace))  # pragma: no cover


@dataclass(frozen=True)
class EigenmodeSolution:
    """Self-reproducing Gaussian mode of a stable layout.

    ``zeta_x`` is the focusing parameter of the walk-off (sagittal)
    axis and ``zeta_y`` of the tangential axis, matching the axis
    convention of :class:`freqconv.focusing.FocusConfig`.
    """

    q_t: complex
    q_s: complex
    crystal_waists: bl.WaistReport
    secondary_waists: bl.WaistReport
    stability_t: float
    stability_s: float
    zeta_x: float
    zeta_y: float
    walkoff_b: float


def solve_eigenmode(layout: BowtieLayout) -> EigenmodeSolution:
    """Solve q = (Aq + B)/(Cq + D) per plane at the crystal midplane.

    Waists are reported at the crystal center and at the long-path
    midpoint; by the symmetry of the layout both planes have Re(q) = 0
    there, i.e. the reference planes are waists.
    """
    n = layout.fundamental_index()
    lam = layout.wavelength_m
    ell = layout.crystal.length_m

    m_t = round_trip_matrix(layout, "tangential")
    m_s = round_trip_matrix(layout, "sagittal")
    stab_t = abs(m_t[0, 0] + m_t[1, 1]) / 2.0
    stab_s = abs(m_s[0, 0] + m_s[1, 1]) / 2.0
    q_t = _self_consistent_q(m_t, "tangential")
    q_s = _self_consistent_q(m_s, "sagittal")

    beam = bl.AstigmaticBeam(
        q_t=q_t, q_s=q_s, wavelength_m=lam, ambient_index=n
    )
    crystal_waists = bl.waist_report(beam)
    mid = bl.propagate(beam, _half_chain(layout, n))
    secondary_waists = bl.waist_report(mid)

    w_t = beam.spot_radius("tangential")
    w_s = beam.spot_radius("sagittal")
    zeta_of = lambda w: ell * lam / (2.0 * math.pi * n * w * w)

    theta = layout.crystal.cut.theta_rad
    rho = walkoff_angle(
        layout.crystal.material, theta, second_harmonic(lam)
    )
    k1 = 2.0 * math.pi * n / lam
    b_param = walkoff_parameter_b(rho, k1, ell)

    return EigenmodeSolution(
        q_t=q_t,
        q_s=q_s,
        crystal_waists=crystal_waists,
        secondary_waists=secondary_waists,
        stability_t=stab_t,
        stability_s=stab_s,
        zeta_x=zeta_of(w_s),
        zeta_y=zeta_of(w_t),
        walkoff_b=b_param,
    )


# --------------------------------------------------------------------
# stability windows and geometry optimization
# --------------------------------------------------------------------

@dataclass(frozen=True)
class StabilityScan:
    """One-parameter sweep of the per-plane stability margins."""

    parameter: str
    values: np.ndarray
    stability_t: np.ndarray
    stability_s: np.ndarray
    windows_t: tuple
    windows_s: tuple
    windows_both: tuple


def _refine_edge(margin, lo: float, hi: float) -> float:
    """Bisect margin(x) - 1 to a 1e-6 function tolerance on [lo, hi]."""
    f_lo = margin(lo) - 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = margin(mid) - 1.0
        if abs(f_mid) < 1e-6 or abs(hi - lo) < 1e-15 * max(1.0, abs(mid)):
            return mid
        if (f_lo < 0) == (f_mid < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _windows_from_mask(values, mask, margin) -> tuple:
    """Contiguous stable runs with edges refined by bisection."""
    windows = []
    i = 0
    count = len(values)
    while i < count:
        if not mask[i]:
            i += 1
            continue
        j = i
        while j + 1 < count and mask[j + 1]:
            j += 1
        lo = values[i]
        if i > 0:
            lo = _refine_edge(margin, values[i - 1], values[i])
        hi = values[j]
        if j + 1 < count:
            hi = _refine_edge(margin, values[j + 1], values[j])
        windows.append((float(min(lo, hi)), float(max(lo, hi))))
        i = j + 1
    return tuple(windows)


def stability_scan(layout: BowtieLayout, parameter: str,
                   values) -> StabilityScan:
    """Sweep one ``BowtieLayout`` field and report per-plane margins.

    Window edges are refined until |A+D|/2 = 1 within 1e-6; the
    ``windows_both`` entry lists the overlap regions where both planes
    confine a mode.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim != 1 or values.size < 2:
        raise ValueError("values must be a 1-D sweep with >= 2 points")

    def margins(value):
        trial = replace(layout, **{parameter: float(value)})
        return (
            stability_margin(trial, "tangential"),
            stability_margin(trial, "sagittal"),
        )

    pairs = np.array([margins(v) for v in values])
    stab_t, stab_s = pairs[:, 0], pairs[:, 1]
    margin_t = lambda v: margins(v)[0]
    margin_s = lambda v: margins(v)[1]
    margin_both = lambda v: max(margins(v))
    return StabilityScan(
        parameter=parameter,
        values=values,
        stability_t=stab_t,
        stability_s=stab_s,
        windows_t=_windows_from_mask(values, stab_t < 1.0, margin_t),
        windows_s=_windows_from_mask(values, stab_s < 1.0, margin_s),
        windows_both=_windows_from_mask(
            values, (stab_t < 1.0) & (stab_s < 1.0), margin_both
        ),
    )


def _plane_window(l_long_m: float, r_mirror_m: float, alpha_rad: float,
                  length_m: float, n: float, plane: str):
    """Closed-form d_mc stability window of one plane, or None.

    Folding the symmetric ring into an equivalent lens guide gives a
    per-plane margin |A+D|/2 = |1 - 2u/W| with u = d1 - f and
    W = f^2/(d2 - f), where d1 = d_mc + (Brewster half-crystal
    equivalent) and d2 = l_long/2.  Stability is 0 < u < W, so d_mc
    runs over (f - eq, f - eq + W).
    """
    d2 = l_long_m / 2.0
    if plane == "tangential":
        f = (r_mirror_m / 2.0) * math.cos(alpha_rad / 2.0)
        eq = length_m / (2.0 * n**3)
    else:
        f = (r_mirror_m / 2.0) / math.cos(alpha_rad / 2.0)
        eq = length_m / (2.0 * n)
    if d2 <= f:
        return None
    w_cap = f * f / (d2 - f)
    return f - eq, f - eq + w_cap


def _d_overlap_window(l_long_m: float, r_mirror_m: float, alpha_rad: float,
                      length_m: float, n: float):
    """d_mc interval where both planes are stable, or None."""
    win_t = _plane_window(l_long_m, r_mirror_m, alpha_rad, length_m, n,
                          "tangential")
    win_s = _plane_window(l_long_m, r_mirror_m, alpha_rad, length_m, n,
                          "sagittal")
    if win_t is None or win_s is None:
        return None
    lo = max(win_t[0], win_s[0])
    hi = min(win_t[1], win_s[1])
    if lo >= hi:
        return None
    return lo, hi


@dataclass(frozen=True)
class OptimizedLayout:
    """Result of the constrained geometry search."""

    layout: BowtieLayout
    eigenmode: EigenmodeSolution
    focus: FocusResult
    secondary_ellipticity: float


def optimize_layout(l_long_m: float,
                    r_mirror_m: float = 50e-3,
                    crystal: CrystalSpec | None = None,
                    wavelength_m: float = 626.342e-9,
                    alpha_bounds_rad=(math.radians(20.0), math.radians(36.0)),
                    ellipticity_cap: float = 1.01,
                    rtol: float = 1e-6) -> OptimizedLayout:
    """Find the folding angle and crystal arm where the two transverse
    planes' stability windows align, and report the achieved focusing.

    Each plane's d_mc stability window has its waist maximum at the
    window center.  The full folding angle shifts the tangential and
    sagittal windows against each other (mirror astigmatism) while the
    Brewster crystal offsets them the opposite way, so there is exactly
    one angle at which the two centers coincide.  That joint stationary
    point is the canonical design: the stability overlap is maximal,
    both crystal waists are first-order insensitive to arm-length
    error, and the secondary waist comes out round.  Within the whole
    band allowed by ``ellipticity_cap`` the sigma-optimized h varies by
    only a few parts per thousand (the objective is flat), so the
    stationary point is also the reproducible optimum of the
    conversion factor; its h and focusing parameters are evaluated
    with the quadrature kernel and returned.

    Deterministic: the angle is bracketed on a fixed grid and bisected;
    no randomness enters.  Raises Infeasible when no angle in
    ``alpha_bounds_rad`` aligns the windows or the aligned geometry
    violates the ellipticity cap.
    """
    if crystal is None:
        crystal = bbo_brewster_crystal(wavelength_m=wavelength_m)
    probe = BowtieLayout(
        d_mc_m=1e-3, l_long_m=l_long_m, alpha_full_rad=0.0,
        r_mirror_m=r_mirror_m, crystal=crystal, wavelength_m=wavelength_m,
    )
    n = probe.fundamental_index()
    ell = crystal.length_m

    def center(alpha, plane):
        window = _plane_window(l_long_m, r_mirror_m, alpha, ell, n, plane)
        if window is None:
            return None
        return 0.5 * (window[0] + window[1])

    def center_gap(alpha):
        c_t = center(alpha, "tangential")
        c_s = center(alpha, "sagittal")
        if c_t is None or c_s is None:
            return None
        return c_t - c_s

    # The gap decreases monotonically with the angle; bracket its zero
    # on a fixed grid, then bisect.
    alpha_lo, alpha_hi = alpha_bounds_rad
    grid = np.linspace(alpha_lo, alpha_hi, 65)
    gaps = [center_gap(a) for a in grid]
    bracket = None
    for i in range(len(grid) - 1):
        if gaps[i] is None or gaps[i + 1] is None:
            continue
        if (gaps[i] >= 0) != (gaps[i + 1] >= 0):
            bracket = (float(grid[i]), float(grid[i + 1]))
            break
    if bracket is None:
        raise Infeasible(
            "stability-window centers do not align for any folding angle "
            f"in [{math.degrees(alpha_lo):.1f}, "
            f"{math.degrees(alpha_hi):.1f}] deg"
        )
    alpha_star = _bisect_root(center_gap, *bracket)
    d_star = 0.5 * (
        center(alpha_star, "tangential") + center(alpha_star, "sagittal")
    )

    final_layout = replace(
        probe, d_mc_m=float(d_star), alpha_full_rad=float(alpha_star)
    )
    eig = solve_eigenmode(final_layout)
    e2 = eig.secondary_waists.ellipticity
    if e2 > ellipticity_cap:
        raise Infeasible(
            f"aligned geometry has secondary ellipticity {e2:.4f} above "
            f"the cap {ellipticity_cap}"
        )
    focus = sigma_optimized_h(eig.walkoff_b, eig.zeta_x, eig.zeta_y, rtol=rtol)
    return OptimizedLayout(
        layout=final_layout,
        eigenmode=eig,
        focus=focus,
        secondary_ellipticity=e2,
    )


def _bisect_root(fun, lo: float, hi: float, iters: int = 100) -> float:
    f_lo = fun(lo)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        f_mid = fun(mid)
        if (f_lo < 0) == (f_mid < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# --------------------------------------------------------------------
# power buildup
# --------------------------------------------------------------------

@dataclass(frozen=True)
class BuildupSolution:
    """Self-consistent circulating and harmonic powers.

    ``impedance_residual`` is T1 - (L_passive + gamma * P_circ): zero
    when the input coupling exactly matches the total round-trip loss.
    """

    p_in_w: float
    p_circ_w: float
    p_sh_internal_w: float
    p_sh_main_w: float
    conversion_main: float
    conversion_total: float
    impedance_residual: float
    residual_w: float


def buildup_solve(p_in_w: float, t1: float, l_passive: float,
                  gamma_per_w: float,
                  r_brewster: float = 0.16) -> BuildupSolution:
    """Solve P_c = T1 P_in / (1 - sqrt((1-T1)(1-L)(1-gamma P_c)))^2.

    Damped fixed-point iteration (damping 0.5) with a bisection
    fallback on the equivalent scalar root; the accepted solution has
    |P_c - rhs(P_c)| < 1e-9 P_in.  The nonlinear loss gamma P_c is the
    single-pass conversion fraction, so the internal harmonic power is
    gamma P_c^2, of which the fraction (1 - r_brewster) leaves in the
    main beam.
    """
    if not 0.0 < t1 < 1.0:
        raise ValueError("t1 must lie in (0, 1)")
    if not 0.0 <= l_passive < 1.0:
        raise ValueError("l_passive must lie in [0, 1)")
    if gamma_per_w < 0 or p_in_w < 0:
        raise ValueError("gamma and input power must be non-negative")
    if not 0.0 <= r_brewster < 1.0:
        raise ValueError("r_brewster must lie in [0, 1)")

    if p_in_w == 0.0:
        return BuildupSolution(0.0, 0.0, 0.0, 0.0, 0.0, 0.0,
                               t1 - l_passive, 0.0)

    def rhs(pc):
        inner = (1.0 - t1) * (1.0 - l_passive) * max(1.0 - gamma_per_w * pc,
                                                     0.0)
        return t1 * p_in_w / (1.0 - math.sqrt(inner)) ** 2

    target = 1e-10 * p_in_w
    pc = rhs(0.0)
    residual = abs(rhs(pc) - pc)
    for _ in range(100000):
        if residual < target:
            break
        pc += 0.5 * (rhs(pc) - pc)
        residual = abs(rhs(pc) - pc)
    else:
        # rhs is decreasing in pc, so g = pc - rhs is strictly
        # increasing: a single bracketed root.
        lo, f_lo = 0.0, -rhs(0.0)
        hi = 4.0 * p_in_w / t1 + 1.0
        if gamma_per_w > 0.0:
            hi = min(hi, 1.0 / gamma_per_w)
        for _ in range(500):
            mid = 0.5 * (lo + hi)
            f_mid = mid - rhs(mid)
            if (f_lo < 0) == (f_mid < 0):
                lo, f_lo = mid, f_mid
            else:
                hi = mid
        pc = 0.5 * (lo + hi)
        residual = abs(rhs(pc) - pc)
        if residual >= 1e-9 * p_in_w:
            raise NoConvergence(
                f"buildup fixed point stalled at residual {residual:.3e} W"
            )

    p_sh = gamma_per_w * pc * pc
    p_main = (1.0 - r_brewster) * p_sh
    return BuildupSolution(
        p_in_w=p_in_w,
        p_circ_w=pc,
        p_sh_internal_w=p_sh,
        p_sh_main_w=p_main,
        conversion_main=p_main / p_in_w,
        conversion_total=p_sh / p_in_w,
        impedance_residual=t1 - (l_passive + gamma_per_w * pc),
        residual_w=residual,
    )


def impedance_match_T1(l_passive: float, gamma_per_w: float,
                       p_in_design_w: float) -> float:
    """Input coupling that equals the total round-trip loss at the
    design input power: T1 = L_passive + gamma P_circ(T1)."""
    if gamma_per_w < 0 or p_in_design_w < 0:
        raise ValueError("gamma and design power must be non-negative")
    if not 0.0 <= l_passive < 1.0:
        raise ValueError("l_passive must lie in [0, 1)")
    if gamma_per_w == 0.0 or p_in_design_w == 0.0:
        return l_passive

    def residual(t1):
        sol = buildup_solve(p_in_design_w, t1, l_passive, gamma_per_w)
        return sol.impedance_residual

    lo = max(l_passive, 1e-12)
    hi = 0.5
    while residual(hi) < 0 and hi < 0.999:
        hi = min(0.999, hi + 0.1)
    f_lo = residual(lo)
    if f_lo > 0:  # pragma: no cover - l_passive = 0 with tiny gamma
        return lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = residual(mid)
        if abs(f_mid) < 1e-9:
            return mid
        if (f_lo < 0) == (f_mid < 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    raise NoConvergence(
        f"impedance-match bisection stalled at residual {f_lo:.3e}"
    )


@dataclass(frozen=True)
class BuildupCalibration:
    """Loss parameters fitted to the observed conversion anchors."""

    l_passive: float
    gamma_per_w: float
    t1: float
    r_brewster: float
    p_match_w: float
    p_operating_w: float
    conversion_total_target: float


def calibrate_buildup(t1: float = 0.016,
                      conversion_main: float = 0.42,
                      r_brewster: float = 0.16,
                      p_match_w: float = 1.0,
                      p_operating_w: float = 1.8) -> BuildupCalibration:
    """Fit (L_passive, gamma) to two observations by nested bisection:
    the input coupler ``t1`` is impedance matched at ``p_match_w``, and
    the total conversion at ``p_operating_w`` equals
    ``conversion_main / (1 - r_brewster)``.
    """
    if not 0.0 < t1 < 1.0:
        raise ValueError("t1 must lie in (0, 1)")
    total_target = conversion_main / (1.0 - r_brewster)
    if not 0.0 < total_target < 1.0:
        raise Inconsistent(
            f"main conversion {conversion_main} with Brewster reflection "
            f"{r_brewster} implies total conversion {total_target:.3f} "
            "outside (0, 1)"
        )

    def l_for(gamma):
        """Passive loss making t1 the matched coupling at p_match_w."""
        def match_residual(l_passive):
            sol = buildup_solve(p_match_w, t1, l_passive, gamma, r_brewster)
            return sol.impedance_residual

        if match_residual(0.0) < 0:
            return None  # conversion loss alone already exceeds t1
        lo, hi = 0.0, t1
        f_lo = match_residual(lo)
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            f_mid = match_residual(mid)
            if (f_lo < 0) == (f_mid < 0):
                lo, f_lo = mid, f_mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def conversion_at(gamma):
        l_passive = l_for(gamma)
        if l_passive is None:
            return None
        sol = buildup_solve(p_operating_w, t1, l_passive, gamma, r_brewster)
        return sol.conversion_total

    g_lo = 1e-9
    g_hi = 1e-5
    while True:
        conv = conversion_at(g_hi)
        if conv is None:
            raise Inconsistent(
                "requested conversion unreachable: single-pass loss "
                "exceeds the coupler transmission before the target is met"
            )
        if conv >= total_target:
            break
        g_hi *= 2.0
        if g_hi > 1.0:
            raise Inconsistent("conversion target unreachable for any gamma")
    for _ in range(200):
        g_mid = math.sqrt(g_lo * g_hi)
        conv = conversion_at(g_mid)
        if conv is None or conv > total_target:
            g_hi = g_mid
        else:
            g_lo = g_mid
        if conv is not None and abs(conv - total_target) < 1e-10:
            break
    gamma = math.sqrt(g_lo * g_hi)
    return BuildupCalibration(
        l_passive=l_for(gamma),
        gamma_per_w=gamma,
        t1=t1,
        r_brewster=r_brewster,
        p_match_w=p_match_w,
        p_operating_w=p_operating_w,
        conversion_total_target=total_target,
    )


def conversion_slope(t1: float, l_passive: float, gamma_per_w: float,
                     p_lo_w: float, p_hi_w: float,
                     r_brewster: float = 0.16) -> float:
    """Two-point log-log slope of internal harmonic power vs input."""
    if not 0.0 < p_lo_w < p_hi_w:
        raise ValueError("need 0 < p_lo < p_hi")
    a = buildup_solve(p_lo_w, t1, l_passive, gamma_per_w, r_brewster)
    b = buildup_solve(p_hi_w, t1, l_passive, gamma_per_w, r_brewster)
    return (
        math.log(b.p_sh_internal_w / a.p_sh_internal_w)
        / math.log(p_hi_w / p_lo_w)
    )


# --------------------------------------------------------------------
# harmonic extraction
# --------------------------------------------------------------------

def fresnel_power(n_in: float, n_out: float, incidence_rad: float,
                  polarization: str = "s") -> tuple:
    """Fresnel power reflectance and transmittance at a flat interface.

    Returns (R, T); R + T = 1 for the lossless interface.  Raises
    TotalInternalReflection beyond the critical angle.
    """
    if n_in <= 0 or n_out <= 0:
        raise ValueError("indices must be positive")
    if not 0.0 <= incidence_rad < math.pi / 2:
        raise ValueError("incidence must lie in [0, pi/2)")
    sin_out = n_in * math.sin(incidence_rad) / n_out
    if sin_out > 1.0:
        raise TotalInternalReflection(
            f"incidence {math.degrees(incidence_rad):.2f} deg exceeds the "
            f"critical angle {math.degrees(math.asin(n_out / n_in)):.2f} deg"
        )
    c_in = math.cos(incidence_rad)
    c_out = math.sqrt(1.0 - sin_out * sin_out)
    if polarization in ("s", "sagittal"):
        r = (n_in * c_in - n_out * c_out) / (n_in * c_in + n_out * c_out)
        t = 2.0 * n_in * c_in / (n_in * c_in + n_out * c_out)
    elif polarization in ("p", "tangential"):
        r = (n_out * c_in - n_in * c_out) / (n_out * c_in + n_in * c_out)
        t = 2.0 * n_in * c_in / (n_out * c_in + n_in * c_out)
    else:
        raise ValueError("polarization must be 's' or 'p'")
    reflectance = r * r
    transmittance = t * t * (n_out * c_out) / (n_in * c_in)
    return reflectance, transmittance


def internal_brewster_incidence(n_fundamental: float) -> float:
    """In-crystal incidence on a Brewster face, atan(1/n)."""
    if n_fundamental <= 0:
        raise ValueError("index must be positive")
    return math.atan(1.0 / n_fundamental)


def brewster_sh_reflectance(n_sh_effective: float, incidence_rad: float,
                            polarization: str = "s") -> float:
    """Reflectance of the generated harmonic at the Brewster exit face.

    The harmonic leaves the type-I crystal polarized orthogonal to the
    fundamental, i.e. s at faces cut at the fundamental's Brewster
    angle, so a substantial fraction reflects into a secondary output
    beam.  ``incidence_rad`` is the in-crystal incidence fixed by the
    cut (the fundamental's internal Brewster angle).
    """
    reflectance, _ = fresnel_power(
        n_sh_effective, 1.0, incidence_rad, polarization
    )
    return reflectance


@dataclass(frozen=True)
class CorrectionPrescription:
    """Cylindrical-lens fix for the astigmatic harmonic output."""

    focal_m: float
    distance_from_m1_m: float
    axis: str
    spot_radius_m: float


def equalizing_lens(beam: bl.AstigmaticBeam,
                    scan_range_m: float = 0.5) -> CorrectionPrescription:
    """Plane and focal length of the cylindrical lens that renders an
    astigmatic beam stigmatic.

    At a plane where the two spot radii are equal, the imaginary parts
    of 1/q coincide, so a single cylindrical lens canceling the
    curvature difference merges the two beam parameters exactly.  A
    stigmatic input needs no lens (focal length infinity).
    """
    q_t, q_s = beam.q_t, beam.q_s
    if abs(q_t - q_s) <= 1e-12 * max(abs(q_t), abs(q_s)):
        return CorrectionPrescription(
            focal_m=math.inf,
            distance_from_m1_m=0.0,
            axis="none",
            spot_radius_m=beam.spot_radius("tangential"),
        )

    def spot_gap(z):
        wt = math.sqrt(
            beam.wavelength_m / (math.pi * (-1.0 / (q_t + z)).imag)
        )
        ws = math.sqrt(
            beam.wavelength_m / (math.pi * (-1.0 / (q_s + z)).imag)
        )
        return wt - ws

    grid = np.linspace(0.0, scan_range_m, 2001)
    gaps = np.array([spot_gap(z) for z in grid])
    crossings = np.nonzero(np.diff(np.sign(gaps)) != 0)[0]
    if crossings.size == 0:
        raise bl.Unreachable(
            "spot radii do not cross within the scan range; no plane "
            "admits a single-lens correction"
        )
    i = int(crossings[0])
    z_star = _bisect_root(spot_gap, float(grid[i]), float(grid[i + 1]))

    q_a, q_b = q_t + z_star, q_s + z_star
    inv_f = (1.0 / q_a - 1.0 / q_b).real
    spot = math.sqrt(
        beam.wavelength_m / (math.pi * (-1.0 / q_a).imag)
    )
    if abs(inv_f) < 1e-12:
        return CorrectionPrescription(math.inf, z_star, "none", spot)
    if inv_f > 0:
        return CorrectionPrescription(1.0 / inv_f, z_star, "tangential", spot)
    return CorrectionPrescription(-1.0 / inv_f, z_star, "sagittal", spot)


def output_correction(layout: BowtieLayout,
                      eigenmode: EigenmodeSolution,
                      substrate_index: float = 1.46,
                      substrate_thickness_m: float = 6.25e-3,
                      back_radius_m: float | None = None,
                      scan_range_m: float = 0.5) -> CorrectionPrescription:
    """Cylindrical-lens prescription for the harmonic main beam.

    The harmonic is modeled with waists 1/sqrt(2) of the fundamental's
    crystal waists at the crystal center (the driven harmonic of a
    Gaussian inherits the fundamental's complex beam parameter, so its
    waists sit at the same plane with sizes reduced by sqrt(2)),
    propagated through the crystal exit face and the transmissive
    meniscus substrate of the output mirror, then handed to
    :func:`equalizing_lens`.  The reported distance runs from the
    mirror's front (cavity-side) spherical surface.

    Collinear phase matching fixes the harmonic's ray geometry: its
    phase index at the cut angle equals the fundamental's ordinary
    index, so it exits the Brewster face along the fundamental with the
    same tangential footprint compression.  The principal e index
    enters only the Fresnel amplitude (see
    :func:`brewster_sh_reflectance`), not the geometry used here.  The
    substrate is a parallel meniscus whose back radius defaults to the
    mirror radius.
    """
    lam_sh = layout.wavelength_m / 2.0
    n_f = layout.fundamental_index()
    cut = layout.crystal.cut
    n_sh = extraordinary_index_at_angle(
        get_material(layout.crystal.material), lam_sh, cut.theta_rad
    )
    sqrt2 = math.sqrt(2.0)
    beam = bl.AstigmaticBeam.from_waists(
        eigenmode.crystal_waists.w0_t / sqrt2,
        eigenmode.crystal_waists.w0_s / sqrt2,
        lam_sh,
        ambient_index=n_sh,
    )
    back_r = -layout.r_mirror_m if back_radius_m is None else back_radius_m
    chain = [
        bl.free_space(layout.crystal.length_m / 2.0, index=n_sh),
        bl.flat_interface(
            n_sh, 1.0, incidence_rad=internal_brewster_incidence(n_f)
        ),
        bl.free_space(layout.d_mc_m),
        bl.curved_interface(-layout.r_mirror_m, 1.0, substrate_index),
        bl.free_space(substrate_thickness_m, index=substrate_index),
        bl.curved_interface(back_r, substrate_index, 1.0),
    ]
    outside = bl.propagate(beam, chain)
    fix = equalizing_lens(outside, scan_range_m=scan_range_m)
    if not math.isfinite(fix.focal_m):
        return fix
    return replace(
        fix, distance_from_m1_m=substrate_thickness_m + fix.distance_from_m1_m
    )
