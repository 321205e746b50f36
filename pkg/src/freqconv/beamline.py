"""Astigmatic Gaussian-beam propagation in reduced ray coordinates.

Each beam carries one complex parameter per transverse plane
(tangential x, in the plane of the optical table; sagittal y, normal to
it).  We work in reduced coordinates (ray slope scaled by the local
index), in which every element matrix is unimodular, a flat interface
at normal incidence is the identity, and the spot size follows the
index-independent formula

    w^2 = lambda_vac / (pi * Im(-1/q))

with q the reduced parameter.  Free space of physical length d in a
medium of index n contributes B = d/n.  These conventions are the
standard ones for astigmatic resonators (Kogelnik and Li, Appl. Opt. 5,
1550 (1966); Hanna, IEEE J. Quantum Electron. 5, 483 (1969)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "InvalidParam",
    "NonPhysical",
    "Unreachable",
    "RayElement",
    "AstigmaticBeam",
    "WaistReport",
    "InterfaceWaistReport",
    "TelescopeSolution",
    "ModeMatchSolution",
    "free_space",
    "thin_lens",
    "cylindrical_lens",
    "off_axis_mirror",
    "brewster_crystal",
    "flat_interface",
    "curved_interface",
    "make_element",
    "compose",
    "propagate",
    "waist_report",
    "power_overlap",
    "interface_waist_shift",
    "telescope_solve",
    "mode_match_solve",
]


class InvalidParam(ValueError):
    """An element was requested with unphysical parameters."""


class NonPhysical(RuntimeError):
    """Propagation produced a beam with non-positive Im(q)."""


class Unreachable(RuntimeError):
    """A solver could not meet its target with the given hardware."""


@dataclass(frozen=True, eq=False)
class RayElement:
    """One optical element: a 2x2 reduced ray matrix per plane."""

    kind: str
    m_t: np.ndarray
    m_s: np.ndarray
    transmittance: float = 1.0
    label: str = ""

    def __post_init__(self):
        for name, m in (("m_t", self.m_t), ("m_s", self.m_s)):
            det = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
            if abs(det - 1.0) > 1e-9:
                raise InvalidParam(
                    f"{self.kind}.{name} determinant {det!r} is not 1"
                )
        if not 0.0 <= self.transmittance <= 1.0:
            raise InvalidParam("transmittance must lie in [0, 1]")


def _mat(a, b, c, d) -> np.ndarray:
    return np.array([[a, b], [c, d]], dtype=float)


_IDENTITY = _mat(1.0, 0.0, 0.0, 1.0)


def free_space(length_m: float, index: float = 1.0) -> RayElement:
    """Free propagation over physical length ``length_m`` in a medium of
    the given index (reduced B = d/n)."""
    if index <= 0:
        raise InvalidParam("index must be positive")
    b = length_m / index
    m = _mat(1.0, b, 0.0, 1.0)
    return RayElement("free_space", m, m.copy())


def thin_lens(focal_m: float) -> RayElement:
    if focal_m == 0:
        raise InvalidParam("focal length must be nonzero")
    m = _mat(1.0, 0.0, -1.0 / focal_m, 1.0)
    return RayElement("thin_lens", m, m.copy())


def cylindrical_lens(focal_m: float, axis: str) -> RayElement:
    """A lens focusing in one transverse plane only; ``axis`` is
    "tangential" or "sagittal"."""
    if focal_m == 0:
        raise InvalidParam("focal length must be nonzero")
    lens = _mat(1.0, 0.0, -1.0 / focal_m, 1.0)
    if axis == "tangential":
        return RayElement("cylindrical_lens", lens, _IDENTITY.copy())
    if axis == "sagittal":
        return RayElement("cylindrical_lens", _IDENTITY.copy(), lens)
    raise InvalidParam("axis must be 'tangential' or 'sagittal'")


def off_axis_mirror(radius_m: float, alpha_full_rad: float) -> RayElement:
    """Spherical mirror hit at half the full off-axis angle.

    The incidence angle is alpha_full/2, giving the astigmatic focal
    pair f_t = (R/2)cos(alpha/2), f_s = (R/2)/cos(alpha/2).
    """
    if radius_m == 0:
        raise InvalidParam("mirror radius must be nonzero")
    cos_i = math.cos(alpha_full_rad / 2.0)
    if cos_i <= 0:
        raise InvalidParam("off-axis angle must stay below 180 deg")
    f_t = 0.5 * radius_m * cos_i
    f_s = 0.5 * radius_m / cos_i
    return RayElement(
        "off_axis_mirror",
        _mat(1.0, 0.0, -1.0 / f_t, 1.0),
        _mat(1.0, 0.0, -1.0 / f_s, 1.0),
    )


def flat_interface(n1: float, n2: float, incidence_rad: float = 0.0) -> RayElement:
    """Flat dielectric interface, possibly at oblique incidence.

    At normal incidence the reduced matrix is the identity in both
    planes.  At oblique incidence the tangential beam footprint is
    rescaled by cos(theta_2)/cos(theta_1) while the sagittal plane is
    untouched.
    """
    if n1 <= 0 or n2 <= 0:
        raise InvalidParam("indices must be positive")
    sin_t = n1 * math.sin(incidence_rad) / n2
    if abs(sin_t) >= 1.0:
        raise InvalidParam("total internal reflection at this incidence")
    cos1 = math.cos(incidence_rad)
    cos2 = math.sqrt(1.0 - sin_t * sin_t)
    scale = cos2 / cos1
    return RayElement(
        "flat_interface",
        _mat(scale, 0.0, 0.0, 1.0 / scale),
        _IDENTITY.copy(),
    )


def curved_interface(radius_m: float, n1: float, n2: float) -> RayElement:
    """Spherical dielectric interface at normal incidence; positive
    radius means the center of curvature lies downstream."""
    if radius_m == 0:
        raise InvalidParam("interface radius must be nonzero")
    if n1 <= 0 or n2 <= 0:
        raise InvalidParam("indices must be positive")
    power = (n2 - n1) / radius_m
    m = _mat(1.0, 0.0, -power, 1.0)
    return RayElement("curved_interface", m, m.copy())


def brewster_crystal(length_m: float, index: float) -> RayElement:
    """Brewster-cut crystal slab traversed along its length.

    Entering and leaving through Brewster faces magnifies the
    tangential footprint by n and 1/n respectively, so the net slab is
    pure propagation with equivalent lengths l/n^3 (tangential) and l/n
    (sagittal).
    """
    if length_m <= 0:
        raise InvalidParam("crystal length must be positive")
    if index <= 1.0:
        raise InvalidParam("crystal index must exceed 1")
    return RayElement(
        "brewster_crystal",
        _mat(1.0, length_m / index**3, 0.0, 1.0),
        _mat(1.0, length_m / index, 0.0, 1.0),
    )


_ELEMENT_BUILDERS = {
    "free_space": free_space,
    "thin_lens": thin_lens,
    "cylindrical_lens": cylindrical_lens,
    "off_axis_mirror": off_axis_mirror,
    "flat_interface": flat_interface,
    "curved_interface": curved_interface,
    "brewster_crystal": brewster_crystal,
}


def make_element(kind: str, **params) -> RayElement:
    """Build an element by name; see the individual constructors for
    parameter meanings."""
    try:
        builder = _ELEMENT_BUILDERS[kind]
    except KeyError:
        known = ", ".join(sorted(_ELEMENT_BUILDERS))
        raise InvalidParam(f"unknown element kind {kind!r}; known: {known}")
    return builder(**params)


def compose(elements) -> tuple:
    """Round-trip matrices (tangential, sagittal) for an ordered element
    list; the first list entry acts first."""
    m_t = _IDENTITY.copy()
    m_s = _IDENTITY.copy()
    for el in elements:
        m_t = el.m_t @ m_t
        m_s = el.m_s @ m_s
    return m_t, m_s


@dataclass(frozen=True)
class AstigmaticBeam:
    """A Gaussian beam at one plane: reduced q per transverse axis."""

    q_t: complex
    q_s: complex
    wavelength_m: float
    power_w: float = 1.0
    ambient_index: float = 1.0

    def __post_init__(self):
        if self.q_t.imag <= 0 or self.q_s.imag <= 0:
            raise NonPhysical("Im(q) must be positive for a physical beam")
        if self.wavelength_m <= 0:
            raise InvalidParam("wavelength must be positive")

    @classmethod
    def from_waists(cls, waist_t_m: float, waist_s_m: float, wavelength_m: float,
                    z_t_m: float = 0.0, z_s_m: float = 0.0,
                    power_w: float = 1.0, ambient_index: float = 1.0):
        """Beam a (reduced) distance z past each waist.  The reduced
        Rayleigh range pi w0^2 / lambda_vac is index independent."""
        zr_t = math.pi * waist_t_m**2 / wavelength_m
        zr_s = math.pi * waist_s_m**2 / wavelength_m
        return cls(
            q_t=complex(z_t_m, zr_t),
            q_s=complex(z_s_m, zr_s),
            wavelength_m=wavelength_m,
            power_w=power_w,
            ambient_index=ambient_index,
        )

    def spot_radius(self, axis: str) -> float:
        q = self.q_t if axis == "tangential" else self.q_s
        return math.sqrt(self.wavelength_m / (math.pi * (-1.0 / q).imag))

    def waist_radius(self, axis: str) -> float:
        # Im(q) is conserved along free propagation and equals the
        # reduced Rayleigh range.
        q = self.q_t if axis == "tangential" else self.q_s
        return math.sqrt(self.wavelength_m * q.imag / math.pi)


def propagate(beam: AstigmaticBeam, elements) -> AstigmaticBeam:
    """Apply elements in order via the bilinear map q' = (Aq+B)/(Cq+D)
    per plane; multiplies power by each element's transmittance."""
    q_t, q_s = beam.q_t, beam.q_s
    power = beam.power_w
    for el in elements:
        (a, b), (c, d) = el.m_t
        q_t = (a * q_t + b) / (c * q_t + d)
        (a, b), (c, d) = el.m_s
        q_s = (a * q_s + b) / (c * q_s + d)
        power *= el.transmittance
        if q_t.imag <= 0 or q_s.imag <= 0:
            raise NonPhysical(
                f"element {el.kind!r} produced Im(q) <= 0; element list is "
                f"inconsistent"
            )
    return replace(beam, q_t=q_t, q_s=q_s, power_w=power)


@dataclass(frozen=True)
class WaistReport:
    """Waist sizes and signed (physical) distances to each waist from
    the report plane; positive means downstream."""

    w0_t: float
    w0_s: float
    z_t: float
    z_s: float

    @property
    def ellipticity(self) -> float:
        big = max(self.w0_t, self.w0_s)
        small = min(self.w0_t, self.w0_s)
        return big / small


def waist_report(beam: AstigmaticBeam, index: float | None = None) -> WaistReport:
    """Waists of each axis; distances converted to physical length with
    ``index`` (defaults to the beam's ambient index)."""
    n = beam.ambient_index if index is None else index
    return WaistReport(
        w0_t=beam.waist_radius("tangential"),
        w0_s=beam.waist_radius("sagittal"),
        z_t=-beam.q_t.real * n,
        z_s=-beam.q_s.real * n,
    )


def power_overlap(beam_a: AstigmaticBeam, beam_b: AstigmaticBeam) -> float:
    """Power coupling of two Gaussian modes evaluated at a common plane.

    Per axis the fundamental-mode overlap is
    2*sqrt(Im(-1/q1)*Im(-1/q2)) / |1/q1 - conj(1/q2)|; the total is the
    product over axes.  Equals 1 only for identical q pairs.
    """
    total = 1.0
    for qa, qb in ((beam_a.q_t, beam_b.q_t), (beam_a.q_s, beam_b.q_s)):
        ua, ub = -1.0 / qa, -1.0 / qb
        num = 2.0 * math.sqrt(ua.imag * ub.imag)
        den = abs(-ua + ub.conjugate())
        total *= num / den
    return total


@dataclass(frozen=True)
class InterfaceWaistReport:
    """Ideal-Gaussian focus behind a flat interface."""

    depth_m: float           # waist position inside, from the face
    waist_m: float           # model waist size (preserved by the interface)
    quoted_waist_m: float | None = None

    @property
    def waist_ratio_quoted_over_model(self) -> float | None:
        if self.quoted_waist_m is None:
            return None
        return self.quoted_waist_m / self.waist_m


def interface_waist_shift(beam: AstigmaticBeam, medium_index: float,
                          quoted_waist_m: float | None = None,
                          axis: str = "tangential") -> InterfaceWaistReport:
    """Where a converging beam focuses after crossing a flat interface.

    The ideal-Gaussian flat-interface map leaves the reduced q (and so
    the waist size) unchanged and stretches the remaining distance to
    the waist by the medium index.  A quoted measured waist can ride
    along for side-by-side reporting; the model never rescales to it.
    """
    if medium_index <= 0:
        raise InvalidParam("medium index must be positive")
    q = beam.q_t if axis == "tangential" else beam.q_s
    reduced_remaining = -q.real
    if reduced_remaining <= 0:
        raise InvalidParam("focus must lie beyond the interface")
    return InterfaceWaistReport(
        depth_m=medium_index * reduced_remaining,
        waist_m=beam.waist_radius(
            "tangential" if axis == "tangential" else "sagittal"
        ),
        quoted_waist_m=quoted_waist_m,
    )


@dataclass(frozen=True)
class TelescopeSolution:
    separation_m: float
    lens2_to_waist_m: float
    achieved_waist_m: float
    lens2_to_face_m: float | None = None


def _waist_after_two_lens(beam: AstigmaticBeam, f1: float, f2: float,
                          separation: float, axis: str = "tangential"):
    out = propagate(
        beam, [thin_lens(f1), free_space(separation), thin_lens(f2)]
    )
    q = out.q_t if axis == "tangential" else out.q_s
    return out.waist_radius(axis), -q.real


def telescope_solve(beam: AstigmaticBeam, f1_m: float, f2_m: float,
                    target_waist_m: float,
                    separation_bounds=(1e-3, 0.5),
                    crystal_length_m: float | None = None,
                    crystal_index: float | None = None) -> TelescopeSolution:
    """Find the two-lens separation that focuses ``beam`` down to the
    target waist, and where that waist lands.

    Bisects on the separation (the output waist is monotone in it over
    the bracket).  When crystal geometry is supplied, also reports the
    lens-to-entrance-face distance that centers the (index-stretched)
    focus midway along the crystal.
    """
    if target_waist_m <= 0:
        raise InvalidParam("target waist must be positive")

    def err(s):
        w, _ = _waist_after_two_lens(beam, f1_m, f2_m, s)
        return w - target_waist_m

    lo, hi = separation_bounds
    grid = np.linspace(lo, hi, 400)
    vals = []
    for s in grid:
        try:
            vals.append(err(s))
        except NonPhysical:
            vals.append(math.nan)
    vals = np.array(vals)
    ok = np.isfinite(vals)
    sign_change = np.nonzero(
        ok[:-1] & ok[1:] & (np.sign(vals[:-1]) != np.sign(vals[1:]))
    )[0]
    if sign_change.size == 0:
        raise Unreachable(
            f"target waist {target_waist_m * 1e6:.1f} um not reachable with "
            f"f1={f1_m * 1e3:g} mm, f2={f2_m * 1e3:g} mm"
        )
    i = int(sign_change[0])
    a, b = grid[i], grid[i + 1]
    fa = vals[i]
    for _ in range(200):
        mid = 0.5 * (a + b)
        fm = err(mid)
        if abs(b - a) < 1e-9:
            break
        if fa * fm <= 0:
            b = mid
        else:
            a, fa = mid, fm
    separation = 0.5 * (a + b)
    waist, dist = _waist_after_two_lens(beam, f1_m, f2_m, separation)
    if abs(waist - target_waist_m) > 1e-6:
        raise Unreachable("bisection landed outside the 1 um waist tolerance")
    face = None
    if crystal_length_m is not None and crystal_index is not None:
        # Entrance face such that the stretched focus sits mid-crystal.
        face = dist - 0.5 * crystal_length_m / crystal_index
    return TelescopeSolution(
        separation_m=float(separation),
        lens2_to_waist_m=float(dist),
        achieved_waist_m=float(waist),
        lens2_to_face_m=face,
    )


@dataclass(frozen=True)
class ModeMatchSolution:
    f1_m: float | None
    f2_m: float | None
    d1_m: float
    d2_m: float
    overlap: float

    @property
    def lens_count(self) -> int:
        return int(self.f1_m is not None) + int(self.f2_m is not None)


DEFAULT_LENS_STOCK_M = (0.050, 0.075, 0.100, 0.150, 0.200)


def mode_match_solve(beam: AstigmaticBeam, target_waist_m: float,
                     target_distance_m: float,
                     stock_f_m=DEFAULT_LENS_STOCK_M,
                     min_overlap: float = 0.99) -> ModeMatchSolution:
    """Pick two stock lenses and positions that couple ``beam`` into a
    circular target waist at the target plane.

    Grid search over ordered lens pairs and positions, then a local
    refinement; accepts the first configuration whose power overlap
    with the target mode beats ``min_overlap``.  A zero-lens solution
    is checked first.
    """
    target = AstigmaticBeam.from_waists(
        target_waist_m, target_waist_m, beam.wavelength_m
    )

    def overlap_for(f1, f2, d1, d2):
        d3 = target_distance_m - d1 - d2
        if d3 <= 0:
            return -1.0
        try:
            out = propagate(
                beam,
                [
                    free_space(d1),
                    thin_lens(f1),
                    free_space(d2),
                    thin_lens(f2),
                    free_space(d3),
                ],
            )
        except NonPhysical:
            return -1.0
        return power_overlap(out, target)

    # Zero-lens check: propagate to the target plane directly.
    direct = propagate(beam, [free_space(target_distance_m)])
    if power_overlap(direct, target) >= min_overlap:
        return ModeMatchSolution(
            f1_m=None, f2_m=None, d1_m=0.0, d2_m=0.0,
            overlap=power_overlap(direct, target),
        )

    best = (-1.0, None)
    d1_grid = np.linspace(0.02, target_distance_m - 0.06, 25)
    d2_grid = np.linspace(0.02, target_distance_m - 0.04, 25)
    for f1 in stock_f_m:
        for f2 in stock_f_m:
            for d1 in d1_grid:
                for d2 in d2_grid:
                    val = overlap_for(f1, f2, d1, d2)
                    if val > best[0]:
                        best = (val, (f1, f2, d1, d2))
    if best[1] is None:
        raise Unreachable(
            "no candidate configuration at all (empty stock list or every "
            "candidate unphysical)"
        )
    val, (f1, f2, d1, d2) = best
    # Local coordinate-descent polish on the continuous positions.
    step = float(d1_grid[1] - d1_grid[0])
    for _ in range(40):
        improved = False
        for dd1, dd2 in ((step, 0), (-step, 0), (0, step), (0, -step)):
            cand = overlap_for(f1, f2, d1 + dd1, d2 + dd2)
            if cand > val:
                val, d1, d2 = cand, d1 + dd1, d2 + dd2
                improved = True
        if not improved:
            step /= 2.0
            if step < 1e-5:
                break
    if val < min_overlap:
        raise Unreachable(
            f"best overlap {val:.4f} below the {min_overlap:.2f} requirement"
        )
    return ModeMatchSolution(f1_m=f1, f2_m=f2, d1_m=float(d1), d2_m=float(d2),
                             overlap=float(val))
