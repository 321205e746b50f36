"""Phase matching and spectral arithmetic for the conversion chain.

Covers the wavelength/frequency bookkeeping of a sum-frequency stage
followed by a doubling stage, critical (angle) type-I phase matching in
a negative uniaxial crystal, first-order quasi-phase matching in
periodically poled LiNbO3, and Poynting walk-off geometry.

Units are SI throughout (meters, Hz, radians) except temperatures,
which follow the dispersion fits in degrees Celsius.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._constants import C_LIGHT
from .dispersion import extraordinary_index_at_angle, get_material, refractive_index

__all__ = [
    "NoPhaseMatch",
    "NoRoot",
    "SpectralLine",
    "AngleCut",
    "PolingSpec",
    "CrystalSpec",
    "QpmTuningCurve",
    "sum_wavelength",
    "second_harmonic",
    "uv_detuning",
    "beryllium_d1_line",
    "type1_phasematch_angle",
    "brewster_angle",
    "walkoff_angle",
    "walkoff_parameter_b",
    "qpm_mismatch",
    "qpm_phasematch_temperature",
    "temperature_acceptance",
    "BERYLLIUM_D1_HZ",
]


class NoPhaseMatch(RuntimeError):
    """No propagation angle can equalize the relevant indices."""


class NoRoot(RuntimeError):
    """A bracketed root search found no sign change in its domain."""


@dataclass(frozen=True)
class SpectralLine:
    """A monochromatic line, stored by vacuum wavelength.

    The frequency is always derived as c/lambda, so the pair can never
    fall out of step.
    """

    wavelength_m: float

    def __post_init__(self):
        if not self.wavelength_m > 0:
            raise ValueError("wavelength must be positive")

    @property
    def frequency_hz(self) -> float:
        return C_LIGHT / self.wavelength_m

    @property
    def wavelength_nm(self) -> float:
        return self.wavelength_m * 1e9

    @classmethod
    def from_nm(cls, wavelength_nm: float) -> "SpectralLine":
        return cls(wavelength_nm * 1e-9)

    @classmethod
    def from_frequency(cls, frequency_hz: float) -> "SpectralLine":
        return cls(C_LIGHT / frequency_hz)


def _as_line(line) -> SpectralLine:
    if isinstance(line, SpectralLine):
        return line
    return SpectralLine(float(line))


@dataclass(frozen=True)
class AngleCut:
    """Cut of an angle-phase-matched crystal."""

    theta_rad: float
    phi_rad: float = 0.0
    brewster_faces: bool = False

    def __post_init__(self):
        if not 0.0 <= self.theta_rad <= math.pi / 2:
            raise ValueError("theta must lie in [0, pi/2]")


@dataclass(frozen=True)
class PolingSpec:
    """Periodic poling of a quasi-phase-matched crystal."""

    period_m: float
    channel_width_m: float | None = None

    def __post_init__(self):
        if not self.period_m > 0:
            raise ValueError("poling period must be positive")


@dataclass(frozen=True)
class CrystalSpec:
    """A nonlinear crystal as installed: material, length, cut or
    poling, and operating temperature."""

    material: str
    length_m: float
    cut: AngleCut | PolingSpec | None = None
    temperature_c: float | None = None

    def __post_init__(self):
        if not self.length_m > 0:
            raise ValueError("crystal length must be positive")


@dataclass(frozen=True)
class QpmTuningCurve:
    """Normalized quasi-phase-matching efficiency versus temperature."""

    peak_temperature_c: float
    fwhm_c: float
    temperatures_c: np.ndarray = field(repr=False)
    efficiencies: np.ndarray = field(repr=False)


def sum_wavelength(pump, signal) -> SpectralLine:
    """Sum-frequency output line: 1/lambda3 = 1/lambda1 + 1/lambda2."""
    a = _as_line(pump)
    b = _as_line(signal)
    return SpectralLine(1.0 / (1.0 / a.wavelength_m + 1.0 / b.wavelength_m))


def second_harmonic(fundamental) -> SpectralLine:
    """Second-harmonic line at half the fundamental wavelength."""
    return SpectralLine(_as_line(fundamental).wavelength_m / 2.0)


# Reference frequency for UV detunings: the 9Be+ 2s 2S1/2 -> 2p 2P1/2
# (D1) resonance.  Defined here as 80 GHz below the second harmonic of
# 626.342 nm, which keeps all detuning arithmetic in this package
# anchored to one constant.
BERYLLIUM_D1_HZ = 2.0 * C_LIGHT / 626.342e-9 - 80e9


def beryllium_d1_line() -> SpectralLine:
    return SpectralLine.from_frequency(BERYLLIUM_D1_HZ)


def uv_detuning(uv, reference=None) -> float:
    """Signed detuning (Hz) of ``uv`` from ``reference``.

    ``reference`` defaults to the beryllium D1 line.
    """
    ref = beryllium_d1_line() if reference is None else _as_line(reference)
    return _as_line(uv).frequency_hz - ref.frequency_hz


def _bisect(func, lo, hi, f_lo=None, f_hi=None, tol_x=1e-13, max_iter=200):
    """Plain bisection; assumes func(lo) and func(hi) have opposite sign."""
    if f_lo is None:
        f_lo = func(lo)
    if f_hi is None:
        f_hi = func(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if f_lo * f_hi > 0:
        raise NoRoot(f"no sign change on [{lo:g}, {hi:g}]")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        f_mid = func(mid)
        if f_mid == 0.0 or (hi - lo) < tol_x:
            return mid
        if f_lo * f_mid < 0:
            hi, f_hi = mid, f_mid
        else:
            lo, f_lo = mid, f_mid
    return 0.5 * (lo + hi)


def type1_phasematch_angle(material, fundamental) -> float:
    """Angle theta from the optic axis where the extraordinary index at
    the second harmonic equals the ordinary index at the fundamental
    (type-I critical phase matching, negative uniaxial crystal).

    Root is bracketed on a coarse angular scan and polished by
    bisection; the residual index mismatch of the returned angle is
    below 1e-9.  Raises NoPhaseMatch when even propagation at 90 deg
    from the axis cannot pull the harmonic index down far enough.
    """
    fund = _as_line(fundamental)
    sh = second_harmonic(fund)
    mat = get_material(material)
    n_target = mat.index(fund.wavelength_m, "ordinary")

    def mismatch(theta):
        return (
            extraordinary_index_at_angle(mat, sh.wavelength_m, theta) - n_target
        )

    if mismatch(math.pi / 2) > 0:
        raise NoPhaseMatch(
            f"n_e(90 deg) at {sh.wavelength_nm:.3f} nm exceeds "
            f"n_o({fund.wavelength_nm:.3f} nm); no type-I angle exists"
        )

    thetas = np.linspace(0.0, math.pi / 2, 200)
    values = np.array([mismatch(t) for t in thetas])
    idx = np.nonzero(np.diff(np.sign(values)) != 0)[0]
    if idx.size == 0:
        raise NoPhaseMatch("index mismatch does not change sign on [0, pi/2]")
    i = int(idx[0])
    theta = _bisect(
        mismatch, thetas[i], thetas[i + 1], values[i], values[i + 1]
    )
    if abs(mismatch(theta)) >= 1e-9:
        raise NoRoot("phase-match bisection failed to reach 1e-9 residual")
    return float(theta)


def brewster_angle(n: float) -> float:
    """Brewster incidence angle from vacuum onto an index-n surface."""
    if not n > 0:
        raise ValueError("index must be positive")
    return math.atan(n)


def walkoff_angle(material, theta_rad: float, sh) -> float:
    """Poynting walk-off angle of the extraordinary wave.

    Standard uniaxial result: tan(rho) = (n(theta)^2/2) *
    |1/n_e^2 - 1/n_o^2| * sin(2 theta), evaluated at the (extraordinary)
    harmonic wavelength.
    """
    line = _as_line(sh)
    mat = get_material(material)
    n_o = mat.index(line.wavelength_m, "ordinary")
    n_e = mat.index(line.wavelength_m, "extraordinary")
    n_theta = extraordinary_index_at_angle(mat, line.wavelength_m, theta_rad)
    tan_rho = (
        0.5
        * n_theta**2
        * abs(1.0 / n_e**2 - 1.0 / n_o**2)
        * math.sin(2.0 * theta_rad)
    )
    return math.atan(tan_rho)


def walkoff_parameter_b(rho_rad: float, k1_rad_per_m: float, length_m: float) -> float:
    """Boyd-Kleinman double-refraction parameter B = rho*sqrt(k1*l)/2,
    with k1 the in-crystal propagation constant of the fundamental."""
    if k1_rad_per_m < 0 or length_m < 0:
        raise ValueError("k1 and length must be non-negative")
    return 0.5 * rho_rad * math.sqrt(k1_rad_per_m * length_m)


def qpm_mismatch(pump, signal, temperature_c: float, period_m: float,
                 material="linbo3") -> float:
    """First-order quasi-phase-matching wave-vector mismatch (rad/m).

    All three waves propagate with the extraordinary index (all fields
    polarized along the crystal z axis):

        dk = k3 - k1 - k2 - 2*pi/period

    ``period_m = math.inf`` gives the bulk (unpoled) mismatch.
    """
    p = _as_line(pump)
    s = _as_line(signal)
    out = sum_wavelength(p, s)
    mat = get_material(material)
    total = 0.0
    for line, sign in ((out, +1.0), (p, -1.0), (s, -1.0)):
        n = mat.index(line.wavelength_m, "extraordinary", temperature_c)
        total += sign * n / line.wavelength_m
    return 2.0 * math.pi * (total - 1.0 / period_m)


def qpm_phasematch_temperature(pump, signal, period_m: float,
                               material="linbo3") -> float:
    """Temperature (deg C) at which the quasi-phase-matching mismatch
    vanishes, found on a 1 degC scan of the model's validity range and
    polished by bisection to |dk| < 1e-3 rad/m.

    Raises NoRoot when the mismatch never changes sign in range.
    """
    mat = get_material(material)
    if mat.temperature_band_c is None:
        raise ValueError(f"{mat.name} has no temperature-dependent model")
    t_lo, t_hi = mat.temperature_band_c

    def mismatch(t):
        return qpm_mismatch(pump, signal, t, period_m, material=mat)

    grid = np.arange(t_lo, t_hi + 0.5, 1.0)
    grid[-1] = min(grid[-1], t_hi)
    values = np.array([mismatch(t) for t in grid])
    idx = np.nonzero(np.diff(np.sign(values)) != 0)[0]
    if idx.size == 0:
        raise NoRoot(
            f"no phase-match temperature in [{t_lo:g}, {t_hi:g}] C for "
            f"period {period_m * 1e6:.3f} um"
        )
    i = int(idx[0])
    root = _bisect(
        mismatch, grid[i], grid[i + 1], values[i], values[i + 1], tol_x=1e-9
    )
    if abs(mismatch(root)) >= 1e-3:
        raise NoRoot("temperature bisection failed to reach 1e-3 rad/m")
    return float(root)


def temperature_acceptance(pump, signal, period_m: float, length_m: float,
                           material="linbo3", samples: int = 201,
                           span_fwhm: float = 4.0) -> QpmTuningCurve:
    """Temperature tuning curve of the quasi-phase-matched efficiency.

    The normalized single-pass efficiency is sinc^2(dk*l/2).  The FWHM
    comes from bisection on each flank, so it does not depend on the
    sampling density; samples are for plotting and span ``span_fwhm``
    half-widths either side of the peak.
    """
    if not length_m > 0:
        raise ValueError("crystal length must be positive")
    peak_t = qpm_phasematch_temperature(pump, signal, period_m, material)

    def efficiency(t):
        dk = qpm_mismatch(pump, signal, t, period_m, material)
        x = dk * length_m / 2.0
        return float(np.sinc(x / math.pi) ** 2)

    def half_crossing(direction):
        # March outward until efficiency drops through 1/2, then bisect.
        step = 0.01
        t_prev = peak_t
        for _ in range(64):
            t_next = peak_t + direction * step
            if efficiency(t_next) < 0.5:
                return _bisect(
                    lambda t: efficiency(t) - 0.5, t_prev, t_next, tol_x=1e-10
                ) if direction > 0 else _bisect(
                    lambda t: efficiency(t) - 0.5, t_next, t_prev, tol_x=1e-10
                )
            t_prev = t_next
            step *= 2.0
        raise NoRoot("could not bracket the half-maximum crossing")

    t_hi = half_crossing(+1.0)
    t_lo = half_crossing(-1.0)
    fwhm = t_hi - t_lo

    half_span = span_fwhm * fwhm / 2.0
    temps = np.linspace(peak_t - half_span, peak_t + half_span, samples)
    effs = np.array([efficiency(t) for t in temps])
    return QpmTuningCurve(
        peak_temperature_c=float(peak_t),
        fwhm_c=float(fwhm),
        temperatures_c=temps,
        efficiencies=effs,
    )
