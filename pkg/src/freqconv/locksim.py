"""Polarization-analysis cavity lock: error signal, servo, relock logic.

The reflected field of a resonator that contains a polarizing element
is a superposition of a directly reflected component and a resonantly
leaked component.  A quarter-wave plate and a polarizing beam splitter
turn their relative phase into a balanced-photodiode difference that
is dispersive in the cavity detuning and needs no modulation (Hansch
and Couillaud, Opt. Commun. 35, 441 (1980)).  This module provides the
closed-form error signal, a proportional-integral gain designer for a
piezo-actuated cavity, and a fixed-step time-domain simulation with a
supervisory automaton that recovers lost locks by zeroing the
integrator, ramping across one free spectral range, jumping to the
detected transmission peak, and re-engaging the servo.

All simulation state lives in local variables, so runs are pure
functions of their inputs and bit-reproducible.
"""

from __future__ import annotations

import cmath
import enum
import functools
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ConfigInvalid",
    "Unachievable",
    "PztResonance",
    "CavityLockPlant",
    "ServoConfig",
    "LockState",
    "LockAutomaton",
    "LockTrace",
    "hc_error_signal",
    "peak_detuning",
    "cavity_transmission",
    "error_slope_per_rad",
    "linewidth_fwhm_rad",
    "tune_gains",
    "loop_transfer",
    "simulate_lock",
    "noise_series",
]


class ConfigInvalid(ValueError):
    """A plant, servo, or simulation parameter violates its contract."""


class Unachievable(RuntimeError):
    """No stable gain setting reaches the requested loop bandwidth."""


@dataclass(frozen=True)
class PztResonance:
    """Second-order mechanical response of the piezo actuator."""

    f0_hz: float
    q: float

    def __post_init__(self):
        if self.f0_hz <= 0 or self.q <= 0:
            raise ConfigInvalid("resonance frequency and Q must be positive")

    def response(self, f_hz: float) -> complex:
        """Complex actuator transfer at ``f_hz`` (unity at DC)."""
        s = 1j * f_hz / self.f0_hz
        return 1.0 / (1.0 + s / self.q + s * s)


@dataclass(frozen=True)
class CavityLockPlant:
    """Linearized cavity-plus-actuator model seen by the servo.

    ``r`` is the round-trip amplitude reflectivity that sets the
    resonance linewidth, ``fsr_hz`` the free spectral range,
    ``pzt_gain_hz_per_v`` the cavity detuning produced per volt of
    actuator drive, and ``polarizer_axis`` names the transmission axis
    of the intracavity polarizer (the Brewster-cut crystal transmits
    p).  An optional :class:`PztResonance` models actuator dynamics.
    """

    r: float
    fsr_hz: float
    pzt_gain_hz_per_v: float
    polarizer_axis: str = "p"
    pzt_resonance: PztResonance | None = None

    def __post_init__(self):
        if not 0.0 < self.r < 1.0:
            raise ConfigInvalid("amplitude reflectivity must lie in (0, 1)")
        if self.fsr_hz <= 0:
            raise ConfigInvalid("free spectral range must be positive")
        if self.pzt_gain_hz_per_v == 0:
            raise ConfigInvalid("actuator gain must be nonzero")

    @staticmethod
    def from_cavity(t1: float, l_passive: float, fsr_hz: float,
                    pzt_gain_hz_per_v: float,
                    pzt_resonance: PztResonance | None = None
                    ) -> "CavityLockPlant":
        """Build the plant from the coupler transmission and the
        remaining round-trip loss: r = sqrt((1-T1)(1-L))."""
        if not 0 < t1 < 1 or not 0 <= l_passive < 1:
            raise ConfigInvalid("need 0 < T1 < 1 and 0 <= L < 1")
        r = math.sqrt((1.0 - t1) * (1.0 - l_passive))
        return CavityLockPlant(r=r, fsr_hz=fsr_hz,
                               pzt_gain_hz_per_v=pzt_gain_hz_per_v,
                               pzt_resonance=pzt_resonance)


@dataclass(frozen=True)
class ServoConfig:
    """Discrete proportional-integral controller settings.

    ``ki`` multiplies the running time integral of the error (units
    1/s relative to ``kp``), so the continuous-time design formulas
    apply directly at sample rates well above the loop bandwidth.
    """

    kp: float
    ki: float
    sample_rate_hz: float
    output_limits_v: tuple
    target_bandwidth_hz: float

    def __post_init__(self):
        if self.sample_rate_hz < 20.0 * self.target_bandwidth_hz:
            raise ConfigInvalid(
                "sample rate must be at least 20x the target bandwidth"
            )
        lo, hi = self.output_limits_v
        if not lo < hi:
            raise ConfigInvalid("output limits must satisfy lo < hi")


class LockState(enum.IntEnum):
    LOCKED = 0
    UNLOCKED = 1
    SCANNING = 2
    SETTLING = 3


@dataclass(frozen=True)
class LockAutomaton:
    """Supervisor that cycles Locked -> Unlocked -> Scanning ->
    Settling -> Locked, never skipping a stage.

    ``unlock_threshold`` and ``peak_threshold`` are fractions of the
    on-resonance transmission; the scan is a linear ramp spanning one
    free spectral range.
    """

    peak_threshold: float = 0.5
    unlock_threshold: float = 0.1
    scan_duration_s: float = 2e-3
    settle_duration_s: float = 5e-4

    def __post_init__(self):
        if not 0.0 < self.unlock_threshold < self.peak_threshold < 1.0:
            raise ConfigInvalid(
                "need 0 < unlock_threshold < peak_threshold < 1"
            )
        if self.scan_duration_s <= 0 or self.settle_duration_s <= 0:
            raise ConfigInvalid("durations must be positive")


@dataclass(frozen=True)
class LockTrace:
    """Sampled records of one simulation run plus the event log.

    ``events`` holds (time_s, name) pairs for: ``unlock``,
    ``scan_start``, ``scan_restart``, ``peak_found``, ``lock``.
    """

    time_s: np.ndarray
    detuning_hz: np.ndarray
    error: np.ndarray
    control_v: np.ndarray
    state: np.ndarray
    integrator: np.ndarray
    events: tuple = field(default_factory=tuple)

    def state_sequence(self) -> list:
        """Distinct consecutive states, in order of first occurrence."""
        seq = []
        for s in self.state:
            if not seq or seq[-1] != s:
                seq.append(int(s))
        return [LockState(s) for s in seq]


# --------------------------------------------------------------------
# error signal and static cavity response
# --------------------------------------------------------------------

def _raw_error(delta, r: float):
    half = np.sin(np.asarray(delta, dtype=float) / 2.0)
    return (r * np.sin(delta)
            / ((1.0 - r) ** 2 + 4.0 * r * half * half))


@functools.lru_cache(maxsize=64)
def _peak_location_and_value(r: float) -> tuple:
    """Detuning and value of the error-signal maximum on (0, pi).

    Found by a dense grid followed by golden-section refinement; the
    cached result also normalizes :func:`hc_error_signal`.
    """
    grid = np.linspace(1e-9, math.pi, 20001)
    vals = _raw_error(grid, r)
    i = int(np.argmax(vals))
    lo = grid[max(i - 1, 0)]
    hi = grid[min(i + 1, len(grid) - 1)]
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc = _raw_error(c, r)
    fd = _raw_error(d, r)
    for _ in range(200):
        if b - a < 1e-14:
            break
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = _raw_error(c, r)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = _raw_error(d, r)
    x = 0.5 * (a + b)
    return float(x), float(_raw_error(x, r))


def hc_error_signal(detuning_rad, plant: CavityLockPlant):
    """Polarization-analysis error signal, normalized to peak 1.

    Odd in the round-trip detuning, linear through resonance, with
    extrema that tighten toward resonance as the cavity sharpens.
    Accepts scalars or arrays.
    """
    _, peak = _peak_location_and_value(plant.r)
    out = _raw_error(detuning_rad, plant.r) / peak
    if np.isscalar(detuning_rad):
        return float(out)
    return out


def peak_detuning(plant: CavityLockPlant) -> float:
    """Detuning of the positive error-signal extremum."""
    loc, _ = _peak_location_and_value(plant.r)
    return loc


def cavity_transmission(detuning_rad, plant: CavityLockPlant):
    """Airy transmission normalized to 1 on resonance."""
    r = plant.r
    half = np.sin(np.asarray(detuning_rad, dtype=float) / 2.0)
    out = (1.0 - r) ** 2 / ((1.0 - r) ** 2 + 4.0 * r * half * half)
    if np.isscalar(detuning_rad):
        return float(out)
    return out


def error_slope_per_rad(plant: CavityLockPlant) -> float:
    """Slope of the normalized error signal at resonance (1/rad)."""
    _, peak = _peak_location_and_value(plant.r)
    return plant.r / (1.0 - plant.r) ** 2 / peak


def linewidth_fwhm_rad(plant: CavityLockPlant) -> float:
    """Full width at half maximum of the transmission, in round-trip
    phase: 4*asin((1-r)/(2*sqrt(r)))."""
    r = plant.r
    return 4.0 * math.asin((1.0 - r) / (2.0 * math.sqrt(r)))


# --------------------------------------------------------------------
# gain design
# --------------------------------------------------------------------

_LOOP_DELAY_SAMPLES = 1.5   # one sample of computation plus half for hold
_KI_OVER_KP_WC = 2.0        # integral corner one octave above crossover


def _static_loop_gain(plant: CavityLockPlant) -> float:
    """Error-signal change per actuator volt at resonance."""
    return (error_slope_per_rad(plant) * 2.0 * math.pi
            * plant.pzt_gain_hz_per_v / plant.fsr_hz)


def tune_gains(plant: CavityLockPlant, target_bandwidth_hz: float,
               sample_rate_hz: float | None = None) -> ServoConfig:
    """Proportional-integral gains for a unity-gain crossover at the
    requested bandwidth with at least 45 degrees of phase margin.

    The integral corner sits an octave above crossover scaled into the
    proportional term (ki = 2*wc*kp), which puts the high-frequency
    loop gain 7 dB below unity and keeps the crossover unique.  The
    phase budget charges the actuator resonance and a fixed
    1.5-sample loop delay.
    """
    if target_bandwidth_hz <= 0:
        raise ConfigInvalid("target bandwidth must be positive")
    if sample_rate_hz is None:
        sample_rate_hz = 20.0 * target_bandwidth_hz
    if sample_rate_hz < 20.0 * target_bandwidth_hz:
        raise ConfigInvalid(
            "sample rate must be at least 20x the target bandwidth"
        )
    resonance = plant.pzt_resonance
    if resonance is not None and resonance.f0_hz <= target_bandwidth_hz:
        raise Unachievable(
            "actuator resonance at or below the target bandwidth"
        )
    wc = 2.0 * math.pi * target_bandwidth_hz
    act = (resonance.response(target_bandwidth_hz)
           if resonance is not None else 1.0 + 0.0j)
    g0 = _static_loop_gain(plant)
    pi_mag = math.sqrt(1.0 + _KI_OVER_KP_WC ** 2)
    kp = 1.0 / (pi_mag * abs(g0) * abs(act))
    kp = math.copysign(kp, g0)
    ki = _KI_OVER_KP_WC * wc * kp

    phase = (-math.atan(_KI_OVER_KP_WC)
             + cmath.phase(act)
             - _LOOP_DELAY_SAMPLES * wc / sample_rate_hz)
    margin_deg = 180.0 + math.degrees(phase)
    if margin_deg < 45.0:
        raise Unachievable(
            f"phase margin {margin_deg:.1f} deg below 45 deg at "
            f"{target_bandwidth_hz:.0f} Hz"
        )
    if resonance is not None:
        # A plain proportional-integral loop has a high-frequency gain
        # floor of kp, so the actuator peak lifts the loop gain back
        # toward unity near f0; insist on 6 dB of gain margin there.
        w0 = 2.0 * math.pi * resonance.f0_hz
        peak_gain = (abs(kp + ki / (1j * w0)) * abs(g0)
                     * abs(resonance.response(resonance.f0_hz)))
        if peak_gain > 0.5:
            raise Unachievable(
                f"loop gain {peak_gain:.2f} at the {resonance.f0_hz:.0f} Hz "
                "actuator resonance leaves less than 6 dB gain margin"
            )
    swing = 1.2 * plant.fsr_hz / abs(plant.pzt_gain_hz_per_v)
    return ServoConfig(
        kp=kp,
        ki=ki,
        sample_rate_hz=sample_rate_hz,
        output_limits_v=(-swing, swing),
        target_bandwidth_hz=target_bandwidth_hz,
    )


def loop_transfer(plant: CavityLockPlant, servo: ServoConfig,
                  f_hz: float) -> complex:
    """Open-loop transfer at ``f_hz`` of the linearized servo loop,
    including the actuator model and the fixed loop delay."""
    if f_hz <= 0:
        raise ValueError("frequency must be positive")
    w = 2.0 * math.pi * f_hz
    pi_term = servo.kp + servo.ki / (1j * w)
    act = (plant.pzt_resonance.response(f_hz)
           if plant.pzt_resonance is not None else 1.0)
    delay = cmath.exp(-1j * _LOOP_DELAY_SAMPLES * w / servo.sample_rate_hz)
    return pi_term * _static_loop_gain(plant) * act * delay


# --------------------------------------------------------------------
# time-domain simulation
# --------------------------------------------------------------------

def noise_series(seed: int, n_samples: int, rms_hz: float,
                 sample_rate_hz: float,
                 corner_hz: float = 1e3) -> np.ndarray:
    """Deterministic low-pass-filtered Gaussian detuning noise.

    One-pole filtering of white noise gives the drift-like spectrum of
    acoustic cavity-length disturbances; identical seeds reproduce the
    series bit for bit.
    """
    if n_samples < 1:
        raise ConfigInvalid("need at least one sample")
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(n_samples)
    alpha = math.exp(-2.0 * math.pi * corner_hz / sample_rate_hz)
    out = np.empty(n_samples)
    acc = 0.0
    for i in range(n_samples):
        acc = alpha * acc + (1.0 - alpha) * white[i]
        out[i] = acc
    scale = np.sqrt(np.mean(out * out))
    if scale > 0:
        out *= rms_hz / scale
    return out


class _Biquad:
    """Bilinear-transform discretization of the actuator resonance."""

    def __init__(self, resonance: PztResonance, sample_rate_hz: float):
        w0 = 2.0 * math.pi * resonance.f0_hz / sample_rate_hz
        # frequency pre-warp keeps the resonance where it belongs
        w0 = 2.0 * math.tan(w0 / 2.0)
        q = resonance.q
        a0 = 4.0 + 2.0 * w0 / q + w0 * w0
        self.b = (w0 * w0 / a0, 2.0 * w0 * w0 / a0, w0 * w0 / a0)
        self.a = ((2.0 * w0 * w0 - 8.0) / a0,
                  (4.0 - 2.0 * w0 / q + w0 * w0) / a0)
        self.x1 = self.x2 = self.y1 = self.y2 = 0.0

    def step(self, x: float) -> float:
        y = (self.b[0] * x + self.b[1] * self.x1 + self.b[2] * self.x2
             - self.a[0] * self.y1 - self.a[1] * self.y2)
        self.x2, self.x1 = self.x1, x
        self.y2, self.y1 = self.y1, y
        return y


def simulate_lock(plant: CavityLockPlant, servo: ServoConfig,
                  automaton: LockAutomaton,
                  disturbance_hz: np.ndarray,
                  duration_s: float | None = None,
                  initial_detuning_hz: float = 0.0,
                  initial_state: LockState = LockState.LOCKED
                  ) -> LockTrace:
    """Fixed-step closed-loop run of servo, actuator, and supervisor.

    Each sample applies the previous actuator command (one sample of
    computation delay), reads the error signal and the transmission,
    advances the automaton, and computes the next command:
    u = hold + kp*error + ki*integral while the servo is engaged, a
    linear ramp across one free spectral range while scanning.  The
    integrator is cleared at the moment scanning begins and stays
    cleared until the servo re-engages at the detected peak.
    """
    disturbance_hz = np.asarray(disturbance_hz, dtype=float)
    if disturbance_hz.ndim != 1 or disturbance_hz.size == 0:
        raise ConfigInvalid("disturbance must be a nonempty 1-D series")
    fs = servo.sample_rate_hz
    n = disturbance_hz.size
    if duration_s is not None:
        wanted = int(round(duration_s * fs))
        if wanted > n:
            raise ConfigInvalid(
                "disturbance series shorter than the requested duration"
            )
        n = wanted
    dt = 1.0 / fs
    scan_len = max(int(round(automaton.scan_duration_s * fs)), 2)
    settle_len = max(int(round(automaton.settle_duration_s * fs)), 1)
    lo, hi = servo.output_limits_v
    gain = plant.pzt_gain_hz_per_v
    span_v = plant.fsr_hz / abs(gain)

    filt = (_Biquad(plant.pzt_resonance, fs)
            if plant.pzt_resonance is not None else None)

    time_s = np.arange(n) * dt
    detuning = np.empty(n)
    error = np.empty(n)
    control = np.empty(n)
    state_arr = np.empty(n, dtype=np.int8)
    integ_arr = np.empty(n)
    events = []

    state = LockState(initial_state)
    acc = 0.0
    hold_v = 0.0
    v_cmd = 0.0
    scan_base = 0.0
    scan_idx = 0
    settle_idx = 0
    best_v = None
    best_t = -1.0

    for i in range(n):
        v_act = filt.step(v_cmd) if filt is not None else v_cmd
        delta_hz = initial_detuning_hz + disturbance_hz[i] - gain * v_act
        delta_rad = 2.0 * math.pi * delta_hz / plant.fsr_hz
        eps = hc_error_signal(delta_rad, plant)
        trans = cavity_transmission(delta_rad, plant)

        detuning[i] = delta_hz
        error[i] = eps
        state_arr[i] = int(state)

        if state == LockState.LOCKED:
            acc += eps * dt
            v_next = hold_v + servo.kp * eps + servo.ki * acc
            if trans < automaton.unlock_threshold:
                state = LockState.UNLOCKED
                events.append((time_s[i], "unlock"))
                v_next = v_cmd
        elif state == LockState.UNLOCKED:
            # one bookkeeping sample, then start the scan with a
            # cleared integrator
            acc = 0.0
            scan_base = v_cmd
            scan_idx = 0
            best_v, best_t = None, -1.0
            state = LockState.SCANNING
            events.append((time_s[i], "scan_start"))
            v_next = v_cmd
        elif state == LockState.SCANNING:
            frac = scan_idx / (scan_len - 1)
            v_next = scan_base + (frac - 0.5) * span_v
            if trans >= automaton.peak_threshold and trans > best_t:
                best_v, best_t = v_cmd, trans
            scan_idx += 1
            if scan_idx >= scan_len:
                if best_v is not None:
                    hold_v = best_v
                    settle_idx = 0
                    state = LockState.SETTLING
                    events.append((time_s[i], "peak_found"))
                    v_next = hold_v
                else:
                    scan_idx = 0
                    events.append((time_s[i], "scan_restart"))
        else:  # SETTLING: servo re-engaged at the peak position
            acc += eps * dt
            v_next = hold_v + servo.kp * eps + servo.ki * acc
            settle_idx += 1
            if settle_idx >= settle_len:
                state = LockState.LOCKED
                events.append((time_s[i], "lock"))

        integ_arr[i] = acc
        v_cmd = min(max(v_next, lo), hi)
        control[i] = v_cmd

    return LockTrace(
        time_s=time_s,
        detuning_hz=detuning,
        error=error,
        control_v=control,
        state=state_arr,
        integrator=integ_arr,
        events=tuple(events),
    )
