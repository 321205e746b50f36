"""Command-line front end for the design toolkit.

Subcommands cover the principal design computations: principal
refractive indices, angle and quasi-phase-matching reports, the
sum-frequency transfer curve, ring-cavity eigenmode analysis and
optimization, the resonant-doubling transfer curve, wavelength-tuning
tables, and the lock-acquisition simulation.

Conventions shared by every command:

* settings come from an INI file (section per command, units suffixed
  in key names) plus a few direct flags;
* every emitted file starts with ``#`` provenance comments naming the
  tool version, the SHA-256 of the material-constants file, and the
  random seed, so a result can be traced to the exact coefficients
  that produced it;
* floats are printed with nine significant digits and files are
  written atomically (temporary file plus rename);
* identical configuration and seed give byte-identical output bodies.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical
failure, 4 physically infeasible or unstable request.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import sys
from dataclasses import dataclass

import numpy as np

from . import __version__
from . import beamline as bl
from . import cavity as cav
from . import dispersion as disp
from . import focusing as fc
from . import locksim as lk
from . import phasematch as ph
from .phasematch import SpectralLine

__all__ = ["main", "UsageError", "DesignRun"]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NUMERIC = 3
EXIT_INFEASIBLE = 4

# module errors that mean "the request has no physical solution"
_INFEASIBLE = (
    ph.NoPhaseMatch,
    ph.NoRoot,
    cav.Unstable,
    cav.Infeasible,
    cav.TotalInternalReflection,
    bl.Unreachable,
    lk.Unachievable,
    disp.OutOfBandError,
)
# module errors that mean "the numerics failed to converge"
_NUMERIC = (fc.QuadratureFailure, cav.NoConvergence, bl.NonPhysical)


class UsageError(ValueError):
    """Bad command line or configuration input."""


@dataclass(frozen=True)
class DesignRun:
    """Record of one command invocation: what ran, with which parsed
    inputs, which files it wrote, and the provenance lines embedded in
    each of them."""

    command: str
    inputs: dict
    outputs: tuple
    provenance: tuple


def _fmt(x) -> str:
    return f"{float(x):.9g}"


# --------------------------------------------------------------------
# configuration access
# --------------------------------------------------------------------

class _Section:
    """One INI section with error messages that name the missing key."""

    _REQUIRED = object()

    def __init__(self, parser: configparser.ConfigParser, name: str):
        self.name = name
        if not parser.has_section(name):
            raise UsageError(f"config is missing the [{name}] section")
        self._section = parser[name]

    def get(self, key: str, default=_REQUIRED) -> str:
        if key in self._section:
            return self._section[key]
        if default is self._REQUIRED:
            raise UsageError(
                f"missing config key '{key}' in section [{self.name}]"
            )
        return default

    def get_float(self, key: str, default=_REQUIRED) -> float:
        raw = self.get(key, default)
        if raw is None or isinstance(raw, float):
            return raw
        try:
            return float(raw)
        except ValueError:
            raise UsageError(
                f"config key '{key}' in [{self.name}] is not a number: {raw!r}"
            ) from None

    def get_int(self, key: str, default=_REQUIRED) -> int:
        raw = self.get(key, default)
        if raw is None or isinstance(raw, int):
            return raw
        try:
            return int(raw)
        except ValueError:
            raise UsageError(
                f"config key '{key}' in [{self.name}] is not an integer: {raw!r}"
            ) from None


def _load_config(args, section: str) -> _Section:
    if not args.config:
        raise UsageError(f"the {section} command needs --config FILE")
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    read = parser.read(args.config)
    if not read:
        raise UsageError(f"cannot read config file {args.config}")
    return _Section(parser, section)


# --------------------------------------------------------------------
# output plumbing
# --------------------------------------------------------------------

def _provenance(args, command: str) -> tuple:
    lines = [
        f"# freqconv {__version__}",
        f"# command: {command}",
        f"# constants sha256: {disp.constants_sha256(args.constants)}",
        f"# seed: {args.seed}",
    ]
    if getattr(args, "timestamp", False):
        import datetime

        stamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
        lines.append(f"# written: {stamp}")
    return tuple(lines)


def _write_atomic(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _emit_csv(path: str, provenance: tuple, columns: tuple, rows) -> None:
    lines = list(provenance)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    _write_atomic(path, "\n".join(lines) + "\n")


def _emit_report(path: str, provenance: tuple, pairs) -> None:
    lines = list(provenance)
    lines.extend(f"{key} = {_fmt(val)}" for key, val in pairs)
    _write_atomic(path, "\n".join(lines) + "\n")


def _print_pairs(pairs) -> None:
    for key, val in pairs:
        print(f"{key} = {_fmt(val)}")


def _out_path(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


# --------------------------------------------------------------------
# commands
# --------------------------------------------------------------------

def _cmd_index(args) -> DesignRun:
    material = disp.get_material(args.material, args.constants)
    n = disp.refractive_index(
        material, args.wavelength_nm * 1e-9, args.ray,
        temperature_c=args.temperature_c,
    )
    print(f"n = {_fmt(n)}")
    return DesignRun("index", vars(args).copy(), (), _provenance(args, "index"))


def _cmd_phasematch(args) -> DesignRun:
    cfg = _load_config(args, "phasematch")
    process = cfg.get("process")
    prov = _provenance(args, "phasematch")
    if process == "shg":
        material = disp.get_material(cfg.get("material", "bbo"), args.constants)
        lam = cfg.get_float("fundamental_nm") * 1e-9
        length = cfg.get_float("length_mm") * 1e-3
        line = SpectralLine(lam)
        theta = ph.type1_phasematch_angle(material, line)
        n_o = disp.refractive_index(material, lam, "o")
        rho = ph.walkoff_angle(material, theta, ph.second_harmonic(line))
        b = ph.walkoff_parameter_b(rho, 2 * math.pi * n_o / lam, length)
        pairs = [
            ("theta_pm_deg", math.degrees(theta)),
            ("brewster_deg", math.degrees(ph.brewster_angle(n_o))),
            ("walkoff_mrad", rho * 1e3),
            ("walkoff_parameter_b", b),
        ]
    elif process == "sfg":
        material = cfg.get("material", "linbo3")
        pump = SpectralLine(cfg.get_float("pump_nm") * 1e-9)
        signal = SpectralLine(cfg.get_float("signal_nm") * 1e-9)
        length = cfg.get_float("length_mm") * 1e-3
        period = cfg.get_float("poling_period_um", None)
        if period is not None:
            period *= 1e-6
            t_peak = ph.qpm_phasematch_temperature(pump, signal, period,
                                                   material)
        else:
            t_peak = cfg.get_float("temperature_c")
            period = _solve_qpm_period(pump, signal, t_peak, material)
        curve = ph.temperature_acceptance(pump, signal, period, length,
                                          material)
        pairs = [
            ("poling_period_um", period * 1e6),
            ("peak_temperature_c", t_peak),
            ("temperature_fwhm_c", curve.fwhm_c),
        ]
    else:
        raise UsageError(
            f"config key 'process' in [phasematch] must be shg or sfg, "
            f"got {process!r}"
        )
    _print_pairs(pairs)
    out = _out_path(args, "phasematch_report.txt")
    _emit_report(out, prov, pairs)
    return DesignRun("phasematch", {"process": process}, (out,), prov)


def _solve_qpm_period(pump, signal, temperature_c, material) -> float:
    """Poling period nulling the quasi-phase-matched mismatch at a
    given temperature.  The mismatch is monotone in the period (the
    grating term is -2*pi/period), so bisection is safe."""
    lo, hi = 3e-6, 60e-6
    f_lo = ph.qpm_mismatch(pump, signal, temperature_c, lo, material)
    f_hi = ph.qpm_mismatch(pump, signal, temperature_c, hi, material)
    if f_lo * f_hi > 0:
        raise ph.NoRoot(
            "no poling period between 3 and 60 um phase-matches at "
            f"{temperature_c:.1f} C"
        )
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        f_mid = ph.qpm_mismatch(pump, signal, temperature_c, mid, material)
        if f_lo * f_mid <= 0:
            hi, f_hi = mid, f_mid
        else:
            lo, f_lo = mid, f_mid
        if hi - lo < 1e-15:
            break
    return 0.5 * (lo + hi)


def _cmd_sfg_curve(args) -> DesignRun:
    cfg = _load_config(args, "sfg-curve")
    pump = SpectralLine(cfg.get_float("pump_nm") * 1e-9)
    signal = SpectralLine(cfg.get_float("signal_nm") * 1e-9)
    length = cfg.get_float("length_mm") * 1e-3
    mode = cfg.get("mode", "measured")
    if mode == "measured":
        eta = cfg.get_float("eta_measured_per_w_m", 2.7)
    elif mode == "predicted":
        crystal = ph.CrystalSpec(
            material=cfg.get("material", "linbo3"),
            length_m=length,
            cut=ph.PolingSpec(period_m=cfg.get_float("poling_period_um") * 1e-6),
            temperature_c=cfg.get_float("temperature_c"),
        )
        prediction = fc.sfg_predict(
            pump, signal, 1.0, 1.0, crystal,
            cfg.get_float("pump_waist_um") * 1e-6,
            cfg.get_float("signal_waist_um") * 1e-6,
        )
        eta = prediction.eta_si
    else:
        raise UsageError(
            f"config key 'mode' in [sfg-curve] must be measured or "
            f"predicted, got {mode!r}"
        )
    product_max = cfg.get_float("product_max_w2", 20.0)
    points = cfg.get_int("points", 41)
    rows = []
    for product in np.linspace(0.0, product_max, points):
        if product == 0.0:
            rows.append((0.0, 0.0))
            continue
        p_each = math.sqrt(product)
        p3, _ = fc.mixing_output_power(eta, length, p_each, p_each)
        rows.append((product, p3))
    prov = _provenance(args, "sfg-curve")
    out = _out_path(args, "sfg_curve.csv")
    _emit_csv(out, prov, ("p1p2_product_w2", "p_sum_w"), rows)
    _print_pairs([("eta_per_w_m", eta), ("slope_per_w", eta * length)])
    return DesignRun("sfg-curve", {"mode": mode, "eta": eta}, (out,), prov)


def _cavity_layout(cfg: _Section) -> cav.BowtieLayout:
    name = cfg.get("layout", "custom")
    if name == "long":
        return cav.long_layout()
    if name == "short":
        return cav.short_layout()
    if name != "custom":
        raise UsageError(
            f"config key 'layout' in [cavity] must be long, short or "
            f"custom, got {name!r}"
        )
    crystal = cav.bbo_brewster_crystal(
        length_m=cfg.get_float("crystal_length_mm", 10.0) * 1e-3,
        wavelength_m=cfg.get_float("wavelength_nm", 626.342) * 1e-9,
    )
    return cav.BowtieLayout(
        d_mc_m=cfg.get_float("d_mc_mm") * 1e-3,
        l_long_m=cfg.get_float("l_long_mm") * 1e-3,
        alpha_full_rad=math.radians(cfg.get_float("alpha_full_deg")),
        r_mirror_m=cfg.get_float("r_mirror_mm", 50.0) * 1e-3,
        crystal=crystal,
        wavelength_m=cfg.get_float("wavelength_nm", 626.342) * 1e-9,
    )


def _eigenmode_pairs(eig: cav.EigenmodeSolution) -> list:
    return [
        ("crystal_waist_tangential_um", eig.crystal_waists.w0_t * 1e6),
        ("crystal_waist_sagittal_um", eig.crystal_waists.w0_s * 1e6),
        ("secondary_waist_tangential_um", eig.secondary_waists.w0_t * 1e6),
        ("secondary_waist_sagittal_um", eig.secondary_waists.w0_s * 1e6),
        ("stability_margin_tangential", eig.stability_t),
        ("stability_margin_sagittal", eig.stability_s),
        ("zeta_x", eig.zeta_x),
        ("zeta_y", eig.zeta_y),
        ("walkoff_parameter_b", eig.walkoff_b),
    ]


def _cmd_cavity(args) -> DesignRun:
    cfg = _load_config(args, "cavity")
    prov = _provenance(args, "cavity")
    if args.action == "solve":
        layout = _cavity_layout(cfg)
        eig = cav.solve_eigenmode(layout)
        pairs = _eigenmode_pairs(eig)
        out = _out_path(args, "cavity_report.txt")
        _print_pairs(pairs)
        _emit_report(out, prov, pairs)
        return DesignRun("cavity solve", {"layout": cfg.get("layout", "custom")},
                         (out,), prov)
    if args.action == "design":
        result = cav.optimize_layout(
            l_long_m=cfg.get_float("l_long_mm") * 1e-3,
            r_mirror_m=cfg.get_float("r_mirror_mm", 50.0) * 1e-3,
            ellipticity_cap=cfg.get_float("ellipticity_cap", 1.01),
        )
        pairs = [
            ("alpha_full_deg", math.degrees(result.layout.alpha_full_rad)),
            ("d_mc_mm", result.layout.d_mc_m * 1e3),
            ("secondary_ellipticity", result.secondary_ellipticity),
            ("conversion_reduction_h", result.focus.h),
        ] + _eigenmode_pairs(result.eigenmode)
        out = _out_path(args, "cavity_design.txt")
        _print_pairs(pairs)
        _emit_report(out, prov, pairs)
        return DesignRun("cavity design", {"l_long_mm": cfg.get("l_long_mm")},
                         (out,), prov)
    if args.action == "sweep":
        layout = _cavity_layout(cfg)
        lo = cfg.get_float("sweep_min_mm") * 1e-3
        hi = cfg.get_float("sweep_max_mm") * 1e-3
        points = cfg.get_int("sweep_points", 201)
        values = np.linspace(lo, hi, points)
        scan = cav.stability_scan(layout, "d_mc_m", values)
        rows = [
            (v * 1e3, st, ss)
            for v, st, ss in zip(scan.values, scan.stability_t,
                                 scan.stability_s)
        ]
        out = _out_path(args, "cavity_sweep.csv")
        _emit_csv(out, prov,
                  ("d_mc_mm", "stability_margin_tangential",
                   "stability_margin_sagittal"), rows)
        for lo_w, hi_w in scan.windows_both:
            print(f"stable window: {_fmt(lo_w * 1e3)} mm to "
                  f"{_fmt(hi_w * 1e3)} mm")
        return DesignRun("cavity sweep", {"points": points}, (out,), prov)
    raise UsageError(f"unknown cavity action {args.action!r}")


def _cmd_shg_curve(args) -> DesignRun:
    cfg = _load_config(args, "shg-curve")
    calib = cav.calibrate_buildup(
        t1=cfg.get_float("t1", 0.016),
        conversion_main=cfg.get_float("conversion_main", 0.42),
        r_brewster=cfg.get_float("r_brewster", 0.16),
        p_match_w=cfg.get_float("p_match_w", 1.0),
        p_operating_w=cfg.get_float("p_operating_w", 1.8),
    )
    p_min = cfg.get_float("p_min_w", 0.001)
    p_max = cfg.get_float("p_max_w", 2.5)
    points = cfg.get_int("points", 60)
    spacing = cfg.get("spacing", "log")
    if spacing == "log":
        grid = np.geomspace(p_min, p_max, points)
    elif spacing == "linear":
        grid = np.linspace(p_min, p_max, points)
    else:
        raise UsageError(
            f"config key 'spacing' in [shg-curve] must be log or linear, "
            f"got {spacing!r}"
        )
    rows = []
    for p_in in grid:
        sol = cav.buildup_solve(p_in, calib.t1, calib.l_passive,
                                calib.gamma_per_w, calib.r_brewster)
        rows.append((p_in, sol.p_circ_w, sol.p_sh_main_w, sol.conversion_main))
    prov = _provenance(args, "shg-curve")
    out = _out_path(args, "shg_curve.csv")
    _emit_csv(out, prov,
              ("p_in_w", "p_circ_w", "p_sh_main_w", "conversion_main"), rows)
    _print_pairs([
        ("l_passive", calib.l_passive),
        ("gamma_per_w", calib.gamma_per_w),
    ])
    return DesignRun("shg-curve", {"t1": calib.t1}, (out,), prov)


def _cmd_tune(args) -> DesignRun:
    rows = []
    if args.pump_nm is not None or args.signal_nm is not None:
        if args.pump_nm is None or args.signal_nm is None:
            raise UsageError("tune needs both --pump-nm and --signal-nm")
        rows.append(ph.sum_wavelength(SpectralLine(args.pump_nm * 1e-9),
                                      SpectralLine(args.signal_nm * 1e-9)))
    for red in args.red_nm or ():
        rows.append(SpectralLine(red * 1e-9))
    if not rows:
        raise UsageError(
            "tune needs --pump-nm and --signal-nm, or at least one --red-nm"
        )
    print("lambda_sum_nm,lambda_uv_nm,detuning_ghz")
    table = []
    for line in rows:
        uv = ph.second_harmonic(line)
        det_ghz = ph.uv_detuning(uv) / 1e9
        table.append((line.wavelength_m * 1e9, uv.wavelength_m * 1e9, det_ghz))
        print(",".join(_fmt(v) for v in table[-1]))
    return DesignRun("tune", {"rows": len(table)}, (),
                     _provenance(args, "tune"))


def _cmd_locksim(args) -> DesignRun:
    cfg = _load_config(args, "locksim")
    resonance = None
    f0 = cfg.get_float("pzt_resonance_khz", None)
    if f0 is not None:
        resonance = lk.PztResonance(f0 * 1e3, cfg.get_float("pzt_q", 1.0))
    plant = lk.CavityLockPlant.from_cavity(
        t1=cfg.get_float("t1", 0.016),
        l_passive=cfg.get_float("l_passive", 0.00955575),
        fsr_hz=cfg.get_float("fsr_mhz") * 1e6,
        pzt_gain_hz_per_v=cfg.get_float("pzt_gain_mhz_per_v") * 1e6,
        pzt_resonance=resonance,
    )
    sample_rate = cfg.get_float("sample_rate_khz", None)
    servo = lk.tune_gains(
        plant,
        cfg.get_float("target_bandwidth_khz") * 1e3,
        sample_rate * 1e3 if sample_rate is not None else None,
    )
    automaton = lk.LockAutomaton(
        peak_threshold=cfg.get_float("peak_threshold", 0.5),
        unlock_threshold=cfg.get_float("unlock_threshold", 0.1),
        scan_duration_s=cfg.get_float("scan_ms", 2.0) * 1e-3,
        settle_duration_s=cfg.get_float("settle_ms", 0.5) * 1e-3,
    )
    n = int(round(cfg.get_float("duration_ms") * 1e-3 * servo.sample_rate_hz))
    if n < 1:
        raise UsageError("duration_ms too short for one sample")
    kind = cfg.get("disturbance", "noise")
    if kind == "noise":
        disturbance = lk.noise_series(
            args.seed, n, cfg.get_float("noise_rms_khz", 100.0) * 1e3,
            servo.sample_rate_hz, cfg.get_float("noise_corner_khz", 1.0) * 1e3)
    elif kind == "step":
        disturbance = np.zeros(n)
        start = int(round(cfg.get_float("step_time_ms", 0.2) * 1e-3
                          * servo.sample_rate_hz))
        disturbance[min(start, n):] = cfg.get_float("step_mhz") * 1e6
    elif kind == "sine":
        t = np.arange(n) / servo.sample_rate_hz
        disturbance = (cfg.get_float("sine_amplitude_khz") * 1e3
                       * np.sin(2 * math.pi
                                * cfg.get_float("sine_freq_khz") * 1e3 * t))
    else:
        raise UsageError(
            f"config key 'disturbance' in [locksim] must be noise, step "
            f"or sine, got {kind!r}"
        )
    trace = lk.simulate_lock(
        plant, servo, automaton, disturbance,
        initial_detuning_hz=cfg.get_float("initial_detuning_khz", 0.0) * 1e3,
    )
    prov = _provenance(args, "locksim")
    csv_path = _out_path(args, "locksim_trace.csv")
    rows = zip(trace.time_s, trace.detuning_hz, trace.error, trace.control_v,
               trace.state)
    _emit_csv(csv_path, prov, ("t", "delta", "error", "control", "state"),
              rows)
    log_path = _out_path(args, "locksim_events.log")
    log_lines = list(prov) + [
        f"{_fmt(t)} {name}" for t, name in trace.events
    ]
    _write_atomic(log_path, "\n".join(log_lines) + "\n")
    _print_pairs([
        ("kp", servo.kp),
        ("ki", servo.ki),
        ("final_detuning_hz", trace.detuning_hz[-1]),
        ("events", len(trace.events)),
    ])
    return DesignRun("locksim", {"disturbance": kind}, (csv_path, log_path),
                     prov)


# --------------------------------------------------------------------
# parser and dispatch
# --------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--seed", type=int, default=0,
                        help="seed for stochastic inputs")
    common.add_argument("--constants",
                        help="override material-constants file")
    common.add_argument("--timestamp", action="store_true",
                        help="embed a wall-clock timestamp in file headers")

    parser = argparse.ArgumentParser(
        prog="freqconv",
        description="design tools for cavity-enhanced frequency conversion",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("index", parents=[common],
                       help="principal refractive index")
    p.add_argument("--material", required=True)
    p.add_argument("--ray", required=True, choices=("o", "e"))
    p.add_argument("--wavelength-nm", type=float, required=True)
    p.add_argument("--temperature-c", type=float, default=None)
    p.set_defaults(handler=_cmd_index)

    p = sub.add_parser("phasematch", parents=[common],
                       help="angle or quasi-phase-matching report")
    p.set_defaults(handler=_cmd_phasematch)

    p = sub.add_parser("sfg-curve", parents=[common],
                       help="sum-frequency output versus power product")
    p.set_defaults(handler=_cmd_sfg_curve)

    p = sub.add_parser("cavity", parents=[common],
                       help="ring-cavity eigenmode, design, or sweep")
    p.add_argument("action", choices=("design", "solve", "sweep"))
    p.set_defaults(handler=_cmd_cavity)

    p = sub.add_parser("shg-curve", parents=[common],
                       help="resonant-doubling transfer curve")
    p.set_defaults(handler=_cmd_shg_curve)

    p = sub.add_parser("tune", parents=[common],
                       help="wavelength table against the reference line")
    p.add_argument("--pump-nm", type=float)
    p.add_argument("--signal-nm", type=float)
    p.add_argument("--red-nm", type=float, action="append")
    p.set_defaults(handler=_cmd_tune)

    p = sub.add_parser("locksim", parents=[common],
                       help="lock acquisition time-domain simulation")
    p.set_defaults(handler=_cmd_locksim)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        return int(code) if code is not None else EXIT_OK
    try:
        args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except _INFEASIBLE as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except _NUMERIC as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    raise SystemExit(main())
