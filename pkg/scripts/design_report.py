#!/usr/bin/env python3
"""Print the full design summary for the 626 nm -> 313 nm source.

Walks the whole chain in one run: crystal optics (indices, angles,
walk-off), optimal-focusing theory, both ring-resonator geometries,
the nonlinear buildup model at its calibrated operating point, the
harmonic output split, and the infrared-to-ultraviolet tuning anchors.
Every number printed here is covered by a test; this script exists so
the summary can be regenerated and eyeballed in one place.
"""

import argparse
import math

from freqconv import cavity as cav
from freqconv import dispersion as disp
from freqconv import focusing as fc
from freqconv import phasematch as ph
from freqconv.phasematch import SpectralLine


def section(title):
    print()
    print(title)
    print("-" * len(title))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rtol", type=float, default=1e-6,
                        help="quadrature tolerance for focusing factors")
    args = parser.parse_args(argv)

    red = SpectralLine(626.342e-9)
    pump = SpectralLine(1051.140e-9)
    signal = SpectralLine(1549.850e-9)
    bbo = disp.get_material("bbo")

    section("Infrared sum-frequency stage (PPLN)")
    line = ph.sum_wavelength(pump, signal)
    print(f"sum wavelength        : {line.wavelength_m * 1e9:.4f} nm")
    t_peak = ph.qpm_phasematch_temperature(pump, signal, 10.90e-6)
    curve = ph.temperature_acceptance(pump, signal, 10.90e-6, 0.040)
    print(f"phase-match T (10.90 um poling): {t_peak:.1f} C, "
          f"FWHM {curve.fwhm_c:.2f} C")
    prediction = fc.sfg_predict(pump, signal, 4.41, 4.11,
                                ph.CrystalSpec("linbo3", 0.040,
                                               ph.PolingSpec(10.90e-6),
                                               t_peak),
                                58e-6, 66e-6, rtol=args.rtol)
    print(f"focusing xi (pump/signal)      : {prediction.xi_pump:.2f} / "
          f"{prediction.xi_signal:.2f}")
    print(f"predicted efficiency           : {prediction.eta_si:.2f} /(W m) "
          f"vs 2.7 measured")
    p3, conv = fc.mixing_output_power(2.7, 0.040, 4.90 * 0.9, 4.57 * 0.9)
    print(f"output at measured efficiency  : {p3:.2f} W "
          f"({conv * 100:.1f}% conversion)")

    section("Doubling crystal (BBO, Brewster-cut)")
    n_o = disp.refractive_index(bbo, red.wavelength_m, "o")
    theta = ph.type1_phasematch_angle(bbo, red)
    rho = ph.walkoff_angle(bbo, theta, ph.second_harmonic(red))
    b = ph.walkoff_parameter_b(rho, 2 * math.pi * n_o / red.wavelength_m,
                               0.010)
    print(f"n_o(626.342 nm)      : {n_o:.5f}")
    print(f"Brewster angle       : {math.degrees(math.atan(n_o)):.2f} deg")
    print(f"type-I angle         : {math.degrees(theta):.2f} deg")
    print(f"walk-off             : {rho * 1e3:.1f} mrad  (B = {b:.2f})")
    n_sh = disp.refractive_index(bbo, 313.171e-9, "e")
    r_s = cav.brewster_sh_reflectance(n_sh, cav.internal_brewster_incidence(n_o))
    print(f"harmonic Brewster split: {r_s * 100:.1f}% reflected per face")

    section("Optimal focusing")
    bk0 = fc.bk_optimize(0.0, rtol=args.rtol)
    bk = fc.bk_optimize(16.4, rtol=args.rtol)
    ell = fc.elliptical_optimize(16.4, rtol=args.rtol)
    print(f"circular optimum, no walk-off : xi = {bk0.config.zeta_x:.2f}, "
          f"h = {bk0.h:.4f}")
    print(f"circular optimum, B = 16.4    : xi = {bk.config.zeta_x:.2f}, "
          f"h = {bk.h:.4f}")
    print(f"elliptical optimum, B = 16.4  : zeta_x = {ell.config.zeta_x:.2f},"
          f" zeta_y = {ell.config.zeta_y:.2f}, h = {ell.h:.4f} "
          f"({ell.h / bk.h:.2f}x circular)")

    section("Ring resonator layouts")
    ratio_inputs = []
    for name, layout in (("long arm 527.6 mm", cav.long_layout()),
                         ("short arm 290 mm", cav.short_layout())):
        eig = cav.solve_eigenmode(layout)
        cw, sw = eig.crystal_waists, eig.secondary_waists
        h = fc.sigma_optimized_h(eig.walkoff_b, eig.zeta_x, eig.zeta_y,
                                 rtol=args.rtol).h
        ratio_inputs.append(h)
        print(f"{name}:")
        print(f"  crystal waists   : {cw.w0_t * 1e6:.1f} / "
              f"{cw.w0_s * 1e6:.1f} um "
              f"(ellipticity {cw.w0_t / cw.w0_s:.2f})")
        print(f"  secondary waists : {sw.w0_t * 1e6:.1f} / "
              f"{sw.w0_s * 1e6:.1f} um")
        print(f"  focusing zeta    : {eig.zeta_x:.2f} / {eig.zeta_y:.2f}, "
              f"h = {h:.4f}")
    print(f"conversion factor short/long : {ratio_inputs[1] / ratio_inputs[0]:.3f}")

    opt = cav.optimize_layout(527.6e-3)
    print(f"optimizer at 527.6 mm arm    : full angle "
          f"{math.degrees(opt.layout.alpha_full_rad):.2f} deg, "
          f"mirror-crystal {opt.layout.d_mc_m * 1e3:.2f} mm")

    section("Resonant buildup at the calibrated operating point")
    calib = cav.calibrate_buildup()
    op = cav.buildup_solve(calib.p_operating_w, calib.t1, calib.l_passive,
                           calib.gamma_per_w, calib.r_brewster)
    print(f"passive loss / nonlinear gamma: {calib.l_passive:.5f} / "
          f"{calib.gamma_per_w:.3e} 1/W")
    print(f"circulating power at {calib.p_operating_w:.1f} W in : "
          f"{op.p_circ_w:.1f} W")
    print(f"main-beam output              : {op.p_sh_main_w * 1e3:.0f} mW "
          f"({op.conversion_main * 100:.1f}% main, "
          f"{op.conversion_total * 100:.1f}% total)")
    t1_match = cav.impedance_match_T1(calib.l_passive, calib.gamma_per_w,
                                      calib.p_match_w)
    print(f"impedance-matched coupling at {calib.p_match_w:.0f} W: "
          f"{t1_match * 100:.2f}%")

    section("Ultraviolet tuning")
    for nm in (626.119, 626.342, 626.445):
        uv = ph.second_harmonic(SpectralLine(nm * 1e-9))
        det = ph.uv_detuning(uv) / 1e9
        print(f"red {nm:.3f} nm -> UV {uv.wavelength_m * 1e9:.4f} nm, "
              f"detuning {det:+.1f} GHz")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
