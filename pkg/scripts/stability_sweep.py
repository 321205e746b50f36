#!/usr/bin/env python3
"""Sweep the mirror-crystal spacing of both ring layouts and write the
per-plane stability margins to CSV.

The stable band is where both margins are below one; the optimizer
centers the design inside the overlap of the tangential and sagittal
windows.  Output goes to one CSV per layout plus a printed window
summary.
"""

import argparse
import os

import numpy as np

from freqconv import cavity as cav


def sweep(layout, lo_m, hi_m, points):
    values = np.linspace(lo_m, hi_m, points)
    return cav.stability_scan(layout, "d_mc_m", values)


def write_csv(path, scan):
    lines = ["d_mc_mm,stability_margin_tangential,stability_margin_sagittal"]
    for v, st, ss in zip(scan.values, scan.stability_t, scan.stability_s):
        lines.append(f"{v * 1e3:.9g},{st:.9g},{ss:.9g}")
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--min-mm", type=float, default=20.0)
    parser.add_argument("--max-mm", type=float, default=30.0)
    parser.add_argument("--points", type=int, default=501)
    args = parser.parse_args(argv)
    os.makedirs(args.out, exist_ok=True)

    for name, layout in (("long", cav.long_layout()),
                         ("short", cav.short_layout())):
        scan = sweep(layout, args.min_mm * 1e-3, args.max_mm * 1e-3,
                     args.points)
        path = os.path.join(args.out, f"stability_{name}.csv")
        write_csv(path, scan)
        print(f"{name} layout -> {path}")
        for lo, hi in scan.windows_both:
            center = 0.5 * (lo + hi)
            print(f"  stable window {lo * 1e3:.3f} to {hi * 1e3:.3f} mm "
                  f"(center {center * 1e3:.3f} mm, "
                  f"width {(hi - lo) * 1e3:.3f} mm)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
