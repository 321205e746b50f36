"""freqconv: design tools for cavity-enhanced nonlinear frequency conversion.

Submodules, roughly in dependency order:

* ``dispersion``   refractive-index models with strict validity ranges
* ``phasematch``   birefringent and quasi-phase-matching solvers
* ``focusing``     Boyd-Kleinman style focusing integrals, circular and
                   elliptical, and single-pass conversion predictions
* ``beamline``     astigmatic Gaussian beam propagation (reduced-ray
                   ABCD matrices) and mode-matching solvers
* ``cavity``       four-mirror ring resonator design: eigenmodes,
                   stability, power build-up, output correction
* ``locksim``      polarization-analysis lock error signal, servo gain
                   design, and a time-domain acquisition simulation
* ``cli``          command-line front end over all of the above
"""

__version__ = "0.1.0"

__all__ = [
    "dispersion",
    "phasematch",
    "focusing",
    "beamline",
    "cavity",
    "locksim",
    "cli",
]
