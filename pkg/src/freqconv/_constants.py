"""Physical constants shared across the package (SI units)."""

C_LIGHT = 299792458.0        # vacuum speed of light, m/s
EPS0 = 8.8541878128e-12      # vacuum permittivity, F/m
