"""Refractive-index models for the nonlinear crystals used here.

All numeric coefficients live in ``data/materials.cfg`` together with
their literature citations; this module only knows how to evaluate the
two fit forms that file declares ("eimerl" and "jundt") and how to
enforce the fitted validity ranges.  Wavelengths are vacuum wavelengths
in meters everywhere in this package; the fits internally convert to
microns because that is how the coefficients are published.
"""

from __future__ import annotations

import configparser
import functools
import hashlib
from dataclasses import dataclass
from importlib import resources

import numpy as np

__all__ = [
    "OutOfBandError",
    "SellmeierModel",
    "Material",
    "load_materials",
    "get_material",
    "refractive_index",
    "extraordinary_index_at_angle",
    "constants_sha256",
]

_DATA_PACKAGE = "freqconv.data"
_DATA_FILE = "materials.cfg"

_POLARIZATION_ALIASES = {
    "o": "ordinary",
    "ordinary": "ordinary",
    "e": "extraordinary",
    "extraordinary": "extraordinary",
}


class OutOfBandError(ValueError):
    """A wavelength or temperature fell outside a model's fitted range.

    Every fit bundled with the package has a resonance pole just below
    its fitted band, so extrapolation produces garbage; we refuse it
    outright instead of warning.
    """


def normalize_polarization(polarization: str) -> str:
    try:
        return _POLARIZATION_ALIASES[str(polarization).lower()]
    except KeyError:
        raise ValueError(
            f"unknown polarization {polarization!r}; use 'o'/'ordinary' "
            f"or 'e'/'extraordinary'"
        ) from None


@dataclass(frozen=True)
class SellmeierModel:
    """A single squared-index fit n^2(lambda[, T]).

    ``form`` selects the evaluator:

    * ``"eimerl"``: n^2 = a + b/(lam^2 - c) + d*lam^2, temperature
      independent (the thermo-optic coefficient of BBO is negligible at
      the accuracy targeted here).
    * ``"jundt"``: the ten-coefficient two-resonance thermo-optic form
      of Jundt, Opt. Lett. 22, 1553 (1997), which also hosts the
      Edwards-Lawrence ordinary-ray fit with its second resonance
      zeroed out.
    """

    form: str
    coeffs: dict

    @property
    def needs_temperature(self) -> bool:
        return self.form == "jundt"

    def squared_index(self, wavelength_m, temperature_c=None):
        lam = np.asarray(wavelength_m, dtype=float) * 1e6
        lam2 = lam * lam
        c = self.coeffs
        if self.form == "eimerl":
            return c["a"] + c["b"] / (lam2 - c["c"]) + c["d"] * lam2
        if self.form == "jundt":
            if temperature_c is None:
                raise ValueError(
                    "this Sellmeier model is thermo-optic; pass temperature_c"
                )
            t = np.asarray(temperature_c, dtype=float)
            f = (t - c["t_offset"]) * (t + c["t_shift"])
            res1 = (c["a2"] + c["b2"] * f) / (
                lam2 - (c["a3"] + c["b3"] * f) ** 2
            )
            res2 = (c["a4"] + c["b4"] * f) / (lam2 - c["a5"] ** 2)
            return c["a1"] + c["b1"] * f + res1 + res2 - c["a6"] * lam2
        raise ValueError(f"unknown Sellmeier form {self.form!r}")

    def index(self, wavelength_m, temperature_c=None):
        return np.sqrt(self.squared_index(wavelength_m, temperature_c))


@dataclass(frozen=True)
class Material:
    """A crystal entry from the constants file."""

    name: str
    band_m: tuple
    temperature_band_c: tuple | None
    models: dict
    nonlinear_pm_per_v: dict

    def model(self, polarization: str) -> SellmeierModel:
        pol = normalize_polarization(polarization)
        try:
            return self.models[pol]
        except KeyError:
            raise ValueError(f"{self.name} has no {pol} model") from None

    def check_band(self, wavelength_m, temperature_c=None) -> None:
        lam = np.asarray(wavelength_m, dtype=float)
        lo, hi = self.band_m
        if np.any(lam < lo) or np.any(lam > hi):
            bad = float(np.min(lam)) if np.any(lam < lo) else float(np.max(lam))
            raise OutOfBandError(
                f"wavelength {bad:.6g} m outside the {self.name} fit range "
                f"[{lo:.4g}, {hi:.4g}] m"
            )
        if temperature_c is not None and self.temperature_band_c is not None:
            t = np.asarray(temperature_c, dtype=float)
            tlo, thi = self.temperature_band_c
            if np.any(t < tlo) or np.any(t > thi):
                raise OutOfBandError(
                    f"temperature outside the {self.name} fit range "
                    f"[{tlo:g}, {thi:g}] C"
                )

    def index(self, wavelength_m, polarization, temperature_c=None):
        self.check_band(wavelength_m, temperature_c)
        out = self.model(polarization).index(wavelength_m, temperature_c)
        return float(out) if np.ndim(out) == 0 else out


def _parse_pair(text: str) -> tuple:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 2:
        raise ValueError(f"expected 'min, max', got {text!r}")
    return tuple(parts)


def _config_bytes(path=None) -> bytes:
    if path is not None:
        with open(path, "rb") as handle:
            return handle.read()
    return resources.files(_DATA_PACKAGE).joinpath(_DATA_FILE).read_bytes()


@functools.lru_cache(maxsize=8)
def constants_sha256(path=None) -> str:
    """Hex digest of the constants file (the bundled one by default, or
    the override at ``path``), recorded in CSV output so results can be
    traced to the exact coefficients that produced them."""
    return hashlib.sha256(_config_bytes(path)).hexdigest()


@functools.lru_cache(maxsize=8)
def load_materials(path=None) -> dict:
    parser = configparser.ConfigParser()
    parser.read_string(_config_bytes(path).decode("utf-8"))
    materials = {}
    for section in parser.sections():
        if "." in section:
            continue
        name = section
        lo_nm, hi_nm = _parse_pair(parser[section]["band_nm"])
        band_m = (lo_nm * 1e-9, hi_nm * 1e-9)
        temp_band = None
        if "temperature_c" in parser[section]:
            temp_band = _parse_pair(parser[section]["temperature_c"])
        models = {}
        for pol in ("ordinary", "extraordinary"):
            sub = f"{name}.{pol}"
            if parser.has_section(sub):
                raw = dict(parser[sub])
                form = raw.pop("form")
                coeffs = {k: float(v) for k, v in raw.items()}
                models[pol] = SellmeierModel(form=form, coeffs=coeffs)
        nonlinear = {}
        if parser.has_section(f"{name}.nonlinear"):
            nonlinear = {
                k: float(v) for k, v in parser[f"{name}.nonlinear"].items()
            }
        materials[name] = Material(
            name=name,
            band_m=band_m,
            temperature_band_c=temp_band,
            models=models,
            nonlinear_pm_per_v=nonlinear,
        )
    return materials


def get_material(name, path=None) -> Material:
    if isinstance(name, Material):
        return name
    materials = load_materials(path)
    try:
        return materials[str(name).lower()]
    except KeyError:
        known = ", ".join(sorted(materials))
        raise ValueError(f"unknown material {name!r}; known: {known}") from None


def refractive_index(material, wavelength_m, polarization, temperature_c=None):
    """Principal refractive index at a vacuum wavelength.

    ``material`` is a registry name ("bbo", "linbo3") or a Material.
    Thermo-optic models require ``temperature_c``; fixed-temperature
    models ignore it.  Raises OutOfBandError outside the fitted ranges.
    """
    return get_material(material).index(wavelength_m, polarization, temperature_c)


def extraordinary_index_at_angle(
    material, wavelength_m, angle_rad, temperature_c=None
):
    """Index of the extraordinary wave propagating at ``angle_rad`` from
    the optic axis of a uniaxial crystal.

    Index ellipse: 1/n(theta)^2 = cos^2(theta)/n_o^2 + sin^2(theta)/n_e^2.
    """
    mat = get_material(material)
    n_o = mat.index(wavelength_m, "ordinary", temperature_c)
    n_e = mat.index(wavelength_m, "extraordinary", temperature_c)
    cos2 = np.cos(angle_rad) ** 2
    sin2 = np.sin(angle_rad) ** 2
    out = 1.0 / np.sqrt(cos2 / (n_o * n_o) + sin2 / (n_e * n_e))
    return float(out) if np.ndim(out) == 0 else out
