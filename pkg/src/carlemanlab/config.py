"""Run configuration: INI files with environment and command-line overrides.

A config file has sections ``background``, ``mode``, ``reparam``, ``grid``,
``sweep``, ``tolerances``, ``geometry``, ``pseudoconvexity``, ``carleman``,
``kerr``, ``vanishing``, ``output`` and ``run``. Every key has a default, so
an empty file is valid. ``CARLEMANLAB_<SECTION>_<KEY>`` environment variables
override file values, and command-line flags override both.
"""

import configparser
import os
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .foliation import F1, F2
from .geometry import DEFAULT_PARAMS, FAMILIES, MASSIVE, PICTURES, MetricSpec
from .kerr import KerrParams
from .modes import PositiveMass, ZeroMass

ENV_PREFIX = "CARLEMANLAB_"

DEFAULTS = {
    "background": {"family": "Minkowski", "n": "3", "picture": "physical", "warp": "K"},
    "mode": {"kind": "auto", "eps": "1.0", "m_min": "1.0"},
    "reparam": {"kind": "F1", "p": "0.1", "q": "0.6666666666666666"},
    "grid": {
        "f_min": "1e-3",
        "f_max": "1e-1",
        "f_count": "4",
        "sigma_min": "-1.0",
        "sigma_max": "1.0",
        "sigma_count": "3",
        "polar": "0.12,0.7,1.9",
        "azimuth": "0.3",
    },
    "sweep": {"lambdas": "20,40,80,160"},
    "tolerances": {
        "fd_error": "1e-8",
        "christoffel": "1e-6",
        "hessian": "1e-6",
        "closed_form": "1e-8",
        "reduction": "1e-12",
        "exponent": "0.1",
        "refinement": "0.01",
        "kerr_order": "0.15",
        "vanishing_order": "0.1",
        "box_residual": "1e-6",
    },
    "geometry": {"step": "1e-4", "hessian_step": "1e-3", "random_fields": "3"},
    "pseudoconvexity": {"h": "auto", "ray_f_min": "1e-6", "ray_count": "40"},
    "carleman": {"picture": "inverted", "omega_prime": "1e-2", "sigma_half_width": "10.0"},
    "kerr": {"m": "1.0", "a": "0.5", "theta0": "1.0", "r_min": "1e2", "r_max": "1e4", "count": "24"},
    "vanishing": {"orders": "0,1,2,3"},
    "output": {"dir": "carlemanlab_out"},
    "run": {"seed": "0"},
}

_BACKGROUND_KEYS = ("family", "n", "picture", "warp")


def _floats(text, name):
    try:
        return [float(t) for t in str(text).split(",") if t.strip()]
    except ValueError as exc:
        raise ConfigError(f"{name}: expected a comma-separated list of numbers, got {text!r}") from exc


def parse_grid_spec(text):
    """Parse ``f=1e-3:1e-1:4,sigma=-1:1:3`` into ``grid`` section keys."""
    out = {}
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ConfigError(f"grid spec entry {part!r} is not key=lo:hi:count")
        key, val = (s.strip() for s in part.split("=", 1))
        if key not in ("f", "sigma"):
            raise ConfigError(f"grid spec key must be f or sigma, got {key!r}")
        bits = val.split(":")
        if len(bits) != 3:
            raise ConfigError(f"grid spec {part!r} needs lo:hi:count")
        out[f"{key}_min"], out[f"{key}_max"], out[f"{key}_count"] = bits
    return out


@dataclass
class RunConfig:
    """Resolved configuration as a section -> key -> string map with typed accessors."""

    sections: dict

    @classmethod
    def load(cls, path=None, env=None, overrides=None):
        """Defaults, then ``path``, then environment, then ``overrides`` (section -> dict)."""
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str.lower
        cp.read_dict(DEFAULTS)
        if path is not None:
            if not os.path.isfile(path):
                raise ConfigError(f"config file {path!r} not found")
            try:
                cp.read(path)
            except configparser.Error as exc:
                raise ConfigError(f"cannot parse {path!r}: {exc}") from exc
        env = os.environ if env is None else env
        for name, val in sorted(env.items()):
            if not name.startswith(ENV_PREFIX):
                continue
            rest = name[len(ENV_PREFIX) :].lower()
            section = next((s for s in DEFAULTS if rest.startswith(s + "_")), None)
            if section is None:
                raise ConfigError(f"environment override {name} names no known section")
            cp.set(section, rest[len(section) + 1 :], val)
        for section, values in (overrides or {}).items():
            if not cp.has_section(section):
                cp.add_section(section)
            for key, val in values.items():
                cp.set(section, key, str(val))
        cfg = cls({s: dict(cp.items(s)) for s in cp.sections()})
        cfg.validate()
        return cfg

    def get(self, section, key):
        try:
            return self.sections[section][key]
        except KeyError as exc:
            raise ConfigError(f"missing config key [{section}] {key}") from exc

    def getfloat(self, section, key):
        val = self.get(section, key)
        try:
            return float(val)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: expected a number, got {val!r}") from exc

    def getint(self, section, key):
        val = self.get(section, key)
        try:
            return int(val)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key}: expected an integer, got {val!r}") from exc

    def getlist(self, section, key):
        return _floats(self.get(section, key), f"[{section}] {key}")

    def tolerance(self, key):
        return self.getfloat("tolerances", key)

    @property
    def seed(self):
        return self.getint("run", "seed")

    @property
    def out_dir(self):
        return self.get("output", "dir")

    def validate(self):
        family = self.get("background", "family")
        if family not in FAMILIES or family == "Custom":
            raise ConfigError(f"unknown background family {family!r}")
        if self.get("background", "picture") not in PICTURES:
            raise ConfigError(f"unknown picture {self.get('background', 'picture')!r}")
        unknown = set(self.sections["background"]) - set(_BACKGROUND_KEYS) - set(DEFAULT_PARAMS[family])
        if unknown:
            raise ConfigError(f"unknown parameters {sorted(unknown)} for {family}")
        for key in self.sections["tolerances"]:
            if not self.tolerance(key) > 0:
                raise ConfigError(f"tolerance {key} must be positive")
        if self.get("mode", "kind") not in ("auto", "zero-mass", "positive-mass"):
            raise ConfigError(f"unknown mode kind {self.get('mode', 'kind')!r}")
        if self.get("reparam", "kind") not in ("F1", "F2"):
            raise ConfigError(f"unknown reparametrization {self.get('reparam', 'kind')!r}")
        if not self.lambdas or any(lam <= 0 for lam in self.lambdas):
            raise ConfigError("lambda sweep needs positive values")
        for key in ("f_count", "sigma_count"):
            if self.getint("grid", key) < 1:
                raise ConfigError(f"[grid] {key} must be at least 1")
        fmin, fmax = self.getfloat("grid", "f_min"), self.getfloat("grid", "f_max")
        if not 0 < fmin <= fmax < 1:
            raise ConfigError("grid needs 0 < f_min <= f_max < 1")

    # -- typed objects ----------------------------------------------------------------

    @property
    def family(self):
        return self.get("background", "family")

    @property
    def n(self):
        return self.getint("background", "n")

    def background_params(self):
        return {
            k: self.getfloat("background", k) for k in self.sections["background"] if k not in _BACKGROUND_KEYS
        }

    def mode(self):
        kind = self.get("mode", "kind")
        if kind == "auto":
            kind = "positive-mass" if self.family in MASSIVE else "zero-mass"
        if kind == "zero-mass":
            return ZeroMass(self.getfloat("mode", "eps"))
        return PositiveMass(self.getfloat("mode", "m_min"))

    def metric_spec(self, picture=None):
        picture = picture or self.get("background", "picture")
        mode = self.mode() if picture == "inverted" else None
        return MetricSpec.create(
            self.family, n=self.n, picture=picture, warp=self.get("background", "warp"), mode=mode,
            **self.background_params(),
        )

    def reparam(self):
        if self.get("reparam", "kind") == "F1":
            return F1(self.getfloat("reparam", "p"))
        return F2(self.getfloat("reparam", "q"))

    @property
    def lambdas(self):
        return self.getlist("sweep", "lambdas")

    def kerr_params(self):
        return KerrParams(self.getfloat("kerr", "m"), self.getfloat("kerr", "a"))

    def kerr_radii(self):
        return np.geomspace(self.getfloat("kerr", "r_min"), self.getfloat("kerr", "r_max"), self.getint("kerr", "count"))

    def grid_axes(self):
        """``(f_values, sigma_values, angle_values)`` for ``modes.f_sigma_grid``."""
        f = np.geomspace(self.getfloat("grid", "f_min"), self.getfloat("grid", "f_max"), self.getint("grid", "f_count"))
        s = np.linspace(
            self.getfloat("grid", "sigma_min"), self.getfloat("grid", "sigma_max"), self.getint("grid", "sigma_count")
        )
        polar = np.asarray(self.getlist("grid", "polar"))
        azimuth = np.asarray(self.getlist("grid", "azimuth"))
        if np.any((polar <= 0) | (polar >= np.pi)):
            raise ConfigError("polar angles must lie in (0, pi)")
        angles = [polar] * (self.n - 2) + [azimuth]
        return f, s, angles

    def as_dict(self):
        return {s: dict(sorted(v.items())) for s, v in sorted(self.sections.items())}


__all__ = ["RunConfig", "DEFAULTS", "ENV_PREFIX", "parse_grid_spec"]
