"""Experiment configuration: flat sectioned key=value files with unit
suffixes, parsed to SI base units and exposed as typed parameter objects.

User-facing frequencies are ordinary Hz; the typed views convert them to
the internal angular convention (rad/s).  The raw parsed values (base SI,
Hz for rates) are kept verbatim so a config -> report -> config round
trip reproduces the internal representation exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .constants import TWO_PI
from .errors import ConfigError, MimcoolError
from .feedback import AuxFilterStage, FeedbackFilter
from .params import (CouplingConfig, DetectionChain, MechanicalMode,
                     OpticalBeam, OpticalCavity)

# unit suffix -> (dimension, factor to base SI)
_UNITS = {
    "Hz": ("frequency", 1.0), "mHz": ("frequency", 1e-3),
    "kHz": ("frequency", 1e3), "MHz": ("frequency", 1e6),
    "GHz": ("frequency", 1e9),
    "s": ("time", 1.0), "ms": ("time", 1e-3), "us": ("time", 1e-6),
    "µs": ("time", 1e-6), "ns": ("time", 1e-9), "ps": ("time", 1e-12),
    "m": ("length", 1.0), "mm": ("length", 1e-3), "um": ("length", 1e-6),
    "µm": ("length", 1e-6), "nm": ("length", 1e-9), "pm": ("length", 1e-12),
    "fm": ("length", 1e-15),
    "kg": ("mass", 1.0), "g": ("mass", 1e-3), "mg": ("mass", 1e-6),
    "ug": ("mass", 1e-9), "µg": ("mass", 1e-9), "ng": ("mass", 1e-12),
    "pg": ("mass", 1e-15),
    "W": ("power", 1.0), "mW": ("power", 1e-3), "uW": ("power", 1e-6),
    "µW": ("power", 1e-6), "nW": ("power", 1e-9), "pW": ("power", 1e-12),
    "Pa": ("pressure", 1.0), "mbar": ("pressure", 1e2), "bar": ("pressure", 1e5),
    "K": ("temperature", 1.0),
}

# key kind -> accepted dimensions (besides dimensionless numbers)
_KIND_DIMENSION = {
    "frequency": "frequency",
    "time": "time",
    "length": "length",
    "mass": "mass",
    "power": "power",
    "pressure": "pressure",
    "temperature": "temperature",
    "number": None,
    "int": None,
}

# section -> {key: (kind, required, default)}; defaults in base SI units
SCHEMA = {
    "mechanical": {
        "omega_m": ("frequency", True, None),
        "gamma_m": ("frequency", True, None),
        "m_eff": ("mass", True, None),
        "temperature": ("temperature", False, 300.0),
    },
    "cavity": {
        "kappa": ("frequency", True, None),
        "length": ("length", True, None),
        "wavelength": ("length", True, None),
        "eta_c": ("number", False, 0.5),
        "t_f": ("number", False, None),
        "t_e": ("number", False, None),
    },
    "coupling": {
        "g0": ("frequency", False, 0.0),
        "membrane_reflectivity": ("number", False, 0.0),
        "overlap": ("number", False, 1.0),
    },
    "probe": {
        "power": ("power", True, None),
        "detuning": ("frequency", True, None),
        "g": ("frequency", False, 0.0),
    },
    "cooling": {
        "power": ("power", True, None),
        "detuning": ("frequency", True, None),
        "g": ("frequency", False, 0.0),
    },
    "detection": {
        "mode_matching": ("number", True, None),
        "fiber_loss": ("number", True, None),
        "visibility": ("number", True, None),
        "quantum_efficiency": ("number", True, None),
        "overcoupling": ("number", False, None),  # defaults to cavity eta_c
    },
    "filter": {
        "gain": ("number", False, 1.0),
        "center": ("frequency", True, None),
        "bandwidth": ("frequency", True, None),
        "delay": ("time", False, 0.0),
        "phase": ("number", False, None),  # None -> tuned to pi/2 at resonance
        "aux_center": ("frequency", False, None),
        "aux_bandwidth": ("frequency", False, None),
        "aux_gain": ("number", False, None),
        "aux_phase": ("number", False, 0.0),
    },
    "noise": {
        "laser_freq_asd": ("frequency", False, 0.0),  # Hz/sqrt(Hz)
        "mirror_noise": ("number", False, 0.0),       # m^2/Hz
        "n_imp_excess": ("number", False, None),      # quanta (bare-mode units)
    },
    "simulation": {
        "n_th": ("number", False, 1e4),
        "gamma_tot": ("frequency", False, 100.0),
        "n_imp": ("number", False, 0.25),
        "sample_rate": ("frequency", False, 30e6),
        "duration": ("time", False, 0.2),
        "seed": ("int", False, 1234),
        "gain": ("number", False, 10.0),
    },
}

_REQUIRED_SECTIONS = ("mechanical", "cavity")

_BASE_UNIT = {"frequency": "Hz", "time": "s", "length": "m", "mass": "kg",
              "power": "W", "pressure": "Pa", "temperature": "K",
              "number": "", "int": ""}


def parse_quantity(text, kind, path=None, line=None) -> float:
    """Parse 'number [unit]' to the kind's base SI unit."""
    parts = text.split()
    if not parts or len(parts) > 2:
        raise ConfigError(f"cannot parse value {text!r}", path, line)
    try:
        value = float(parts[0])
    except ValueError:
        raise ConfigError(f"not a number: {parts[0]!r}", path, line) from None
    if len(parts) == 1:
        return value
    unit = parts[1]
    if unit not in _UNITS:
        raise ConfigError(f"unknown unit suffix {unit!r}", path, line)
    dimension, factor = _UNITS[unit]
    expected = _KIND_DIMENSION[kind]
    if expected is None:
        raise ConfigError(
            f"key takes a plain number, got unit {unit!r}", path, line)
    if dimension != expected:
        raise ConfigError(
            f"expected a {expected} unit, got {unit!r} ({dimension})", path, line)
    return value * factor


def _parse_flat(text, path=None):
    """Parse the sectioned key=value text into {section: {key: (raw, line)}}."""
    sections = {}
    current = None
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip()
            if current not in SCHEMA:
                raise ConfigError(f"unknown section [{current}]", path, lineno)
            sections.setdefault(current, {})
            continue
        if current is None:
            raise ConfigError("key outside of any [section]", path, lineno)
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", path, lineno)
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in SCHEMA[current]:
            raise ConfigError(f"unknown key {key!r} in [{current}]", path, lineno)
        if key in sections[current]:
            raise ConfigError(f"duplicate key {key!r}", path, lineno)
        sections[current][key] = (value.strip(), lineno)
    return sections


@dataclass
class ExperimentConfig:
    """Validated configuration; ``raw`` holds base-SI values per section."""

    raw: dict
    path: str | None = None
    provenance: dict = field(default_factory=dict)  # key -> "user" | "default"

    def __post_init__(self):
        self.validate()

    # -- typed views --------------------------------------------------------

    def get(self, section, key):
        return self.raw[section][key]

    @property
    def mechanical(self) -> MechanicalMode:
        m = self.raw["mechanical"]
        return MechanicalMode(omega_m=TWO_PI * m["omega_m"],
                              gamma_m=TWO_PI * m["gamma_m"],
                              m_eff=m["m_eff"], temperature=m["temperature"])

    @property
    def cavity(self) -> OpticalCavity:
        c = self.raw["cavity"]
        return OpticalCavity(kappa=TWO_PI * c["kappa"], length=c["length"],
                             wavelength=c["wavelength"], eta_c=c["eta_c"],
                             t_f=c["t_f"], t_e=c["t_e"])

    @property
    def coupling(self) -> CouplingConfig:
        c = self.raw.get("coupling", {})
        return CouplingConfig(
            g0=TWO_PI * c.get("g0", 0.0),
            membrane_reflectivity=c.get("membrane_reflectivity", 0.0),
            overlap=c.get("overlap", 1.0))

    def _beam(self, section) -> OpticalBeam | None:
        if section not in self.raw:
            return None
        b = self.raw[section]
        return OpticalBeam(power_in=b["power"], detuning=TWO_PI * b["detuning"],
                           g=TWO_PI * b["g"], label=section)

    @property
    def probe(self) -> OpticalBeam | None:
        return self._beam("probe")

    @property
    def cooling(self) -> OpticalBeam | None:
        return self._beam("cooling")

    @property
    def detection(self) -> DetectionChain | None:
        if "detection" not in self.raw:
            return None
        d = self.raw["detection"]
        overcoupling = d["overcoupling"]
        if overcoupling is None:
            overcoupling = self.raw["cavity"]["eta_c"]
        return DetectionChain(mode_matching=d["mode_matching"],
                              overcoupling=overcoupling,
                              fiber_loss=d["fiber_loss"],
                              visibility=d["visibility"],
                              quantum_efficiency=d["quantum_efficiency"])

    @property
    def feedback_filter(self) -> FeedbackFilter | None:
        if "filter" not in self.raw:
            return None
        f = self.raw["filter"]
        aux = ()
        if f["aux_center"] is not None:
            aux = (AuxFilterStage(center=TWO_PI * f["aux_center"],
                                  bandwidth=TWO_PI * f["aux_bandwidth"],
                                  gain=f["aux_gain"] or 0.0,
                                  phase=f["aux_phase"]),)
        return FeedbackFilter(gain=f["gain"],
                              phase_offset=f["phase"] or 0.0,
                              delay=f["delay"],
                              main_center=TWO_PI * f["center"],
                              main_bandwidth=TWO_PI * f["bandwidth"],
                              aux_stages=aux)

    @property
    def filter_phase_is_auto(self) -> bool:
        return "filter" in self.raw and self.raw["filter"]["phase"] is None

    @property
    def noise(self) -> dict:
        n = self.raw.get("noise", {})
        asd = n.get("laser_freq_asd", 0.0)
        return {
            "s_omega_omega": (TWO_PI * asd) ** 2,   # (rad/s)^2/Hz
            "s_xx_mirror": n.get("mirror_noise", 0.0),
            "n_imp_excess": n.get("n_imp_excess", None),
        }

    @property
    def simulation(self) -> dict:
        s = dict(self.raw.get("simulation", {}))
        defaults = {k: v for k, (_, _, v) in SCHEMA["simulation"].items()}
        for k, v in defaults.items():
            s.setdefault(k, v)
        s["gamma_tot"] = TWO_PI * s["gamma_tot"]
        s["seed"] = int(s["seed"])
        return s

    # -- validation and round trip ------------------------------------------

    def validate(self):
        for section in _REQUIRED_SECTIONS:
            if section not in self.raw:
                raise ConfigError(f"missing required section [{section}]", self.path)
        for section, keys in self.raw.items():
            if section not in SCHEMA:
                raise ConfigError(f"unknown section [{section}]", self.path)
            for key, (kind, required, default) in SCHEMA[section].items():
                if key not in keys:
                    if required:
                        raise ConfigError(
                            f"missing required key {key!r} in [{section}]", self.path)
                    keys[key] = default
                elif kind == "int" and keys[key] is not None:
                    keys[key] = int(keys[key])
        # cross-checks: building every typed view runs the domain invariants
        try:
            _ = self.mechanical, self.cavity, self.coupling
            _ = self.probe, self.cooling, self.detection, self.feedback_filter
        except MimcoolError as exc:
            raise ConfigError(f"invalid parameters: {exc}", self.path) from exc

    def to_base_dict(self) -> dict:
        """Raw base-SI values (Hz for rates), JSON-ready, losslessly reloadable."""
        return {section: {k: v for k, v in sorted(keys.items())}
                for section, keys in sorted(self.raw.items())}

    def to_text(self) -> str:
        lines = []
        for section in SCHEMA:
            if section not in self.raw:
                continue
            lines.append(f"[{section}]")
            for key, (kind, _, _) in SCHEMA[section].items():
                value = self.raw[section].get(key)
                if value is None:
                    continue
                unit = _BASE_UNIT[kind]
                lines.append(f"{key} = {value!r} {unit}".rstrip())
            lines.append("")
        return "\n".join(lines)


def load_config_text(text, path=None) -> ExperimentConfig:
    parsed = _parse_flat(text, path)
    raw = {}
    provenance = {}
    for section, keys in parsed.items():
        raw[section] = {}
        for key, (value_text, lineno) in keys.items():
            kind = SCHEMA[section][key][0]
            raw[section][key] = parse_quantity(value_text, kind, path, lineno)
            provenance[f"{section}.{key}"] = "user"
    return ExperimentConfig(raw=raw, path=path, provenance=provenance)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return load_config_text(fh.read(), path=str(path))


def load_config_dict(data: dict) -> ExperimentConfig:
    """Rebuild a config from a report echo (`to_base_dict` output)."""
    raw = {section: dict(keys) for section, keys in data.items()}
    return ExperimentConfig(raw=raw)
