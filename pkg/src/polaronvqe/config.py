"""Experiment configuration: flat-sectioned INI files with strict schemas.

Every key has a documented default; unknown sections or keys are rejected.
Value syntax: scalars, comma lists (``1,2,3``), and range sweeps
``start:stop:count`` (inclusive, linearly spaced).
"""

from __future__ import annotations

import configparser
import hashlib
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def _parse_float_list(text: str) -> list[float]:
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ConfigError(f"range sweep must be start:stop:count, got {text!r}")
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ConfigError("sweep count must be >= 1")
        return [float(x) for x in np.linspace(start, stop, count)]
    return [float(x) for x in text.split(",") if x.strip() != ""]


def _parse_int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip() != ""]


_PARSERS = {
    "int": int,
    "float": float,
    "bool": _parse_bool,
    "str": str.strip,
    "floatlist": _parse_float_list,
    "intlist": _parse_int_list,
}

# section -> key -> (type, default as text, help)
SCHEMA: dict[str, dict[str, tuple[str, str, str]]] = {
    "model": {
        "n_atoms": ("int", "1", "number of two-level atoms N"),
        "n_modes": ("int", "1", "number of bosonic modes M"),
        "atom_freqs": ("floatlist", "1.0", "atom frequencies (broadcast if one value)"),
        "mode_freqs": ("floatlist", "1.0", "mode frequencies (broadcast if one value)"),
        "g_over_omega": ("floatlist", "0.0:1.0:11",
                         "uniform coupling sweep values, in units of mode_freqs[0]"),
    },
    "truncation": {
        "max_photons": ("intlist", "3", "per-mode photon cap (broadcast if one value)"),
        "reference_max_photons": ("intlist", "0",
                                  "reference truncation for exact energies; "
                                  "0 = automatic (60 single mode, 30 otherwise)"),
    },
    "ansatz": {
        "trotter_depths": ("intlist", "1,2,3", "uniform Trotter depths to run"),
        "per_photon_parameters": ("bool", "false",
                                  "independent angle per bond of each step"),
    },
    "optimizer": {
        "max_trials": ("int", "150", "SPSA iterations (one +/- pair each)"),
        "spsa_a": ("float", "0", "SPSA step scale; 0 calibrates from a probe"),
        "spsa_c": ("float", "0.1", "SPSA perturbation scale"),
        "alpha": ("float", "0.602", "step-schedule exponent"),
        "gamma": ("float", "0.101", "perturbation-schedule exponent"),
        "stability_offset": ("float", "-1", "schedule offset A; -1 = 0.1*max_trials"),
        "restarts": ("int", "3", "minimum number of optimization starts"),
        "refine_steps": ("int", "120", "coordinate-descent line searches after SPSA"),
        "shots": ("int", "0", "shots per measurement group; 0 = exact expectation"),
    },
    "noise": {
        "depolarizing": ("float", "0.004", "per-qubit depolarizing probability per gate"),
        "amp_damping": ("float", "0.003", "per-qubit amplitude-damping probability per gate"),
        "readout_p01": ("float", "0.02", "p(read 1 | prepared 0)"),
        "readout_p10": ("float", "0.05", "p(read 0 | prepared 1)"),
        "lambda_scales": ("floatlist", "0.1,1.0", "noise scale factors to sweep"),
        "seeds": ("int", "10", "number of seeds per (g, lambda) cell"),
        "mitigation": ("bool", "true", "apply readout mitigation"),
        "postselect": ("bool", "true", "postselect on the single-excitation subspace"),
    },
    "tomography": {
        "extent": ("float", "3.0", "grid covers Re, Im in [-extent, extent]"),
        "points": ("int", "41", "grid points per axis"),
        "trotter_depths": ("intlist", "2,4,8", "displacement Trotter depths"),
        "atom_labels": ("str", "z", "atom Pauli labels, one char per atom from 0xyz"),
        "source": ("str", "encoded", "state source: encoded | vqe"),
        "shots": ("int", "0", "shots per grid point; 0 = exact probabilities"),
        "vqe_depth": ("int", "3", "Trotter depth of the state-preparing circuit"),
        "error_radii": ("floatlist", "0.25:3.0:12", "disc radii for the error curve"),
    },
    "run": {
        "seed": ("int", "1234", "master seed"),
        "threads": ("int", "1", "worker threads for sweep points"),
    },
}


@dataclass
class ExperimentConfig:
    values: dict[str, dict[str, object]]
    text_hash: str

    def __getitem__(self, section: str) -> dict[str, object]:
        return self.values[section]

    def model_for(self, g: float):
        from .model import DickeModel
        sec = self.values["model"]
        n_atoms, n_modes = sec["n_atoms"], sec["n_modes"]
        atom_freqs = _broadcast(sec["atom_freqs"], n_atoms, "atom_freqs")
        mode_freqs = _broadcast(sec["mode_freqs"], n_modes, "mode_freqs")
        couplings = [[g * mode_freqs[0]] * n_modes for _ in range(n_atoms)]
        return DickeModel(n_atoms=n_atoms, n_modes=n_modes,
                          atom_freqs=tuple(atom_freqs),
                          mode_freqs=tuple(mode_freqs),
                          couplings=tuple(tuple(r) for r in couplings))

    def truncation(self):
        from .model import FockTruncation
        sec = self.values["truncation"]
        n_modes = self.values["model"]["n_modes"]
        return FockTruncation(tuple(_broadcast(sec["max_photons"], n_modes,
                                               "max_photons")))

    def reference_truncation(self):
        from .model import FockTruncation, default_reference_truncation
        sec = self.values["truncation"]
        n_modes = self.values["model"]["n_modes"]
        ref = sec["reference_max_photons"]
        if list(ref) == [0]:
            return default_reference_truncation(n_modes)
        return FockTruncation(tuple(_broadcast(ref, n_modes,
                                               "reference_max_photons")))

    def noise_model(self, scale: float):
        from .engine import NoiseModel
        sec = self.values["noise"]
        return NoiseModel(depolarizing=sec["depolarizing"],
                          amp_damping=sec["amp_damping"],
                          readout_p01=sec["readout_p01"],
                          readout_p10=sec["readout_p10"], scale=scale)


def _broadcast(values, count: int, name: str) -> list:
    values = list(values)
    if len(values) == 1:
        return values * count
    if len(values) != count:
        raise ConfigError(f"{name} needs 1 or {count} values, got {len(values)}")
    return values


def default_config_text() -> str:
    out = io.StringIO()
    for section, keys in SCHEMA.items():
        out.write(f"[{section}]\n")
        for key, (_type, default, doc) in keys.items():
            out.write(f"# {doc}\n{key} = {default}\n")
        out.write("\n")
    return out.getvalue()


def load_config(path: str | None = None, *, text: str | None = None,
                overrides: dict | None = None) -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        if text is None:
            with open(path, "r", encoding="utf-8") as fh:
                text = fh.read()
        parser.read_string(text)
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from exc

    values: dict[str, dict[str, object]] = {}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
    for section, keys in SCHEMA.items():
        values[section] = {}
        present = parser[section] if parser.has_section(section) else {}
        for key in present:
            if key not in keys:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
        for key, (type_name, default, _doc) in keys.items():
            raw = present.get(key, default)
            try:
                values[section][key] = _PARSERS[type_name](raw)
            except (ValueError, ConfigError) as exc:
                raise ConfigError(
                    f"bad value for {section}.{key}: {raw!r} ({exc})") from exc
    for section, kv in (overrides or {}).items():
        values[section].update(kv)

    canonical = "\n".join(f"{s}.{k}={values[s][k]!r}"
                          for s in sorted(values) for k in sorted(values[s]))
    digest = hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]
    cfg = ExperimentConfig(values=values, text_hash=digest)
    _validate(cfg)
    return cfg


def _validate(cfg: ExperimentConfig) -> None:
    model = cfg["model"]
    if model["n_atoms"] < 1 or model["n_modes"] < 1:
        raise ConfigError("n_atoms and n_modes must be >= 1")
    if any(g < 0 for g in model["g_over_omega"]):
        raise ConfigError("g_over_omega values must be >= 0")
    if any(d < 1 for d in cfg["ansatz"]["trotter_depths"]):
        raise ConfigError("trotter_depths must be >= 1")
    if cfg["optimizer"]["shots"] < 0 or cfg["optimizer"]["max_trials"] < 0:
        raise ConfigError("shots and max_trials must be >= 0")
    if cfg["tomography"]["source"] not in ("encoded", "vqe"):
        raise ConfigError("tomography.source must be 'encoded' or 'vqe'")
    labels = cfg["tomography"]["atom_labels"]
    if not set(labels) <= set("0xyz"):
        raise ConfigError("tomography.atom_labels must use characters from 0xyz")
    if cfg["run"]["threads"] < 1:
        raise ConfigError("threads must be >= 1")
