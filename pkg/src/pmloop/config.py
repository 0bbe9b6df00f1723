"""Experiment configuration with unit-suffixed keys.

Every physical quantity is stored under a key that names its unit
(``avg_power_uW``, ``coupling_loss_s_dB``, ...).  The helper methods convert
to the SI-valued dataclasses used by :mod:`pmloop.source` and
:mod:`pmloop.detection`.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .source import REFERENCE_PAIR_COEFF, LoopConfig, PumpConfig

__all__ = ["ConfigError", "ExperimentConfig", "db_to_linear", "preset_config"]


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key
        self.message = message


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


def _nonpositive(v):
    return v <= 0


def _nonnegative(v):
    return v >= 0


def _probability(v):
    return 0 <= v <= 1


def _positive(v):
    return v > 0


def _finite(v):
    return True


_RULES = {
    "avg_power_uW": (_nonnegative, "must be >= 0"),
    "rep_rate_MHz": (_positive, "must be > 0"),
    "pair_gen_coeff_per_W2": (_nonnegative, "must be >= 0"),
    "raman_rate_s_per_pulse": (_nonnegative, "must be >= 0"),
    "raman_rate_i_per_pulse": (_nonnegative, "must be >= 0"),
    "coupling_loss_s_dB": (_nonpositive, "must be <= 0 dB"),
    "coupling_loss_i_dB": (_nonpositive, "must be <= 0 dB"),
    "excess_loss_s_dB": (_nonpositive, "must be <= 0 dB"),
    "excess_loss_i_dB": (_nonpositive, "must be <= 0 dB"),
    "pdl_s_dB": (_nonpositive, "must be <= 0 dB"),
    "pdl_i_dB": (_nonpositive, "must be <= 0 dB"),
    "analyzer_loss_s_dB": (_nonpositive, "must be <= 0 dB"),
    "analyzer_loss_i_dB": (_nonpositive, "must be <= 0 dB"),
    "efficiency_s": (_probability, "must be in [0, 1]"),
    "efficiency_i": (_probability, "must be in [0, 1]"),
    "dark_count_s_per_gate": (_probability, "must be in [0, 1]"),
    "dark_count_i_per_gate": (_probability, "must be in [0, 1]"),
    "angle_error_bound_deg": (_nonnegative, "must be >= 0"),
    "gate_width_ns": (_positive, "must be > 0"),
}


@dataclass
class ExperimentConfig:
    """All physical parameters of one setup.

    ``pdl_*_dB`` is an extra loss on the V component ahead of each analyzer;
    ``excess_loss_*_dB`` is a polarization-independent arm loss used to match
    the observed coincidence rate.
    """

    avg_power_uW: float = 1.58
    rep_rate_MHz: float = 3.88
    pump_polarizer_deg: float = 90.0
    pump_qwp_deg: float = 0.0
    pump_hwp_deg: float = 67.5
    phi_b_rad: float = 0.24
    pair_gen_coeff_per_W2: float = REFERENCE_PAIR_COEFF
    raman_rate_s_per_pulse: float = 0.0
    raman_rate_i_per_pulse: float = 0.0
    coupling_loss_s_dB: float = -3.3
    coupling_loss_i_dB: float = -3.1
    excess_loss_s_dB: float = 0.0
    excess_loss_i_dB: float = 0.0
    pdl_s_dB: float = 0.0
    pdl_i_dB: float = 0.0
    analyzer_loss_s_dB: float = -0.8
    analyzer_loss_i_dB: float = -1.2
    efficiency_s: float = 0.218
    efficiency_i: float = 0.226
    dark_count_s_per_gate: float = 5.82e-5
    dark_count_i_per_gate: float = 4.60e-5
    angle_error_bound_deg: float = 3.0
    gate_width_ns: float = 2.5
    notes: dict = field(default_factory=dict)

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if f.name == "notes":
                if not isinstance(self.notes, dict):
                    raise ConfigError("notes", "must be an object")
                continue
            value = getattr(self, f.name)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ConfigError(f.name, f"expected a number, got {value!r}")
            if not math.isfinite(value):
                raise ConfigError(f.name, "must be finite")
            setattr(self, f.name, float(value))
            rule, msg = _RULES.get(f.name, (_finite, ""))
            if not rule(value):
                raise ConfigError(f.name, f"{msg} (got {value!r})")

    # SI views -----------------------------------------------------------

    @property
    def rep_rate(self) -> float:
        return self.rep_rate_MHz * 1e6

    @property
    def angle_error_bound(self) -> float:
        return math.radians(self.angle_error_bound_deg)

    def pump(self) -> PumpConfig:
        return PumpConfig(
            avg_power=self.avg_power_uW * 1e-6,
            rep_rate=self.rep_rate,
            polarizer_axis=math.radians(self.pump_polarizer_deg),
            qwp_angle=math.radians(self.pump_qwp_deg),
            hwp_angle=math.radians(self.pump_hwp_deg),
        )

    def loop(self) -> LoopConfig:
        return LoopConfig(
            phi_b=self.phi_b_rad,
            pair_gen_coeff=self.pair_gen_coeff_per_W2,
            raman_rate_s=self.raman_rate_s_per_pulse,
            raman_rate_i=self.raman_rate_i_per_pulse,
            coupling_loss_s=self.coupling_loss_s_dB,
            coupling_loss_i=self.coupling_loss_i_dB,
        )

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    # serialization ------------------------------------------------------

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = {f.name for f in dataclasses.fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown configuration key")
        return cls(**data)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError("<root>", f"invalid JSON ({exc.msg} at line {exc.lineno})") from None
        return cls.from_dict(data)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_json(Path(path).read_text())


_PRESETS = {
    "linear": "preset_linear.json",
    "elliptical": "preset_elliptical.json",
}


def preset_config(pump: str = "elliptical") -> ExperimentConfig:
    """Calibrated lab setup with either the 45 deg linear or the compensating pump.

    The calibrated Raman rates and excess losses come from the committed data
    files, regenerated by ``demos/derive_calibration.py``.
    """
    try:
        name = _PRESETS[pump]
    except KeyError:
        raise ValueError(f"pump preset must be one of {sorted(_PRESETS)}") from None
    text = resources.files("pmloop.data").joinpath(name).read_text()
    return ExperimentConfig.from_json(text)
