"""Scenario configuration: an INI file with ``[scenario]``, ``[noise]`` and ``[paths]`` sections.

Keys are the dataclass field names below. Lists are comma-separated.
``T_seconds = inf`` disables window closing entirely. Command-line overrides
use ``section.key=value`` (a bare ``key`` means ``scenario.key``).
"""

from __future__ import annotations

import configparser
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

ALGORITHMS = ("decentralized-fxlms", "leaky", "wcfxlms", "sb-wcfxlms", "centralized", "collocated-centralized")
REFERENCE_MODES = ("shared-single", "per-node")
NOISE_KINDS = ("multitone", "bandlimited", "wavefile")
PATH_SOURCES = ("synth", "file")


class ConfigError(ValueError):
    """Invalid or inconsistent scenario configuration."""


@dataclass
class NoiseConfig:
    kind: str = "multitone"
    tones_hz: tuple[float, ...] = (300.0, 400.0, 500.0, 600.0, 700.0)
    amplitudes: tuple[float, ...] = (1.0,)
    phases_rad: tuple[float, ...] = (0.0,)
    low_hz: float = 200.0
    high_hz: float = 600.0
    target_rms: float = 0.5
    wave_file: str = ""
    seed: int = 1
    distinct_per_node: bool = False
    sensor_noise_rms: float = 0.0
    sensor_seed: int = 5


@dataclass
class PathConfig:
    source: str = "synth"
    file: str = ""
    primary_len: int = 512
    secondary_len: int = 512
    delay_min: int = 0
    delay_max: int = 3
    primary_delay_min: int = 10
    primary_delay_max: int = 30
    decay_rate: float = 0.1
    coupling_gain: float = 0.5
    seed: int = 2
    estimate_mismatch: float = 0.0
    estimate_seed: int = 3


@dataclass
class ScenarioConfig:
    n_nodes: int = 6
    algorithm: str = "sb-wcfxlms"
    reference_mode: str = "shared-single"
    fs: int = 16000
    n_taps: int = 512
    estimate_len: int = 256
    mu_bar: float = 0.1
    alpha: tuple[float, ...] = (100.0,)
    T_seconds: float = 1.0
    duration_seconds: float = 10.0
    block_seconds: float = 1.0
    center_file: str = ""
    store_samples: bool = False
    spectrum_seconds: float = 2.0
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    paths: PathConfig = field(default_factory=PathConfig)

    # -- derived quantities -------------------------------------------------

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_seconds * self.fs))

    @property
    def window_len(self) -> int | None:
        if math.isinf(self.T_seconds):
            return None
        return int(round(self.T_seconds * self.fs))

    @property
    def block_len(self) -> int:
        return int(round(self.block_seconds * self.fs))

    def alphas(self) -> tuple[float, ...]:
        if len(self.alpha) == 1:
            return self.alpha * self.n_nodes
        return tuple(self.alpha)

    def seeds(self) -> dict[str, int]:
        return {
            "noise.seed": self.noise.seed,
            "noise.sensor_seed": self.noise.sensor_seed,
            "paths.seed": self.paths.seed,
            "paths.estimate_seed": self.paths.estimate_seed,
        }

    # -- validation ---------------------------------------------------------

    def validate(self) -> ScenarioConfig:
        def need(cond, msg):
            if not cond:
                raise ConfigError(msg)

        need(self.n_nodes >= 1, f"n_nodes must be >= 1, got {self.n_nodes}")
        need(self.algorithm in ALGORITHMS, f"algorithm must be one of {ALGORITHMS}, got {self.algorithm!r}")
        need(self.reference_mode in REFERENCE_MODES, f"reference_mode must be one of {REFERENCE_MODES}")
        need(self.fs > 0, "fs must be positive")
        need(self.n_taps >= 1 and self.estimate_len >= 1, "n_taps and estimate_len must be >= 1")
        need(math.isfinite(self.mu_bar) and self.mu_bar >= 0, "mu_bar must be finite and >= 0")
        need(len(self.alpha) in (1, self.n_nodes), f"alpha needs 1 or {self.n_nodes} values, got {len(self.alpha)}")
        need(all(math.isfinite(a) and a >= 0 for a in self.alpha), "alpha values must be finite and >= 0")
        need(self.T_seconds > 0, "T_seconds must be positive (inf disables windows)")
        if self.window_len is not None:
            need(self.window_len >= 1, "T_seconds * fs must be at least one sample")
        need(math.isfinite(self.duration_seconds) and self.duration_seconds >= 0, "duration_seconds must be >= 0")
        need(self.block_seconds > 0 and self.block_len >= 1, "block_seconds must cover at least one sample")
        need(self.spectrum_seconds >= 0, "spectrum_seconds must be >= 0")

        nz = self.noise
        need(nz.kind in NOISE_KINDS, f"noise.kind must be one of {NOISE_KINDS}, got {nz.kind!r}")
        if nz.kind == "multitone":
            need(len(nz.tones_hz) >= 1, "noise.tones_hz is empty")
            for name, values in (("amplitudes", nz.amplitudes), ("phases_rad", nz.phases_rad)):
                need(len(values) in (1, len(nz.tones_hz)), f"noise.{name} needs 1 or {len(nz.tones_hz)} values")
            need(all(0 < f < self.fs / 2 for f in nz.tones_hz), "every tone must lie in (0, fs/2)")
            need(all(a >= 0 for a in nz.amplitudes), "tone amplitudes must be >= 0")
        elif nz.kind == "bandlimited":
            need(0 < nz.low_hz < nz.high_hz < self.fs / 2, "need 0 < noise.low_hz < noise.high_hz < fs/2")
            need(nz.target_rms >= 0, "noise.target_rms must be >= 0")
        else:
            need(bool(nz.wave_file), "noise.wave_file is required for kind = wavefile")
        need(nz.sensor_noise_rms >= 0, "noise.sensor_noise_rms must be >= 0")

        pc = self.paths
        need(pc.source in PATH_SOURCES, f"paths.source must be one of {PATH_SOURCES}")
        if pc.source == "file":
            need(bool(pc.file), "paths.file is required for source = file")
        else:
            need(pc.primary_len >= 1 and pc.secondary_len >= 1, "path lengths must be >= 1")
            need(0 <= pc.delay_min <= pc.delay_max < pc.secondary_len, "need 0 <= delay_min <= delay_max < secondary_len")
            need(
                0 <= pc.primary_delay_min <= pc.primary_delay_max < pc.primary_len,
                "need 0 <= primary_delay_min <= primary_delay_max < primary_len",
            )
            need(pc.decay_rate >= 0, "paths.decay_rate must be >= 0")
            need(pc.coupling_gain >= 0, "paths.coupling_gain must be >= 0")
        need(pc.estimate_mismatch >= 0, "paths.estimate_mismatch must be >= 0")
        return self

    # -- (de)serialization ----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self, **overrides) -> ScenarioConfig:
        return dataclasses.replace(self, **overrides)

    def with_overrides(self, overrides: dict[str, str] | list[str]) -> ScenarioConfig:
        """Copy with ``section.key`` string overrides applied."""
        if isinstance(overrides, list):
            overrides = parse_assignments(overrides)
        cfg = dataclasses.replace(
            self, noise=dataclasses.replace(self.noise), paths=dataclasses.replace(self.paths)
        )
        for dotted, raw in overrides.items():
            section, key = _split_key(dotted)
            target = cfg if section == "scenario" else getattr(cfg, section)
            setattr(target, key, _coerce(target, key, raw))
        return cfg

    @classmethod
    def from_file(cls, path: str | Path) -> ScenarioConfig:
        parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
        parser.optionxform = str
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigError(f"{path}: {exc}") from None
        overrides = {}
        for section in parser.sections():
            if section not in ("scenario", "noise", "paths"):
                raise ConfigError(f"{path}: unknown section [{section}]")
            for key, value in parser.items(section):
                overrides[f"{section}.{key}"] = value
        base = Path(path).resolve().parent
        cfg = cls().with_overrides(overrides)
        # relative file references resolve against the scenario file
        for obj, attr in ((cfg, "center_file"), (cfg.noise, "wave_file"), (cfg.paths, "file")):
            value = getattr(obj, attr)
            if value and not Path(value).is_absolute():
                setattr(obj, attr, str(base / value))
        return cfg

    def to_ini(self) -> str:
        lines = []
        for section, obj in (("scenario", self), ("noise", self.noise), ("paths", self.paths)):
            lines.append(f"[{section}]")
            for f in dataclasses.fields(obj):
                if f.name in ("noise", "paths"):
                    continue
                lines.append(f"{f.name} = {_render(getattr(obj, f.name))}")
            lines.append("")
        return "\n".join(lines)


def _render(value):
    if isinstance(value, tuple):
        return ", ".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_assignments(items: list[str]) -> dict[str, str]:
    out = {}
    for item in items:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"override must look like key=value, got {item!r}")
        out[key.strip()] = value.strip()
    return out


def _split_key(dotted: str) -> tuple[str, str]:
    section, _, key = dotted.rpartition(".")
    section = section or "scenario"
    if section not in ("scenario", "noise", "paths"):
        raise ConfigError(f"unknown section in key {dotted!r}")
    cls = {"scenario": ScenarioConfig, "noise": NoiseConfig, "paths": PathConfig}[section]
    names = {f.name for f in dataclasses.fields(cls)} - {"noise", "paths"}
    if key not in names:
        raise ConfigError(f"unknown key {key!r} in [{section}]")
    return section, key


def _coerce(target, key: str, raw):
    current = getattr(target, key)
    if not isinstance(raw, str):
        return tuple(raw) if isinstance(current, tuple) else raw
    raw = raw.strip()
    try:
        if isinstance(current, bool):
            lowered = raw.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        if isinstance(current, int):
            return int(raw)
        if isinstance(current, float):
            return float(raw)
        if isinstance(current, tuple):
            return tuple(float(v) for v in raw.replace(";", ",").split(",") if v.strip())
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {exc}") from None
    return raw
