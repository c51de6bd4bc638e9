"""Experiment configuration: a line-oriented ``key = value`` file.

Blank lines and lines starting with ``#`` are ignored.  Every key must be a
field of :class:`ExperimentConfig`; unknown keys are errors so a typo in a
parameter sweep cannot pass silently.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, fields

from .estimator import EstimatorConfig
from .model import make_modulation, make_spectrum
from .tfcore import GaborSystem, make_window

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "load_config", "canonical"]


class ConfigError(ValueError):
    """Bad key, value or combination; the message names the key."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything needed to synthesize and analyse one experiment.

    The defaults are the reference calibration: ``L = 4096``, ``a = 32``,
    ``b = 16``, Gaussian window of equivalent width 64, a 16-partial band
    spectrum on bins 100..700, sine FM around bin 300 and 20 dB SNR.
    ``sigma0`` overrides ``snr_db`` when set.
    """

    L: int = 4096
    a: int = 32
    b: int = 16
    window: str = "gauss"
    window_width: float = 64.0
    spectrum: str = "partials"
    spectrum_lo: float = 100.0
    spectrum_hi: float = 700.0
    spectrum_taper: float = 0.25
    spectrum_smooth: float = 8.0
    spectrum_partials: int = 16
    spectrum_peak_width: float = 0.6
    spectrum_seed: int = 12345
    modulation: str = "sine_fm"
    mod_k0: float = 300.0
    mod_rate: float = 0.01
    mod_amplitude: float = 40.0
    mod_freq: float = 1.0
    mod_phase: float = 0.0
    snr_db: float = 20.0
    sigma0: float | None = None
    eps: float = 1e-3
    max_iter: int = 50
    lambda_rel: float = 1e-6
    interpolation: str = "cubic"
    covariance: str = "spectral"
    spectral_smooth: int = 1
    spectrum_method: str = "welch"
    welch_nperseg: int = 256
    search_lo: int | None = None
    search_hi: int | None = None
    seed: int = 0
    num_realizations: int = 20
    signal_format: str = "binary"

    def __post_init__(self):
        for name, val in (("L", self.L), ("a", self.a), ("b", self.b)):
            if val < 1:
                raise ConfigError(f"{name}: must be positive, got {val}")
        if self.L % self.a:
            raise ConfigError(f"a: {self.a} does not divide L={self.L}")
        if self.L % self.b:
            raise ConfigError(f"b: {self.b} does not divide L={self.L}")
        if self.num_realizations < 1:
            raise ConfigError("num_realizations: must be >= 1")
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise ConfigError("seed: must fit in an unsigned 64-bit integer")
        if self.sigma0 is not None and self.sigma0 < 0:
            raise ConfigError("sigma0: must be nonnegative")
        if self.signal_format not in ("binary", "csv"):
            raise ConfigError(f"signal_format: expected binary or csv, got {self.signal_format!r}")
        if (self.search_lo is None) != (self.search_hi is None):
            raise ConfigError("search_lo/search_hi: set both or neither")
        # delegate the remaining checks to the constructors that own them
        for key, build in (("window", self.gabor_system), ("spectrum", self.power_spectrum),
                           ("modulation", self.modulation_law), ("estimator", self.estimator)):
            try:
                build()
            except ConfigError:
                raise
            except ValueError as exc:
                raise ConfigError(f"{key}: {exc}") from None

    def gabor_system(self) -> GaborSystem:
        return GaborSystem(make_window(self.window, self.L, self.window_width), self.a, self.b)

    def power_spectrum(self):
        return make_spectrum(self.spectrum, self.L, lo=self.spectrum_lo, hi=self.spectrum_hi,
                             taper=self.spectrum_taper, smooth=self.spectrum_smooth,
                             seed=self.spectrum_seed, n_partials=self.spectrum_partials,
                             peak_width=self.spectrum_peak_width)

    def modulation_law(self):
        return make_modulation(self.modulation, self.L, k0=self.mod_k0, rate=self.mod_rate,
                               amplitude=self.mod_amplitude, freq=self.mod_freq,
                               phase=self.mod_phase)

    def noise_sigma(self) -> float:
        if self.sigma0 is not None:
            return float(self.sigma0)
        return math.sqrt(self.power_spectrum().variance / 10.0 ** (self.snr_db / 10.0))

    def estimator(self) -> EstimatorConfig:
        rng = None if self.search_lo is None else (int(self.search_lo), int(self.search_hi))
        return EstimatorConfig(eps=self.eps, max_iter=self.max_iter, lambda_rel=self.lambda_rel,
                               interpolation=self.interpolation, search_range=rng,
                               covariance=self.covariance, spectrum_method=self.spectrum_method,
                               welch_nperseg=self.welch_nperseg,
                               spectral_smooth=self.spectral_smooth)

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _convert(key: str, raw: str):
    typ = _FIELDS[key].type
    optional = "None" in typ
    if optional and raw.lower() in ("", "none", "auto"):
        return None
    base = typ.split("|")[0].strip()
    try:
        if base == "int":
            v = float(raw) if any(ch in raw for ch in ".eE") else int(raw)
            if isinstance(v, float):
                if not v.is_integer():
                    raise ValueError
                v = int(v)
            return v
        if base == "float":
            v = float(raw)
            if not math.isfinite(v):
                raise ValueError
            return v
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r} as {base}") from None
    return raw


def parse_config(text: str, source: str = "<config>") -> dict:
    """Parse ``key = value`` lines into a dict of typed overrides."""
    out: dict = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {line!r}")
        key, _, raw = line.partition("=")
        key, raw = key.strip(), raw.strip()
        if key not in _FIELDS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        out[key] = _convert(key, raw)
    return out


def load_config(path=None, **overrides) -> ExperimentConfig:
    """Defaults, then the file at ``path``, then keyword overrides (``None`` values skipped)."""
    values: dict = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            values.update(parse_config(fh.read(), str(path)))
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return ExperimentConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def canonical(cfg: ExperimentConfig) -> str:
    """Resolved config, every field in declaration order, readable by :func:`parse_config`."""
    lines = []
    for f in fields(cfg):
        v = getattr(cfg, f.name)
        if v is None:
            s = "none"
        elif isinstance(v, float):
            s = repr(v)
        else:
            s = str(v)
        lines.append(f"{f.name} = {s}")
    return "\n".join(lines) + "\n"
