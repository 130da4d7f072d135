"""Model parameters and the designed per-channel coefficients."""

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError


@dataclass
class CarfacParams:
    """User-facing knobs for one CARFAC instance.

    ``max_pole_hz`` defaults to a quarter of the sample rate. When
    ``erb_per_step`` is None the channels are spread evenly on the ERB-rate
    scale between the two pole limits; otherwise they step down from
    ``max_pole_hz`` by that many ERBs and must stay above ``min_pole_hz``.
    """

    sample_rate_hz: float = 256000.0
    n_channels: int = 64
    min_pole_hz: float = 30.0
    max_pole_hz: float = None
    erb_per_step: float = None
    # resonator damping map
    max_zeta: float = 0.35
    min_zeta: float = 0.10
    high_f_damping_compression: float = 0.5
    zero_ratio: float = math.sqrt(2.0)
    # hair cells
    ihc_offset: float = 0.175
    ihc_approx_offset: float = 0.13
    ohc_scale: float = 0.1
    ohc_offset: float = 0.04
    # AGC loop
    agc_time_constants_s: tuple = (0.002, 0.008, 0.032, 0.128)
    # powers of two, so the fixed engine applies them as shifts
    agc_spatial_s1: float = 0.0078125
    agc_spatial_s2: float = 0.0078125
    agc_stage_gains: tuple = (1.0, 1.0, 1.0, 1.0)
    agc_decimate: bool = True
    agc_base_interval: int = 8
    hpf_cutoff_hz: float = 20.0

    def __post_init__(self):
        if self.max_pole_hz is None:
            self.max_pole_hz = 0.25 * self.sample_rate_hz
        self.agc_time_constants_s = tuple(float(t) for t in self.agc_time_constants_s)
        self.agc_stage_gains = tuple(float(w) for w in self.agc_stage_gains)
        self.validate()

    def validate(self):
        fs = self.sample_rate_hz
        if not (isinstance(self.n_channels, (int, np.integer)) and self.n_channels >= 1):
            raise ConfigError(f"n_channels must be a positive integer, got {self.n_channels!r}")
        if not fs > 0:
            raise ConfigError(f"sample_rate_hz must be positive, got {fs!r}")
        if not 0 < self.min_pole_hz < self.max_pole_hz < fs / 2:
            raise ConfigError(
                f"need 0 < min_pole_hz < max_pole_hz < fs/2; got {self.min_pole_hz}, "
                f"{self.max_pole_hz}, fs/2 = {fs / 2}")
        if self.erb_per_step is not None and not self.erb_per_step > 0:
            raise ConfigError("erb_per_step must be positive")
        if not 0 <= self.min_zeta <= self.max_zeta:
            raise ConfigError("need 0 <= min_zeta <= max_zeta")
        if not 0 <= self.high_f_damping_compression <= 1:
            raise ConfigError("high_f_damping_compression must lie in [0, 1]")
        if not self.zero_ratio >= 1:
            raise ConfigError("zero_ratio must be >= 1")
        tcs = self.agc_time_constants_s
        if len(tcs) != 4 or len(self.agc_stage_gains) != 4:
            raise ConfigError("the AGC loop has exactly four stages")
        if any(t <= 0 for t in tcs) or any(b <= a for a, b in zip(tcs, tcs[1:])):
            raise ConfigError(f"agc_time_constants_s must be positive and strictly increasing: {tcs}")
        s1, s2 = self.agc_spatial_s1, self.agc_spatial_s2
        if s1 < 0 or s2 < 0 or s1 + s2 > 1:
            raise ConfigError(f"spatial taps need s1, s2 >= 0 and s1 + s2 <= 1; got {s1}, {s2}")
        if any(w < 0 for w in self.agc_stage_gains):
            raise ConfigError("agc_stage_gains must be non-negative")
        base = self.agc_base_interval
        if base < 1 or base & (base - 1):
            raise ConfigError("agc_base_interval must be a power of two")
        if not 0 < self.hpf_cutoff_hz < fs / 2:
            raise ConfigError("hpf_cutoff_hz must lie in (0, fs/2)")
        for k, (interval, tau) in enumerate(zip(self.agc_intervals(), tcs)):
            if interval / (tau * fs) > 1:
                raise ConfigError(f"AGC stage {k} updates too slowly for its time constant")

    def agc_intervals(self):
        if not self.agc_decimate:
            return (1, 1, 1, 1)
        return tuple(self.agc_base_interval << k for k in range(4))

    @classmethod
    def from_mapping(cls, mapping):
        """Build from a flat str -> str/number mapping, ignoring unknown keys."""
        known = {f.name: f for f in fields(cls)}
        kw = {}
        for key, val in mapping.items():
            if key not in known:
                continue
            default = known[key].default
            if isinstance(val, str):
                if isinstance(default, tuple):
                    val = tuple(float(v) for v in val.replace(",", " ").split())
                elif isinstance(default, bool):
                    val = val.strip().lower() in ("1", "true", "yes", "on")
                elif isinstance(default, int):
                    val = int(val)
                else:
                    val = float(val)
            kw[key] = val
        return cls(**kw)


def hz_to_erb_rate(f):
    """Glasberg & Moore ERB-number scale."""
    return 21.4 * np.log10(1.0 + 0.00437 * np.asarray(f, dtype=float))


def erb_rate_to_hz(e):
    return (10.0 ** (np.asarray(e, dtype=float) / 21.4) - 1.0) / 0.00437


def erb_hz(f):
    """Equivalent rectangular bandwidth at centre frequency ``f``."""
    return 24.7 * (1.0 + 4.37 * np.asarray(f, dtype=float) / 1000.0)


@dataclass
class CarfacCoeffs:
    """Designed constants. Treat as read-only once returned by the designer."""

    params: CarfacParams
    pole_hz: np.ndarray
    a0: np.ndarray
    c0: np.ndarray
    h: np.ndarray
    r1: np.ndarray
    d_rz: np.ndarray
    gain_A: np.ndarray
    gain_B: np.ndarray
    gain_C: np.ndarray
    gain_max_rel_error: np.ndarray
    gain_max_abs_error: np.ndarray
    hpf_coeff: float
    agc_intervals: tuple
    agc_ct: tuple
    ihc_rest_exact: float
    ihc_rest_approx: float
    extra: dict = field(default_factory=dict)

    @property
    def n_channels(self):
        return len(self.pole_hz)

    @property
    def sample_rate_hz(self):
        return self.params.sample_rate_hz

    @property
    def theta(self):
        return 2.0 * np.pi * self.pole_hz / self.params.sample_rate_hz
