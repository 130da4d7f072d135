"""Clock-budget analysis for a time-multiplexed cochlea datapath.

One CAR/IHC/OHC/AGC circuit serves every channel in turn, so a sample
period has to fit ``n_channels`` initiation intervals plus the time it
takes the pipeline to fill.
"""

import math
from dataclasses import asdict, dataclass, fields

from .errors import ConfigError

DEFAULT_PIPELINE_DEPTH = 100
DEFAULT_UTIL_FRACTION = 0.135


@dataclass(frozen=True)
class ScheduleReport:
    n_channels: int
    sample_rate_hz: float
    clock_hz: float
    initiation_interval: int
    pipeline_depth: int
    budget_cycles: int
    used_cycles: int
    feasible: bool
    slack_cycles: int
    util_fraction: float
    max_instances_by_util: int

    def to_text(self):
        lines = []
        for key, val in asdict(self).items():
            if isinstance(val, bool):
                val = "yes" if val else "no"
            elif isinstance(val, float):
                val = f"{val:g}"
            lines.append(f"{key}: {val}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        raw = {}
        for line in text.splitlines():
            if not line.strip():
                continue
            key, _, val = line.partition(":")
            raw[key.strip()] = val.strip()
        kw = {}
        for f in fields(cls):
            val = raw[f.name]
            if f.type in (bool, "bool"):
                kw[f.name] = val == "yes"
            elif f.type in (int, "int"):
                kw[f.name] = int(val)
            else:
                kw[f.name] = float(val)
        return cls(**kw)


def _depth_total(stage_depths):
    if isinstance(stage_depths, (int, float)):
        total = stage_depths
    else:
        stage_depths = list(stage_depths)
        if any(d < 0 for d in stage_depths):
            raise ConfigError("stage depths must be non-negative")
        total = sum(stage_depths)
    if total < 0 or total != int(total):
        raise ConfigError("pipeline depth must be a non-negative integer")
    return int(total)


def analyze_schedule(n_channels, sample_rate_hz, clock_hz,
                     stage_depths=DEFAULT_PIPELINE_DEPTH, initiation_interval=1,
                     util_fraction=DEFAULT_UTIL_FRACTION):
    """Check whether one datapath instance keeps up with the sample rate.

    ``stage_depths`` is either the total pipeline depth or per-module
    depths that get summed. ``util_fraction`` is the share of the scarcest
    device resource one instance occupies.
    """
    if not sample_rate_hz or not clock_hz:
        raise ConfigError("sample rate and clock must be non-zero")
    if sample_rate_hz < 0 or clock_hz < 0:
        raise ConfigError("sample rate and clock must be positive")
    if int(n_channels) != n_channels or n_channels < 1:
        raise ConfigError("n_channels must be a positive integer")
    if int(initiation_interval) != initiation_interval or initiation_interval < 0:
        raise ConfigError("initiation interval must be a non-negative integer")
    if not 0 < util_fraction <= 1:
        raise ConfigError("util_fraction must be in (0, 1]")
    depth = _depth_total(stage_depths)

    budget = math.floor(clock_hz / sample_rate_hz)
    used = int(n_channels) * max(int(initiation_interval), 1) + depth
    # tiny tolerance so 1/0.2 style inputs do not floor one short
    instances = math.floor(1.0 / util_fraction + 1e-9)
    return ScheduleReport(
        n_channels=int(n_channels),
        sample_rate_hz=float(sample_rate_hz),
        clock_hz=float(clock_hz),
        initiation_interval=int(initiation_interval),
        pipeline_depth=depth,
        budget_cycles=budget,
        used_cycles=used,
        feasible=used <= budget,
        slack_cycles=budget - used,
        util_fraction=float(util_fraction),
        max_instances_by_util=instances,
    )
