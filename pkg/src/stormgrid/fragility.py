"""Component fragility curves.

Lines: linear ramp in experienced wind speed between a critical and a
collapse speed that depend on voltage class. Substations: stretched
exponential (Weibull) in flood depth above the pad.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# (v_cri, v_col) in m/s per voltage class (kV). Illustrative values, meant
# to be replaced when calibrated thresholds are available.
DEFAULT_WIND_THRESHOLDS = {
    115.0: (25.0, 55.0),
    161.0: (30.0, 60.0),
    230.0: (35.0, 65.0),
    500.0: (45.0, 75.0),
}


@dataclass(frozen=True)
class WindFragilityTable:
    thresholds: dict = field(default_factory=lambda: dict(DEFAULT_WIND_THRESHOLDS))

    def __post_init__(self):
        clean = {}
        for kv, (cri, col) in self.thresholds.items():
            if not (math.isfinite(cri) and math.isfinite(col) and 0 <= cri < col):
                raise ConfigError(f"{kv} kV: need 0 <= v_cri < v_col, got ({cri}, {col})")
            clean[float(kv)] = (float(cri), float(col))
        object.__setattr__(self, "thresholds", clean)

    def lookup(self, voltage_kv: float):
        try:
            return self.thresholds[float(voltage_kv)]
        except KeyError:
            raise ConfigError(f"no wind fragility thresholds for {voltage_kv} kV") from None

    def covers(self, voltages) -> list:
        """Voltages (kV) missing from the table."""
        return sorted({float(v) for v in voltages} - set(self.thresholds))


@dataclass(frozen=True)
class FloodFragilityParams:
    a: float = 3.0  # scale, metres
    b: float = 3.0  # shape

    def __post_init__(self):
        if not (math.isfinite(self.a) and self.a > 0):
            raise ConfigError(f"flood fragility scale a must be > 0, got {self.a}")
        if not (math.isfinite(self.b) and self.b > 2):
            raise ConfigError(f"flood fragility shape b must be > 2, got {self.b}")


def line_outage_prob(gamma, voltage_kv: float, table: WindFragilityTable):
    """Outage probability of a line of class ``voltage_kv`` at wind ``gamma`` m/s.

    Works elementwise on arrays.
    """
    cri, col = table.lookup(voltage_kv)
    p = np.clip((np.asarray(gamma, float) - cri) / (col - cri), 0.0, 1.0)
    return float(p) if p.ndim == 0 else p


def substation_outage_prob(depth, params: FloodFragilityParams):
    """Failure probability of a substation flooded ``depth`` m above its pad."""
    depth = np.asarray(depth, float)
    if np.any(depth < 0):
        raise ValueError("flood depth must be >= 0")
    p = -np.expm1(-((depth / params.a) ** params.b))
    return float(p) if p.ndim == 0 else p
