"""
Run configuration shared by every engine operation.

``RunConfig`` is immutable; command-line flags produce a new instance via
``RunConfig.from_settings(**overrides)`` layered over ``SPECTRAL_DEFAULTS``.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, fields, replace
from typing import Any, Dict

# Zero threshold used for exactly represented symbols (extended-precision
# torus multipliers, scalar profiles): only true zeros count as kernel.
EXACT_ZERO_TOLERANCE = 1e-300


@dataclass(frozen=True)
class RunConfig:
    ztol_abs: float = 1e-12
    ztol_rel: float = 1e-10
    compat_tol: float = 1e-9
    angle_min: float = 1e-6
    normal_tol: float = 1e-10
    tail_fraction: float = 0.5
    n_probe: float = 10.0
    min_samples: int = 8
    z_tail_fraction: float = 0.25
    z_density_max: float = 0.1
    seed: int = 0
    strict: bool = False
    workers: int = 1

    def __post_init__(self):
        for name in ('ztol_abs', 'ztol_rel', 'compat_tol', 'angle_min', 'normal_tol', 'n_probe'):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)!r}")
        for name in ('tail_fraction', 'z_tail_fraction'):
            value = getattr(self, name)
            if not 0 < value < 1:
                raise ValueError(f"{name} must lie in (0, 1), got {value!r}")
        if self.min_samples < 3:
            raise ValueError(f"min_samples must be at least 3, got {self.min_samples}")
        if self.workers < 1:
            raise ValueError(f"workers must be at least 1, got {self.workers}")

    @classmethod
    def from_settings(cls, **overrides) -> 'RunConfig':
        """Defaults from ``settings.SPECTRAL_DEFAULTS`` with non-None overrides applied."""
        from django.conf import settings

        known = {f.name for f in fields(cls)}
        values: Dict[str, Any] = {
            key: value
            for key, value in getattr(settings, 'SPECTRAL_DEFAULTS', {}).items()
            if key in known
        }
        for key, value in overrides.items():
            if key not in known:
                raise ValueError(f"unknown configuration key {key!r}")
            if value is not None:
                values[key] = value
        return cls(**values)

    @classmethod
    def for_exact_symbols(cls, **overrides) -> 'RunConfig':
        values = {'ztol_abs': EXACT_ZERO_TOLERANCE, 'ztol_rel': EXACT_ZERO_TOLERANCE}
        values.update(overrides)
        return cls(**values)

    def replace(self, **changes) -> 'RunConfig':
        return replace(self, **changes)

    def zero_threshold(self, block_norm: float, dim: int) -> float:
        """tau(k) = ztol_abs + ztol_rel * ||sigma(k)|| * d_k."""
        return self.ztol_abs + self.ztol_rel * block_norm * dim

    def compat_threshold(self, data_norm: float) -> float:
        return self.compat_tol * max(1.0, data_norm)

    def as_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def config_hash(self) -> str:
        payload = json.dumps(self.as_dict(), sort_keys=True, separators=(',', ':'))
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()
