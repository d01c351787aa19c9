"""
Coefficient-space fields: functions and distributions as their Fourier
blocks u^(k) in C^{d_k}, with Plancherel and Sobolev norms and a decay
classifier separating smooth (rapidly decaying) from finite-order data.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
from django.core.exceptions import ValidationError
from django.db import models

from spectra.engine.fitting import line_fit, window_trend
from spectra.engine.spectrum import SpectrumModel, sobolev_weights
from spectra.exceptions import SpectrumMismatchError

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class CoefficientField:
    spectrum: SpectrumModel
    blocks: Tuple[np.ndarray, ...]

    def __post_init__(self):
        if len(self.blocks) != self.spectrum.truncation:
            raise ValidationError(
                "field has %(found)s blocks but the spectrum has %(expected)s",
                code='truncation_mismatch',
                params={'found': len(self.blocks), 'expected': self.spectrum.truncation},
            )
        frozen = []
        for k, (block, mult) in enumerate(zip(self.blocks, self.spectrum.multiplicities)):
            array = np.array(block, dtype=complex).reshape(-1)
            if array.shape != (mult,):
                raise ValidationError(
                    "block %(index)s has length %(found)s, expected %(expected)s",
                    code='block_shape', params={'index': k, 'found': array.size, 'expected': int(mult)},
                )
            if not np.all(np.isfinite(array)):
                raise ValidationError(
                    "block %(index)s contains non-finite entries",
                    code='non_finite', params={'index': k},
                )
            array.setflags(write=False)
            frozen.append(array)
        object.__setattr__(self, 'blocks', tuple(frozen))

    @classmethod
    def zeros(cls, spectrum: SpectrumModel) -> 'CoefficientField':
        return cls(spectrum, tuple(np.zeros(int(m), dtype=complex) for m in spectrum.multiplicities))

    @classmethod
    def from_flat(cls, spectrum: SpectrumModel, vector: np.ndarray) -> 'CoefficientField':
        vector = np.asarray(vector, dtype=complex)
        if vector.shape != (spectrum.total_dim,):
            raise ValidationError(
                "flat vector has shape %(shape)s, expected (%(dim)s,)",
                code='flat_shape', params={'shape': vector.shape, 'dim': spectrum.total_dim},
            )
        offsets = spectrum.offsets
        return cls(spectrum, tuple(vector[offsets[k]:offsets[k + 1]] for k in range(spectrum.truncation)))

    def flat(self) -> np.ndarray:
        return np.concatenate(self.blocks)

    def block(self, k: int) -> np.ndarray:
        self.spectrum.check_index(k)
        return self.blocks[k]

    @cached_property
    def block_norms(self) -> np.ndarray:
        norms = np.array([np.linalg.norm(b) for b in self.blocks], dtype=float)
        norms.setflags(write=False)
        return norms

    @property
    def support(self) -> np.ndarray:
        """Indices of nonzero blocks."""
        return np.flatnonzero(self.block_norms > 0)


def require_same_spectrum(*objects) -> SpectrumModel:
    """Shared spectrum of fields / symbols, or SpectrumMismatchError."""
    spectrum = objects[0].spectrum
    for other in objects[1:]:
        if not spectrum.matches(other.spectrum):
            raise SpectrumMismatchError(
                f"spectrum {other.spectrum.spectrum_hash[:12]} does not match {spectrum.spectrum_hash[:12]}"
            )
    return spectrum


def l2_norm(u: CoefficientField) -> float:
    """Plancherel: (sum_k ||u^(k)||^2)^(1/2), summed in block order."""
    return float(np.sqrt(np.sum(u.block_norms ** 2)))


def sobolev_norm(u: CoefficientField, s: float) -> float:
    weights = sobolev_weights(u.spectrum, 2.0 * s)
    return float(np.sqrt(np.sum(weights * u.block_norms ** 2)))


def sobolev_partials(u: CoefficientField, s: float) -> np.ndarray:
    """Running H^s partial norms over k = 0..K-1."""
    weights = sobolev_weights(u.spectrum, 2.0 * s)
    return np.sqrt(np.cumsum(weights * u.block_norms ** 2))


def combine(a: CoefficientField, alpha: complex, b: CoefficientField, beta: complex) -> CoefficientField:
    spectrum = require_same_spectrum(a, b)
    return CoefficientField(
        spectrum, tuple(alpha * x + beta * y for x, y in zip(a.blocks, b.blocks))
    )


def inner(u: CoefficientField, v: CoefficientField) -> complex:
    """sum_k <u^(k), v^(k)>, linear in the first argument."""
    require_same_spectrum(u, v)
    return complex(sum(np.vdot(y, x) for x, y in zip(u.blocks, v.blocks)))


class DecayClass(models.TextChoices):
    RAPID_DECAY = 'rapid_decay', 'Rapid decay (smooth)'
    POLYNOMIAL_ORDER = 'polynomial_order', 'Polynomial order'
    NON_TEMPERED = 'non_tempered', 'Faster than polynomial growth'
    INCONCLUSIVE = 'inconclusive', 'Inconclusive'


@dataclass(frozen=True)
class DecayReport:
    decay_class: str
    slope: float = float('nan')
    intercept: float = float('nan')
    residual: float = float('nan')
    windowed_slopes: Tuple[float, ...] = ()
    samples: int = 0
    window: Optional[Tuple[int, int]] = None
    note: str = ''

    @property
    def order(self) -> float:
        """N in ||u^(k)|| ~ (1 + lambda_k)^N; only meaningful for polynomial_order."""
        return self.slope

    @property
    def is_rapid(self) -> bool:
        return self.decay_class == DecayClass.RAPID_DECAY

    def to_dict(self) -> dict:
        return {
            'class': str(self.decay_class),
            'slope': self.slope,
            'intercept': self.intercept,
            'residual': self.residual,
            'windowed_slopes': list(self.windowed_slopes),
            'samples': self.samples,
            'window': list(self.window) if self.window else None,
            'note': self.note,
        }


def decay_classify(
    u: CoefficientField,
    tail_fraction: float = 0.5,
    n_probe: float = 10.0,
    min_samples: int = 8,
) -> DecayReport:
    """
    Classify the tail of ||u^(k)|| against powers of (1 + lambda_k).

    A field that vanishes on its whole block tail is rapid_decay (finite
    support). Otherwise the fit uses the last ``tail_fraction`` of its
    nonzero blocks; fewer than ``min_samples`` of them is inconclusive.
    """
    spectrum = u.spectrum
    norms = u.block_norms
    tail_start = spectrum.tail_start(tail_fraction)
    if not np.any(norms[tail_start:] > 0):
        return DecayReport(
            decay_class=DecayClass.RAPID_DECAY,
            window=(tail_start, spectrum.truncation - 1),
            note='tail blocks vanish identically (finite support)',
        )

    support = u.support
    count = int(np.ceil(len(support) * tail_fraction))
    if count < min_samples:
        return DecayReport(
            decay_class=DecayClass.INCONCLUSIVE,
            samples=count,
            note=f'{count} nonzero tail samples, need {min_samples}',
        )
    idx = support[-count:]
    x = spectrum.log_scale[idx]
    y = np.log(norms[idx])
    fit = line_fit(x, y)
    trend = window_trend(x, y, min_points=max(4, min_samples // 2))

    if trend.steepening() and trend.final <= -n_probe:
        decay_class = DecayClass.RAPID_DECAY
    elif trend.accelerating() and trend.final >= n_probe:
        decay_class = DecayClass.NON_TEMPERED
    else:
        decay_class = DecayClass.POLYNOMIAL_ORDER
    logger.debug(
        f"decay fit over blocks {int(idx[0])}..{int(idx[-1])}: slope {fit.slope:.4g}, "
        f"windows {trend.slopes}, class {decay_class}"
    )
    return DecayReport(
        decay_class=decay_class,
        slope=fit.slope,
        intercept=fit.intercept,
        residual=fit.residual,
        windowed_slopes=trend.slopes,
        samples=count,
        window=(int(idx[0]), int(idx[-1])),
    )


def norm_rows(u: CoefficientField) -> Sequence[Tuple[int, float, float]]:
    """(k, lambda_k, ||u^(k)||) rows for CSV export."""
    return [
        (k, float(lam), float(norm))
        for k, (lam, norm) in enumerate(zip(u.spectrum.eigenvalues, u.block_norms))
    ]
