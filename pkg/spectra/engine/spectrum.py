"""
Spectral model of the fixed elliptic operator E.

A ``SpectrumModel`` is the data (lambda_k, d_k) for k < K together with the
manifold dimension d and the order nu of E. Everything else in the engine
(fields, symbols, gains) is indexed by these blocks, and no operation ever
looks past the stored truncation K.
"""

import hashlib
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Optional, Sequence, Tuple

import numpy as np
from django.core.exceptions import ValidationError

from spectra.exceptions import BlockIndexError


@dataclass(frozen=True)
class BlockInfo:
    """One eigenspace E_{lambda_k}: eigenvalue, multiplicity and an optional label."""
    index: int
    eigenvalue: float
    multiplicity: int
    label: Optional[str] = None


@dataclass(frozen=True, eq=False)
class SpectrumModel:
    manifold_dim: int
    elliptic_order: float
    blocks: Tuple[BlockInfo, ...]

    def __post_init__(self):
        if int(self.manifold_dim) != self.manifold_dim or self.manifold_dim < 1:
            raise ValidationError(
                "manifold_dim must be a positive integer, got %(value)s",
                code='invalid_dimension', params={'value': self.manifold_dim},
            )
        if not (np.isfinite(self.elliptic_order) and self.elliptic_order > 0):
            raise ValidationError(
                "elliptic_order must be positive, got %(value)s",
                code='invalid_order', params={'value': self.elliptic_order},
            )
        if not self.blocks:
            raise ValidationError("a spectrum needs at least one block", code='empty')

        previous = None
        for position, block in enumerate(self.blocks):
            if block.index != position:
                raise ValidationError(
                    "block %(index)s stored at position %(position)s",
                    code='block_position', params={'index': block.index, 'position': position},
                )
            if not np.isfinite(block.eigenvalue) or block.eigenvalue < 0:
                raise ValidationError(
                    "block %(index)s: eigenvalue must be finite and >= 0",
                    code='negative_eigenvalue', params={'index': position},
                )
            if int(block.multiplicity) != block.multiplicity or block.multiplicity < 1:
                raise ValidationError(
                    "block %(index)s: multiplicity must be a positive integer",
                    code='invalid_multiplicity', params={'index': position},
                )
            # eigenvalues are counted without multiplicity, so ties are a model error
            if previous is not None and not block.eigenvalue > previous:
                raise ValidationError(
                    "block %(index)s: eigenvalues must be strictly increasing",
                    code='not_increasing', params={'index': position},
                )
            previous = block.eigenvalue

    @classmethod
    def from_sequences(
        cls,
        manifold_dim: int,
        elliptic_order: float,
        eigenvalues: Sequence[float],
        multiplicities: Sequence[int],
        labels: Optional[Sequence[Optional[str]]] = None,
    ) -> 'SpectrumModel':
        if len(eigenvalues) != len(multiplicities):
            raise ValidationError(
                "got %(n_eig)s eigenvalues but %(n_mult)s multiplicities",
                code='length_mismatch',
                params={'n_eig': len(eigenvalues), 'n_mult': len(multiplicities)},
            )
        labels = labels if labels is not None else [None] * len(eigenvalues)
        blocks = tuple(
            BlockInfo(index=k, eigenvalue=float(lam), multiplicity=int(mult), label=label)
            for k, (lam, mult, label) in enumerate(zip(eigenvalues, multiplicities, labels))
        )
        return cls(manifold_dim=int(manifold_dim), elliptic_order=float(elliptic_order), blocks=blocks)

    @property
    def truncation(self) -> int:
        return len(self.blocks)

    @cached_property
    def eigenvalues(self) -> np.ndarray:
        values = np.array([b.eigenvalue for b in self.blocks], dtype=float)
        values.setflags(write=False)
        return values

    @cached_property
    def multiplicities(self) -> np.ndarray:
        values = np.array([b.multiplicity for b in self.blocks], dtype=int)
        values.setflags(write=False)
        return values

    @cached_property
    def log_scale(self) -> np.ndarray:
        """log(1 + lambda_k), the abscissa of every decay and gain fit."""
        values = np.log1p(self.eigenvalues)
        values.setflags(write=False)
        return values

    @cached_property
    def offsets(self) -> np.ndarray:
        """Start of each block in the flattened coefficient vector."""
        values = np.concatenate(([0], np.cumsum(self.multiplicities)))
        values.setflags(write=False)
        return values

    @property
    def total_dim(self) -> int:
        return int(self.offsets[-1])

    @cached_property
    def spectrum_hash(self) -> str:
        return spectrum_hash(self)

    def block(self, k: int) -> BlockInfo:
        self.check_index(k)
        return self.blocks[k]

    def check_index(self, k: int) -> None:
        if not 0 <= k < self.truncation:
            raise BlockIndexError(f"block index {k} outside 0..{self.truncation - 1}")

    def tail_start(self, fraction: float) -> int:
        """First block index of the last ``fraction`` of blocks."""
        return tail_index(self.truncation, fraction)

    def prefix(self, truncation: int) -> 'SpectrumModel':
        if not 1 <= truncation <= self.truncation:
            raise BlockIndexError(f"prefix length {truncation} outside 1..{self.truncation}")
        return SpectrumModel(
            manifold_dim=self.manifold_dim,
            elliptic_order=self.elliptic_order,
            blocks=self.blocks[:truncation],
        )

    def matches(self, other: 'SpectrumModel') -> bool:
        return self is other or self.spectrum_hash == other.spectrum_hash

    def describe(self) -> str:
        lam = self.eigenvalues
        return (
            f"K={self.truncation} blocks, d={self.manifold_dim}, nu={self.elliptic_order:g}, "
            f"lambda in [{lam[0]:g}, {lam[-1]:g}], total dimension {self.total_dim}"
        )


def tail_index(truncation: int, fraction: float) -> int:
    return min(truncation - 1, int(np.floor(truncation * (1.0 - fraction))))


def spectrum_hash(spectrum: SpectrumModel) -> str:
    """SHA-256 over the canonical spectral data (labels excluded)."""
    payload = json.dumps(
        {
            'manifold_dim': spectrum.manifold_dim,
            'elliptic_order': repr(float(spectrum.elliptic_order)),
            'eigenvalues': [repr(float(b.eigenvalue)) for b in spectrum.blocks],
            'multiplicities': [int(b.multiplicity) for b in spectrum.blocks],
        },
        separators=(',', ':'),
    )
    return hashlib.sha256(payload.encode('utf-8')).hexdigest()


def sobolev_weight(spectrum: SpectrumModel, k: int, s: float) -> float:
    """(1 + lambda_k)^(s/nu)."""
    spectrum.check_index(k)
    return float((1.0 + spectrum.blocks[k].eigenvalue) ** (s / spectrum.elliptic_order))


def sobolev_weights(spectrum: SpectrumModel, s: float) -> np.ndarray:
    return np.exp((s / spectrum.elliptic_order) * spectrum.log_scale)


def multiplicity_growth_constant(spectrum: SpectrumModel) -> Tuple[float, int]:
    """
    Empirical constant C in d_k <= C (1 + lambda_k)^(d/nu) and the first
    block attaining it.
    """
    ratios = spectrum.multiplicities / (1.0 + spectrum.eigenvalues) ** (
        spectrum.manifold_dim / spectrum.elliptic_order
    )
    worst = int(np.argmax(ratios))
    return float(ratios[worst]), worst


def summability_partial(spectrum: SpectrumModel, q: float) -> float:
    """Partial sum of d_k (1 + lambda_k)^(-q) over the stored blocks, in block order."""
    terms = spectrum.multiplicities * (1.0 + spectrum.eigenvalues) ** (-q)
    return float(np.cumsum(terms)[-1])


def summability_trace(spectrum: SpectrumModel, q: float) -> np.ndarray:
    """Running partial sums, for judging convergence by eye or by increment decay."""
    return np.cumsum(spectrum.multiplicities * (1.0 + spectrum.eigenvalues) ** (-q))

