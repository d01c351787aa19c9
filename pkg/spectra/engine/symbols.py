"""
Matrix symbols of strongly invariant operators and systems.

An operator P commuting with E acts on each eigenspace E_{lambda_k} by a
d_k x d_k matrix sigma(k); a system is an ordered family of such symbols
over one spectrum. This module holds the symbol algebra, the structural
checks (normality, commutation) and the per-block gains every diagnostic
is built from:

    full gain        smallest singular value of sigma(k)
    restricted gain  smallest singular value above the zero threshold
    stacked gain     the same for [sigma_1(k); ...; sigma_n(k)]

Diagonal blocks (torus multipliers, scalar profiles) take an exact path:
their singular values are read off the diagonal without a decomposition.
"""

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from django.core.exceptions import ValidationError

from spectra.config import RunConfig
from spectra.engine.fields import CoefficientField, require_same_spectrum
from spectra.engine.fitting import line_fit, tail_samples
from spectra.engine.spectrum import SpectrumModel
from spectra.exceptions import InsufficientSamplesError, StructuralError

logger = logging.getLogger(__name__)

# Relative gap below which two eigenvalues are treated as one cluster.
CLUSTER_RTOL = 1e-9
# Residual below which a projected axis is skipped when building a canonical basis.
BASIS_SKIP = 1e-6


def is_diagonal(matrix: np.ndarray) -> bool:
    return not np.any(matrix[~np.eye(matrix.shape[0], dtype=bool)])


@dataclass(frozen=True, eq=False)
class InvariantSymbol:
    spectrum: SpectrumModel
    blocks: Tuple[np.ndarray, ...]
    name: str = ''

    def __post_init__(self):
        if len(self.blocks) != self.spectrum.truncation:
            raise ValidationError(
                "symbol has %(found)s blocks but the spectrum has %(expected)s",
                code='truncation_mismatch',
                params={'found': len(self.blocks), 'expected': self.spectrum.truncation},
            )
        frozen = []
        for k, (block, mult) in enumerate(zip(self.blocks, self.spectrum.multiplicities)):
            array = np.array(block, dtype=complex)
            if array.shape != (mult, mult):
                raise ValidationError(
                    "block %(index)s has shape %(found)s, expected (%(expected)s, %(expected)s)",
                    code='block_shape', params={'index': k, 'found': array.shape, 'expected': int(mult)},
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
    def from_diagonals(cls, spectrum: SpectrumModel, diagonals: Sequence[Sequence[complex]], name: str = '') -> 'InvariantSymbol':
        return cls(spectrum, tuple(np.diag(np.asarray(d, dtype=complex)) for d in diagonals), name=name)

    @classmethod
    def identity(cls, spectrum: SpectrumModel) -> 'InvariantSymbol':
        return cls(spectrum, tuple(np.eye(int(m), dtype=complex) for m in spectrum.multiplicities), name='identity')

    @classmethod
    def zeros(cls, spectrum: SpectrumModel) -> 'InvariantSymbol':
        return cls(spectrum, tuple(np.zeros((int(m), int(m)), dtype=complex) for m in spectrum.multiplicities), name='zero')

    def block(self, k: int) -> np.ndarray:
        self.spectrum.check_index(k)
        return self.blocks[k]

    @cached_property
    def diagonal_blocks(self) -> Tuple[bool, ...]:
        return tuple(is_diagonal(b) for b in self.blocks)

    @cached_property
    def norms(self) -> np.ndarray:
        """Spectral norm ||sigma(k)|| per block."""
        norms = np.array([
            block_singular_values(b, diagonal)[-1]
            for b, diagonal in zip(self.blocks, self.diagonal_blocks)
        ])
        norms.setflags(write=False)
        return norms

    def scaled(self, factor: complex) -> 'InvariantSymbol':
        return InvariantSymbol(self.spectrum, tuple(factor * b for b in self.blocks), name=self.name)


@dataclass(frozen=True, eq=False)
class SystemSymbol:
    operators: Tuple[InvariantSymbol, ...]

    def __post_init__(self):
        if not self.operators:
            raise ValidationError("a system needs at least one operator", code='empty_system')
        require_same_spectrum(*self.operators)
        object.__setattr__(self, 'operators', tuple(self.operators))

    @classmethod
    def single(cls, symbol: InvariantSymbol) -> 'SystemSymbol':
        return cls((symbol,))

    @property
    def spectrum(self) -> SpectrumModel:
        return self.operators[0].spectrum

    @property
    def n(self) -> int:
        return len(self.operators)

    def blocks_at(self, k: int) -> List[np.ndarray]:
        self.spectrum.check_index(k)
        return [op.blocks[k] for op in self.operators]

    def diagonal_at(self, k: int) -> bool:
        return all(op.diagonal_blocks[k] for op in self.operators)

    def extended(self, symbol: InvariantSymbol) -> 'SystemSymbol':
        return SystemSymbol(self.operators + (symbol,))

    def scaled(self, factor: complex) -> 'SystemSymbol':
        return SystemSymbol(tuple(op.scaled(factor) for op in self.operators))


def as_system(symbol_or_system) -> SystemSymbol:
    if isinstance(symbol_or_system, SystemSymbol):
        return symbol_or_system
    return SystemSymbol.single(symbol_or_system)


# --- singular values ---------------------------------------------------------

def block_singular_values(matrix: np.ndarray, diagonal: Optional[bool] = None) -> np.ndarray:
    """Singular values in ascending order."""
    if diagonal is None:
        diagonal = is_diagonal(matrix)
    if diagonal:
        return np.sort(np.abs(np.diag(matrix)))
    return np.sort(scipy.linalg.svdvals(matrix))


def stacked_singular_values(matrices: Sequence[np.ndarray], diagonal: bool = False) -> np.ndarray:
    """Ascending singular values of [m_1; ...; m_n] (one per column)."""
    if len(matrices) == 1:
        return block_singular_values(matrices[0], diagonal or None)
    if diagonal:
        return np.sort(np.sqrt(sum(np.abs(np.diag(m)) ** 2 for m in matrices)))
    return np.sort(scipy.linalg.svdvals(np.vstack(matrices)))


def right_singular_pairs(matrices: Sequence[np.ndarray], diagonal: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """
    Ascending singular values of the stack with the matching right singular
    vectors as columns. Diagonal stacks return coordinate axes.
    """
    dim = matrices[0].shape[0]
    if diagonal:
        column_norms = np.sqrt(sum(np.abs(np.diag(m)) ** 2 for m in matrices))
        order = np.argsort(column_norms, kind='stable')
        return column_norms[order], np.eye(dim, dtype=complex)[:, order]
    _, s, vh = scipy.linalg.svd(np.vstack(matrices), full_matrices=False)
    return s[::-1].copy(), vh[::-1].conj().T


class BlockGain(NamedTuple):
    full: float
    restricted: float  # +inf when every singular value is at or below the threshold
    kernel_dim: int
    threshold: float


def gain_from_singular_values(values: np.ndarray, dim: int, config: RunConfig) -> BlockGain:
    norm = float(values[-1]) if values.size else 0.0
    tau = config.zero_threshold(norm, dim)
    nonzero = values[values > tau]
    return BlockGain(
        full=float(values[0]),
        restricted=float(nonzero[0]) if nonzero.size else float('inf'),
        kernel_dim=int(values.size - nonzero.size),
        threshold=tau,
    )


def block_gain(P: InvariantSymbol, k: int, config: Optional[RunConfig] = None) -> BlockGain:
    config = config or RunConfig()
    P.spectrum.check_index(k)
    values = block_singular_values(P.blocks[k], P.diagonal_blocks[k])
    return gain_from_singular_values(values, values.size, config)


def stacked_block_gain(S: SystemSymbol, k: int, config: Optional[RunConfig] = None) -> BlockGain:
    config = config or RunConfig()
    matrices = S.blocks_at(k)
    values = stacked_singular_values(matrices, S.diagonal_at(k))
    return gain_from_singular_values(values, values.size, config)


def full_gain(P: InvariantSymbol, k: int) -> float:
    """min over unit phi of ||sigma(k) phi||."""
    P.spectrum.check_index(k)
    return float(block_singular_values(P.blocks[k], P.diagonal_blocks[k])[0])


def restricted_gain(P: InvariantSymbol, k: int, config: Optional[RunConfig] = None) -> float:
    """m(sigma(k)): smallest singular value on ker(sigma(k))^perp, +inf for a zero block."""
    return block_gain(P, k, config).restricted


class StackedGain(NamedTuple):
    gain: float
    kernel_dim: int


def stacked_gain(S: SystemSymbol, k: int, restricted: bool = False, config: Optional[RunConfig] = None) -> StackedGain:
    gain = stacked_block_gain(S, k, config)
    return StackedGain(gain.restricted if restricted else gain.full, gain.kernel_dim)


# --- algebra -----------------------------------------------------------------

def apply(P: InvariantSymbol, u: CoefficientField) -> CoefficientField:
    spectrum = require_same_spectrum(P, u)
    return CoefficientField(spectrum, tuple(s @ x for s, x in zip(P.blocks, u.blocks)))


def compose(P: InvariantSymbol, Q: InvariantSymbol) -> InvariantSymbol:
    spectrum = require_same_spectrum(P, Q)
    return InvariantSymbol(spectrum, tuple(a @ b for a, b in zip(P.blocks, Q.blocks)))


def adjoint(P: InvariantSymbol) -> InvariantSymbol:
    return InvariantSymbol(P.spectrum, tuple(b.conj().T for b in P.blocks), name=f'{P.name}*' if P.name else '')


def commutator(P: InvariantSymbol, Q: InvariantSymbol) -> InvariantSymbol:
    spectrum = require_same_spectrum(P, Q)
    return InvariantSymbol(spectrum, tuple(a @ b - b @ a for a, b in zip(P.blocks, Q.blocks)))


def normal_defect(matrix: np.ndarray) -> float:
    """||m m* - m* m|| / max(1, ||m||^2)."""
    gram = matrix @ matrix.conj().T - matrix.conj().T @ matrix
    norm = np.linalg.norm(matrix, 2)
    return float(np.linalg.norm(gram, 2) / max(1.0, norm ** 2))


def commutation_defect(a: np.ndarray, b: np.ndarray) -> float:
    """||ab - ba|| / max(1, ||a|| ||b||)."""
    scale = max(1.0, np.linalg.norm(a, 2) * np.linalg.norm(b, 2))
    return float(np.linalg.norm(a @ b - b @ a, 2) / scale)


@dataclass(frozen=True)
class NormalityCheck:
    blocks: Tuple[bool, ...]

    @property
    def normal(self) -> bool:
        return all(self.blocks)

    @property
    def failing(self) -> List[int]:
        return [k for k, ok in enumerate(self.blocks) if not ok]

    def __bool__(self) -> bool:
        return self.normal


def is_normal(P: InvariantSymbol, tol: float = 1e-10) -> NormalityCheck:
    return NormalityCheck(tuple(
        diagonal or normal_defect(b) <= tol
        for b, diagonal in zip(P.blocks, P.diagonal_blocks)
    ))


def commuting_blocks(S: SystemSymbol, tol: float = 1e-10) -> Tuple[bool, ...]:
    """Per block: every pair of operators commutes within tol."""
    flags = []
    for k in range(S.spectrum.truncation):
        if S.diagonal_at(k):
            flags.append(True)
            continue
        matrices = S.blocks_at(k)
        flags.append(all(
            commutation_defect(matrices[i], matrices[j]) <= tol
            for i in range(len(matrices)) for j in range(i + 1, len(matrices))
        ))
    return tuple(flags)


def estimate_order(P: InvariantSymbol, tail_fraction: float = 0.5, min_samples: int = 8) -> float:
    """Slope of log||sigma(k)|| against log(1 + lambda_k) over the tail, times nu."""
    spectrum = P.spectrum
    idx = tail_samples(P.norms, spectrum.tail_start(tail_fraction))
    if idx.size < min_samples:
        raise InsufficientSamplesError(min_samples, int(idx.size), 'symbol norms')
    fit = line_fit(spectrum.log_scale[idx], np.log(P.norms[idx]))
    return fit.slope * spectrum.elliptic_order


# --- unitary eigendecompositions ---------------------------------------------

def _fix_phase(vector: np.ndarray) -> np.ndarray:
    """Make the largest-modulus entry real and positive."""
    pivot = vector[int(np.argmax(np.abs(vector)))]
    return vector * (abs(pivot) / pivot)


def canonical_basis(basis: np.ndarray) -> np.ndarray:
    """
    Deterministic orthonormal basis of span(basis): project the coordinate
    axes in input order and orthonormalize, so the result does not depend on
    which basis the eigensolver happened to return.
    """
    dim, rank = basis.shape
    if rank == 1:
        return _fix_phase(basis[:, 0] / np.linalg.norm(basis[:, 0]))[:, None]
    projector = basis @ basis.conj().T
    vectors: List[np.ndarray] = []
    for i in range(dim):
        v = projector[:, i].copy()
        for _ in range(2):
            for w in vectors:
                v -= np.vdot(w, v) * w
        norm = np.linalg.norm(v)
        if norm > BASIS_SKIP:
            vectors.append(v / norm)
        if len(vectors) == rank:
            break
    return np.column_stack([_fix_phase(v) for v in vectors])


def _sort_key(value: complex, scale: float) -> Tuple[float, float]:
    # quantize the real part so rounding noise cannot reorder equal real parts
    return (round(value.real / scale, 9), value.imag)


def eigenspaces(matrix: np.ndarray, cluster_tol: Optional[float] = None) -> List[Tuple[complex, np.ndarray]]:
    """
    Eigenvalue clusters of a normal matrix, sorted by (Re, Im), each with a
    canonical orthonormal basis of its eigenspace.
    """
    dim = matrix.shape[0]
    scale = max(1.0, float(np.linalg.norm(matrix, 2)))
    cluster_tol = CLUSTER_RTOL * scale if cluster_tol is None else cluster_tol
    if is_diagonal(matrix):
        values = np.diag(matrix).astype(complex)
        vectors = np.eye(dim, dtype=complex)
    else:
        triangular, vectors = scipy.linalg.schur(matrix, output='complex')
        values = np.diag(triangular).copy()

    order = sorted(range(dim), key=lambda i: _sort_key(values[i], scale))
    clusters: List[List[int]] = []
    for i in order:
        for members in clusters:
            if abs(values[i] - values[members[0]]) <= cluster_tol:
                members.append(i)
                break
        else:
            clusters.append([i])

    result = []
    for members in clusters:
        basis = canonical_basis(vectors[:, sorted(members)])
        result.append((complex(np.mean(values[members])), basis))
    return result


def normal_eig(matrix: np.ndarray, cluster_tol: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
    """
    (mu, V) with matrix = V diag(mu) V*, V unitary, under the deterministic
    convention: eigenvalues sorted by (Re, Im), degenerate eigenspaces
    orthonormalized in input-basis order, largest entry of each column real
    and positive.
    """
    columns, values = [], []
    for _, basis in eigenspaces(matrix, cluster_tol):
        for column in basis.T:
            columns.append(column)
            values.append(np.vdot(column, matrix @ column))
    return np.array(values, dtype=complex), np.column_stack(columns)


@dataclass(frozen=True)
class NormalBlockFactorization:
    """sigma(k) = Q* diag(mu) Q; row l of Q is the conjugate of the l-th eigenvector."""
    k: int
    q: np.ndarray
    mu: np.ndarray

    @property
    def eigenvectors(self) -> np.ndarray:
        return self.q.conj().T

    def reconstruct(self) -> np.ndarray:
        return self.q.conj().T @ np.diag(self.mu) @ self.q


def factor_normal_block(P: InvariantSymbol, k: int, tol: float = 1e-10) -> NormalBlockFactorization:
    matrix = P.block(k)
    if not P.diagonal_blocks[k]:
        defect = normal_defect(matrix)
        if defect > tol:
            raise StructuralError(f"not normal (defect {defect:.3g} > {tol:g})", block=k)
    mu, vectors = normal_eig(matrix)
    return NormalBlockFactorization(k=k, q=vectors.conj().T, mu=mu)


@dataclass(frozen=True)
class JointFactorization:
    """Q sigma_j(k) Q* = diag(mu[j]) for every operator j."""
    k: int
    q: np.ndarray
    mu: np.ndarray  # n x d_k

    @property
    def eigenvectors(self) -> np.ndarray:
        return self.q.conj().T


def _refine(groups: List[np.ndarray], matrix: np.ndarray) -> List[np.ndarray]:
    scale = max(1.0, float(np.linalg.norm(matrix, 2)))
    refined = []
    for group in groups:
        if group.shape[1] == 1:
            refined.append(group)
            continue
        restricted = group.conj().T @ matrix @ group
        for _, basis in eigenspaces(restricted, CLUSTER_RTOL * scale):
            refined.append(group @ basis)
    return refined


def _off_diagonal_mass(vectors: np.ndarray, matrices: Sequence[np.ndarray]) -> float:
    worst = 0.0
    for m in matrices:
        rotated = vectors.conj().T @ m @ vectors
        off = rotated - np.diag(np.diag(rotated))
        worst = max(worst, float(np.linalg.norm(off)) / max(1.0, float(np.linalg.norm(m, 2))))
    return worst


def _joint_basis(matrices: Sequence[np.ndarray], first: np.ndarray) -> np.ndarray:
    groups = [basis for _, basis in eigenspaces(first)]
    for m in matrices:
        groups = _refine(groups, m)
    return np.hstack([canonical_basis(g) for g in groups])


def joint_factor_commuting(
    S: SystemSymbol, k: int, tol: float = 1e-10, seed: int = 0
) -> JointFactorization:
    """
    One unitary diagonalizing every sigma_j(k): diagonalize sigma_1, refine
    each eigenspace with sigma_2, ..., sigma_n. If refinement leaves
    off-diagonal mass (near-degenerate clusters), restart from a seeded
    random linear combination of the family.
    """
    matrices = S.blocks_at(k)
    if S.diagonal_at(k):
        dim = matrices[0].shape[0]
        return JointFactorization(
            k=k, q=np.eye(dim, dtype=complex), mu=np.array([np.diag(m) for m in matrices], dtype=complex)
        )
    for j, m in enumerate(matrices):
        defect = normal_defect(m)
        if defect > tol:
            raise StructuralError(f"operator {j} not normal (defect {defect:.3g})", block=k)
    for i in range(len(matrices)):
        for j in range(i + 1, len(matrices)):
            defect = commutation_defect(matrices[i], matrices[j])
            if defect > tol:
                raise StructuralError(f"operators {i} and {j} do not commute (defect {defect:.3g})", block=k)

    vectors = _joint_basis(matrices[1:], matrices[0])
    if _off_diagonal_mass(vectors, matrices) > 10 * tol:
        rng = np.random.default_rng(seed + k)
        weights = rng.standard_normal(len(matrices)) + 1j * rng.standard_normal(len(matrices))
        combination = sum(w * m for w, m in zip(weights, matrices))
        logger.debug(f"block {k}: refinement stalled, using random combination")
        vectors = _joint_basis(matrices, combination)
        mass = _off_diagonal_mass(vectors, matrices)
        if mass > 10 * tol:
            raise StructuralError(f"joint diagonalization failed (off-diagonal mass {mass:.3g})", block=k)

    mu = np.array([
        [np.vdot(v, m @ v) for v in vectors.T] for m in matrices
    ], dtype=complex)
    return JointFactorization(k=k, q=vectors.conj().T, mu=mu)
