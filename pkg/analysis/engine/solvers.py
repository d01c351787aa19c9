"""
Per-block solvers for P u = f and for systems (P_1, ..., P_n) u = (f_1, ..., f_n).

Every solver returns the solution in ker^perp of the (joint) kernel, so it is
the minimal-norm choice, and records rather than raises the blocks where the
data cannot be matched (compatibility failures) or where the normal-system
algorithm finds no transversal operator (structural failures).
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
from django.core.exceptions import ValidationError
from django.db import models

from analysis.engine.blocks import map_blocks
from analysis.engine.diagnostics import DiagnosticMode, detect_mode, require_normal
from spectra.config import RunConfig
from spectra.engine.fields import CoefficientField, require_same_spectrum
from spectra.engine.symbols import (
    InvariantSymbol,
    SystemSymbol,
    as_system,
    joint_factor_commuting,
    normal_eig,
    right_singular_pairs,
)
from spectra.exceptions import StructuralError

logger = logging.getLogger(__name__)


class SolveMethod(models.TextChoices):
    AUTO = 'auto', 'Pick from structure'
    SINGLE = 'single', 'Minimal-norm single-operator solve'
    LSQ = 'lsq', 'Stacked least squares'
    NORMAL = 'normal', 'Normal-system eigenbasis algorithm'
    COMMUTING = 'commuting', 'Joint eigenbasis of a commuting family'


@dataclass(frozen=True)
class SolveOutcome:
    solution: CoefficientField
    residual: np.ndarray
    compat_failures: Tuple[Tuple[int, float], ...]
    kernel_dims: Tuple[int, ...]
    structural_failures: Tuple[Tuple[int, int, str], ...] = ()
    method: str = ''
    config_hash: str = ''

    @property
    def ok(self) -> bool:
        return not self.compat_failures and not self.structural_failures

    def residual_rows(self) -> List[Tuple[int, float, float, int]]:
        """CSV rows: k, lambda, residual, kernel_dim."""
        lam = self.solution.spectrum.eigenvalues
        return [
            (k, float(lam[k]), float(self.residual[k]), self.kernel_dims[k])
            for k in range(len(self.residual))
        ]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'method': str(self.method),
            'max_residual': float(np.max(self.residual)) if self.residual.size else 0.0,
            'compat_failures': [{'k': k, 'deficit': d} for k, d in self.compat_failures],
            'structural_failures': [{'k': k, 'direction': m, 'message': msg} for k, m, msg in self.structural_failures],
            'kernel_dims': list(self.kernel_dims),
            'config_hash': self.config_hash,
        }


@dataclass
class _BlockResult:
    solution: np.ndarray
    kernel_dim: int
    deficit: Optional[float] = None
    structural: List[Tuple[int, str]] = field(default_factory=list)


def _check_data(S: SystemSymbol, F: Sequence[CoefficientField]) -> None:
    if len(F) != S.n:
        raise ValidationError(
            "system has %(n)s operators but %(found)s data fields were given",
            code='field_count', params={'n': S.n, 'found': len(F)},
        )
    require_same_spectrum(*S.operators, *F)


def residual(S, u: CoefficientField, F: Sequence[CoefficientField]) -> np.ndarray:
    """Per block (sum_j ||sigma_j(k) u(k) - f_j(k)||^2)^(1/2)."""
    S = as_system(S)
    _check_data(S, F)
    require_same_spectrum(S.operators[0], u)
    values = np.zeros(S.spectrum.truncation)
    for k in range(S.spectrum.truncation):
        values[k] = np.sqrt(sum(
            np.linalg.norm(op.blocks[k] @ u.blocks[k] - f.blocks[k]) ** 2
            for op, f in zip(S.operators, F)
        ))
    return values


def _data_norm(rhs: Sequence[np.ndarray]) -> float:
    return float(np.sqrt(sum(np.linalg.norm(g) ** 2 for g in rhs)))


def minimal_norm_block(
    matrices: Sequence[np.ndarray], rhs: Sequence[np.ndarray], diagonal: bool, config: RunConfig
) -> Tuple[np.ndarray, int, float]:
    """
    Minimal-norm least-squares solution of [m_1; ...; m_n] x = [g_1; ...; g_n]
    with singular values at or below the zero threshold dropped, the kernel
    dimension, and the distance of the data from the computed range.
    """
    dim = matrices[0].shape[1]
    if diagonal:
        diagonals = np.array([np.diag(m) for m in matrices])
        data = np.array([np.asarray(g) for g in rhs])
        column_norms = np.sqrt(np.sum(np.abs(diagonals) ** 2, axis=0))
        tau = config.zero_threshold(float(np.max(column_norms)) if dim else 0.0, dim)
        keep = column_norms > tau
        x = np.zeros(dim, dtype=complex)
        x[keep] = np.sum(diagonals[:, keep].conj() * data[:, keep], axis=0) / column_norms[keep] ** 2
        misfit = data - diagonals * x
        return x, int(dim - np.count_nonzero(keep)), float(np.linalg.norm(misfit))

    stacked = np.vstack(matrices)
    data = np.concatenate(rhs)
    u, s, vh = scipy.linalg.svd(stacked, full_matrices=False)
    tau = config.zero_threshold(float(s[0]) if s.size else 0.0, dim)
    rank = int(np.count_nonzero(s > tau))
    coefficients = u[:, :rank].conj().T @ data
    x = vh[:rank].conj().T @ (coefficients / s[:rank])
    deficit = float(np.linalg.norm(data - u[:, :rank] @ coefficients))
    return x, dim - rank, deficit


def _assemble(
    S: SystemSymbol,
    F: Sequence[CoefficientField],
    results: Sequence[_BlockResult],
    method: str,
    config: RunConfig,
) -> SolveOutcome:
    solution = CoefficientField(S.spectrum, tuple(r.solution for r in results))
    compat, structural = [], []
    for k, r in enumerate(results):
        if r.deficit is not None and r.deficit > config.compat_threshold(_data_norm([f.blocks[k] for f in F])):
            compat.append((k, r.deficit))
        structural.extend((k, m, message) for m, message in r.structural)
    if compat:
        logger.warning(f"{method} solve: {len(compat)} blocks fail compatibility, first at k={compat[0][0]}")
    if structural:
        logger.warning(f"{method} solve: {len(structural)} structural failures, first at k={structural[0][0]}")
    return SolveOutcome(
        solution=solution,
        residual=residual(S, solution, F),
        compat_failures=tuple(compat),
        kernel_dims=tuple(r.kernel_dim for r in results),
        structural_failures=tuple(structural),
        method=method,
        config_hash=config.config_hash(),
    )


def solve_single(P: InvariantSymbol, f: CoefficientField, config: Optional[RunConfig] = None) -> SolveOutcome:
    """Minimal-norm preimage of the projection of f onto range sigma(k), per block."""
    config = config or RunConfig()
    S = SystemSymbol.single(P)
    _check_data(S, [f])

    def block(k: int) -> _BlockResult:
        x, kernel_dim, deficit = minimal_norm_block([P.blocks[k]], [f.blocks[k]], P.diagonal_blocks[k], config)
        return _BlockResult(x, kernel_dim, deficit)

    results = map_blocks(block, range(P.spectrum.truncation), config.workers)
    return _assemble(S, [f], results, SolveMethod.SINGLE, config)


def solve_system_lsq(S, F: Sequence[CoefficientField], config: Optional[RunConfig] = None) -> SolveOutcome:
    config = config or RunConfig()
    S = as_system(S)
    _check_data(S, F)

    def block(k: int) -> _BlockResult:
        x, kernel_dim, deficit = minimal_norm_block(
            S.blocks_at(k), [f.blocks[k] for f in F], S.diagonal_at(k), config
        )
        return _BlockResult(x, kernel_dim, deficit)

    results = map_blocks(block, range(S.spectrum.truncation), config.workers)
    return _assemble(S, F, results, SolveMethod.LSQ, config)


# --- normal systems ----------------------------------------------------------

def _principal_angle(kernel: np.ndarray, direction: np.ndarray) -> float:
    """Angle between span{direction} and the subspace spanned by the orthonormal columns of kernel."""
    if kernel.shape[1] == 0:
        return float(np.pi / 2)
    cosine = min(1.0, float(np.linalg.norm(kernel.conj().T @ direction)))
    return float(np.arccos(cosine))


def _normal_block(S: SystemSymbol, F: Sequence[CoefficientField], k: int, config: RunConfig) -> _BlockResult:
    matrices = S.blocks_at(k)
    data = [f.blocks[k] for f in F]
    dim = matrices[0].shape[0]

    # split off the joint kernel; its complement is invariant under every normal sigma_j
    values, vectors = right_singular_pairs(matrices, S.diagonal_at(k))
    tau = config.zero_threshold(float(values[-1]), dim)
    kernel, complement = vectors[:, values <= tau], vectors[:, values > tau]
    kernel_dim = kernel.shape[1]
    kernel_deficit = float(np.sqrt(sum(np.linalg.norm(kernel.conj().T @ g) ** 2 for g in data)))
    if kernel_dim == dim:
        return _BlockResult(np.zeros(dim, dtype=complex), kernel_dim, kernel_deficit)

    reduced = [complement.conj().T @ m @ complement for m in matrices]
    reduced_data = [complement.conj().T @ g for g in data]
    factors = []
    for m in reduced:
        mu, basis = normal_eig(m)
        threshold = config.zero_threshold(float(np.max(np.abs(mu))), mu.size)
        factors.append((mu, basis, np.abs(mu) > threshold))

    # working operator: most nonzero eigenvalues, smallest index on ties
    j = int(np.argmax([np.count_nonzero(nonzero) for _, _, nonzero in factors]))
    mu_j, basis_j, nonzero_j = factors[j]
    w = np.zeros(mu_j.size, dtype=complex)
    g_j = basis_j.conj().T @ reduced_data[j]
    w[nonzero_j] = g_j[nonzero_j] / mu_j[nonzero_j]

    zero_set = np.flatnonzero(~nonzero_j)
    structural: List[Tuple[int, str]] = []
    if zero_set.size:
        selected: List[int] = []
        for m in zero_set:
            direction = basis_j[:, m]
            chosen = next(
                (
                    other for other in range(len(factors))
                    if other != j
                    and _principal_angle(factors[other][1][:, ~factors[other][2]], direction) > config.angle_min
                ),
                None,
            )
            if chosen is None:
                structural.append((int(m), f"no operator transversal to eigendirection {int(m)} of operator {j}"))
            elif chosen not in selected:
                selected.append(chosen)
        w[zero_set] = _solve_zero_components(factors, reduced_data, j, w, zero_set, selected or
                                             [o for o in range(len(factors)) if o != j])

    solution = complement @ (basis_j @ w)
    return _BlockResult(solution, kernel_dim, kernel_deficit, structural)


def _solve_zero_components(factors, reduced_data, j: int, w: np.ndarray, zero_set: np.ndarray, operators: List[int]) -> np.ndarray:
    """
    Components of w on the zero eigendirections of operator j from the
    nonzero-eigenvalue rows of the selected operators:
    (Q_o Q_j^*)[l, :] w = g_o[l] / mu_o[l] for l in I_o. Falls back to every
    other operator when the selected rows do not determine them.
    """
    def rows(chosen: Sequence[int]):
        lhs, rhs = [], []
        basis_j = factors[j][1]
        known = np.setdiff1d(np.arange(w.size), zero_set)
        for o in chosen:
            mu_o, basis_o, nonzero_o = factors[o]
            change = basis_o.conj().T @ basis_j
            g_o = basis_o.conj().T @ reduced_data[o]
            for l in np.flatnonzero(nonzero_o):
                lhs.append(change[l, zero_set])
                rhs.append(g_o[l] / mu_o[l] - change[l, known] @ w[known])
        return np.array(lhs, dtype=complex).reshape(-1, zero_set.size), np.array(rhs, dtype=complex)

    solution = np.zeros(zero_set.size, dtype=complex)
    for chosen in (operators, [o for o in range(len(factors)) if o != j]):
        lhs, rhs = rows(chosen)
        if not lhs.shape[0]:
            continue
        solution, _, rank, _ = scipy.linalg.lstsq(lhs, rhs)
        if rank == zero_set.size:
            break
    return solution


def solve_system_normal(S, F: Sequence[CoefficientField], config: Optional[RunConfig] = None) -> SolveOutcome:
    """
    Diagonalize a working operator sigma_j(k) = V diag(mu) V^* on the joint-kernel
    complement, divide where mu is nonzero, and recover the zero-eigenvalue
    components from an operator whose kernel is transversal to them.
    """
    config = config or RunConfig()
    S = as_system(S)
    _check_data(S, F)
    require_normal(S, config)
    results = map_blocks(lambda k: _normal_block(S, F, k, config), range(S.spectrum.truncation), config.workers)
    return _assemble(S, F, results, SolveMethod.NORMAL, config)


# --- commuting systems -------------------------------------------------------

def _commuting_block(S: SystemSymbol, F: Sequence[CoefficientField], k: int, config: RunConfig) -> _BlockResult:
    factorization = joint_factor_commuting(S, k, config.normal_tol, config.seed)
    q, mu = factorization.q, factorization.mu
    transformed = np.array([q @ f.blocks[k] for f in F])
    moduli = np.abs(mu)
    tau = config.zero_threshold(float(np.max(moduli)) if moduli.size else 0.0, q.shape[0])

    w = np.zeros(q.shape[0], dtype=complex)
    lost = 0.0
    kernel_dim = 0
    for l in range(q.shape[0]):
        best = int(np.argmax(moduli[:, l]))
        if moduli[best, l] > tau:
            w[l] = transformed[best, l] / mu[best, l]
        else:
            kernel_dim += 1
            lost += float(np.sum(np.abs(transformed[:, l]) ** 2))
    return _BlockResult(q.conj().T @ w, kernel_dim, float(np.sqrt(lost)))


def solve_system_commuting(S, F: Sequence[CoefficientField], config: Optional[RunConfig] = None) -> SolveOutcome:
    """Per shared eigendirection, divide by the operator with the largest |mu_j|."""
    config = config or RunConfig()
    S = as_system(S)
    _check_data(S, F)
    results = map_blocks(lambda k: _commuting_block(S, F, k, config), range(S.spectrum.truncation), config.workers)
    return _assemble(S, F, results, SolveMethod.COMMUTING, config)


def solve(S, F: Sequence[CoefficientField], method: str = 'auto', config: Optional[RunConfig] = None) -> SolveOutcome:
    config = config or RunConfig()
    S = as_system(S)
    if method == SolveMethod.AUTO:
        mode = detect_mode(S, config)
        method = {
            DiagnosticMode.GH_SINGLE: SolveMethod.SINGLE,
            DiagnosticMode.COMMUTING: SolveMethod.COMMUTING,
            DiagnosticMode.NORMAL: SolveMethod.NORMAL,
        }.get(mode, SolveMethod.LSQ)
        logger.info(f"auto-selected solve method {method}")
    if method == SolveMethod.SINGLE:
        if S.n != 1:
            raise StructuralError(f"method single needs one operator, got {S.n}")
        _check_data(S, F)
        return solve_single(S.operators[0], F[0], config)
    if method == SolveMethod.LSQ:
        return solve_system_lsq(S, F, config)
    if method == SolveMethod.NORMAL:
        return solve_system_normal(S, F, config)
    if method == SolveMethod.COMMUTING:
        return solve_system_commuting(S, F, config)
    raise ValueError(f"unknown solve method {method!r}")


def max_block_deviation(a: CoefficientField, b: CoefficientField) -> float:
    """max_k ||a(k) - b(k)|| / max(1, ||b(k)||)."""
    require_same_spectrum(a, b)
    return float(max(
        np.linalg.norm(x - y) / max(1.0, float(np.linalg.norm(y)))
        for x, y in zip(a.blocks, b.blocks)
    ))
