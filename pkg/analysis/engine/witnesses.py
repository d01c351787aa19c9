"""
Counterexample fields exhibiting failures of global hypoellipticity.

Each witness is a coefficient field u whose images under the operators decay
much faster than u itself:

    kernel      u(k) a unit joint-kernel vector on every block of Z
    gh          u(k_N) a unit minimizer of the stacked gain on blocks whose
                gain falls below (1 + lambda)^(-N), N escalating
    agh         amplitudes (1 + lambda)^(-(s + rho/2)/nu) on minimizers in
                ker^perp: u sits in H^s while the images are smooth
    commuting   unit joint eigenvectors with small positive joint score

The bundle recomputes the images and classifies every decay afresh, so a
witness can be judged independently of how it was built.
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from django.db import models

from analysis.engine.blocks import map_blocks
from analysis.engine.diagnostics import Verdict, diagnose_system
from spectra.config import RunConfig
from spectra.engine.fields import (
    CoefficientField,
    DecayReport,
    combine,
    decay_classify,
    sobolev_partials,
)
from spectra.engine.symbols import (
    SystemSymbol,
    apply,
    as_system,
    canonical_basis,
    joint_factor_commuting,
    right_singular_pairs,
)
from spectra.exceptions import PreconditionError

logger = logging.getLogger(__name__)


class WitnessKind(models.TextChoices):
    KERNEL = 'kernel', 'Joint-kernel witness'
    GH = 'gh', 'GH failure witness'
    AGH = 'agh', 'AGH failure witness'
    COMMUTING = 'commuting', 'Commuting-system GH failure witness'


@dataclass(frozen=True)
class WitnessBundle:
    kind: str
    u: CoefficientField
    images: Tuple[CoefficientField, ...]
    u_decay: DecayReport
    image_decays: Tuple[DecayReport, ...]
    construction_log: Tuple[Tuple[float, int, float], ...]  # (N, k_N, achieved gain)
    notes: Tuple[str, ...] = ()
    partial_norms: Dict[str, List[float]] = field(default_factory=dict)
    config_hash: str = ''

    @property
    def selected_blocks(self) -> List[int]:
        return [k for _, k, _ in self.construction_log]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': str(self.kind),
            'construction_log': [{'N': n, 'k': k, 'gain': g} for n, k, g in self.construction_log],
            'u_decay': self.u_decay.to_dict(),
            'image_decays': [d.to_dict() for d in self.image_decays],
            'notes': list(self.notes),
            'partial_norms': self.partial_norms,
            'config_hash': self.config_hash,
        }


def _field_from(spectrum, placed: Dict[int, np.ndarray]) -> CoefficientField:
    blocks = tuple(
        placed.get(k, np.zeros(int(m), dtype=complex))
        for k, m in enumerate(spectrum.multiplicities)
    )
    return CoefficientField(spectrum, blocks)


def make_bundle(
    kind: str,
    S: SystemSymbol,
    u: CoefficientField,
    construction_log: Sequence[Tuple[float, int, float]],
    config: RunConfig,
    notes: Sequence[str] = (),
    partial_norms: Optional[Dict[str, List[float]]] = None,
) -> WitnessBundle:
    images = tuple(apply(op, u) for op in S.operators)

    def classify(v: CoefficientField) -> DecayReport:
        return decay_classify(v, config.tail_fraction, config.n_probe, config.min_samples)

    bundle = WitnessBundle(
        kind=kind,
        u=u,
        images=images,
        u_decay=classify(u),
        image_decays=tuple(classify(v) for v in images),
        construction_log=tuple(construction_log),
        notes=tuple(notes),
        partial_norms=partial_norms or {},
        config_hash=config.config_hash(),
    )
    logger.info(
        f"{kind} witness on {len(construction_log)} blocks: u {bundle.u_decay.decay_class}, "
        f"images {[d.decay_class for d in bundle.image_decays]}"
    )
    return bundle


def _stacked_minimizer(S: SystemSymbol, k: int, config: RunConfig, restricted: bool) -> Tuple[float, np.ndarray, np.ndarray]:
    """
    (gain, unit minimizing vector, joint-kernel basis) of block k. The restricted
    minimizer is taken from ker^perp; a block with nothing outside the kernel has
    gain +inf.
    """
    matrices = S.blocks_at(k)
    values, vectors = right_singular_pairs(matrices, S.diagonal_at(k))
    tau = config.zero_threshold(float(values[-1]), values.size)
    zero = values <= tau
    kernel = vectors[:, zero]
    if restricted:
        if np.all(zero):
            return float('inf'), np.zeros(values.size, dtype=complex), kernel
        first = int(np.argmax(~zero))
        return float(values[first]), vectors[:, first], kernel
    if np.any(zero):
        return 0.0, canonical_basis(kernel)[:, 0], kernel
    return float(values[0]), vectors[:, 0], kernel


def kernel_witness(S, config: Optional[RunConfig] = None) -> WitnessBundle:
    """u(k) = first canonical joint-kernel vector on every block with a kernel."""
    config = config or RunConfig()
    S = as_system(S)
    placed: Dict[int, np.ndarray] = {}
    log = []
    for k in range(S.spectrum.truncation):
        _, _, kernel = _stacked_minimizer(S, k, config, restricted=False)
        if kernel.shape[1]:
            placed[k] = canonical_basis(kernel)[:, 0]
            log.append((float('inf'), k, 0.0))
    if not placed:
        raise PreconditionError("no block has a nontrivial joint kernel at this truncation")
    return make_bundle(WitnessKind.KERNEL, S, _field_from(S.spectrum, placed), log, config)


def gh_failure_witness(S, count: int = 10, config: Optional[RunConfig] = None) -> WitnessBundle:
    """
    Blocks k_N with stacked gain below (1 + lambda_{k_N})^(-N), scanned in
    block order with N starting at n_probe and raised after each hit; with a
    nonempty kernel census the last ``count`` kernel blocks are used instead
    (gain exactly 0). Systems diagnosed GH-consistent have no witness.
    """
    config = config or RunConfig()
    S = as_system(S)
    spectrum = S.spectrum
    verdict = diagnose_system(S, config=config).verdict
    if verdict == Verdict.GH_CONSISTENT:
        raise PreconditionError("no decaying subsequence: the system is diagnosed GH-consistent at this truncation")
    minimizers = map_blocks(
        lambda k: _stacked_minimizer(S, k, config, restricted=False), range(spectrum.truncation), config.workers
    )
    notes: List[str] = []
    zero_blocks = [k for k, (gain, _, _) in enumerate(minimizers) if gain == 0.0]
    if zero_blocks:
        chosen = zero_blocks[-count:]
        log = [(float('inf'), k, 0.0) for k in chosen]
        notes.append(f"{len(zero_blocks)} blocks with a joint kernel; using the last {len(chosen)}")
    else:
        log = []
        n = config.n_probe
        for k, (gain, _, _) in enumerate(minimizers):
            lam = spectrum.eigenvalues[k]
            if lam > 0 and gain < (1.0 + lam) ** (-n):
                log.append((n, k, gain))
                n += 1.0
                if len(log) == count:
                    break
        if not log:
            raise PreconditionError("no decaying subsequence: the system looks GH-consistent at this truncation")
    if len(log) < count:
        notes.append(f"found {len(log)} of {count} requested blocks")
    placed = {k: minimizers[k][1] for _, k, _ in log}
    return make_bundle(WitnessKind.GH, S, _field_from(spectrum, placed), log, config, notes)


def agh_failure_witness(
    S, s: float = 0.0, rho: float = 3.0, count: int = 10, config: Optional[RunConfig] = None
) -> WitnessBundle:
    """
    u(k_l) = (1 + lambda_{k_l})^(-(s + rho/2)/nu) phi_l with phi_l a unit
    minimizer of the restricted stacked gain in ker^perp, on the blocks where
    that gain falls below (1 + lambda)^(-N), N escalating from n_probe.
    """
    config = config or RunConfig()
    S = as_system(S)
    spectrum = S.spectrum
    if not rho > spectrum.manifold_dim:
        raise PreconditionError(f"rho must exceed the manifold dimension {spectrum.manifold_dim}, got {rho:g}")
    minimizers = map_blocks(
        lambda k: _stacked_minimizer(S, k, config, restricted=True), range(spectrum.truncation), config.workers
    )
    log = []
    n = config.n_probe
    for k, (gain, _, _) in enumerate(minimizers):
        lam = spectrum.eigenvalues[k]
        if lam > 0 and np.isfinite(gain) and gain < (1.0 + lam) ** (-n):
            log.append((n, k, gain))
            n += 1.0
            if len(log) == count:
                break
    if not log:
        raise PreconditionError("no decaying subsequence: restricted gains look polynomially bounded")

    exponent = -(s + rho / 2.0) / spectrum.elliptic_order
    placed = {
        k: (1.0 + spectrum.eigenvalues[k]) ** exponent * minimizers[k][1]
        for _, k, _ in log
    }
    u = _field_from(spectrum, placed)
    notes = [f"amplitude (1 + lambda)^({exponent:g}) on minimizers in ker^perp"]
    if len(log) < count:
        notes.append(f"found {len(log)} of {count} requested blocks")
    partials = {
        f'H^{s:g}': sobolev_partials(u, s).tolist(),
        f'H^{s + rho / 2.0:g}': sobolev_partials(u, s + rho / 2.0).tolist(),
    }
    return make_bundle(WitnessKind.AGH, S, u, log, config, notes, partials)


def commuting_failure_witness(S, count: int = 10, config: Optional[RunConfig] = None) -> WitnessBundle:
    """
    Unit joint eigenvectors with positive joint score max_j |mu_j(k)_l| below
    (1 + lambda)^(-N), N escalating; with zero scores present the last
    ``count`` kernel directions are used.
    """
    config = config or RunConfig()
    S = as_system(S)
    spectrum = S.spectrum

    def best_direction(k: int) -> Tuple[float, Optional[np.ndarray], bool]:
        factorization = joint_factor_commuting(S, k, config.normal_tol, config.seed)
        scores = np.max(np.abs(factorization.mu), axis=0)
        tau = config.zero_threshold(float(np.max(scores)), scores.size)
        vectors = factorization.eigenvectors
        zero = np.flatnonzero(scores <= tau)
        if zero.size:
            return 0.0, vectors[:, zero[0]], True
        l = int(np.argmin(scores))
        return float(scores[l]), vectors[:, l], False

    directions = map_blocks(best_direction, range(spectrum.truncation), config.workers)
    notes: List[str] = []
    zero_blocks = [k for k, (_, _, is_zero) in enumerate(directions) if is_zero]
    if zero_blocks:
        log = [(float('inf'), k, 0.0) for k in zero_blocks[-count:]]
        notes.append(f"{len(zero_blocks)} blocks with a zero joint score; using the last {len(log)}")
    else:
        log = []
        n = config.n_probe
        for k, (score, _, _) in enumerate(directions):
            lam = spectrum.eigenvalues[k]
            if lam > 0 and score < (1.0 + lam) ** (-n):
                log.append((n, k, score))
                n += 1.0
                if len(log) == count:
                    break
        if not log:
            raise PreconditionError("no decaying subsequence: joint scores look polynomially bounded")
    if len(log) < count:
        notes.append(f"found {len(log)} of {count} requested blocks")
    placed = {k: directions[k][1] for _, k, _ in log}
    return make_bundle(WitnessKind.COMMUTING, S, _field_from(spectrum, placed), log, config, notes)


@dataclass(frozen=True)
class SeparationCheck:
    trials: int
    worst_margin: float  # min over trials and blocks of ||u(k) + v(k)|| - ||u(k)||
    passed: bool


def kernel_separation_check(
    bundle: WitnessBundle, S, trials: int = 20, seed: int = 0, config: Optional[RunConfig] = None
) -> SeparationCheck:
    """
    Random fields v supported in the per-block joint kernels must satisfy
    ||u(k) + v(k)|| >= ||u(k)|| blockwise (u is orthogonal to every kernel).
    """
    config = config or RunConfig()
    S = as_system(S)
    spectrum = S.spectrum
    rng = np.random.default_rng(seed)
    kernels = [
        _stacked_minimizer(S, k, config, restricted=False)[2]
        for k in range(spectrum.truncation)
    ]
    worst = float('inf')
    for _ in range(trials):
        blocks = []
        for kernel in kernels:
            z = rng.standard_normal(kernel.shape[1]) + 1j * rng.standard_normal(kernel.shape[1])
            blocks.append(kernel @ z if kernel.shape[1] else np.zeros(kernel.shape[0], dtype=complex))
        v = CoefficientField(spectrum, tuple(blocks))
        total = combine(bundle.u, 1.0, v, 1.0)
        margins = total.block_norms - bundle.u.block_norms
        worst = min(worst, float(np.min(margins)))
    tolerance = 1e-12 * max(1.0, float(np.max(bundle.u.block_norms)))
    return SeparationCheck(trials=trials, worst_margin=worst, passed=worst >= -tolerance)
