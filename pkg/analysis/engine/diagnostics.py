"""
Diagnostics Engine for Hypoellipticity and Solvability

Every characterization is turned into the same finite-truncation test:

1. Build a gain curve g(k), one sample per stored block
2. Fit a polynomial lower bound g(k) >= C (1 + lambda_k)^gamma over the tail
3. Take the census of blocks with a nontrivial (joint) kernel
4. Derive the verdict from the fits and the census alone

Modes differ only in how g(k) and the kernel census are computed:

    gh          smallest singular value of sigma(k)           (solvability: restricted)
    gs          smallest nonzero singular value of sigma(k)
    system      stacked smallest singular value                (solvability: restricted)
    system-restricted
                stacked smallest nonzero singular value
    normal      smallest nonzero |eigenvalue| over operators   (every block normal)
    commuting   smallest positive joint score max_j |mu_j|     (normal, pairwise commuting)
"""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from django.db import models

from analysis.engine.blocks import map_blocks
from spectra.config import RunConfig
from spectra.engine.fitting import (
    effective_exponents,
    envelope_intercept,
    envelope_slope,
    line_fit,
    tail_samples,
    window_trend,
)
from spectra.engine.formats import encode_float
from spectra.engine.spectrum import SpectrumModel, tail_index
from spectra.engine.symbols import (
    InvariantSymbol,
    SystemSymbol,
    as_system,
    block_singular_values,
    commuting_blocks,
    gain_from_singular_values,
    is_normal,
    joint_factor_commuting,
    stacked_block_gain,
)
from spectra.exceptions import InsufficientSamplesError, StructuralError

logger = logging.getLogger(__name__)


class Verdict(models.TextChoices):
    GH_CONSISTENT = 'GH_consistent', 'Globally hypoelliptic at truncation'
    GS_NOT_GH_CONSISTENT = 'GS_not_GH_consistent', 'Globally solvable, not hypoelliptic'
    NOT_GS_CONSISTENT = 'not_GS_consistent', 'Not globally solvable'
    INCONCLUSIVE = 'inconclusive', 'Inconclusive'


EXIT_CODES = {
    Verdict.GH_CONSISTENT: 0,
    Verdict.GS_NOT_GH_CONSISTENT: 1,
    Verdict.NOT_GS_CONSISTENT: 2,
    Verdict.INCONCLUSIVE: 3,
}


def exit_code(verdict: str) -> int:
    return EXIT_CODES[Verdict(verdict)]


class DiagnosticMode(models.TextChoices):
    GH_SINGLE = 'gh', 'GH test of a single operator'
    GS_SINGLE = 'gs', 'GS test of a single operator'
    SYSTEM = 'system', 'Stacked system gain'
    SYSTEM_RESTRICTED = 'system-restricted', 'Stacked system gain on the kernel complement'
    NORMAL = 'normal', 'Normal system eigenvalue test'
    COMMUTING = 'commuting', 'Commuting normal system joint-eigenvalue test'


# --- curves and fits ---------------------------------------------------------

@dataclass(frozen=True)
class GainSample:
    k: int
    eigenvalue: float
    gain: float  # +inf for a block with nothing outside the kernel
    kernel_dim: int


@dataclass(frozen=True)
class GainCurve:
    samples: Tuple[GainSample, ...]
    zero_blocks: Tuple[int, ...]

    @classmethod
    def from_arrays(cls, spectrum: SpectrumModel, gains: Sequence[float], kernel_dims: Sequence[int]) -> 'GainCurve':
        gains = np.asarray(gains, dtype=float)
        kernel_dims = np.asarray(kernel_dims, dtype=int)
        if gains.shape != (spectrum.truncation,) or kernel_dims.shape != gains.shape:
            raise ValueError(f"need one gain and kernel dimension per block, got {gains.shape} for K={spectrum.truncation}")
        if np.any(np.isnan(gains)) or np.any(gains < 0):
            raise ValueError("gains must be nonnegative")
        samples = tuple(
            GainSample(k=k, eigenvalue=float(lam), gain=float(g), kernel_dim=int(z))
            for k, (lam, g, z) in enumerate(zip(spectrum.eigenvalues, gains, kernel_dims))
        )
        zero_blocks = tuple(int(k) for k in np.flatnonzero(kernel_dims > 0))
        return cls(samples=samples, zero_blocks=zero_blocks)

    @property
    def gains(self) -> np.ndarray:
        return np.array([s.gain for s in self.samples], dtype=float)

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.array([s.eigenvalue for s in self.samples], dtype=float)

    @property
    def kernel_dims(self) -> np.ndarray:
        return np.array([s.kernel_dim for s in self.samples], dtype=int)

    def rows(self) -> List[Tuple[int, float, float, int]]:
        """CSV rows: k, lambda, gain, kernel_dim."""
        return [(s.k, s.eigenvalue, s.gain, s.kernel_dim) for s in self.samples]

    def to_dict(self) -> Dict[str, Any]:
        return {
            'k': [s.k for s in self.samples],
            'lambda': [s.eigenvalue for s in self.samples],
            'gain': [encode_float(s.gain) for s in self.samples],
            'kernel_dim': [s.kernel_dim for s in self.samples],
            'zero_blocks': list(self.zero_blocks),
        }


@dataclass(frozen=True)
class PolyBoundFit:
    """g(k) >= C (1 + lambda_k)^gamma on the window, gamma signed."""
    C: float
    gamma: float
    residual: float
    window: Tuple[int, int]
    ls_gamma: float
    windowed_gammas: Tuple[float, ...]
    min_effective_exponent: float
    super_polynomial: bool
    samples: int

    def to_dict(self) -> Dict[str, Any]:
        return {
            'C': self.C,
            'gamma': self.gamma,
            'residual': self.residual,
            'window': list(self.window),
            'ls_gamma': self.ls_gamma,
            'windowed_gammas': list(self.windowed_gammas),
            'min_effective_exponent': self.min_effective_exponent,
            'super_polynomial': self.super_polynomial,
            'samples': self.samples,
        }


def fit_poly_bound(
    curve: GainCurve,
    tail_fraction: float = 0.5,
    n_probe: float = 10.0,
    min_samples: int = 8,
) -> PolyBoundFit:
    """
    Fit over the strictly positive, finite gains of the tail window.

    gamma is the slope of the lower convex hull of (log(1 + lambda), log g) at
    the window's mean abscissa and C the largest constant keeping the bound
    below every sample. The bound is flagged super-polynomial when some tail
    sample sits below (1 + lambda)^(-n_probe) relative to the curve's median
    positive gain, or when the windowed least-squares slopes steepen towards
    the tail and end below -n_probe.
    """
    gains = curve.gains
    start = tail_index(len(gains), tail_fraction)
    idx = tail_samples(gains, start)
    if idx.size < min_samples:
        raise InsufficientSamplesError(min_samples, int(idx.size), 'gains')

    x = np.log1p(curve.eigenvalues[idx])
    y = np.log(gains[idx])
    gamma = envelope_slope(x, y)
    intercept = envelope_intercept(x, y, gamma)
    ls = line_fit(x, y)
    trend = window_trend(x, y, min_points=max(4, min_samples // 2))

    positive = gains[np.isfinite(gains) & (gains > 0)]
    exponents = effective_exponents(x, y, float(np.log(np.median(positive))))
    min_exponent = float(np.min(exponents))
    super_polynomial = bool(
        min_exponent < -n_probe or (trend.steepening() and trend.final <= -n_probe)
    )
    return PolyBoundFit(
        C=float(np.exp(intercept)),
        gamma=gamma,
        residual=ls.residual,
        window=(int(idx[0]), int(idx[-1])),
        ls_gamma=ls.slope,
        windowed_gammas=trend.slopes,
        min_effective_exponent=min_exponent,
        super_polynomial=super_polynomial,
        samples=int(idx.size),
    )


# --- kernel census -----------------------------------------------------------

@dataclass(frozen=True)
class ZCensus:
    members: Tuple[int, ...]
    kernel_dims: Tuple[int, ...]
    density_trend: float  # slope of |Z n [0, k]| against k over the census tail
    tail_start: int
    tail_empty: bool
    finite: bool

    def to_dict(self) -> Dict[str, Any]:
        return {
            'members': list(self.members),
            'kernel_dims': list(self.kernel_dims),
            'density_trend': self.density_trend,
            'tail_start': self.tail_start,
            'tail_empty': self.tail_empty,
            'finite': self.finite,
        }


def z_census(curve: GainCurve, config: Optional[RunConfig] = None) -> ZCensus:
    """Finite-looking: no member in the last z_tail_fraction of blocks and a flat cumulative count."""
    config = config or RunConfig()
    kernel_dims = curve.kernel_dims
    members = np.flatnonzero(kernel_dims > 0)
    start = tail_index(len(kernel_dims), config.z_tail_fraction)
    tail_empty = not np.any(members >= start)

    counts = np.cumsum(kernel_dims > 0).astype(float)
    ks = np.arange(len(kernel_dims), dtype=float)
    density = line_fit(ks[start:], counts[start:]).slope if len(ks) - start >= 2 else 0.0
    return ZCensus(
        members=tuple(int(k) for k in members),
        kernel_dims=tuple(int(kernel_dims[k]) for k in members),
        density_trend=float(density),
        tail_start=int(start),
        tail_empty=bool(tail_empty),
        finite=bool(tail_empty and density < config.z_density_max),
    )


# --- reports -----------------------------------------------------------------

@dataclass(frozen=True)
class DiagnosticReport:
    mode: str
    curve: GainCurve
    fit: Optional[PolyBoundFit]
    solvability_fit: Optional[PolyBoundFit]
    z_census: ZCensus
    verdict: str
    truncation_note: str
    config_hash: str
    spectrum_hash: str
    solvability_curve: Optional[GainCurve] = None
    notes: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def exit_code(self) -> int:
        return exit_code(self.verdict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'mode': str(self.mode),
            'verdict': str(self.verdict),
            'exit_code': self.exit_code,
            'fit': self.fit.to_dict() if self.fit else None,
            'solvability_fit': self.solvability_fit.to_dict() if self.solvability_fit else None,
            'z_census': self.z_census.to_dict(),
            'curve': self.curve.to_dict(),
            'solvability_curve': self.solvability_curve.to_dict() if self.solvability_curve else None,
            'truncation_note': self.truncation_note,
            'notes': list(self.notes),
            'config_hash': self.config_hash,
            'spectrum_hash': self.spectrum_hash,
        }


def decide_verdict(
    fit: Optional[PolyBoundFit], solvability_fit: Optional[PolyBoundFit], census: ZCensus
) -> str:
    if solvability_fit is None:
        return Verdict.INCONCLUSIVE
    if solvability_fit.super_polynomial:
        return Verdict.NOT_GS_CONSISTENT
    if census.finite and fit is not None and not fit.super_polynomial:
        return Verdict.GH_CONSISTENT
    return Verdict.GS_NOT_GH_CONSISTENT


def truncation_note(spectrum: SpectrumModel) -> str:
    labels = [b.label or '' for b in spectrum.blocks]
    probes = sum(1 for label in labels if ' probe' in label)
    note = f"verdict at truncation K={spectrum.truncation} (lambda <= {spectrum.eigenvalues[-1]:g}) only"
    if probes:
        note += f"; dense up to the last regular shell plus {probes} probe shells"
    return note


def _try_fit(curve: GainCurve, config: RunConfig, notes: List[str], what: str) -> Optional[PolyBoundFit]:
    try:
        return fit_poly_bound(curve, config.tail_fraction, config.n_probe, config.min_samples)
    except InsufficientSamplesError as exc:
        notes.append(f"{what} fit skipped: {exc}")
        return None


def build_report(
    mode: str,
    spectrum: SpectrumModel,
    curve: GainCurve,
    solvability_curve: GainCurve,
    config: RunConfig,
    notes: Sequence[str] = (),
) -> DiagnosticReport:
    """Fits, census and verdict for a primary (GH) curve and a solvability (GS) curve."""
    notes = list(notes)
    fit = _try_fit(curve, config, notes, 'primary')
    if solvability_curve is curve:
        solvability_fit = fit
    else:
        solvability_fit = _try_fit(solvability_curve, config, notes, 'solvability')
    census = z_census(curve, config)
    verdict = decide_verdict(fit, solvability_fit, census)
    logger.info(
        f"{mode} diagnosis over K={spectrum.truncation}: verdict {verdict}, "
        f"{len(census.members)} kernel blocks"
        + (f", gamma {solvability_fit.gamma:.4g}" if solvability_fit else "")
    )
    return DiagnosticReport(
        mode=mode,
        curve=curve,
        fit=fit,
        solvability_fit=solvability_fit,
        z_census=census,
        verdict=verdict,
        truncation_note=truncation_note(spectrum),
        config_hash=config.config_hash(),
        spectrum_hash=spectrum.spectrum_hash,
        solvability_curve=None if solvability_curve is curve else solvability_curve,
        notes=tuple(notes),
    )


# --- modes -------------------------------------------------------------------

def _stacked_curves(S: SystemSymbol, config: RunConfig) -> Tuple[GainCurve, GainCurve]:
    """(full curve with sub-threshold gains set to 0, restricted curve)."""
    gains = map_blocks(lambda k: stacked_block_gain(S, k, config), range(S.spectrum.truncation), config.workers)
    kernel_dims = [g.kernel_dim for g in gains]
    full = [0.0 if g.kernel_dim else g.full for g in gains]
    restricted = [g.restricted for g in gains]
    return (
        GainCurve.from_arrays(S.spectrum, full, kernel_dims),
        GainCurve.from_arrays(S.spectrum, restricted, kernel_dims),
    )


def diagnose_gh_single(P: InvariantSymbol, config: Optional[RunConfig] = None) -> DiagnosticReport:
    config = config or RunConfig()
    full, restricted = _stacked_curves(SystemSymbol.single(P), config)
    return build_report(DiagnosticMode.GH_SINGLE, P.spectrum, full, restricted, config)


def diagnose_gs_single(P: InvariantSymbol, config: Optional[RunConfig] = None) -> DiagnosticReport:
    config = config or RunConfig()
    _, restricted = _stacked_curves(SystemSymbol.single(P), config)
    return build_report(DiagnosticMode.GS_SINGLE, P.spectrum, restricted, restricted, config)


def diagnose_system(S, restricted: bool = False, config: Optional[RunConfig] = None) -> DiagnosticReport:
    config = config or RunConfig()
    S = as_system(S)
    full, restricted_curve = _stacked_curves(S, config)
    if restricted:
        return build_report(DiagnosticMode.SYSTEM_RESTRICTED, S.spectrum, restricted_curve, restricted_curve, config)
    return build_report(DiagnosticMode.SYSTEM, S.spectrum, full, restricted_curve, config)


def require_normal(S: SystemSymbol, config: RunConfig) -> None:
    for j, op in enumerate(S.operators):
        check = is_normal(op, config.normal_tol)
        if not check:
            raise StructuralError(f"operator {j} is not normal", block=check.failing[0])


def normal_block_gain(S: SystemSymbol, k: int, config: RunConfig) -> Tuple[float, int]:
    """
    (min over j of the smallest nonzero |eigenvalue| of sigma_j(k), joint kernel
    dimension). Eigenvalue moduli of a normal block are its singular values.
    """
    restricted = []
    for op in S.operators:
        values = block_singular_values(op.blocks[k], op.diagonal_blocks[k])
        restricted.append(gain_from_singular_values(values, values.size, config).restricted)
    return min(restricted), stacked_block_gain(S, k, config).kernel_dim


def diagnose_normal_system(S, config: Optional[RunConfig] = None) -> DiagnosticReport:
    config = config or RunConfig()
    S = as_system(S)
    require_normal(S, config)
    results = map_blocks(lambda k: normal_block_gain(S, k, config), range(S.spectrum.truncation), config.workers)
    curve = GainCurve.from_arrays(S.spectrum, [g for g, _ in results], [z for _, z in results])
    return build_report(DiagnosticMode.NORMAL, S.spectrum, curve, curve, config)


def joint_scores(S: SystemSymbol, k: int, config: RunConfig) -> np.ndarray:
    """||mu(k)_l|| = max_j |mu_j(k)_l| per shared eigendirection l."""
    factorization = joint_factor_commuting(S, k, config.normal_tol, config.seed)
    return np.max(np.abs(factorization.mu), axis=0)


def commuting_block_gain(S: SystemSymbol, k: int, config: RunConfig) -> Tuple[float, int]:
    scores = joint_scores(S, k, config)
    tau = config.zero_threshold(float(np.max(scores)), scores.size)
    positive = scores[scores > tau]
    return (float(np.min(positive)) if positive.size else float('inf')), int(scores.size - positive.size)


def diagnose_commuting(S, config: Optional[RunConfig] = None) -> DiagnosticReport:
    config = config or RunConfig()
    S = as_system(S)
    results = map_blocks(lambda k: commuting_block_gain(S, k, config), range(S.spectrum.truncation), config.workers)
    curve = GainCurve.from_arrays(S.spectrum, [g for g, _ in results], [z for _, z in results])
    return build_report(DiagnosticMode.COMMUTING, S.spectrum, curve, curve, config)


def detect_mode(S: SystemSymbol, config: Optional[RunConfig] = None) -> str:
    """gh for one operator; commuting / normal / system for families by structure."""
    config = config or RunConfig()
    if S.n == 1:
        return DiagnosticMode.GH_SINGLE
    if not all(is_normal(op, config.normal_tol) for op in S.operators):
        return DiagnosticMode.SYSTEM
    if all(commuting_blocks(S, config.normal_tol)):
        return DiagnosticMode.COMMUTING
    return DiagnosticMode.NORMAL


def diagnose(S, mode: str = 'auto', config: Optional[RunConfig] = None) -> DiagnosticReport:
    config = config or RunConfig()
    S = as_system(S)
    if mode == 'auto':
        mode = detect_mode(S, config)
        logger.info(f"auto-detected diagnostic mode {mode}")
    if mode in (DiagnosticMode.GH_SINGLE, DiagnosticMode.GS_SINGLE) and S.n != 1:
        raise StructuralError(f"mode {mode} needs a single operator, got {S.n}")
    if mode == DiagnosticMode.GH_SINGLE:
        return diagnose_gh_single(S.operators[0], config)
    if mode == DiagnosticMode.GS_SINGLE:
        return diagnose_gs_single(S.operators[0], config)
    if mode == DiagnosticMode.SYSTEM:
        return diagnose_system(S, restricted=False, config=config)
    if mode == DiagnosticMode.SYSTEM_RESTRICTED:
        return diagnose_system(S, restricted=True, config=config)
    if mode == DiagnosticMode.NORMAL:
        return diagnose_normal_system(S, config)
    if mode == DiagnosticMode.COMMUTING:
        return diagnose_commuting(S, config)
    raise ValueError(f"unknown diagnostic mode {mode!r}")
