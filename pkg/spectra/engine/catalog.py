"""
Built-in spectral models and symbol generators.

Torus T^d with E = -Delta: one block per attained |xi|^2, basis labelled by
lattice points, directional fields a . grad with diagonal multipliers
i (a . xi). Coefficients a_i are carried exactly (fractions) or in extended
precision (mpmath) and rounded only when a multiplier is formed, since
double precision destroys the small divisors the laboratory is about.

Sphere S^2 with E = -Delta: lambda_k = k(k+1), d_k = 2k+1, and the rotation
field d/dphi with symbol diag(i m), m = -k..k.

Synthetic generators build symbols on any spectrum from a seed.
"""

import logging
import re
from dataclasses import dataclass, field
from fractions import Fraction
from math import factorial, isqrt
from typing import List, Optional, Sequence, Tuple, Union

import mpmath
import numpy as np
import scipy.linalg
from django.core.exceptions import ValidationError
from django.db import models

from spectra.engine.fields import CoefficientField
from spectra.engine.spectrum import SpectrumModel
from spectra.engine.symbols import InvariantSymbol, SystemSymbol

logger = logging.getLogger(__name__)

PRECISION_BITS = 256
LIOUVILLE_TERMS = 5
DEFAULT_Q_MAX = 10 ** 6
# Polynomial probe exponent reachable by the convergent shells of a probed 2-torus field
PROBED_TORUS_N_PROBE = 1.25

Exact = Union[Fraction, mpmath.mpf]


# --- Diophantine coefficients ------------------------------------------------

class CoefficientKind(models.TextChoices):
    RATIONAL = 'rational', 'Rational p/q'
    QUADRATIC_IRRATIONAL = 'quadratic_irrational', 'Quadratic irrational'
    LIOUVILLE = 'liouville', 'Liouville constant'
    DECIMAL = 'decimal', 'Decimal string'


_QUADRATIC = re.compile(
    r'^\(?\s*(?P<a>[+-]?\d+)?\s*(?P<sign>[+-])?\s*sqrt\((?P<n>\d+)\)\s*\)?\s*(?:/\s*(?P<b>\d+))?$'
)


@dataclass(frozen=True)
class DiophantineCoefficient:
    kind: str
    text: str
    exact: Optional[Fraction] = None
    value: mpmath.mpf = field(default=None, compare=False)

    @classmethod
    def rational(cls, p: int, q: int = 1) -> 'DiophantineCoefficient':
        if q == 0:
            raise ValidationError("zero denominator in %(p)s/%(q)s", code='zero_denominator', params={'p': p, 'q': q})
        exact = Fraction(p, q)
        return cls(CoefficientKind.RATIONAL, str(exact), exact, _mp_from_fraction(exact))

    @classmethod
    def liouville(cls, terms: int = LIOUVILLE_TERMS) -> 'DiophantineCoefficient':
        """sum_{j=1..terms} 10^(-j!), an exact rational partial sum."""
        if terms < 1:
            raise ValidationError("liouville needs at least one term", code='invalid_terms')
        exact = sum((Fraction(1, 10 ** factorial(j)) for j in range(1, terms + 1)), Fraction(0))
        return cls(CoefficientKind.LIOUVILLE, f'liouville:{terms}', exact, _mp_from_fraction(exact))

    @classmethod
    def quadratic(cls, a: int, n: int, b: int = 1, sign: int = 1) -> 'DiophantineCoefficient':
        """(a + sign*sqrt(n)) / b."""
        if isqrt(n) ** 2 == n:
            return cls.rational(a + sign * isqrt(n), b)
        with mpmath.workprec(PRECISION_BITS):
            value = (mpmath.mpf(a) + sign * mpmath.sqrt(n)) / b
        text = f"({a}{'+' if sign > 0 else '-'}sqrt({n}))/{b}"
        return cls(CoefficientKind.QUADRATIC_IRRATIONAL, text, None, value)

    @classmethod
    def golden(cls) -> 'DiophantineCoefficient':
        return cls.quadratic(1, 5, 2)

    @classmethod
    def parse(cls, text: str) -> 'DiophantineCoefficient':
        """
        Accepts integers, p/q, decimal strings (kept exact), golden, sqrt(n),
        (a+sqrt(n))/b and liouville[:terms].
        """
        raw = text.strip().lower().replace(' ', '')
        if raw in ('golden', 'phi'):
            return cls.golden()
        if raw.startswith('liouville'):
            _, _, terms = raw.partition(':')
            if terms and not terms.isdigit():
                raise ValidationError("cannot parse coefficient %(text)r", code='invalid_coefficient', params={'text': text})
            return cls.liouville(int(terms) if terms else LIOUVILLE_TERMS)
        match = _QUADRATIC.match(raw)
        if match:
            return cls.quadratic(
                int(match.group('a') or 0),
                int(match.group('n')),
                int(match.group('b') or 1),
                -1 if match.group('sign') == '-' else 1,
            )
        try:
            exact = Fraction(raw)
        except (ValueError, ZeroDivisionError):
            raise ValidationError("cannot parse coefficient %(text)r", code='invalid_coefficient', params={'text': text})
        kind = CoefficientKind.RATIONAL if re.fullmatch(r'[+-]?\d+(/\d+)?', raw) else CoefficientKind.DECIMAL
        return cls(kind, raw, exact, _mp_from_fraction(exact))

    @property
    def is_exact(self) -> bool:
        return self.exact is not None

    def scalar(self) -> Exact:
        return self.exact if self.exact is not None else self.value

    def __float__(self) -> float:
        return float(self.exact) if self.exact is not None else float(self.value)


def _mp_from_fraction(value: Fraction) -> mpmath.mpf:
    with mpmath.workprec(PRECISION_BITS):
        return mpmath.mpf(value.numerator) / value.denominator


def as_coefficients(values: Sequence) -> Tuple[DiophantineCoefficient, ...]:
    coefficients = []
    for value in values:
        if isinstance(value, DiophantineCoefficient):
            coefficients.append(value)
        elif isinstance(value, Fraction):
            coefficients.append(DiophantineCoefficient.rational(value.numerator, value.denominator))
        elif isinstance(value, int):
            coefficients.append(DiophantineCoefficient.rational(value))
        else:
            coefficients.append(DiophantineCoefficient.parse(str(value)))
    return tuple(coefficients)


def dot(coefficients: Sequence[DiophantineCoefficient], point: Sequence[int]) -> Exact:
    """a . xi, exact when every coefficient is exact, else at PRECISION_BITS."""
    if all(c.is_exact for c in coefficients):
        return sum((c.exact * int(x) for c, x in zip(coefficients, point)), Fraction(0))
    with mpmath.workprec(PRECISION_BITS):
        total = mpmath.mpf(0)
        for c, x in zip(coefficients, point):
            total += c.value * int(x)
        return total


# --- continued fractions -----------------------------------------------------

def continued_fraction(x: Exact, max_terms: int = 256):
    """Partial quotients of x (exact Fraction or extended-precision mpf)."""
    if isinstance(x, Fraction):
        for _ in range(max_terms):
            a = x.numerator // x.denominator
            yield a
            remainder = x - a
            if remainder == 0:
                return
            x = 1 / remainder
        return
    cutoff = mpmath.mpf(2) ** (-PRECISION_BITS // 2)
    for _ in range(max_terms):
        with mpmath.workprec(PRECISION_BITS):
            a = int(mpmath.floor(x))
            remainder = x - a
            x = 1 / remainder if remainder >= cutoff else None
        yield a
        if x is None:
            return


def convergents(x: Exact, q_max: int = DEFAULT_Q_MAX) -> List[Tuple[int, int]]:
    """Convergents p/q of x with 1 <= q <= q_max."""
    p_prev, q_prev, p, q = 0, 1, 1, 0
    result = []
    for a in continued_fraction(x):
        p_prev, q_prev, p, q = p, q, a * p + p_prev, a * q + q_prev
        if q > q_max:
            break
        result.append((p, q))
    return result


# --- torus -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TorusModel:
    spectrum: SpectrumModel
    dim: int
    radius_sq_max: int
    block_basis: Tuple[Tuple[Tuple[int, ...], ...], ...]
    shells: Tuple[int, ...]
    probe_shells: Tuple[int, ...] = ()

    def describe(self) -> str:
        text = f"torus T^{self.dim}, dense up to |xi|^2 <= {self.radius_sq_max}"
        if self.probe_shells:
            text += f" plus {len(self.probe_shells)} probe shells up to {self.probe_shells[-1]}"
        return text


def shell_points(m: int, dim: int = 2) -> List[Tuple[int, ...]]:
    """All xi in Z^dim with |xi|^2 = m, sorted lexicographically (dim 1 or 2)."""
    if dim == 1:
        root = isqrt(m)
        return sorted({(-root,), (root,)}) if root * root == m else []
    if dim != 2:
        raise ValidationError("probe shells are only supported in dimension 1 or 2", code='shell_dimension')
    xs = np.arange(0, isqrt(m) + 1, dtype=np.int64)
    rest = np.int64(m) - xs * xs
    ys = np.rint(np.sqrt(rest.astype(float))).astype(np.int64)
    hits = ys * ys == rest
    points = set()
    for x, y in zip(xs[hits].tolist(), ys[hits].tolist()):
        for sx in (1, -1):
            for sy in (1, -1):
                points.add((sx * x, sy * y))
    return sorted(points)


def probe_shells_for(
    coefficients: Sequence, radius_sq_max: int, q_max: int = DEFAULT_Q_MAX
) -> List[int]:
    """
    Shells p^2 + q^2 beyond radius_sq_max through the lattice points (-p, q)
    where p/q runs over the convergents of a_2 / a_1: the blocks holding the
    smallest divisors |a . xi| of a two-dimensional field.
    """
    a1, a2 = as_coefficients(coefficients)
    if float(a1) == 0.0 and float(a2) == 0.0:
        return []
    if a1.is_exact and a2.is_exact:
        ratio = a2.exact / a1.exact if a1.exact != 0 else a1.exact / a2.exact
    else:
        with mpmath.workprec(PRECISION_BITS):
            x1, x2 = a1.value, a2.value
            ratio = x2 / x1 if x1 != 0 else x1 / x2
    shells = sorted({p * p + q * q for p, q in convergents(ratio, q_max) if p * p + q * q > radius_sq_max})
    logger.debug(f"probe shells for {[c.text for c in (a1, a2)]}: {shells}")
    return shells


def torus_spectrum(dim: int, radius_sq_max: int, probe_shells: Sequence[int] = ()) -> Tuple[SpectrumModel, TorusModel]:
    """One block per attained |xi|^2 <= radius_sq_max, plus any probe shells beyond it."""
    if dim not in (1, 2, 3):
        raise ValidationError("torus dimension must be 1, 2 or 3, got %(dim)s", code='torus_dimension', params={'dim': dim})
    if radius_sq_max < 0:
        raise ValidationError("radius_sq_max must be >= 0", code='negative_radius')

    radius = isqrt(radius_sq_max)
    axes = [np.arange(-radius, radius + 1)] * dim
    grid = np.stack(np.meshgrid(*axes, indexing='ij'), axis=-1).reshape(-1, dim)
    norms = np.sum(grid * grid, axis=1)
    grid, norms = grid[norms <= radius_sq_max], norms[norms <= radius_sq_max]
    order = np.lexsort(tuple(grid[:, i] for i in reversed(range(dim))) + (norms,))
    grid, norms = grid[order], norms[order]
    values, starts = np.unique(norms, return_index=True)
    bounds = list(starts) + [len(norms)]

    shells: List[int] = [int(v) for v in values]
    basis: List[Tuple[Tuple[int, ...], ...]] = [
        tuple(tuple(int(c) for c in row) for row in grid[bounds[i]:bounds[i + 1]])
        for i in range(len(values))
    ]
    probes = sorted({int(m) for m in probe_shells})
    for m in probes:
        if m <= radius_sq_max:
            raise ValidationError(
                "probe shell %(m)s lies inside the dense range", code='probe_inside', params={'m': m}
            )
        points = shell_points(m, dim)
        if not points:
            raise ValidationError("no lattice points on shell %(m)s", code='empty_shell', params={'m': m})
        shells.append(m)
        basis.append(tuple(points))

    labels = [
        f"|xi|^2={m}{' probe' if m > radius_sq_max else ''}: " + ' '.join(str(p) for p in points)
        for m, points in zip(shells, basis)
    ]
    spectrum = SpectrumModel.from_sequences(
        manifold_dim=dim,
        elliptic_order=2.0,
        eigenvalues=[float(m) for m in shells],
        multiplicities=[len(points) for points in basis],
        labels=labels,
    )
    model = TorusModel(
        spectrum=spectrum,
        dim=dim,
        radius_sq_max=radius_sq_max,
        block_basis=tuple(basis),
        shells=tuple(shells),
        probe_shells=tuple(probes),
    )
    logger.info(f"built {model.describe()}: {spectrum.describe()}")
    return spectrum, model


def torus_multipliers(model: TorusModel, coefficients: Sequence) -> List[List[Exact]]:
    """Exact (or extended-precision) a . xi for every lattice point, per block."""
    coefficients = as_coefficients(coefficients)
    if len(coefficients) != model.dim:
        raise ValidationError(
            "field has %(n)s coefficients on a %(dim)s-torus",
            code='dimension_mismatch', params={'n': len(coefficients), 'dim': model.dim},
        )
    return [[dot(coefficients, point) for point in block] for block in model.block_basis]


def torus_vector_field(model: TorusModel, coefficients: Sequence, name: str = '') -> InvariantSymbol:
    """Symbol of a . grad: diag(i (a . xi)) in the lattice ordering of each block."""
    coefficients = as_coefficients(coefficients)
    multipliers = torus_multipliers(model, coefficients)
    diagonals = [[complex(0.0, float(value)) for value in block] for block in multipliers]
    name = name or 'a.grad with a=(' + ', '.join(c.text for c in coefficients) + ')'
    return InvariantSymbol.from_diagonals(model.spectrum, diagonals, name=name)


def torus_coordinate_system(model: TorusModel, axes: Optional[Sequence[int]] = None) -> SystemSymbol:
    """(d/dx_i for i in axes), e.g. (d/dt, d/dx) on T^2."""
    axes = list(range(model.dim)) if axes is None else list(axes)
    operators = []
    for axis in axes:
        unit = [1 if i == axis else 0 for i in range(model.dim)]
        operators.append(torus_vector_field(model, unit, name=f'd/dx{axis + 1}'))
    return SystemSymbol(tuple(operators))


# --- sphere ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SphereModel:
    spectrum: SpectrumModel
    degree_max: int


def sphere_spectrum(degree_max: int) -> Tuple[SpectrumModel, SphereModel]:
    """Degrees k = 0..degree_max of the Laplacian on S^2."""
    if degree_max < 1:
        raise ValidationError("degree_max must be >= 1", code='sphere_degree')
    degrees = range(degree_max + 1)
    spectrum = SpectrumModel.from_sequences(
        manifold_dim=2,
        elliptic_order=2.0,
        eigenvalues=[float(k * (k + 1)) for k in degrees],
        multiplicities=[2 * k + 1 for k in degrees],
        labels=[f'l={k}, m=-{k}..{k}' for k in degrees],
    )
    return spectrum, SphereModel(spectrum=spectrum, degree_max=degree_max)


def sphere_rotation_field(model: SphereModel) -> InvariantSymbol:
    """d/dphi: diag(i m) with m ascending from -k to k."""
    diagonals = [1j * np.arange(-k, k + 1, dtype=float) for k in range(model.degree_max + 1)]
    return InvariantSymbol.from_diagonals(model.spectrum, diagonals, name='d/dphi')


# --- synthetic ---------------------------------------------------------------

class SyntheticRecipe(models.TextChoices):
    SCALAR_PROFILE = 'scalar_profile', 'Scalar profile g(lambda) I'
    RANDOM_NORMAL = 'random_normal', 'Random normal blocks'
    RANDOM_GENERAL = 'random_general', 'Random general blocks'
    PLANTED_GAIN = 'planted_gain', 'Planted smallest singular value'


@dataclass(frozen=True)
class Profile:
    """
    A block profile g(lambda_k, k):

        power:c        (1 + lambda)^c
        exp:c          exp(c lambda)
        index-power:c  (1 + lambda)^(c k)
    """
    kind: str
    parameter: float

    KINDS = ('power', 'exp', 'index-power')

    @classmethod
    def parse(cls, text: str) -> 'Profile':
        kind, _, value = text.strip().partition(':')
        if kind not in cls.KINDS or not value:
            raise ValidationError(
                "profile must look like power:<c>, exp:<c> or index-power:<c>, got %(text)r",
                code='invalid_profile', params={'text': text},
            )
        try:
            return cls(kind, float(value))
        except ValueError:
            raise ValidationError("invalid profile parameter in %(text)r", code='invalid_profile', params={'text': text})

    def __call__(self, spectrum: SpectrumModel) -> np.ndarray:
        lam = spectrum.eigenvalues
        if self.kind == 'power':
            return (1.0 + lam) ** self.parameter
        if self.kind == 'exp':
            return np.exp(self.parameter * lam)
        return (1.0 + lam) ** (self.parameter * np.arange(spectrum.truncation))

    def __str__(self) -> str:
        return f'{self.kind}:{self.parameter:g}'


@dataclass(frozen=True, eq=False)
class SyntheticSymbol:
    symbol: InvariantSymbol
    recipe: str
    seed: int
    profile: Optional[Profile] = None
    planted_gains: Optional[np.ndarray] = None


def random_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary via QR of a complex Gaussian with phase correction."""
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = scipy.linalg.qr(z)
    phases = np.diag(r) / np.abs(np.diag(r))
    return q * phases


def synthetic_symbol(
    spectrum: SpectrumModel,
    recipe: str,
    seed: int = 0,
    profile: Optional[Profile] = None,
    kernel_dim: int = 0,
    spread: float = 4.0,
) -> SyntheticSymbol:
    """
    Deterministic symbol generator. ``kernel_dim`` zero singular values (at
    most d_k - 1 per block) are planted by the normal and planted-gain
    recipes; planted-gain blocks have singular values g(k) (1 + spread u),
    u in [0, 1), with the smallest nonzero one exactly g(k).
    """
    if recipe not in SyntheticRecipe.values:
        raise ValidationError("unknown recipe %(recipe)r", code='invalid_recipe', params={'recipe': recipe})
    if recipe in (SyntheticRecipe.SCALAR_PROFILE, SyntheticRecipe.PLANTED_GAIN) and profile is None:
        raise ValidationError("recipe %(recipe)s needs a profile", code='missing_profile', params={'recipe': recipe})

    rng = np.random.default_rng(seed)
    gains = profile(spectrum) if profile is not None else None
    blocks = []
    for k, dim in enumerate(int(m) for m in spectrum.multiplicities):
        zeros = min(kernel_dim, dim - 1)
        if recipe == SyntheticRecipe.SCALAR_PROFILE:
            blocks.append(gains[k] * np.eye(dim, dtype=complex))
        elif recipe == SyntheticRecipe.RANDOM_GENERAL:
            z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
            blocks.append(z / np.sqrt(2.0 * dim))
        elif recipe == SyntheticRecipe.RANDOM_NORMAL:
            mu = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
            mu[:zeros] = 0.0
            v = random_unitary(dim, rng)
            blocks.append(v @ np.diag(mu) @ v.conj().T)
        else:
            values = gains[k] * (1.0 + spread * rng.random(dim))
            values[zeros] = gains[k]
            values[:zeros] = 0.0
            u, v = random_unitary(dim, rng), random_unitary(dim, rng)
            blocks.append(u @ np.diag(values) @ v.conj().T)

    name = f'{recipe}' + (f' {profile}' if profile is not None else '') + f' seed={seed}'
    symbol = InvariantSymbol(spectrum, tuple(blocks), name=name)
    return SyntheticSymbol(
        symbol=symbol,
        recipe=recipe,
        seed=seed,
        profile=profile,
        planted_gains=gains if recipe == SyntheticRecipe.PLANTED_GAIN else None,
    )


def synthetic_field(spectrum: SpectrumModel, profile: Profile, seed: int = 0) -> CoefficientField:
    """Random unit direction per block scaled by the profile."""
    rng = np.random.default_rng(seed)
    amplitudes = profile(spectrum)
    blocks = []
    for amplitude, dim in zip(amplitudes, spectrum.multiplicities):
        z = rng.standard_normal(int(dim)) + 1j * rng.standard_normal(int(dim))
        blocks.append(amplitude * z / np.linalg.norm(z))
    return CoefficientField(spectrum, tuple(blocks))

