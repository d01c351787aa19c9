"""
Log-log regression helpers shared by decay classification, order estimation
and gain-bound fitting.

All fits regress y = log(quantity) on x = log(1 + lambda_k). Rapid
(super-polynomial) behaviour is only ever inferred from *windowed* slopes:
nested trailing windows that halve towards the tail. A trend counts only
when every window is well described by its own line, so narrow windows
over scattered data (dense lattice blocks) never fake a divergence.
"""

from dataclasses import dataclass
from typing import List, Sequence, Tuple

import numpy as np

# Relative rms residual (rms / fitted y-span) above which a window is scatter.
WINDOW_RESIDUAL_MAX = 0.1
# Minimum change between consecutive windowed slopes that counts as a trend.
SLOPE_STEP_MIN = 1e-3


@dataclass(frozen=True)
class LineFit:
    slope: float
    intercept: float
    residual: float  # rms of y - (slope x + intercept)


@dataclass(frozen=True)
class WindowTrend:
    slopes: Tuple[float, ...]
    clean: bool  # every window fit has small relative residual

    @property
    def final(self) -> float:
        return self.slopes[-1] if self.slopes else float('nan')

    def steepening(self) -> bool:
        """Slopes strictly decrease as the window shrinks towards the tail."""
        return (
            self.clean
            and len(self.slopes) >= 2
            and all(b < a - SLOPE_STEP_MIN for a, b in zip(self.slopes, self.slopes[1:]))
        )

    def accelerating(self) -> bool:
        """Slopes strictly increase as the window shrinks towards the tail."""
        return (
            self.clean
            and len(self.slopes) >= 2
            and all(b > a + SLOPE_STEP_MIN for a, b in zip(self.slopes, self.slopes[1:]))
        )


def line_fit(x: np.ndarray, y: np.ndarray) -> LineFit:
    slope, intercept = np.polyfit(x, y, 1)
    residual = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    return LineFit(slope=float(slope), intercept=float(intercept), residual=residual)


def _is_clean(fit: LineFit, x: np.ndarray) -> bool:
    span = abs(fit.slope) * float(x[-1] - x[0])
    if span == 0.0:
        return fit.residual == 0.0
    return fit.residual <= WINDOW_RESIDUAL_MAX * span


def window_trend(x: np.ndarray, y: np.ndarray, min_points: int = 4) -> WindowTrend:
    """Slopes over the full sample set, then its trailing half, quarter, ..."""
    slopes: List[float] = []
    clean = True
    size = len(x)
    while size >= max(min_points, 2):
        wx, wy = x[-size:], y[-size:]
        fit = line_fit(wx, wy)
        slopes.append(fit.slope)
        clean = clean and _is_clean(fit, wx)
        size //= 2
    return WindowTrend(slopes=tuple(slopes), clean=clean)


def lower_hull(x: np.ndarray, y: np.ndarray) -> List[int]:
    """
    Indices of the lower convex hull of points sorted by x (monotone chain).
    For repeated x only the lowest point is considered.
    """
    order = np.lexsort((y, x))
    hull: List[int] = []
    last_x = None
    for i in order:
        if last_x is not None and x[i] == last_x:
            continue
        last_x = x[i]
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(int(i))
    return hull


def envelope_slope(x: np.ndarray, y: np.ndarray) -> float:
    """
    Slope of the supporting line of the lower hull at the mean abscissa:
    the exponent of the tightest power-law lower bound in the mean-log sense.
    """
    hull = lower_hull(x, y)
    if len(hull) < 2:
        return 0.0
    x_mean = float(np.mean(x))
    for a, b in zip(hull, hull[1:]):
        if x[a] <= x_mean <= x[b]:
            return float((y[b] - y[a]) / (x[b] - x[a]))
    # x_mean lies on a hull vertex only through rounding at the ends
    a, b = (hull[0], hull[1]) if x_mean < x[hull[0]] else (hull[-2], hull[-1])
    return float((y[b] - y[a]) / (x[b] - x[a]))


def envelope_intercept(x: np.ndarray, y: np.ndarray, slope: float) -> float:
    """Largest c with c + slope * x <= y on every sample."""
    return float(np.min(y - slope * x))


def effective_exponents(x: np.ndarray, y: np.ndarray, reference: float) -> np.ndarray:
    """(y - reference) / x, the power of (1 + lambda) a sample sits at; x = 0 maps to 0."""
    exponents = np.zeros_like(y)
    positive = x > 0
    exponents[positive] = (y[positive] - reference) / x[positive]
    return exponents


def tail_samples(values: Sequence[float], start: int) -> np.ndarray:
    """Indices >= start holding strictly positive finite values."""
    values = np.asarray(values, dtype=float)
    idx = np.arange(start, len(values))
    keep = np.isfinite(values[idx]) & (values[idx] > 0)
    return idx[keep]
