"""Eigenvalue sequences of the unperturbed operator and their counting functions.

Counting is strict: ``count(s, r) = #{k : mu_k < r}``. Non-condensing windows
are half-open on the left, ``(t - 1, t]``, i.e. they use ``n(t + 0)`` on the
upper edge.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import PreconditionError, SpectrumError

logger = logging.getLogger(__name__)

# mu_k ** alpha for algebraic mu_k lands within rounding noise of the value it
# came from; rounding keeps unit windows from splitting such points.
RESCALE_DECIMALS = 9


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Nondecreasing eigenvalues ``mu_k > 1`` repeated with multiplicity."""

    values: np.ndarray
    declared_alpha: float | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if values.size == 0:
            raise SpectrumError("spectrum is empty")
        if not np.all(np.isfinite(values)):
            raise SpectrumError("spectrum contains non-finite values")
        if np.any(np.diff(values) < 0):
            raise SpectrumError("spectrum is not nondecreasing")
        if values[0] <= 1:
            raise SpectrumError("eigenvalues must exceed 1", first=float(values[0]))
        if self.declared_alpha is not None and self.declared_alpha <= 0:
            raise SpectrumError("declared alpha must be positive", alpha=self.declared_alpha)
        values.setflags(write=False)
        object.__setattr__(self, 'values', values)

    def __len__(self):
        return self.values.size

    @property
    def dim(self):
        return self.values.size

    @classmethod
    def from_unsorted(cls, values, declared_alpha=None):
        return cls(np.sort(np.asarray(values, dtype=float)), declared_alpha)

    @classmethod
    def from_json(cls, text):
        data = json.loads(text) if isinstance(text, (str, bytes)) else text
        if isinstance(data, dict):
            return cls(data['values'], data.get('declared_alpha'))
        return cls(data)

    def to_json(self):
        return json.dumps({
            'values': [float(v) for v in self.values],
            'declared_alpha': self.declared_alpha,
        })

    def rescaled(self, alpha):
        """The sequence ``mu_k ** alpha`` used by the alpha-non-condensing notions."""
        if alpha <= 0:
            raise PreconditionError("alpha > 0 violated", alpha=alpha)
        return np.round(self.values ** alpha, RESCALE_DECIMALS)


def count(s: Spectrum, r: float) -> int:
    """n(r, T): number of eigenvalues strictly below ``r``."""
    return int(np.searchsorted(s.values, r, side='left'))


def count_upto(s: Spectrum, t: float) -> int:
    """n(t + 0, T): number of eigenvalues not exceeding ``t``."""
    return int(np.searchsorted(s.values, t, side='right'))


def counting_function(s: Spectrum, rs) -> np.ndarray:
    """Vectorised ``count`` over an array of radii."""
    return np.searchsorted(s.values, np.asarray(rs, dtype=float), side='left')


def window_count(s: Spectrum, r: float, a: float, gamma: float) -> int:
    """S_gamma(r) = n(r + a r^gamma) - n(r - a r^gamma)."""
    if a <= 0:
        raise PreconditionError("a > 0 violated", a=a)
    if not 0 <= gamma < 1:
        raise PreconditionError("0 <= gamma < 1 violated", gamma=gamma)
    if r <= 0:
        raise PreconditionError("r > 0 violated", r=r)
    half_width = a * r ** gamma
    return count(s, r + half_width) - count(s, r - half_width)


def estimate_alpha(s: Spectrum) -> float:
    """Least-squares slope of log n(mu_k + 0) against log mu_k over the upper half."""
    if len(s) < 10:
        raise SpectrumError("estimate_alpha needs at least 10 eigenvalues", size=len(s))
    upper = s.values[len(s) // 2:]
    counts = np.searchsorted(s.values, upper, side='right')
    x = np.log(upper)
    if np.ptp(x) == 0:
        raise SpectrumError("constant spectrum")
    slope = float(np.polyfit(x, np.log(counts), 1)[0])
    logger.debug(f"estimated alpha={slope:.4f} from {upper.size} eigenvalues")
    return slope


def resolve_alpha(s: Spectrum, alpha: float | None = None) -> float:
    """Explicit alpha, else the declared one, else the regression estimate."""
    if alpha is not None:
        return float(alpha)
    if s.declared_alpha is not None:
        return float(s.declared_alpha)
    return estimate_alpha(s)


def noncondensing_l(s: Spectrum, alpha: float) -> int:
    """Largest number of rescaled points ``mu_k ** alpha`` in a window ``(t - 1, t]``.

    The maximum over t is attained with t on a data point, so a sliding window
    anchored at every point is exact.
    """
    x = s.rescaled(alpha)
    right = np.searchsorted(x, x, side='right')
    left = np.searchsorted(x, x - 1.0, side='right')
    return int(np.max(right - left))


@dataclass(frozen=True, eq=False)
class PsiDecomposition:
    """Piecewise linear psi with n(t^(1/alpha)) = psi(t) + zeta(t).

    ``knot_values[i]`` is n(m + 0) at ``breakpoints[i] = m`` in the rescaled
    variable; between integers psi interpolates linearly.
    """

    breakpoints: np.ndarray
    knot_values: np.ndarray
    slopes: np.ndarray
    l_bound: int
    domain_alpha: float
    _rescaled: np.ndarray = field(repr=False)

    def __call__(self, t):
        return np.interp(t, self.breakpoints, self.knot_values)

    def counting(self, t):
        """n(t^(1/alpha), T) = #{mu_k^alpha < t}."""
        return np.searchsorted(self._rescaled, np.asarray(t, dtype=float), side='left')

    def zeta(self, t):
        return self.counting(t) - self(t)

    def derivative(self, t):
        t = np.asarray(t, dtype=float)
        index = np.clip(np.searchsorted(self.breakpoints, t, side='left') - 1, 0, self.slopes.size - 1)
        return self.slopes[index]

    def grid(self, points=10_000):
        """Dense grid over the covered domain including every jump and both of its sides."""
        lo, hi = self.breakpoints[0], self.breakpoints[-1]
        jumps = np.unique(self._rescaled)
        eps = 1e-9 * max(1.0, abs(hi))
        pieces = [np.linspace(lo, hi, points), jumps, jumps - eps, jumps + eps, self.breakpoints]
        grid = np.concatenate(pieces)
        return np.unique(grid[(grid >= lo) & (grid <= hi)])

    def check(self, points=10_000):
        """Max |psi - n| and max psi' on a dense grid, against ``l_bound``."""
        t = self.grid(points)
        deviation = float(np.max(np.abs(self.zeta(t))))
        steepest = float(np.max(self.slopes)) if self.slopes.size else 0.0
        flattest = float(np.min(self.slopes)) if self.slopes.size else 0.0
        return {
            'grid_points': int(t.size),
            'max_deviation': deviation,
            'max_slope': steepest,
            'min_slope': flattest,
            'l_bound': self.l_bound,
            'passed': deviation <= self.l_bound + 1e-9 and 0 <= flattest and steepest <= self.l_bound,
        }


def psi_decompose(s: Spectrum, alpha: float) -> PsiDecomposition:
    """Build psi on integer segments with s_m = n(m + 0) in the rescaled variable.

    On (m, m + 1] the slope is s_{m+1} - s_m, so psi interpolates s_m at the
    integers and both |psi - n| <= l and 0 <= psi' <= l hold.
    """
    x = s.rescaled(alpha)
    first = math.floor(x[0] - 1.0)
    last = math.ceil(x[-1] + 1.0)
    breakpoints = np.arange(first, last + 1, dtype=float)
    knot_values = np.searchsorted(x, breakpoints, side='right').astype(float)
    slopes = np.diff(knot_values)
    return PsiDecomposition(
        breakpoints=breakpoints,
        knot_values=knot_values,
        slopes=slopes,
        l_bound=noncondensing_l(s, alpha),
        domain_alpha=float(alpha),
        _rescaled=x,
    )


def noncondensing_tail(s: Spectrum, alpha: float, l: int, weight) -> float:
    """Majorant of sum_{j >= 1} weight(mu_{M+j}) for the eigenvalues beyond the data.

    Assumes the sequence stays alpha-non-condensing with constant ``l`` past the
    truncation, which forces mu_{M+j}^alpha >= mu_M^alpha + max(0, floor(j/l) - 1).
    ``weight`` must be nonincreasing on [mu_M, inf) and integrable against the
    rescaled variable.
    """
    if l < 1:
        raise PreconditionError("l >= 1 violated", l=l)
    last = float(s.values[-1])
    x_last = last ** alpha
    head = (2 * l - 1) * weight(last)
    integral, _ = integrate.quad(lambda u: weight((x_last + u) ** (1.0 / alpha)), 0.0, np.inf, limit=200)
    return float(head + l * integral)
