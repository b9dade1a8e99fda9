"""Weighted resolvent sum W(lambda) = sum_k ||B phi_k||^2 / |lambda - mu_k|^2 and its bounds.

Three regions are checked by sampling: the vertical strip around a gap at r,
the exterior of the parabola |Im lambda| <= h (Re lambda)^(2 beta), and the
boundary of the counting rectangle.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from opentelemetry import trace
from scipy import integrate, optimize

from .conf import lab_setting
from .errors import ContourError, PoleError, PreconditionError
from .operator_model import DiagonalOperator, PerturbationMatrix, SubordinationProfile
from .parallel import parallel_map
from .spectrum_core import noncondensing_l, noncondensing_tail, resolve_alpha

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

STRIP_BOUND = 0.25
CHUNK = 1024
FLOOR_RTOL = 1e-12


def falls_below(value: float, floor: float, rtol: float = FLOOR_RTOL) -> bool:
    """value < floor beyond rounding; a value computed as the floor itself passes."""
    return value * (1 + rtol) < floor - rtol * abs(floor)


@dataclass(frozen=True)
class SamplingPlan:
    sigma_points: int = 33
    tau_points: int = 64
    tau_min: float = 1e-3

    def sigmas(self, lo, hi):
        return np.linspace(lo, hi, self.sigma_points)

    def taus(self, tau_max):
        """{0} and +-logspace(tau_min, tau_max), ascending."""
        tau_max = max(tau_max, 10 * self.tau_min)
        positive = np.logspace(np.log10(self.tau_min), np.log10(tau_max), self.tau_points)
        return np.concatenate([-positive[::-1], [0.0], positive])


@dataclass(frozen=True)
class StripSpec:
    r: float
    a: float
    gamma_eff: float

    @property
    def half_width(self):
        return self.a * self.r ** self.gamma_eff

    @property
    def doubled_window(self):
        return self.r - 2 * self.half_width, self.r + 2 * self.half_width

    def eigenvalues_in_window(self, T: DiagonalOperator):
        lo, hi = self.doubled_window
        return int(np.count_nonzero((T.diagonal > lo) & (T.diagonal < hi)))

    def is_admissible(self, T: DiagonalOperator):
        return self.eigenvalues_in_window(T) == 0


def admissible_strips(T: DiagonalOperator, a, gamma_eff, rs):
    """Strips from ``rs`` whose doubled window holds no eigenvalue; may be empty."""
    strips = [StripSpec(float(r), a, gamma_eff) for r in rs]
    admissible = [strip for strip in strips if strip.is_admissible(T)]
    if not admissible:
        logger.warning(f"no admissible strip among {len(strips)} radii at a={a}, gamma={gamma_eff}")
    return admissible


@dataclass(frozen=True)
class ResolventSum:
    head: float
    tail: float

    @property
    def total(self):
        return self.head + self.tail


class _TailMajorant:
    """b^2 * majorant of sum over eigenvalues past the truncation, memoised per Re lambda."""

    def __init__(self, T: DiagonalOperator, prof: SubordinationProfile | None, alpha=None, l=None):
        self.prof = prof
        self.active = prof is not None and prof.b > 0
        self._cache = {}
        if not self.active:
            return
        self.spectrum = T.spectrum
        self.alpha = resolve_alpha(self.spectrum, alpha)
        self.l = l if l is not None else noncondensing_l(self.spectrum, self.alpha)
        self.top = float(self.spectrum.values[-1])
        if (2 * prof.beta - 2) / self.alpha >= -1:
            raise PreconditionError("tail majorant diverges: (2 beta - 2) / alpha < -1 violated",
                                    beta=prof.beta, alpha=self.alpha)

    def __call__(self, sigma):
        if not self.active:
            return 0.0
        if sigma >= self.top:
            raise PreconditionError("Re lambda < mu_M violated for the tail majorant",
                                    sigma=sigma, top=self.top)
        shift = max(float(sigma), 0.0)
        if shift not in self._cache:
            beta = self.prof.beta
            if shift > 0:
                weight = lambda t: t ** (2 * beta) / (t - shift) ** 2
            else:
                weight = lambda t: t ** (2 * beta - 2)
            self._cache[shift] = self.prof.b ** 2 * noncondensing_tail(self.spectrum, self.alpha, self.l, weight)
        return self._cache[shift]


def _heads(diagonal, norms_sq, lambdas):
    distance_sq = np.abs(lambdas[:, None] - diagonal[None, :]) ** 2
    pole_tol = lab_setting('POLE_TOL')
    nearest = np.min(distance_sq, axis=1)
    scale = np.maximum(1.0, np.abs(lambdas)) ** 2
    hits = np.flatnonzero(nearest <= (pole_tol ** 2) * scale)
    if hits.size:
        raise PoleError("pole", lam=complex(lambdas[hits[0]]))
    return np.sum(norms_sq[None, :] / distance_sq, axis=1)


def resolvent_sum(T: DiagonalOperator, B: PerturbationMatrix, lam: complex,
                  prof: SubordinationProfile | None = None, *, alpha=None, l=None) -> ResolventSum:
    """W(lambda) over the truncation plus, given ``prof``, the tail past mu_M."""
    lam = complex(lam)
    head = float(_heads(T.diagonal, B.column_norms ** 2, np.array([lam]))[0])
    tail = _TailMajorant(T, prof, alpha, l)(lam.real)
    return ResolventSum(head=head, tail=float(tail))


def resolvent_sums(T: DiagonalOperator, B: PerturbationMatrix, lambdas,
                   prof: SubordinationProfile | None = None, *, alpha=None, l=None,
                   threads=None) -> np.ndarray:
    """Vectorised totals head + tail for many spectral parameters."""
    lambdas = np.asarray(lambdas, dtype=complex).ravel()
    norms_sq = B.column_norms ** 2
    tails = _TailMajorant(T, prof, alpha, l)
    chunks = [lambdas[i:i + CHUNK] for i in range(0, lambdas.size, CHUNK)]
    heads = parallel_map(lambda chunk: _heads(T.diagonal, norms_sq, chunk), chunks, threads)
    head = np.concatenate(heads) if heads else np.zeros(0)
    tail = np.array([tails(sigma) for sigma in lambdas.real])
    return head + tail


@dataclass
class BoundReport:
    check: str
    params: dict
    bound: float
    max_value: float
    argmax_lambda: complex
    samples: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    extra: dict = field(default_factory=dict)
    samples_path: str | None = None

    @property
    def passed(self):
        return bool(self.max_value <= 0 or self.max_value < self.bound) and all(
            value for key, value in self.extra.items() if key.endswith('passed'))

    def to_dict(self):
        return {
            'check': self.check,
            'params': self.params,
            'bound': self.bound,
            'max_value': self.max_value,
            'argmax_lambda': [self.argmax_lambda.real, self.argmax_lambda.imag],
            'sample_count': int(self.samples.size),
            'samples_path': self.samples_path,
            'passed': self.passed,
            **self.extra,
        }

    def sample_rows(self):
        return [(lam.real, lam.imag, value) for lam, value in zip(self.samples, self.values)]


def _report(check, params, bound, samples, values, **extra):
    if values.size:
        index = int(np.argmax(values))
        max_value, argmax = float(values[index]), complex(samples[index])
    else:
        max_value, argmax = 0.0, complex(0.0)
    return BoundReport(check, params, float(bound), max_value, argmax, samples, values, extra)


def _strip_gap(r, a, e):
    return (1 + 2 ** e) / a * (1 + a * r ** (e - 1)) ** e \
        + 2 ** e / (1 - e) * (r - a * r ** e) ** (e - 1) - 3 / a


def strip_threshold(a: float, gamma_eff: float) -> float:
    """Smallest r with the strip estimate's closing inequality below 3/a.

    The chain is (1 + 2^e)/a (1 + a r^(e-1))^e + 2^e/(1 - e) (r - a r^e)^(e-1) < 3/a
    with e = gamma_eff; for e = 0 it reduces to r >= 2a.
    """
    if a <= 0:
        raise PreconditionError("a > 0 violated", a=a)
    if not 0 <= gamma_eff < 1:
        raise PreconditionError("0 <= gamma_eff < 1 violated", gamma_eff=gamma_eff)
    e = gamma_eff
    lo = a ** (1 / (1 - e)) * (1 + 1e-9)
    hi = 2 * lo
    for _ in range(200):
        if _strip_gap(hi, a, e) <= 0:
            break
        lo, hi = hi, 2 * hi
    else:
        raise PreconditionError("strip threshold not found", a=a, gamma_eff=gamma_eff)
    if _strip_gap(lo, a, e) <= 0:
        return float(lo)
    return float(optimize.brentq(_strip_gap, lo, hi, args=(a, e), xtol=1e-12, rtol=1e-12))


def strip_samples(spec: StripSpec, plan: SamplingPlan = SamplingPlan()):
    sigmas = plan.sigmas(spec.r - spec.half_width, spec.r + spec.half_width)
    taus = plan.taus(spec.r)
    return (sigmas[:, None] + 1j * taus[None, :]).ravel()


def strip_bound_check(spec: StripSpec, T: DiagonalOperator, B: PerturbationMatrix,
                      prof: SubordinationProfile, l: int,
                      plan: SamplingPlan = SamplingPlan(), *, alpha=None) -> BoundReport:
    """W(lambda) < 1/4 on sampled lambda with |Re lambda - r| <= a r^gamma."""
    if falls_below(spec.a, 48 * l * prof.b ** 2):
        raise PreconditionError("a >= 48 l b^2 violated", a=spec.a, l=l, b=prof.b)
    threshold = strip_threshold(spec.a, spec.gamma_eff)
    if spec.r < threshold:
        raise PreconditionError("r >= strip threshold violated", r=spec.r, threshold=threshold)
    inside = spec.eigenvalues_in_window(T)
    if inside:
        raise PreconditionError("doubled strip window contains eigenvalues", r=spec.r, inside=inside)

    with tracer.start_as_current_span("strip_bound_check") as span:
        samples = strip_samples(spec, plan)
        values = resolvent_sums(T, B, samples, prof, alpha=alpha, l=l)
        report = _report(
            'strip', {'r': spec.r, 'a': spec.a, 'gamma_eff': spec.gamma_eff, 'b': prof.b, 'l': l},
            STRIP_BOUND, samples, values, threshold=threshold,
        )
        span.set_attributes({"lab.r": spec.r, "lab.samples": int(samples.size),
                             "lab.max_value": report.max_value})
    logger.info(f"strip r={spec.r:.4g}: max W={report.max_value:.4g} passed={report.passed}")
    return report


def sigma_h(h: float, beta: float) -> float:
    """[2h / (pi (1 - 2 beta)(2^(1 - 2 beta) - 1))]^(1 / (1 - 2 beta))."""
    if beta >= 0.5:
        raise PreconditionError("exponent out of range", beta=beta)
    if h <= 0:
        raise PreconditionError("h > 0 violated", h=h)
    e = 1 - 2 * beta
    return float((2 * h / (math.pi * e * (2 ** e - 1))) ** (1 / e))


@dataclass(frozen=True)
class ParabolaSpec:
    h: float
    beta: float
    exponent: float | None = None

    @property
    def power(self):
        return 2 * self.beta if self.exponent is None else self.exponent

    @property
    def sigma_h(self):
        return sigma_h(self.h, self.beta)

    def fits(self, T: DiagonalOperator) -> bool:
        """sigma_h lies below the part of the truncated spectrum the samples may use."""
        return 0.9 * float(np.max(T.diagonal)) > self.sigma_h

    def outside(self, lam):
        lam = complex(lam)
        return lam.real >= self.sigma_h and abs(lam.imag) > self.h * lam.real ** self.power


def parabola_samples(p: ParabolaSpec, T: DiagonalOperator, count=200):
    """Deterministic samples right of sigma_h and outside the parabola, below mu_M."""
    if not p.fits(T):
        raise PreconditionError("sigma_h beyond the truncated spectrum", sigma_h=p.sigma_h)
    start = p.sigma_h
    stop = min(50 * start, 0.9 * float(np.max(T.diagonal)))
    columns = 20
    rows = max(1, count // (2 * columns))
    sigmas = np.geomspace(start, stop, columns)
    factors = np.geomspace(1.01, 100.0, rows)
    heights = factors[:, None] * p.h * sigmas[None, :] ** p.power
    upper = (sigmas[None, :] + 1j * heights).ravel()
    return np.concatenate([upper, upper.conj()])


def _parabola_integral(sigma, tau, beta):
    f = lambda t: t ** (2 * beta) / ((sigma - t) ** 2 + tau ** 2)
    points = [sigma] if sigma > 1 else None
    finite, _ = integrate.quad(f, 1.0, max(2 * sigma, 2.0), points=points, limit=200)
    rest, _ = integrate.quad(f, max(2 * sigma, 2.0), np.inf, limit=200)
    return finite + rest


def parabola_bound_check(p: ParabolaSpec, T: DiagonalOperator, B: PerturbationMatrix,
                         prof: SubordinationProfile, l: int, samples=None, *, alpha=None) -> BoundReport:
    """W(lambda) < 6 pi b^2 l / h outside P(h, 2 beta) right of sigma_h.

    The bare integral of t^(2 beta) / |lambda - t|^2 is checked against
    3 pi / (2h) next to it.
    """
    samples = parabola_samples(p, T) if samples is None else np.asarray(samples, dtype=complex)
    for lam in samples:
        if not p.outside(lam):
            raise PreconditionError("sample inside parabola", lam=complex(lam), sigma_h=p.sigma_h)

    with tracer.start_as_current_span("parabola_bound_check") as span:
        values = resolvent_sums(T, B, samples, prof, alpha=alpha, l=l)
        integrals = np.array([_parabola_integral(lam.real, lam.imag, prof.beta) for lam in samples])
        integral_constant = 3 * math.pi / (2 * p.h)
        report = _report(
            'parabola', {'h': p.h, 'beta': p.beta, 'b': prof.b, 'l': l, 'sigma_h': p.sigma_h},
            6 * math.pi * prof.b ** 2 * l / p.h, samples, values,
            integral_constant=integral_constant,
            max_integral=float(np.max(integrals)),
            integral_passed=bool(np.max(integrals) < integral_constant),
        )
        span.set_attributes({"lab.h": p.h, "lab.samples": int(samples.size),
                             "lab.max_value": report.max_value})
    logger.info(f"parabola h={p.h}: max W={report.max_value:.4g} bound={report.bound:.4g}")
    return report


def rectangle_sides(r: float, R: float, plan: SamplingPlan = SamplingPlan()):
    """Samples on Re = r, Re = -R, Im = +R and Im = -R."""
    taus = plan.taus(R)
    taus = taus[np.abs(taus) <= R]
    sigmas = plan.sigmas(-R, r)
    return {
        'right': r + 1j * taus,
        'left': -R + 1j * taus,
        'top': sigmas + 1j * R,
        'bottom': sigmas - 1j * R,
    }


def rectangle_scan(r, R, T, B, prof, l, plan: SamplingPlan = SamplingPlan(), *, alpha=None):
    """Max W per side of the rectangle (-R, r) x (-R, R)."""
    return {
        side: float(np.max(resolvent_sums(T, B, points, prof, alpha=alpha, l=l)))
        for side, points in rectangle_sides(r, R, plan).items()
    }


def rectangle_R(spec: StripSpec, T: DiagonalOperator, B: PerturbationMatrix,
                prof: SubordinationProfile, l: int, h: float,
                plan: SamplingPlan = SamplingPlan(), *, alpha=None) -> float:
    """Smallest R = 2h r^gamma * 2^k with sampled W < 1/4 on the whole rectangle boundary."""
    R = 2 * h * spec.r ** spec.gamma_eff
    limit = lab_setting('RECTANGLE_GROWTH_LIMIT') * spec.r
    with tracer.start_as_current_span("rectangle_R") as span:
        while R <= limit:
            scan = rectangle_scan(spec.r, R, T, B, prof, l, plan, alpha=alpha)
            if max(scan.values()) < STRIP_BOUND:
                span.set_attributes({"lab.r": spec.r, "lab.R": R})
                logger.debug(f"rectangle r={spec.r:.4g} R={R:.4g} scan={scan}")
                return float(R)
            R *= 2
        span.set_attributes({"lab.r": spec.r, "lab.R": R})
    raise ContourError("no admissible rectangle at truncation", r=spec.r, limit=limit)


def rectangle_count(values, r, R):
    """Points strictly inside (-R, r) x (-R, R)."""
    values = np.asarray(values)
    return int(np.count_nonzero((values.real > -R) & (values.real < r) & (np.abs(values.imag) < R)))
