"""Artificial lacuna, perturbation determinant and zero/pole counting.

T_r = T + K_r shifts the eigenvalues inside the doubled window to the right by
c = 4 a r^gamma. With A = T + B and A_r = T_r + B,

    lambda - A = (1 + K_r (lambda - A_r)^-1) (lambda - A_r),

so D(lambda) = det(I_N + c G(lambda)), G being the N x N block of
(lambda - A_r)^-1 on the shifted indices, has the eigenvalues of A as zeros and
those of A_r as poles. Counting both inside the rectangle
(-R, r) x (-R, R) and comparing with the winding of D is the identity checked
by ``wa_check``.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from opentelemetry import trace
from opentelemetry.trace import Status, StatusCode
from scipy import linalg

from .conf import lab_setting
from .errors import ContourError, PoleError, PreconditionError, QuadratureError, VerificationError
from .operator_model import (
    DiagonalOperator, PerturbationMatrix, SubordinationProfile, assemble, count_perturbed, eigenvalues,
)
from .parallel import parallel_map
from .resolvent_bounds import (
    SamplingPlan, StripSpec, falls_below, rectangle_R, rectangle_count, resolvent_sum, resolvent_sums,
    strip_samples,
)
from .spectrum_core import count, count_upto, noncondensing_l, resolve_alpha

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

KERNEL_BOUND = 8.0
CORRECTED_NORM_BOUND = 0.5
GAUSS_ORDER = 16


@dataclass(frozen=True, eq=False)
class LacunaPlan:
    r: float
    a: float
    gamma_eff: float
    shift_c: float
    window: tuple
    indices: np.ndarray
    shifted: DiagonalOperator

    @property
    def rank_N(self):
        return int(self.indices.size)

    @property
    def half_width(self):
        return self.a * self.r ** self.gamma_eff

    def to_dict(self):
        return {
            'r': self.r,
            'a': self.a,
            'gamma_eff': self.gamma_eff,
            'shift_c': self.shift_c,
            'window': list(self.window),
            'indices': [int(k) for k in self.indices],
            'rank_N': self.rank_N,
        }

    def properties(self, T: DiagonalOperator, B: PerturbationMatrix, prof: SubordinationProfile,
                   l: int, alpha=None):
        """The corrected operator's gap, subordination, count and non-condensing properties."""
        lo, hi = self.window
        shifted = self.shifted.diagonal
        w = self.half_width
        inner_gap = not np.any((shifted > self.r - w) & (shifted < self.r + w))
        outer_gap = not np.any((shifted > lo) & (shifted < hi))
        drop = count(T.spectrum, self.r) - count(self.shifted.spectrum, self.r)
        alpha = resolve_alpha(T.spectrum, alpha)
        shifted_l = noncondensing_l(self.shifted.spectrum, alpha)
        doubled = SubordinationProfile(prof.beta, 2 * prof.b)
        report = {
            'inner_gap': inner_gap,
            'outer_gap': outer_gap,
            'subordination_preserved': prof.holds(self.shifted, B),
            'doubled_subordination': doubled.holds(self.shifted, B),
            'count_drop': int(drop),
            'count_drop_in_range': 0 <= drop <= self.rank_N,
            'shifted_l': shifted_l,
            'shifted_l_within_2l': shifted_l <= 2 * l,
        }
        report['passed'] = all(value for key, value in report.items()
                               if isinstance(value, bool))
        return report


def plan_lacuna(T: DiagonalOperator, r: float, a: float, gamma_eff: float, l: int,
                prof: SubordinationProfile) -> LacunaPlan:
    """K_r = 4 a r^gamma on the eigenvectors with mu_k in (r - 2a r^gamma, r + 2a r^gamma)."""
    if falls_below(a, 96 * prof.b ** 2 * l):
        raise PreconditionError("a >= 96 b^2 l violated", a=a, b=prof.b, l=l)
    w = a * r ** gamma_eff
    if r - 2 * w <= 1:
        raise PreconditionError("r - 2 a r^gamma > 1 violated", r=r, half_width=w)
    lo, hi = r - 2 * w, r + 2 * w
    indices = np.flatnonzero((T.diagonal > lo) & (T.diagonal < hi))
    shift = 4 * w
    shifted = T.shifted(indices, shift)
    if np.any((shifted.diagonal > lo) & (shifted.diagonal < hi)):
        raise VerificationError("shifted eigenvalue left inside the lacuna window", r=r)
    expected = count(T.spectrum, hi) - count_upto(T.spectrum, lo)
    if indices.size != expected:
        raise VerificationError("lacuna rank differs from window count", rank=indices.size, expected=expected)
    logger.debug(f"lacuna r={r:.6g} window=({lo:.6g}, {hi:.6g}) N={indices.size} c={shift:.6g}")
    return LacunaPlan(float(r), float(a), float(gamma_eff), float(shift), (lo, hi), indices, shifted)


def bessel_majorant(diagonal, norms, lam) -> float:
    """sqrt(sum_k norms_k^2 / |lambda - d_k|^2), a bound for ||B (lambda - diag(d))^-1||."""
    diagonal = np.asarray(diagonal, dtype=float)
    norms = np.asarray(norms, dtype=float)
    distance = np.abs(complex(lam) - diagonal)
    if np.any(distance <= lab_setting('POLE_TOL') * max(1.0, abs(lam))):
        raise PoleError("pole", lam=complex(lam))
    return float(np.sqrt(np.sum(norms ** 2 / distance ** 2)))


def corrected_norm_bound(plan: LacunaPlan, T: DiagonalOperator, B: PerturbationMatrix,
                         prof: SubordinationProfile, lam, *, alpha=None, l=None) -> float:
    """Bessel majorant of ||B (lambda - T_r)^-1|| including the tail past the truncation."""
    lam = complex(lam)
    w = plan.half_width
    if not plan.r - w < lam.real < plan.r + w:
        raise PreconditionError("Re lambda in (r - a r^gamma, r + a r^gamma) violated",
                                lam=lam, r=plan.r, half_width=w)
    if T.dim != B.dim:
        raise PreconditionError("T and B dimensions differ", t_dim=T.dim, b_dim=B.dim)
    return float(math.sqrt(resolvent_sum(plan.shifted, B, lam, prof, alpha=alpha, l=l).total))


def corrected_norm_scan(plan: LacunaPlan, B: PerturbationMatrix, prof: SubordinationProfile,
                        sampling: SamplingPlan = SamplingPlan(), *, alpha=None, l=None):
    """Max of the corrected-norm majorant over strip samples strictly inside the strip."""
    w = plan.half_width
    samples = strip_samples(StripSpec(plan.r, plan.a, plan.gamma_eff), sampling)
    samples = samples[np.abs(samples.real - plan.r) < w]
    values = np.sqrt(resolvent_sums(plan.shifted, B, samples, prof, alpha=alpha, l=l))
    index = int(np.argmax(values))
    return {
        'max_value': float(values[index]),
        'argmax_lambda': [samples[index].real, samples[index].imag],
        'bound': CORRECTED_NORM_BOUND,
        'samples': int(samples.size),
        'passed': bool(values[index] < CORRECTED_NORM_BOUND),
    }


def _factor(system):
    with warnings.catch_warnings():
        warnings.simplefilter('error', linalg.LinAlgWarning)
        try:
            lu, piv = linalg.lu_factor(system)
        except (linalg.LinAlgWarning, linalg.LinAlgError, ValueError) as e:
            raise PoleError("on spectrum of T_r + B") from e
    scale = max(1.0, float(np.linalg.norm(system, np.inf)))
    if np.min(np.abs(np.diag(lu))) <= lab_setting('POLE_TOL') * scale:
        raise PoleError("on spectrum of T_r + B")
    return lu, piv


def _corrected_matrix(plan: LacunaPlan, B: PerturbationMatrix):
    if plan.shifted.dim != B.dim:
        raise PreconditionError("plan and B dimensions differ", plan_dim=plan.shifted.dim, b_dim=B.dim)
    return assemble(plan.shifted, B)


def _resolvent_columns(plan: LacunaPlan, B: PerturbationMatrix, lam, corrected):
    corrected = _corrected_matrix(plan, B) if corrected is None else corrected
    factors = _factor(complex(lam) * np.eye(corrected.shape[0]) - corrected)
    columns = np.zeros((corrected.shape[0], plan.rank_N), dtype=complex)
    columns[plan.indices, np.arange(plan.rank_N)] = 1.0
    return factors, linalg.lu_solve(factors, columns)


def kernel_matrix(plan: LacunaPlan, T: DiagonalOperator, B: PerturbationMatrix, lam,
                  corrected=None) -> np.ndarray:
    """c G(lambda): the N x N compression of K_r (lambda - T_r - B)^-1."""
    if plan.rank_N == 0:
        return np.zeros((0, 0), dtype=complex)
    _, solved = _resolvent_columns(plan, B, lam, corrected)
    return plan.shift_c * solved[plan.indices, :]


@dataclass(frozen=True)
class PhaseSample:
    """f(lambda) = sign * exp(log_modulus), so that det over large N neither underflows nor overflows.

    ``zero_margin`` is the smallest LU pivot of I + c G over max(1, largest
    pivot), or |f| for a plain value; it vanishes at a zero.
    """

    sign: complex
    log_modulus: float
    log_derivative: complex = complex('nan')
    zero_margin: float = 1.0

    @classmethod
    def of(cls, value) -> PhaseSample:
        value = complex(value)
        modulus = abs(value)
        if modulus == 0 or not np.isfinite(modulus):
            return cls(0j, -math.inf, zero_margin=0.0)
        return cls(value / modulus, math.log(modulus), zero_margin=modulus)

    @property
    def value(self) -> complex:
        return complex(self.sign * np.exp(self.log_modulus))


def determinant_sample(plan: LacunaPlan, T: DiagonalOperator, B: PerturbationMatrix, lam,
                       corrected=None) -> PhaseSample:
    """D(lambda) in sign/log form with d log D / d lambda = tr((I + c G)^-1 c G').

    G' = -P (lambda - A_r)^-2 P^T reuses the LU of lambda - A_r.
    """
    if plan.rank_N == 0:
        return PhaseSample(1.0 + 0.0j, 0.0, 0j)
    factors, solved = _resolvent_columns(plan, B, lam, corrected)
    kernel = plan.shift_c * solved[plan.indices, :]
    kernel_prime = -plan.shift_c * linalg.lu_solve(factors, solved)[plan.indices, :]
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', linalg.LinAlgWarning)
        lu, piv = linalg.lu_factor(np.eye(plan.rank_N) + kernel)
    pivots = np.diag(lu)
    moduli = np.abs(pivots)
    if np.min(moduli) == 0:
        return PhaseSample(0j, -math.inf, zero_margin=0.0)
    swaps = int(np.count_nonzero(piv != np.arange(piv.size)))
    sign = complex(np.prod(pivots / moduli)) * (-1) ** swaps
    return PhaseSample(
        sign=sign / abs(sign),
        log_modulus=float(np.sum(np.log(moduli))),
        log_derivative=complex(np.trace(linalg.lu_solve((lu, piv), kernel_prime))),
        zero_margin=float(np.min(moduli) / max(1.0, np.max(moduli))),
    )


def determinant(plan: LacunaPlan, T: DiagonalOperator, B: PerturbationMatrix, lam,
                corrected=None) -> complex:
    """D(lambda) = det(I_N + c G(lambda)); identically 1 when N = 0."""
    return determinant_sample(plan, T, B, lam, corrected).value


@dataclass
class DeterminantBoundReport:
    rank_N: int
    h: float
    upper_bound: float
    max_modulus: float
    argmax_lambda: complex
    lower_point: complex
    lower_value: float
    lower_bound: float
    max_kernel_eigenvalue: float
    samples: int

    @property
    def passed(self):
        return (self.max_modulus <= self.upper_bound
                and self.lower_value >= self.lower_bound
                and self.max_kernel_eigenvalue <= KERNEL_BOUND)

    def to_dict(self):
        return {
            'rank_N': self.rank_N,
            'h': self.h,
            'upper_bound': self.upper_bound,
            'max_modulus': self.max_modulus,
            'argmax_lambda': [self.argmax_lambda.real, self.argmax_lambda.imag],
            'lower_point': [self.lower_point.real, self.lower_point.imag],
            'lower_value': self.lower_value,
            'lower_bound': self.lower_bound,
            'max_kernel_eigenvalue': self.max_kernel_eigenvalue,
            'samples': self.samples,
            'passed': self.passed,
        }


def det_bounds_check(plan: LacunaPlan, T: DiagonalOperator, B: PerturbationMatrix,
                     prof: SubordinationProfile, h: float,
                     sampling: SamplingPlan = SamplingPlan(sigma_points=9, tau_points=16),
                     threads=None) -> DeterminantBoundReport:
    """|D| <= 9^N on the strip, |D(r + i h r^gamma)| >= 2^-N and kernel eigenvalues <= 8."""
    if falls_below(h, 16 * plan.a):
        raise PreconditionError("h >= 16 a violated", h=h, a=plan.a)
    N = plan.rank_N
    lower_point = complex(plan.r, h * plan.r ** plan.gamma_eff)
    samples = strip_samples(StripSpec(plan.r, plan.a, plan.gamma_eff), sampling)
    corrected = _corrected_matrix(plan, B)

    def evaluate(lam):
        kernel = kernel_matrix(plan, T, B, lam, corrected)
        if N == 0:
            return 1.0, 0.0
        eigs = linalg.eigvals(kernel)
        return float(abs(np.prod(1.0 + eigs))), float(np.max(np.abs(eigs)))

    with tracer.start_as_current_span("det_bounds_check") as span:
        results = parallel_map(evaluate, samples, threads)
        moduli = np.array([modulus for modulus, _ in results])
        kernels = np.array([largest for _, largest in results])
        lower_value, _ = evaluate(lower_point)
        index = int(np.argmax(moduli))
        report = DeterminantBoundReport(
            rank_N=N, h=float(h), upper_bound=float(9.0 ** N),
            max_modulus=float(moduli[index]), argmax_lambda=complex(samples[index]),
            lower_point=lower_point, lower_value=float(lower_value), lower_bound=float(0.5 ** N),
            max_kernel_eigenvalue=float(np.max(kernels)), samples=int(samples.size),
        )
        span.set_attributes({"lab.r": plan.r, "lab.rank_n": N, "lab.samples": int(samples.size),
                             "lab.max_value": report.max_modulus})
    logger.info(f"determinant bounds r={plan.r:.6g} N={N}: max|D|={report.max_modulus:.4g} "
                f"|D(r+ihr^g)|={report.lower_value:.4g} passed={report.passed}")
    return report


SIDES = ('right', 'top', 'left', 'bottom')


@dataclass(frozen=True, eq=False)
class ContourPath:
    """Counterclockwise boundary of (-R, r) x (-R, R), closed: last node equals the first.

    ``sides[i]`` labels the segment that starts at ``nodes[i]``; the right side
    carries the points r +- i h r^gamma that bound the segment I_r.
    """

    r: float
    R: float
    segment_height: float
    nodes: np.ndarray
    sides: np.ndarray

    @property
    def corners(self):
        return (complex(self.r, -self.R), complex(self.r, self.R),
                complex(-self.R, self.R), complex(-self.R, -self.R))


def build_contour(r: float, R: float, segment_height: float = 0.0,
                  sampling: SamplingPlan = SamplingPlan()) -> ContourPath:
    taus = sampling.taus(R)
    taus = np.unique(np.concatenate([taus[np.abs(taus) < R], [-R, R],
                                     [-segment_height, segment_height] if 0 < segment_height < R else []]))
    sigmas = sampling.sigmas(-R, r)
    right = r + 1j * taus
    top = sigmas[::-1][1:] + 1j * R
    left = -R + 1j * taus[::-1][1:]
    bottom = sigmas[1:] - 1j * R
    nodes = np.concatenate([right, top, left, bottom])
    sides = np.concatenate([np.full(right.size, 0), np.full(top.size, 1),
                            np.full(left.size, 2), np.full(bottom.size, 3)])
    sides[right.size - 1] = 1
    sides[right.size + top.size - 1] = 2
    sides[right.size + top.size + left.size - 1] = 3
    return ContourPath(float(r), float(R), float(segment_height), nodes, sides)


def contour_for(plan: LacunaPlan, R: float, h: float, sampling: SamplingPlan = SamplingPlan()):
    return build_contour(plan.r, R, h * plan.r ** plan.gamma_eff, sampling)


@dataclass
class ArgumentTrace:
    nodes: np.ndarray
    sides: np.ndarray
    signs: np.ndarray
    log_moduli: np.ndarray
    increments: np.ndarray
    refinements: int = 0

    @property
    def values(self):
        return self.signs * np.exp(self.log_moduli)

    @property
    def variation(self):
        return float(np.sum(self.increments))

    @property
    def winding(self):
        return self.variation / (2 * math.pi)

    def winding_integer(self):
        winding = self.winding
        nearest = round(winding)
        if abs(winding - nearest) > lab_setting('WINDING_TOL'):
            raise ContourError("non-integral winding", winding=winding)
        return int(nearest)

    def rows(self):
        phase = np.concatenate([[0.0], np.cumsum(self.increments)]) + np.angle(self.signs[0])
        return [(lam.real, lam.imag, value.real, value.imag, log_modulus, angle)
                for lam, value, log_modulus, angle in zip(self.nodes, self.values, self.log_moduli, phase)]


def _unpack(samples):
    return (np.array([s.sign for s in samples], dtype=complex),
            np.array([s.log_modulus for s in samples], dtype=float),
            np.array([s.log_derivative for s in samples], dtype=complex))


def argument_trace(f, contour: ContourPath, threads=None) -> ArgumentTrace:
    """Phase of f along the contour, summed from sign increments between neighbouring nodes.

    ``f`` returns a complex value or a ``PhaseSample``. An interval is bisected
    while its principal increment reaches pi/2 and, when both ends carry a
    log-derivative, while the trapezoid estimate of the change in log f
    reaches pi/2 in phase or misses the observed change by more than pi/4.
    """
    limit = lab_setting('MAX_CONTOUR_POINTS')
    pole_tol = lab_setting('POLE_TOL')
    min_step = pole_tol * max(1.0, contour.R)

    def sample(lam):
        try:
            value = f(lam)
        except PoleError as e:
            raise ContourError("zero or pole on contour", lam=complex(lam)) from e
        value = value if isinstance(value, PhaseSample) else PhaseSample.of(value)
        if value.zero_margin <= pole_tol or not np.isfinite(value.log_modulus):
            raise ContourError("zero or pole on contour", lam=complex(lam))
        return value

    nodes = contour.nodes[:-1]
    sides = contour.sides[:-1]
    signs, log_moduli, slopes = _unpack(parallel_map(sample, nodes, threads))
    nodes = np.append(nodes, contour.nodes[-1])
    sides = np.append(sides, sides[0])
    signs, log_moduli, slopes = np.append(signs, signs[0]), np.append(log_moduli, log_moduli[0]), \
        np.append(slopes, slopes[0])
    refinements = 0
    with tracer.start_as_current_span("argument_trace") as span:
        while True:
            increments = np.angle(signs[1:] * np.conj(signs[:-1]))
            predicted = np.diff(nodes) * (slopes[:-1] + slopes[1:]) / 2
            observed = np.diff(log_moduli) + 1j * increments
            checked = np.isfinite(predicted)
            unsettled = np.abs(increments) >= math.pi / 2
            unsettled[checked] |= ((np.abs(predicted[checked].imag) >= math.pi / 2)
                                   | (np.abs(observed[checked] - predicted[checked]) > math.pi / 4))
            bad = np.flatnonzero(unsettled)
            if bad.size == 0:
                break
            if nodes.size + bad.size > limit or np.min(np.abs(nodes[bad + 1] - nodes[bad])) < min_step:
                span.set_status(Status(StatusCode.ERROR))
                raise ContourError("zero or pole on contour", points=int(nodes.size), r=contour.r)
            midpoints = (nodes[bad] + nodes[bad + 1]) / 2
            fresh_signs, fresh_moduli, fresh_slopes = _unpack(parallel_map(sample, midpoints, threads))
            nodes = np.insert(nodes, bad + 1, midpoints)
            sides = np.insert(sides, bad + 1, sides[bad])
            signs = np.insert(signs, bad + 1, fresh_signs)
            log_moduli = np.insert(log_moduli, bad + 1, fresh_moduli)
            slopes = np.insert(slopes, bad + 1, fresh_slopes)
            refinements += int(bad.size)
        span.set_attributes({"lab.r": contour.r, "lab.points": int(nodes.size),
                             "lab.refinements": refinements})
    return ArgumentTrace(nodes, sides, signs, log_moduli, increments, refinements)


def winding_number(plan: LacunaPlan, T: DiagonalOperator, B: PerturbationMatrix,
                   contour: ContourPath, threads=None, trace_out=None) -> int:
    """(1 / 2 pi) [arg D] along the contour: zeros minus poles of D inside."""
    if plan.rank_N == 0:
        return 0
    corrected = _corrected_matrix(plan, B)
    traced = argument_trace(lambda lam: determinant_sample(plan, T, B, lam, corrected), contour, threads)
    if trace_out is not None:
        trace_out.append(traced)
    return traced.winding_integer()


def argument_variation_split(plan: LacunaPlan, T: DiagonalOperator, B: PerturbationMatrix,
                             contour: ContourPath, h: float, traced: ArgumentTrace | None = None,
                             threads=None):
    """Variation of arg D along I_r = [r - i h r^gamma, r + i h r^gamma] and along the rest."""
    height = h * plan.r ** plan.gamma_eff
    if plan.rank_N == 0:
        return {'segment': 0.0, 'outside': 0.0, 'outside_bound': 0.0, 'passed': True}
    if traced is None:
        corrected = _corrected_matrix(plan, B)
        traced = argument_trace(lambda lam: determinant_sample(plan, T, B, lam, corrected), contour, threads)
    start, stop = traced.nodes[:-1], traced.nodes[1:]
    tolerance = 1e-12 * max(1.0, height)
    on_segment = ((traced.sides[:-1] == 0)
                  & (np.abs(start.imag) <= height + tolerance)
                  & (np.abs(stop.imag) <= height + tolerance))
    segment = float(np.sum(traced.increments[on_segment]))
    outside = float(np.sum(traced.increments[~on_segment]))
    bound = math.pi * plan.rank_N / 3
    return {
        'segment': segment,
        'outside': outside,
        'outside_bound': bound,
        'passed': abs(outside) <= bound + 1e-9,
    }


@dataclass
class WAReport:
    r: float
    R: float
    rank_N: int
    n_A: int
    n_TrB: int
    nu: int
    n_A_modulus: int
    n_TrB_modulus: int
    eigs_A: np.ndarray = field(repr=False)
    eigs_TrB: np.ndarray = field(repr=False)
    nudge: float = 0.0
    attempts: int = 1

    @property
    def passed(self):
        return self.n_A == self.n_TrB + self.nu

    def to_dict(self, with_eigenvalues=False):
        data = {
            'r': self.r,
            'R': self.R,
            'rank_N': self.rank_N,
            'n_A': self.n_A,
            'n_TrB': self.n_TrB,
            'nu': self.nu,
            'n_A_modulus': self.n_A_modulus,
            'n_TrB_modulus': self.n_TrB_modulus,
            'nudge': self.nudge,
            'attempts': self.attempts,
            'pass': self.passed,
        }
        if with_eigenvalues or not self.passed:
            data['eigs_A'] = [[z.real, z.imag] for z in self.eigs_A]
            data['eigs_TrB'] = [[z.real, z.imag] for z in self.eigs_TrB]
        return data


def wa_check(plan: LacunaPlan, T: DiagonalOperator, B: PerturbationMatrix, r: float,
             contour: ContourPath, *, eigs_A=None, threads=None, trace_out=None) -> WAReport:
    """n(R, A) = n(R, T_r + B) + nu, counting eigenvalues inside the contour's rectangle."""
    with tracer.start_as_current_span("wa_check") as span:
        eigs_A = eigenvalues(assemble(T, B)) if eigs_A is None else np.asarray(eigs_A)
        eigs_TrB = eigenvalues(_corrected_matrix(plan, B))
        nu = winding_number(plan, T, B, contour, threads, trace_out)
        report = WAReport(
            r=float(r), R=contour.R, rank_N=plan.rank_N,
            n_A=rectangle_count(eigs_A, contour.r, contour.R),
            n_TrB=rectangle_count(eigs_TrB, contour.r, contour.R),
            nu=nu,
            n_A_modulus=count_perturbed(eigs_A, r),
            n_TrB_modulus=count_perturbed(eigs_TrB, r),
            eigs_A=eigs_A, eigs_TrB=eigs_TrB,
        )
        span.set_attributes({"lab.r": r, "lab.rank_n": plan.rank_N, "lab.nu": nu,
                             "lab.passed": report.passed})
    if not report.passed:
        logger.error(f"W-A identity failed at r={r}: n_A={report.n_A} n_TrB={report.n_TrB} nu={nu}")
    return report


def wa_check_nudged(T: DiagonalOperator, B: PerturbationMatrix, prof: SubordinationProfile,
                    r: float, a: float, gamma_eff: float, l: int, h: float,
                    sampling: SamplingPlan = SamplingPlan(), *, alpha=None, eigs_A=None,
                    threads=None, trace_out=None) -> WAReport:
    """wa_check at r, r + eps, r - eps, r + 2 eps, ... while the contour meets a zero or pole."""
    eps = lab_setting('NUDGE_RELATIVE') * r
    attempts = lab_setting('NUDGE_ATTEMPTS')
    offsets = [0.0] + [sign * k * eps for k in range(1, attempts + 1) for sign in (1, -1)]
    offsets = offsets[:attempts + 1]
    last_error = None
    for attempt, offset in enumerate(offsets, start=1):
        radius = r + offset
        plan = plan_lacuna(T, radius, a, gamma_eff, l, prof)
        R = rectangle_R(StripSpec(radius, a, gamma_eff), plan.shifted, B, prof, 2 * l, h, sampling, alpha=alpha)
        contour = contour_for(plan, R, h, sampling)
        try:
            report = wa_check(plan, T, B, radius, contour, eigs_A=eigs_A, threads=threads,
                              trace_out=trace_out)
        except ContourError as e:
            last_error = e
            logger.warning(f"contour hit a zero or pole at r={radius:.12g}; nudging")
            continue
        report.nudge, report.attempts = offset, attempt
        if offset:
            logger.info(f"wa_check at r={r} succeeded after nudge {offset:+.3e}")
        return report
    raise ContourError("zero or pole on contour after nudging", r=r, attempts=len(offsets),
                       cause=str(last_error))


def natural_lacuna_check(T: DiagonalOperator, B: PerturbationMatrix, prof: SubordinationProfile,
                         r: float, a: float, gamma_eff: float, l: int, h: float,
                         sampling: SamplingPlan = SamplingPlan(), *, alpha=None, eigs_A=None):
    """Without eigenvalues of T in the doubled window, A and T have equal counts in the rectangle."""
    strip = StripSpec(r, a, gamma_eff)
    if not strip.is_admissible(T):
        return {'r': r, 'applicable': False}
    R = rectangle_R(strip, T, B, prof, l, h, sampling, alpha=alpha)
    eigs_A = eigenvalues(assemble(T, B)) if eigs_A is None else np.asarray(eigs_A)
    n_A = rectangle_count(eigs_A, r, R)
    n_T = count(T.spectrum, r)
    return {'r': r, 'applicable': True, 'R': R, 'n_A': n_A, 'n_T': n_T, 'passed': n_A == n_T}


def _graded_breaks(length, first):
    """0, first, 2 first, 4 first, ... capped at ``length``."""
    breaks = [0.0, min(first, length)]
    while breaks[-1] < length:
        breaks.append(min(length, 2 * breaks[-1]))
    return np.array(breaks)


def _uniform_breaks(start, stop, width):
    panels = max(1, math.ceil(abs(stop - start) / width))
    return np.linspace(start, stop, panels + 1)


def riesz_nodes(contour: ContourPath, half_width: float):
    """Gauss-Legendre nodes and weights (already multiplied by d lambda) around the rectangle."""
    r, R = contour.r, contour.R
    x, w = np.polynomial.legendre.leggauss(GAUSS_ORDER)
    graded = _graded_breaks(R, min(half_width / 2, R))
    right = np.concatenate([-graded[::-1], graded[1:]])
    left = right[::-1]
    panel = max(R / 2, 1e-12)
    pieces = [
        (r + 1j * right, 1j),
        (_uniform_breaks(r, -R, panel) + 1j * R, -1.0),
        (-R + 1j * left, -1j),
        (_uniform_breaks(-R, r, panel) - 1j * R, 1.0),
    ]
    nodes, weights = [], []
    for breaks, direction in pieces:
        for start, stop in zip(breaks[:-1], breaks[1:]):
            mid, half = (start + stop) / 2, (stop - start) / 2
            nodes.append(mid + half * x)
            weights.append(abs(half) * w * direction)
    return np.concatenate(nodes), np.concatenate(weights)


def riesz_rank(plan: LacunaPlan, T: DiagonalOperator, B: PerturbationMatrix, t: float,
               contour: ContourPath, threads=None) -> int:
    """Rank of (1 / 2 pi i) contour integral of (lambda - T_r - t B)^-1 via its trace."""
    if not 0 <= t <= 1:
        raise PreconditionError("t in [0, 1] violated", t=t)
    matrix = np.diag(plan.shifted.diagonal) + t * B.entries
    identity = np.eye(matrix.shape[0])
    nodes, weights = riesz_nodes(contour, plan.half_width)

    def resolvent_trace(lam):
        try:
            factors = _factor(lam * identity - matrix)
        except PoleError as e:
            raise ContourError("eigenvalue of T_r + tB on contour", lam=complex(lam), t=t) from e
        return complex(np.trace(linalg.lu_solve(factors, identity)))

    with tracer.start_as_current_span("riesz_rank") as span:
        traces = np.array(parallel_map(resolvent_trace, nodes, threads))
        value = complex(np.sum(weights * traces) / (2j * math.pi))
        span.set_attributes({"lab.r": plan.r, "lab.t": t, "lab.nodes": int(nodes.size),
                             "lab.trace": value.real})
    rank = round(value.real)
    if abs(value - rank) > 0.1:
        raise QuadratureError("quadrature too coarse", trace=value, nodes=int(nodes.size))
    direct = rectangle_count(eigenvalues(matrix), contour.r, contour.R)
    if rank != direct:
        raise VerificationError("Riesz rank differs from eigenvalue count", rank=rank, direct=direct, t=t)
    return int(rank)
