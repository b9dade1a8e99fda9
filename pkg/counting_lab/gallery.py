"""Operator generators and the periodic multiplication example.

The periodic example is T = i d/dx on (0, 2 pi) with eigenfunctions e^{ikx}
and B f = b(x) f(x). In that basis B is Toeplitz with entries b^(j - k),
b^(m) = (1 / 2 pi) int_0^{2 pi} b(x) e^{-imx} dx. For
b(x) = 1 / (ln(x / 4 pi) sqrt(x)) every column of B has norm at most ||b||,
yet B f_0 = x^{-1/2} for f_0 = ln(x / 4 pi), which is not square integrable.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from opentelemetry import trace
from scipy import integrate, linalg

from .conf import lab_setting
from .errors import PreconditionError, QuadratureError
from .operator_model import DiagonalOperator, PerturbationMatrix, fit_subordination
from .spectrum_core import Spectrum

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

TWO_PI = 2 * math.pi
GRADED_LEVELS = 50
LOW_ORDER, HIGH_ORDER = 16, 24
MAX_PANEL_DOUBLINGS = 3
M_CHUNK = 64
DEFAULT_BETAS = (0.1, 0.25, 0.49)
DEFAULT_TRUNCATIONS = (64, 128, 256, 512)


def gen_power_spectrum(alpha: float, M: int) -> Spectrum:
    """mu_k = (k + 1)^(1 / alpha), k = 1..M."""
    if alpha <= 0:
        raise PreconditionError("alpha > 0 violated", alpha=alpha)
    k = np.arange(1, M + 1, dtype=float)
    return Spectrum((k + 1) ** (1.0 / alpha), declared_alpha=float(alpha))


def gen_condensing_spectrum(M: int) -> Spectrum:
    """Clusters just below m = 2, 3, ...; a cluster starting at index k has 1 + floor(log2 k) points.

    Cluster points sit in (m - 0.1, m], so the window count equals the largest
    cluster, which grows with M.
    """
    values = []
    m = 2
    while len(values) < M:
        size = 1 + int(math.log2(len(values) + 1))
        values.extend(m - j * 0.1 / size for j in range(size))
        m += 1
    return Spectrum(np.sort(np.array(values[:M])), declared_alpha=1.0)


def _unit_columns(rng, M):
    G = rng.standard_normal((M, M)) + 1j * rng.standard_normal((M, M))
    return G / np.linalg.norm(G, axis=0)


def gen_random_perturbation(T: DiagonalOperator, beta: float, b: float, seed: int) -> PerturbationMatrix:
    """Complex Gaussian columns with ||B phi_k|| = b mu_k^beta exactly."""
    if b < 0:
        raise PreconditionError("b >= 0 violated", b=b)
    if b == 0:
        return PerturbationMatrix.zero(T.dim)
    rng = np.random.default_rng(seed)
    columns = _unit_columns(rng, T.dim)
    return PerturbationMatrix(columns * (b * T.diagonal ** beta)[None, :])


def gen_hermitian_perturbation(T: DiagonalOperator, beta: float, b: float, seed: int) -> PerturbationMatrix:
    """Hermitian B rescaled so that its fitted subordination constant is b."""
    if b < 0:
        raise PreconditionError("b >= 0 violated", b=b)
    if b == 0:
        return PerturbationMatrix.zero(T.dim)
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((T.dim, T.dim)) + 1j * rng.standard_normal((T.dim, T.dim))
    H = (G + G.conj().T) / 2
    fitted = fit_subordination(PerturbationMatrix(H), T, beta).b
    return PerturbationMatrix(H * (b / fitted))


def _panels(P, levels=GRADED_LEVELS):
    """Uniform panels of width 2 pi / P with the first one graded geometrically toward 0."""
    width = TWO_PI / P
    graded = width * 2.0 ** -np.arange(levels, 0, -1)
    return np.concatenate([[0.0], graded, width * np.arange(1, P + 1)])


def _rule(breaks, order):
    x, w = np.polynomial.legendre.leggauss(order)
    lo, hi = breaks[:-1, None], breaks[1:, None]
    half = (hi - lo) / 2
    return ((lo + hi) / 2 + half * x[None, :]).ravel(), (half * w[None, :]).ravel()


def _coefficients_on(func, m_max, breaks, order):
    nodes, weights = _rule(breaks, order)
    weighted = func(nodes) * weights
    ms = np.arange(m_max + 1)
    out = np.empty(ms.size, dtype=complex)
    for start in range(0, ms.size, M_CHUNK):
        block = ms[start:start + M_CHUNK]
        out[start:start + M_CHUNK] = np.exp(-1j * np.outer(block, nodes)) @ weighted
    return out / TWO_PI


def fourier_coefficients(func, m_max: int, tol=None):
    """b^(m) for m = 0..m_max of a real function on (0, 2 pi), integrable at x = 0.

    Composite Gauss-Legendre; the order-16 and order-24 rules are compared and
    the panel count doubled until they agree to ``tol``.
    """
    tol = lab_setting('QUADRATURE_TOL') if tol is None else tol
    P = max(64, 2 * m_max)
    achieved = math.inf
    for _ in range(MAX_PANEL_DOUBLINGS + 1):
        breaks = _panels(P)
        low = _coefficients_on(func, m_max, breaks, LOW_ORDER)
        high = _coefficients_on(func, m_max, breaks, HIGH_ORDER)
        achieved = float(np.max(np.abs(high - low)))
        if achieved <= tol:
            logger.debug(f"fourier coefficients m<={m_max} with P={P}: error estimate {achieved:.2e}")
            return high
        P *= 2
    raise QuadratureError("Fourier coefficients did not reach tolerance", achieved=achieved, tol=tol)


def symmetric_coefficients(half):
    """Extend c(0..n) of a real function to m = -n..n by conjugation."""
    return np.concatenate([half[:0:-1].conj(), half])


def f0(x):
    return np.log(np.asarray(x) / (2 * TWO_PI))


KINDS = ('log', 'constant', 'smooth')


@dataclass
class FourierMultiplier:
    kind: str = 'log'
    kappa: float = 1.0
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise PreconditionError("unknown coefficient function", kind=self.kind)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == 'log':
            return 1.0 / (np.log(x / (2 * TWO_PI)) * np.sqrt(x))
        if self.kind == 'constant':
            return np.full_like(x, self.kappa)
        return np.exp(np.cos(x))

    def coefficients(self, m_max: int):
        """b^(m) for m = 0..m_max."""
        cached = self._cache.get('coefficients')
        if cached is None or cached.size <= m_max:
            with tracer.start_as_current_span("fourier_coefficients") as span:
                span.set_attributes({"lab.kind": self.kind, "lab.m_max": m_max})
                cached = fourier_coefficients(self, m_max)
            self._cache['coefficients'] = cached
        return cached[:m_max + 1]

    def coefficient(self, m: int) -> complex:
        value = self.coefficients(abs(m))[abs(m)]
        return complex(value if m >= 0 else np.conj(value))

    def norm_sq(self) -> float:
        """(1 / 2 pi) int |b|^2; the log kind goes through x = 4 pi e^{-s}."""
        if self.kind == 'log':
            value, _ = integrate.quad(lambda s: 1.0 / s ** 2, math.log(2), np.inf)
            return value / TWO_PI
        value, _ = integrate.quad(lambda x: self(x) ** 2, 0.0, TWO_PI, limit=200)
        return value / TWO_PI

    def norm(self) -> float:
        return math.sqrt(self.norm_sq())


def periodic_frequencies(M: int, mapping: str = 'positive'):
    if mapping == 'positive':
        return np.arange(1, M + 1)
    if mapping == 'symmetric':
        k = np.repeat(np.arange(1, M // 2 + 1), 2)
        k[1::2] *= -1
        return k
    raise PreconditionError("unknown frequency mapping", mapping=mapping)


@dataclass
class PeriodicExample:
    T: DiagonalOperator
    B: PerturbationMatrix
    multiplier: FourierMultiplier
    frequencies: np.ndarray

    def __iter__(self):
        return iter((self.T, self.B))


def build_periodic_example(M: int, singularity: str = 'log', mapping: str = 'positive',
                           kappa: float = 1.0) -> PeriodicExample:
    """Truncated i d/dx with mu = |k| + 1 and the Toeplitz matrix of b(x)."""
    if M % 2:
        raise PreconditionError("M even violated", M=M)
    multiplier = FourierMultiplier(singularity, kappa)
    frequencies = periodic_frequencies(M, mapping)
    T = DiagonalOperator(np.abs(frequencies) + 1.0, declared_alpha=1.0)
    span = int(np.max(frequencies) - np.min(frequencies))
    coefficients = symmetric_coefficients(multiplier.coefficients(span))
    if mapping == 'positive':
        entries = linalg.toeplitz(coefficients[span:span + M], coefficients[span::-1][:M])
    else:
        entries = coefficients[span + frequencies[:, None] - frequencies[None, :]]
    logger.info(f"periodic example M={M} kind={singularity} mapping={mapping}")
    return PeriodicExample(T, PerturbationMatrix(entries), multiplier, frequencies)


def f0_coefficients(m_max: int):
    return fourier_coefficients(f0, m_max)


def resolved_norm_sq(multiplier: FourierMultiplier, M: int) -> float:
    """(1 / 2 pi) int_{2 pi / M}^{2 pi} |b f_0|^2 dx, integrated in log x."""
    integrand = lambda u: (multiplier(math.exp(u)) * f0(math.exp(u))) ** 2 * math.exp(u)
    value, _ = integrate.quad(integrand, math.log(TWO_PI / M), math.log(TWO_PI), limit=200)
    return value / TWO_PI


def _doubling_verdict(values, truncations, persistence=0.8):
    """'diverging' when the gain per doubling of M never shrinks below ``persistence`` times the previous one.

    Logarithmic growth keeps a constant gain per doubling; a convergent series
    loses a fixed fraction of it each time.
    """
    doublings = np.diff(np.log2(np.asarray(truncations, dtype=float)))
    gains = np.diff(np.asarray(values, dtype=float)) / doublings
    persists = bool(np.all(gains > 0) and np.all(gains[1:] >= persistence * gains[:-1]))
    return ('diverging' if persists else 'bounded'), [float(gain) for gain in gains]


def _plateau_verdict(values, relative=0.01):
    increments = np.diff(values)
    shrinking = bool(np.all(increments[1:] < increments[:-1])) if increments.size > 1 else True
    last = abs(increments[-1]) / abs(values[-1]) if increments.size and values[-1] else 0.0
    verdict = 'converging' if shrinking and last <= relative else 'not converged at truncation'
    return verdict, float(last)


def counterexample_check(example: PeriodicExample, beta_list=DEFAULT_BETAS,
                         truncations=DEFAULT_TRUNCATIONS):
    """Local bound ||B phi_k|| <= ||b|| against the divergence of ||B_M f_0||.

    The verdict comes from ||B_M f_0||^2 computed with the truncated Toeplitz
    matrix; the closed-form integral over (2 pi / M, 2 pi) is reported next to it.
    """
    multiplier = example.multiplier
    top = max(truncations)
    with tracer.start_as_current_span("counterexample_check") as span:
        norm = multiplier.norm()
        local_max = float(np.max(example.B.column_norms))
        f_hat = symmetric_coefficients(f0_coefficients(top))
        b_hat = symmetric_coefficients(multiplier.coefficients(top))

        resolved = [resolved_norm_sq(multiplier, M) for M in truncations]
        spectral = []
        for M in truncations:
            half = M // 2
            window = f_hat[top - half:top + half + 1]
            toeplitz = linalg.toeplitz(b_hat[top:top + 2 * half + 1], b_hat[top::-1][:2 * half + 1])
            spectral.append(float(np.sum(np.abs(toeplitz @ window) ** 2)))
        norm_verdict, gains = _doubling_verdict(spectral, truncations)
        closed_form_verdict, closed_form_gains = _doubling_verdict(resolved, truncations)

        m = np.arange(-top, top + 1)
        sobolev = {}
        for beta in beta_list:
            weights = np.abs(m).astype(float) ** (2 * beta)
            terms = weights * np.abs(f_hat) ** 2
            sums = [float(np.sum(terms[np.abs(m) <= M])) for M in truncations]
            verdict, last = _plateau_verdict(np.array(sums))
            sobolev[str(beta)] = {'sums': sums, 'verdict': verdict, 'last_relative_change': last}

        local_holds = local_max <= norm + 1e-6
        span.set_attributes({"lab.kind": multiplier.kind, "lab.norm_verdict": norm_verdict})

    if local_holds and norm_verdict == 'diverging':
        verdict = 'local condition holds, global condition fails numerically'
    elif local_holds:
        verdict = 'local condition holds, no divergence observed'
    else:
        verdict = 'local condition violated'
    logger.info(f"counterexample ({multiplier.kind}): {verdict}")
    return {
        'kind': multiplier.kind,
        'b_norm': norm,
        'max_column_norm': local_max,
        'local_condition_holds': local_holds,
        'truncations': list(truncations),
        'spectral_norms_sq': spectral,
        'spectral_gain_per_doubling': gains,
        'norm_verdict': norm_verdict,
        'resolved_norms_sq': resolved,
        'resolved_gain_per_doubling': closed_form_gains,
        'closed_form_verdict': closed_form_verdict,
        'verdicts_agree': norm_verdict == closed_form_verdict,
        'sobolev': sobolev,
        'verdict': verdict,
    }
