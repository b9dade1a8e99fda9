"""Sweeps of |n(r, A) - n(r, T)| against the window count S_gamma(r)."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from opentelemetry import trace

from .errors import PreconditionError
from .operator_model import (
    DiagonalOperator, PerturbationMatrix, SubordinationProfile, assemble, counting_function_perturbed,
    eigenvalues,
)
from .spectrum_core import Spectrum, count, counting_function, resolve_alpha, window_count

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)

SLOPE_TOLERANCE = 0.15


def gamma_of(alpha: float, beta: float):
    """(max(0, beta, 2 beta + alpha - 1), whether it is below 1)."""
    gamma = max(0.0, beta, 2 * beta + alpha - 1)
    return float(gamma), gamma < 1


def trusted_range(T: DiagonalOperator) -> float:
    """mu_{ceil(M/2)}; counts of A above it feel the truncation edge."""
    values = T.spectrum.values
    return float(values[math.ceil(values.size / 2) - 1])


@dataclass(frozen=True)
class SweepRecord:
    r: float
    n_T: int
    n_A: int
    deviation: int
    S: int
    lacuna_found: bool


def fit_constants(records):
    """Least-squares C through the origin on records with S > 0, then C1 = max residual."""
    S = np.array([record.S for record in records], dtype=float)
    deviation = np.array([record.deviation for record in records], dtype=float)
    if S.size == 0:
        return 0.0, 0.0
    positive = S > 0
    C = 0.0
    if np.any(positive):
        C = max(0.0, float(np.dot(S[positive], deviation[positive]) / np.dot(S[positive], S[positive])))
    C1 = max(0.0, float(np.max(deviation - C * S)))
    return C, C1


def violations(records, C, C1, tol=1e-9):
    return [record for record in records if record.deviation > C * record.S + C1 + tol]


@dataclass
class SweepReport:
    records: list
    fitted_C: float
    fitted_C1: float
    alpha: float
    beta: float
    gamma: float
    a: float
    eigs: np.ndarray = field(default=None, repr=False)

    @property
    def max_deviation(self):
        return max((record.deviation for record in self.records), default=0)

    def holdout(self):
        """Fit on even-indexed records, test the inequality on odd-indexed ones."""
        train, test = self.records[::2], self.records[1::2]
        C, C1 = fit_constants(train)
        failed = violations(test, C, C1)
        return {'C': C, 'C1': C1, 'tested': len(test), 'violations': len(failed),
                'violating_r': [record.r for record in failed]}

    def c1_from_threshold(self, T: DiagonalOperator, r0: float):
        """n(r0, T), the additive constant obtained by fixing the threshold r0, next to the fit."""
        return {'r0': r0, 'c1_threshold': count(T.spectrum, r0), 'fitted_C1': self.fitted_C1}

    def rows(self):
        return [(record.r, record.n_T, record.n_A, record.deviation, record.S, int(record.lacuna_found))
                for record in self.records]

    def plot_rows(self):
        return [(record.r, record.deviation, self.fitted_C * record.S + self.fitted_C1)
                for record in self.records]

    def to_dict(self):
        return {
            'records': len(self.records),
            'fitted_C': self.fitted_C,
            'fitted_C1': self.fitted_C1,
            'alpha': self.alpha,
            'beta': self.beta,
            'gamma': self.gamma,
            'a': self.a,
            'max_deviation': self.max_deviation,
            'holdout': self.holdout(),
        }


def sweep(T: DiagonalOperator, B: PerturbationMatrix, prof: SubordinationProfile, r_grid, a: float,
          *, alpha=None, eigs=None) -> SweepReport:
    """One eigensolve of A, then per-r deviations and window counts."""
    s = T.spectrum
    alpha = resolve_alpha(s, alpha)
    gamma, applicable = gamma_of(alpha, prof.beta)
    if not applicable:
        raise PreconditionError("theorem hypothesis violated", alpha=alpha, beta=prof.beta, gamma=gamma)
    rs = np.asarray(r_grid, dtype=float)
    limit = trusted_range(T)
    if rs.size and rs.max() > limit:
        raise PreconditionError("r_grid beyond trusted range", r_max=float(rs.max()), trusted=limit)

    with tracer.start_as_current_span("sweep") as span:
        eigs = eigenvalues(assemble(T, B)) if eigs is None else np.asarray(eigs)
        n_A = counting_function_perturbed(eigs, rs)
        n_T = counting_function(s, rs)
        records = []
        for r, count_A, count_T in zip(rs, n_A, n_T):
            w = a * r ** gamma
            lacuna = not np.any((s.values > r - 2 * w) & (s.values < r + 2 * w))
            records.append(SweepRecord(
                r=float(r), n_T=int(count_T), n_A=int(count_A), deviation=int(abs(count_A - count_T)),
                S=window_count(s, r, a, gamma), lacuna_found=bool(lacuna),
            ))
        C, C1 = fit_constants(records)
        span.set_attributes({"lab.dim": T.dim, "lab.records": len(records), "lab.C": C, "lab.C1": C1})

    logger.info(f"sweep over {len(records)} radii: C={C:.4g} C1={C1:.4g} "
                f"max deviation={max((rec.deviation for rec in records), default=0)}")
    return SweepReport(records, C, C1, alpha, prof.beta, gamma, a, eigs)


def corollary_check(report: SweepReport, eta: float = 0.0):
    """Slope of log(deviation + 1) against log r, bounded by max(alpha + gamma - 1, eta)."""
    exponent = max(report.alpha + report.gamma - 1, eta)
    threshold = exponent + SLOPE_TOLERANCE
    result = {'exponent': exponent, 'threshold': threshold, 'slope': None}
    rs = np.array([record.r for record in report.records], dtype=float)
    deviations = np.array([record.deviation for record in report.records], dtype=float)
    if not np.any(deviations > 0):
        result['verdict'] = 'inconclusive: deviations vanish'
        return result
    if rs.min() <= 0 or math.log10(rs.max() / rs.min()) < 1:
        result['verdict'] = 'inconclusive'
        return result
    slope = float(np.polyfit(np.log(rs), np.log(deviations + 1), 1)[0])
    result['slope'] = slope
    result['verdict'] = 'passed' if slope <= threshold else 'failed'
    logger.info(f"corollary slope={slope:.4f} threshold={threshold:.4f} verdict={result['verdict']}")
    return result


def comparison_scales(s: Spectrum, r: float, a: float, alpha: float, beta: float):
    """S_gamma(r) next to S_beta(r); they agree when beta + alpha <= 1."""
    gamma, _ = gamma_of(alpha, beta)
    beta_exponent = max(beta, 0.0)
    return {
        'r': r,
        'gamma': gamma,
        'S_gamma': window_count(s, r, a, gamma),
        'S_beta': window_count(s, r, a, beta_exponent),
        'scales_coincide': gamma == beta_exponent,
    }
