"""Truncated T, B and A = T + B in the eigenbasis of T."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from opentelemetry import trace
from opentelemetry.trace import Status, StatusCode
from scipy import linalg

from .conf import lab_setting
from .errors import PreconditionError, SolverError
from .spectrum_core import Spectrum, noncondensing_l, noncondensing_tail, resolve_alpha

logger = logging.getLogger(__name__)
tracer = trace.get_tracer(__name__)


@dataclass(frozen=True, eq=False)
class DiagonalOperator:
    """T restricted to the first ``dim`` eigenvectors.

    ``diagonal`` is in basis order; after a lacuna shift it need not be sorted,
    so ``spectrum`` sorts on the way out.
    """

    diagonal: np.ndarray
    declared_alpha: float | None = None

    def __post_init__(self):
        diagonal = np.array(self.diagonal, dtype=float).ravel()
        diagonal.setflags(write=False)
        object.__setattr__(self, 'diagonal', diagonal)

    @classmethod
    def from_spectrum(cls, s: Spectrum):
        return cls(s.values, s.declared_alpha)

    @property
    def dim(self):
        return self.diagonal.size

    @property
    def spectrum(self):
        return Spectrum(np.sort(self.diagonal), self.declared_alpha)

    def matrix(self):
        return np.diag(self.diagonal).astype(complex)

    def shifted(self, indices, shift):
        """T + shift * (projection onto ``indices``)."""
        diagonal = self.diagonal.copy()
        diagonal[np.asarray(indices, dtype=int)] += shift
        return DiagonalOperator(diagonal, self.declared_alpha)


@dataclass(frozen=True, eq=False)
class PerturbationMatrix:
    """Entries (j, k) = <B phi_k, phi_j>; ``column_norms[k]`` = ||B phi_k||."""

    entries: np.ndarray

    def __post_init__(self):
        entries = np.array(self.entries, dtype=complex)
        if entries.ndim != 2 or entries.shape[0] != entries.shape[1]:
            raise PreconditionError("perturbation matrix must be square", shape=entries.shape)
        entries.setflags(write=False)
        object.__setattr__(self, 'entries', entries)
        norms = np.linalg.norm(entries, axis=0)
        norms.setflags(write=False)
        object.__setattr__(self, 'column_norms', norms)

    @classmethod
    def zero(cls, dim):
        return cls(np.zeros((dim, dim), dtype=complex))

    @property
    def dim(self):
        return self.entries.shape[0]

    def is_hermitian(self, tol=1e-10):
        scale = max(1.0, float(np.max(np.abs(self.entries), initial=0.0)))
        return bool(np.allclose(self.entries, self.entries.conj().T, rtol=0.0, atol=tol * scale))

    def norms_consistent(self, rtol=1e-12):
        recomputed = np.sqrt(np.sum(np.abs(self.entries) ** 2, axis=0))
        return bool(np.allclose(recomputed, self.column_norms, rtol=rtol, atol=0.0))


@dataclass(frozen=True)
class SubordinationProfile:
    """||B phi_k|| <= b * mu_k ** beta."""

    beta: float
    b: float

    def bound(self, mu):
        return self.b * np.asarray(mu, dtype=float) ** self.beta

    def holds(self, T: DiagonalOperator, B: PerturbationMatrix, rtol=1e-12):
        return bool(np.all(B.column_norms <= self.bound(T.diagonal) * (1 + rtol)))


def _check_dims(T: DiagonalOperator, B: PerturbationMatrix):
    if T.dim != B.dim:
        raise PreconditionError("T and B dimensions differ", t_dim=T.dim, b_dim=B.dim)


def fit_subordination(B: PerturbationMatrix, T: DiagonalOperator, beta: float) -> SubordinationProfile:
    """Smallest b with ||B phi_k|| <= b mu_k^beta over the truncation."""
    if beta >= 1:
        raise PreconditionError("beta < 1 violated", beta=beta)
    _check_dims(T, B)
    b = float(np.max(B.column_norms / T.diagonal ** beta))
    logger.info(f"fitted subordination b={b:.6g} at beta={beta}")
    return SubordinationProfile(beta=float(beta), b=b)


def assemble(T: DiagonalOperator, B: PerturbationMatrix) -> np.ndarray:
    _check_dims(T, B)
    return np.diag(T.diagonal) + B.entries


def eigenvalues(A) -> np.ndarray:
    """Full spectrum of a dense matrix, residual-verified, sorted lexicographically."""
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise PreconditionError("square matrix required", shape=A.shape)
    max_dim = lab_setting('MAX_DIM')
    if A.shape[0] > max_dim:
        raise PreconditionError("matrix dimension exceeds MAX_DIM", dim=A.shape[0], max_dim=max_dim)

    with tracer.start_as_current_span("eigensolve") as span:
        span.set_attributes({"lab.dim": A.shape[0]})
        try:
            values, vectors = linalg.eig(A)
        except (linalg.LinAlgError, ValueError) as e:
            span.record_exception(e)
            span.set_status(Status(StatusCode.ERROR))
            raise SolverError(f"eigensolver failed: {e}", dim=A.shape[0], cond=_condition(A)) from e

        scale = float(np.linalg.norm(A, 2)) if A.size else 0.0
        residuals = np.linalg.norm(A @ vectors - vectors * values, axis=0)
        worst = float(np.max(residuals, initial=0.0))
        tolerance = lab_setting('RESIDUAL_TOL') * scale
        span.set_attributes({"lab.max_residual": worst, "lab.norm": scale})
        if worst > tolerance:
            span.set_status(Status(StatusCode.ERROR))
            raise SolverError(
                "eigenpair residual above tolerance",
                dim=A.shape[0], max_residual=worst, tolerance=tolerance, cond=_condition(A),
            )

    logger.debug(f"eigensolve dim={A.shape[0]} max_residual={worst:.3e}")
    return np.sort(values)


def _condition(A):
    try:
        return float(np.linalg.cond(A))
    except np.linalg.LinAlgError:
        return float('inf')


def count_perturbed(eigs, r: float) -> int:
    """n(r, A) = #{k : |lambda_k| < r}."""
    return int(np.count_nonzero(np.abs(np.asarray(eigs)) < r))


def counting_function_perturbed(eigs, rs) -> np.ndarray:
    moduli = np.sort(np.abs(np.asarray(eigs)))
    return np.searchsorted(moduli, np.asarray(rs, dtype=float), side='left')


def compactness_tail(T: DiagonalOperator, prof: SubordinationProfile, N: int,
                     alpha: float | None = None, l: int | None = None) -> float:
    """eps_N = b^2 sum_{k > N} mu_k^(2 beta - 2), with the tail past the truncation majorised.

    The series converges exactly when (2 beta - 2) / alpha < -1.
    """
    if not 0 <= N < T.dim:
        raise PreconditionError("0 <= N < dim violated", N=N, dim=T.dim)
    s = T.spectrum
    alpha = resolve_alpha(s, alpha)
    exponent = 2 * prof.beta - 2
    if exponent / alpha >= -1:
        raise PreconditionError("relative compactness not guaranteed", beta=prof.beta, alpha=alpha)
    if prof.b == 0:
        return 0.0
    l = l if l is not None else noncondensing_l(s, alpha)
    head = float(np.sum(s.values[N:] ** exponent))
    tail = noncondensing_tail(s, alpha, l, lambda t: t ** exponent)
    return prof.b ** 2 * (head + tail)


def operator_norm_estimate(B: PerturbationMatrix, iterations=500, tol=1e-12, seed=0) -> float:
    """Power iteration on B*B; a lower estimate of ||B||_op that converges from below."""
    if not np.any(B.entries):
        return 0.0
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(B.dim) + 1j * rng.standard_normal(B.dim)
    v /= np.linalg.norm(v)
    estimate = 0.0
    for _ in range(iterations):
        w = B.entries.conj().T @ (B.entries @ v)
        norm = np.linalg.norm(w)
        if norm == 0:
            return 0.0
        v = w / norm
        previous, estimate = estimate, float(np.sqrt(norm))
        if abs(estimate - previous) <= tol * estimate:
            break
    return estimate


def weyl_check(T: DiagonalOperator, B: PerturbationMatrix, eigs=None, norm=None, rtol=1e-6) -> dict:
    """For Hermitian B the k-th eigenvalue of A lies within ||B|| of mu_k.

    ``norm`` defaults to the power-iteration estimate, which approaches ||B||
    from below; ``rtol`` absorbs what is left of that gap.
    """
    _check_dims(T, B)
    if not B.is_hermitian():
        raise PreconditionError("B Hermitian violated")
    eigs = eigenvalues(assemble(T, B)) if eigs is None else np.asarray(eigs)
    norm = operator_norm_estimate(B, iterations=2000) if norm is None else float(norm)
    shifts = np.abs(np.sort(eigs.real) - T.spectrum.values)
    index = int(np.argmax(shifts))
    report = {
        'b_norm_estimate': norm,
        'max_shift': float(shifts[index]),
        'argmax_index': index,
        'passed': bool(shifts[index] <= norm * (1 + rtol) + rtol),
    }
    if not report['passed']:
        logger.warning(f"eigenvalue {index} moved {shifts[index]:.4g} > ||B|| ~ {norm:.4g}")
    return report
