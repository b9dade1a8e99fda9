import numpy as np
from django.test import SimpleTestCase, override_settings
from scipy import linalg

from counting_lab.errors import PreconditionError
from counting_lab.gallery import gen_hermitian_perturbation, gen_power_spectrum, gen_random_perturbation
from counting_lab.operator_model import (
    DiagonalOperator, PerturbationMatrix, SubordinationProfile, assemble, compactness_tail, count_perturbed,
    counting_function_perturbed, eigenvalues, fit_subordination, operator_norm_estimate, weyl_check,
)


def power_operator(alpha=1.0, M=64):
    return DiagonalOperator.from_spectrum(gen_power_spectrum(alpha, M))


class OperatorTests(SimpleTestCase):
    def test_shifted_moves_selected_entries(self):
        T = power_operator(M=8)
        shifted = T.shifted([2, 3], 0.5)
        self.assertEqual(shifted.diagonal[2], T.diagonal[2] + 0.5)
        self.assertEqual(shifted.diagonal[0], T.diagonal[0])
        self.assertEqual(T.diagonal[2], 4.0)

    def test_spectrum_is_sorted_after_shift(self):
        shifted = power_operator(M=8).shifted([0], 10.0)
        self.assertTrue(np.all(np.diff(shifted.spectrum.values) >= 0))

    def test_perturbation_must_be_square(self):
        with self.assertRaises(PreconditionError):
            PerturbationMatrix(np.zeros((2, 3)))

    def test_column_norms(self):
        B = PerturbationMatrix([[3.0, 0.0], [4.0, 1j]])
        np.testing.assert_allclose(B.column_norms, [5.0, 1.0])
        self.assertTrue(B.norms_consistent())
        self.assertFalse(B.is_hermitian())


class SubordinationTests(SimpleTestCase):
    def test_fit_recovers_generator_constant(self):
        T = power_operator(M=64)
        B = gen_random_perturbation(T, 0.25, 0.3, seed=3)
        prof = fit_subordination(B, T, 0.25)
        self.assertAlmostEqual(prof.b, 0.3, places=12)
        self.assertTrue(prof.holds(T, B))

    def test_beta_one_rejected(self):
        T = power_operator(M=8)
        with self.assertRaises(PreconditionError):
            fit_subordination(PerturbationMatrix.zero(8), T, 1.0)

    def test_dimension_mismatch(self):
        with self.assertRaises(PreconditionError):
            fit_subordination(PerturbationMatrix.zero(4), power_operator(M=8), 0.0)


class EigenvalueTests(SimpleTestCase):
    def test_unperturbed_eigenvalues_are_the_diagonal(self):
        T = power_operator(M=32)
        eigs = eigenvalues(assemble(T, PerturbationMatrix.zero(32)))
        np.testing.assert_allclose(eigs.real, T.diagonal)
        np.testing.assert_allclose(eigs.imag, 0.0)

    def test_matches_scipy_on_random_perturbation(self):
        T = power_operator(M=48)
        A = assemble(T, gen_random_perturbation(T, 0.0, 0.2, seed=1))
        expected = np.sort(linalg.eigvals(A))
        np.testing.assert_allclose(eigenvalues(A), expected, atol=1e-9)

    @override_settings(LAB={'MAX_DIM': 4})
    def test_max_dim(self):
        with self.assertRaises(PreconditionError):
            eigenvalues(np.eye(5))

    def test_counts_use_modulus(self):
        eigs = np.array([1 + 1j, -3.0, 2.0])
        self.assertEqual(count_perturbed(eigs, 2.0), 1)
        self.assertEqual(list(counting_function_perturbed(eigs, [1.0, 2.5, 4.0])), [0, 2, 3])


class CompactnessTests(SimpleTestCase):
    def test_zero_b(self):
        T = power_operator()
        self.assertEqual(compactness_tail(T, SubordinationProfile(0.0, 0.0), 10), 0.0)

    def test_divergent_exponent(self):
        T = power_operator()
        with self.assertRaisesMessage(PreconditionError, "relative compactness not guaranteed"):
            compactness_tail(T, SubordinationProfile(0.6, 1.0), 10)

    def test_decreases_with_N(self):
        T = power_operator(M=128)
        prof = SubordinationProfile(0.25, 0.5)
        tails = [compactness_tail(T, prof, N) for N in (0, 16, 64, 127)]
        self.assertTrue(all(a > b for a, b in zip(tails, tails[1:])))


class NormEstimateTests(SimpleTestCase):
    def test_power_iteration_matches_spectral_norm(self):
        T = power_operator(M=32)
        B = gen_random_perturbation(T, 0.0, 0.5, seed=2)
        exact = linalg.norm(B.entries, 2)
        estimate = operator_norm_estimate(B, iterations=5000, tol=1e-14)
        self.assertLessEqual(estimate, exact * (1 + 1e-10))
        self.assertAlmostEqual(estimate / exact, 1.0, delta=1e-3)

    def test_zero_matrix(self):
        self.assertEqual(operator_norm_estimate(PerturbationMatrix.zero(4)), 0.0)


class WeylTests(SimpleTestCase):
    def setUp(self):
        self.T = power_operator(M=64)
        self.B = gen_hermitian_perturbation(self.T, 0.0, 0.3, seed=5)

    def test_eigenvalues_stay_within_the_norm(self):
        report = weyl_check(self.T, self.B)
        self.assertTrue(report['passed'], report)
        self.assertLessEqual(report['b_norm_estimate'], linalg.norm(self.B.entries, 2) * (1 + 1e-10))
        eigs = np.sort(np.linalg.eigvalsh(assemble(self.T, self.B)))
        self.assertAlmostEqual(report['max_shift'], float(np.max(np.abs(eigs - self.T.spectrum.values))), places=8)

    def test_understated_norm_fails(self):
        self.assertFalse(weyl_check(self.T, self.B, norm=0.0)['passed'])

    def test_non_hermitian_rejected(self):
        with self.assertRaisesMessage(PreconditionError, "B Hermitian violated"):
            weyl_check(self.T, gen_random_perturbation(self.T, 0.0, 0.3, seed=5))
