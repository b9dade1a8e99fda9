import math

import numpy as np
from django.test import SimpleTestCase
from hypothesis import given, settings
from hypothesis import strategies as st

from counting_lab.errors import ContourError, PreconditionError
from counting_lab.gallery import gen_hermitian_perturbation, gen_power_spectrum, gen_random_perturbation
from counting_lab.lacuna_determinant import (
    PhaseSample, argument_trace, argument_variation_split, bessel_majorant, build_contour, corrected_norm_bound,
    corrected_norm_scan, det_bounds_check, determinant, determinant_sample, kernel_matrix, natural_lacuna_check,
    plan_lacuna, riesz_rank, wa_check, wa_check_nudged, winding_number,
)
from counting_lab.operator_model import DiagonalOperator, PerturbationMatrix, SubordinationProfile

ZERO_PROFILE = SubordinationProfile(0.0, 0.0)


def power_operator(M=64):
    return DiagonalOperator.from_spectrum(gen_power_spectrum(1.0, M))


def product_of_factors(zeros, poles, offset=0.0):
    """prod (lambda - z) / prod (lambda - p) in sign/log form, scaled by exp(offset)."""
    zeros, poles = np.asarray(zeros, dtype=complex), np.asarray(poles, dtype=complex)

    def f(lam):
        factors = np.concatenate([lam - zeros, 1 / (lam - poles)])
        sign = np.prod(factors / np.abs(factors))
        return PhaseSample(complex(sign / abs(sign)), float(np.sum(np.log(np.abs(factors)))) + offset,
                           complex(np.sum(1 / (lam - zeros)) - np.sum(1 / (lam - poles))))
    return f


class PlanTests(SimpleTestCase):
    def setUp(self):
        self.T = power_operator()
        self.B = PerturbationMatrix.zero(64)
        self.plan = plan_lacuna(self.T, 20.0, 0.5, 0.0, 1, ZERO_PROFILE)

    def test_single_eigenvalue_shifted(self):
        self.assertEqual(self.plan.rank_N, 1)
        self.assertEqual(self.plan.shift_c, 2.0)
        self.assertEqual(self.plan.window, (19.0, 21.0))
        self.assertEqual(self.plan.shifted.diagonal[self.plan.indices[0]], 22.0)

    def test_properties(self):
        report = self.plan.properties(self.T, self.B, ZERO_PROFILE, 1)
        self.assertTrue(report['inner_gap'])
        self.assertTrue(report['outer_gap'])
        self.assertEqual(report['count_drop'], 0)
        self.assertEqual(report['shifted_l'], 2)
        self.assertTrue(report['passed'])

    def test_window_constant_too_small(self):
        with self.assertRaises(PreconditionError):
            plan_lacuna(self.T, 20.0, 0.5, 0.0, 1, SubordinationProfile(0.0, 0.1))

    def test_window_constant_at_its_floor_accepted(self):
        for b in (0.05, 0.10000000000000007):
            with self.subTest(b=b):
                a = 0.24 if b == 0.05 else 0.96
                plan = plan_lacuna(self.T, 20.5, a, 0.0, 1, SubordinationProfile(0.0, b))
                self.assertEqual(plan.a, a)

    def test_radius_too_small(self):
        with self.assertRaises(PreconditionError):
            plan_lacuna(self.T, 1.5, 0.5, 0.0, 1, ZERO_PROFILE)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(5.0, 50.0), st.floats(0.1, 2.0))
    def test_rank_is_the_window_count(self, r, a):
        if r - 2 * a <= 1:
            return
        plan = plan_lacuna(self.T, r, a, 0.0, 1, ZERO_PROFILE)
        lo, hi = plan.window
        expected = int(np.sum((self.T.diagonal > lo) & (self.T.diagonal < hi)))
        self.assertEqual(plan.rank_N, expected)
        shifted = plan.shifted.diagonal
        self.assertFalse(np.any((shifted > lo) & (shifted < hi)))


class DeterminantTests(SimpleTestCase):
    def setUp(self):
        self.T = power_operator()
        self.B = PerturbationMatrix.zero(64)
        self.plan = plan_lacuna(self.T, 20.0, 0.5, 0.0, 1, ZERO_PROFILE)

    def test_rank_one_closed_form(self):
        for lam in (20.3 + 0.7j, 5 - 2j, 30 + 10j):
            with self.subTest(lam=lam):
                expected = (lam - 20.0) / (lam - 22.0)
                self.assertAlmostEqual(abs(determinant(self.plan, self.T, self.B, lam) - expected), 0.0,
                                       places=12)

    def test_kernel_is_c_times_resolvent_block(self):
        kernel = kernel_matrix(self.plan, self.T, self.B, 21 + 1j)
        self.assertEqual(kernel.shape, (1, 1))
        self.assertAlmostEqual(abs(kernel[0, 0] - 2.0 / (21 + 1j - 22.0)), 0.0, places=12)

    def test_log_derivative_matches_closed_form(self):
        for lam in (20.3 + 0.7j, 5 - 2j, 30 + 10j):
            with self.subTest(lam=lam):
                sample = determinant_sample(self.plan, self.T, self.B, lam)
                expected = 1 / (lam - 20.0) - 1 / (lam - 22.0)
                self.assertAlmostEqual(abs(sample.log_derivative - expected), 0.0, places=12)
                self.assertAlmostEqual(sample.log_modulus, math.log(abs((lam - 20.0) / (lam - 22.0))), places=12)

    def test_zero_of_determinant_has_no_margin(self):
        sample = determinant_sample(self.plan, self.T, self.B, 20.0)
        self.assertEqual(sample.zero_margin, 0.0)
        self.assertEqual(sample.value, 0.0)

    def test_determinant_is_one_without_window(self):
        plan = plan_lacuna(self.T, 20.5, 0.1, 0.0, 1, ZERO_PROFILE)
        self.assertEqual(plan.rank_N, 0)
        self.assertEqual(determinant(plan, self.T, self.B, 3 + 1j), 1.0)

    def test_bounds_hold_for_unperturbed_operator(self):
        report = det_bounds_check(self.plan, self.T, self.B, ZERO_PROFILE, 8.0)
        self.assertTrue(report.passed, report.to_dict())
        self.assertLessEqual(report.max_kernel_eigenvalue, 8.0)

    def test_h_too_small(self):
        with self.assertRaises(PreconditionError):
            det_bounds_check(self.plan, self.T, self.B, ZERO_PROFILE, 7.9)

    def test_bounds_hold_with_small_perturbation(self):
        T = power_operator(128)
        B = gen_random_perturbation(T, 0.0, 0.05, seed=4)
        prof = SubordinationProfile(0.0, 0.05)
        plan = plan_lacuna(T, 40.3, 0.25, 0.0, 1, prof)
        report = det_bounds_check(plan, T, B, prof, 16 * 0.25)
        self.assertTrue(report.passed, report.to_dict())


class HermitianDeterminantTests(SimpleTestCase):
    def setUp(self):
        self.T = power_operator()
        self.B = gen_hermitian_perturbation(self.T, 0.0, 0.05, seed=2)
        self.prof = SubordinationProfile(0.0, 0.05)

    def test_conjugate_symmetry(self):
        plan = plan_lacuna(self.T, 20.3, 0.5, 0.0, 1, self.prof)
        for lam in (20.3 + 0.7j, 5 - 2j, 30 + 10j, -4 + 0.01j):
            with self.subTest(lam=lam):
                upper = determinant(plan, self.T, self.B, lam)
                lower = determinant(plan, self.T, self.B, lam.conjugate())
                self.assertAlmostEqual(abs(lower - upper.conjugate()), 0.0, delta=1e-12 * max(1.0, abs(upper)))

    def test_wa_identity(self):
        report = wa_check_nudged(self.T, self.B, self.prof, 20.3, 0.25, 0.0, 1, 4.0, alpha=1.0)
        self.assertTrue(report.passed, report.to_dict())
        self.assertTrue(np.all(np.abs(report.eigs_A.imag) < 1e-8))


class PositiveGammaTests(SimpleTestCase):
    def test_wa_identity_with_growing_window(self):
        T = power_operator(128)
        B = gen_random_perturbation(T, 0.2, 0.05, seed=4)
        prof = SubordinationProfile(0.2, 0.05)
        plan = plan_lacuna(T, 40.3, 0.25, 0.4, 1, prof)
        self.assertEqual(plan.rank_N, 4)
        report = wa_check_nudged(T, B, prof, 40.3, 0.25, 0.4, 1, 4.0, alpha=1.0)
        self.assertEqual(report.rank_N, 4)
        self.assertTrue(report.passed, report.to_dict())


class CorrectedNormTests(SimpleTestCase):
    def test_bessel_majorant(self):
        self.assertAlmostEqual(bessel_majorant([2.0, 4.0], [1.0, 1.0], 3 + 1j), 1.0)

    def test_corrected_norm_below_half(self):
        T = power_operator(128)
        B = gen_random_perturbation(T, 0.0, 0.05, seed=4)
        prof = SubordinationProfile(0.0, 0.05)
        plan = plan_lacuna(T, 40.3, 0.25, 0.0, 1, prof)
        self.assertLess(corrected_norm_bound(plan, T, B, prof, 40.3 + 0.1j, alpha=1.0, l=2), 0.5)
        self.assertTrue(corrected_norm_scan(plan, B, prof, alpha=1.0, l=2)['passed'])

    def test_outside_strip_rejected(self):
        T = power_operator()
        plan = plan_lacuna(T, 20.0, 0.5, 0.0, 1, ZERO_PROFILE)
        with self.assertRaises(PreconditionError):
            corrected_norm_bound(plan, T, PerturbationMatrix.zero(64), ZERO_PROFILE, 21.0)


class ArgumentTests(SimpleTestCase):
    def test_simple_zero_and_pole(self):
        contour = build_contour(10.0, 20.0)
        self.assertEqual(argument_trace(lambda lam: lam - 5.0, contour).winding_integer(), 1)
        self.assertEqual(argument_trace(lambda lam: (lam - 5.0) / (lam - 30.0), contour).winding_integer(), 1)
        self.assertEqual(argument_trace(lambda lam: (lam - 5.0) / (lam - 7.0 - 1j), contour).winding_integer(), 0)

    def test_variation_is_a_multiple_of_two_pi(self):
        contour = build_contour(10.0, 20.0)
        traced = argument_trace(lambda lam: (lam - 1.0) * (lam - 2.0 + 3j), contour)
        self.assertAlmostEqual(traced.variation, 4 * math.pi, places=9)

    def test_zero_on_contour(self):
        with self.assertRaises(ContourError):
            argument_trace(lambda lam: lam - 10.0, build_contour(10.0, 20.0))

    def test_underflowing_modulus_keeps_its_phase(self):
        contour = build_contour(10.0, 20.0)
        traced = argument_trace(product_of_factors([5.0], [], offset=-1000.0), contour)
        self.assertTrue(np.all(traced.values == 0))
        self.assertEqual(traced.winding_integer(), 1)

    def test_dense_zeros_hugging_the_contour_are_all_counted(self):
        heights = 0.3j * np.arange(-20, 21)
        f = product_of_factors(9.9 + heights, 10.1 + heights)
        traced = argument_trace(f, build_contour(10.0, 20.0))
        self.assertEqual(traced.winding_integer(), 41)
        self.assertGreater(traced.refinements, 0)

    def test_rows_carry_log_modulus(self):
        traced = argument_trace(lambda lam: lam - 5.0, build_contour(10.0, 20.0))
        row = traced.rows()[0]
        self.assertEqual(len(row), 6)
        self.assertAlmostEqual(row[4], math.log(abs(complex(row[0], row[1]) - 5.0)))

    def test_contour_is_closed_and_counterclockwise(self):
        contour = build_contour(10.0, 20.0, segment_height=3.0)
        self.assertEqual(contour.nodes[0], contour.nodes[-1])
        self.assertIn(10.0 + 3.0j, contour.nodes)
        # shoelace area is positive for counterclockwise orientation
        x, y = contour.nodes.real, contour.nodes.imag
        self.assertGreater(np.sum(x[:-1] * y[1:] - x[1:] * y[:-1]), 0)


class WindingTests(SimpleTestCase):
    def setUp(self):
        self.T = power_operator()
        self.B = PerturbationMatrix.zero(64)
        self.plan = plan_lacuna(self.T, 20.0, 0.5, 0.0, 1, ZERO_PROFILE)

    def test_zero_inside_pole_outside(self):
        self.assertEqual(winding_number(self.plan, self.T, self.B, build_contour(21.5, 10.0)), 1)

    def test_zero_and_pole_inside(self):
        self.assertEqual(winding_number(self.plan, self.T, self.B, build_contour(23.5, 10.0)), 0)

    def test_wa_identity_unperturbed(self):
        report = wa_check(self.plan, self.T, self.B, 21.5, build_contour(21.5, 10.0))
        self.assertEqual(report.nu, 1)
        self.assertEqual(report.n_TrB + report.nu, report.n_A)
        self.assertTrue(report.passed)

    def test_argument_split(self):
        contour = build_contour(21.5, 10.0, segment_height=8.0)
        split = argument_variation_split(self.plan, self.T, self.B, contour, 8.0)
        self.assertAlmostEqual(split['segment'] + split['outside'], 2 * math.pi, places=9)


class LargeRankTests(SimpleTestCase):
    """Window of 24 eigenvalues: (48.5, 72.5) around r = 60.5 with a = 6."""

    def setUp(self):
        self.T = power_operator(128)

    def test_unperturbed_identity(self):
        B = PerturbationMatrix.zero(128)
        plan = plan_lacuna(self.T, 60.5, 6.0, 0.0, 1, ZERO_PROFILE)
        self.assertEqual(plan.rank_N, 24)
        report = wa_check(plan, self.T, B, 60.5, build_contour(60.5, 192.0, segment_height=96.0))
        self.assertEqual((report.n_A, report.n_TrB, report.nu), (59, 47, 12))
        self.assertTrue(report.passed)

    def test_perturbed_identity(self):
        B = gen_random_perturbation(self.T, 0.0, 0.05, seed=4)
        prof = SubordinationProfile(0.0, 0.05)
        report = wa_check_nudged(self.T, B, prof, 60.5, 6.0, 0.0, 1, 96.0, alpha=1.0)
        self.assertGreaterEqual(report.rank_N, 20)
        self.assertTrue(report.passed, report.to_dict())


class NudgeTests(SimpleTestCase):
    def test_nudge_moves_contour_off_the_zero(self):
        T = power_operator()
        B = PerturbationMatrix.zero(64)
        report = wa_check_nudged(T, B, ZERO_PROFILE, 20.0, 0.1, 0.0, 1, 1.6, alpha=1.0)
        self.assertTrue(report.passed)
        self.assertNotEqual(report.nudge, 0.0)
        self.assertGreater(report.attempts, 1)

    def test_perturbed_identity(self):
        T = power_operator(128)
        B = gen_random_perturbation(T, 0.0, 0.05, seed=4)
        prof = SubordinationProfile(0.0, 0.05)
        report = wa_check_nudged(T, B, prof, 40.3, 0.25, 0.0, 1, 16 * 0.25, alpha=1.0)
        self.assertTrue(report.passed, report.to_dict())

    def test_natural_lacuna(self):
        T = power_operator(128)
        B = gen_random_perturbation(T, 0.0, 0.05, seed=4)
        prof = SubordinationProfile(0.0, 0.05)
        report = natural_lacuna_check(T, B, prof, 40.5, 0.12, 0.0, 1, 16 * 0.12, alpha=1.0)
        self.assertTrue(report['applicable'])
        self.assertTrue(report['passed'], report)
        self.assertFalse(natural_lacuna_check(T, B, prof, 40.0, 0.12, 0.0, 1, 1.92, alpha=1.0)['applicable'])


class RieszTests(SimpleTestCase):
    def test_rank_constant_along_homotopy(self):
        T = power_operator()
        B = PerturbationMatrix.zero(64)
        plan = plan_lacuna(T, 20.0, 0.5, 0.0, 1, ZERO_PROFILE)
        contour = build_contour(20.7, 10.0)
        ranks = {riesz_rank(plan, T, B, t, contour) for t in (0.0, 0.5, 1.0)}
        self.assertEqual(ranks, {18})

    def test_t_outside_unit_interval(self):
        T = power_operator()
        plan = plan_lacuna(T, 20.0, 0.5, 0.0, 1, ZERO_PROFILE)
        with self.assertRaises(PreconditionError):
            riesz_rank(plan, T, PerturbationMatrix.zero(64), 1.5, build_contour(20.7, 10.0))
