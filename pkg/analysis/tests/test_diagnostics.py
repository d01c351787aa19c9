import math

import numpy as np
from django.test import SimpleTestCase

from analysis.engine.diagnostics import (
    DiagnosticMode,
    GainCurve,
    PolyBoundFit,
    Verdict,
    ZCensus,
    decide_verdict,
    detect_mode,
    diagnose,
    diagnose_commuting,
    diagnose_gh_single,
    diagnose_gs_single,
    diagnose_normal_system,
    diagnose_system,
    exit_code,
    fit_poly_bound,
    z_census,
)
from spectra.config import RunConfig
from spectra.engine.catalog import (
    Profile,
    SyntheticRecipe,
    sphere_rotation_field,
    sphere_spectrum,
    synthetic_symbol,
    torus_coordinate_system,
    torus_spectrum,
    torus_vector_field,
)
from spectra.engine.spectrum import SpectrumModel
from spectra.engine.symbols import InvariantSymbol, SystemSymbol
from spectra.exceptions import InsufficientSamplesError, StructuralError


def linear_spectrum(count, multiplicity=1):
    """lambda_k = k on a one-dimensional model of order 1."""
    return SpectrumModel.from_sequences(1, 1.0, list(range(count)), [multiplicity] * count)


def fit(super_polynomial=False):
    return PolyBoundFit(
        C=1.0, gamma=0.0, residual=0.0, window=(0, 1), ls_gamma=0.0, windowed_gammas=(),
        min_effective_exponent=0.0, super_polynomial=super_polynomial, samples=8,
    )


def census(finite):
    return ZCensus(members=(), kernel_dims=(), density_trend=0.0, tail_start=0, tail_empty=finite, finite=finite)


class GainCurveTest(SimpleTestCase):
    def test_from_arrays_validates(self):
        spectrum = linear_spectrum(4)
        with self.assertRaises(ValueError):
            GainCurve.from_arrays(spectrum, [1.0, 2.0], [0, 0])
        with self.assertRaises(ValueError):
            GainCurve.from_arrays(spectrum, [1.0, -1.0, 1.0, 1.0], [0] * 4)
        curve = GainCurve.from_arrays(spectrum, [0.0, 1.0, math.inf, 2.0], [1, 0, 1, 0])
        self.assertEqual(curve.zero_blocks, (0, 2))
        self.assertEqual(curve.to_dict()['gain'][2], 'inf')
        self.assertEqual(curve.rows()[3], (3, 3.0, 2.0, 0))


class FitPolyBoundTest(SimpleTestCase):
    def test_power_law(self):
        spectrum, _ = sphere_spectrum(40)
        curve = GainCurve.from_arrays(spectrum, 1.0 / (1.0 + spectrum.eigenvalues), [0] * 41)
        result = fit_poly_bound(curve)
        self.assertAlmostEqual(result.gamma, -1.0, places=9)
        self.assertAlmostEqual(result.C, 1.0, places=9)
        self.assertAlmostEqual(result.ls_gamma, -1.0, places=9)
        self.assertFalse(result.super_polynomial)
        self.assertEqual(result.window, (20, 40))

    def test_constant(self):
        spectrum, _ = sphere_spectrum(40)
        result = fit_poly_bound(GainCurve.from_arrays(spectrum, [0.5] * 41, [0] * 41))
        self.assertEqual(result.gamma, 0.0)
        self.assertAlmostEqual(result.C, 0.5)
        self.assertFalse(result.super_polynomial)

    def test_exponential_decay_is_super_polynomial(self):
        spectrum = linear_spectrum(41)
        curve = GainCurve.from_arrays(spectrum, np.exp(-spectrum.eigenvalues), [0] * 41)
        result = fit_poly_bound(curve)
        self.assertTrue(result.super_polynomial)
        self.assertLessEqual(result.windowed_gammas[-1], -10.0)

    def test_isolated_dip_is_super_polynomial(self):
        spectrum = linear_spectrum(41)
        gains = np.ones(41)
        gains[37] = 1e-30
        result = fit_poly_bound(GainCurve.from_arrays(spectrum, gains, [0] * 41))
        self.assertTrue(result.super_polynomial)
        self.assertLess(result.min_effective_exponent, -10.0)

    def test_too_few_samples(self):
        spectrum = linear_spectrum(10)
        with self.assertRaises(InsufficientSamplesError):
            fit_poly_bound(GainCurve.from_arrays(spectrum, [1.0] * 10, [0] * 10))


class VerdictTest(SimpleTestCase):
    def test_decision_table(self):
        self.assertEqual(decide_verdict(fit(), None, census(True)), Verdict.INCONCLUSIVE)
        self.assertEqual(decide_verdict(fit(), fit(True), census(True)), Verdict.NOT_GS_CONSISTENT)
        self.assertEqual(decide_verdict(fit(), fit(), census(True)), Verdict.GH_CONSISTENT)
        self.assertEqual(decide_verdict(fit(), fit(), census(False)), Verdict.GS_NOT_GH_CONSISTENT)
        self.assertEqual(decide_verdict(None, fit(), census(True)), Verdict.GS_NOT_GH_CONSISTENT)
        self.assertEqual(decide_verdict(fit(True), fit(), census(True)), Verdict.GS_NOT_GH_CONSISTENT)

    def test_exit_codes(self):
        self.assertEqual([exit_code(v) for v in Verdict.values], [0, 1, 2, 3])


class ZCensusTest(SimpleTestCase):
    def test_finite_census(self):
        spectrum = linear_spectrum(40)
        dims = [1, 1] + [0] * 38
        result = z_census(GainCurve.from_arrays(spectrum, [1.0] * 40, dims))
        self.assertEqual(result.members, (0, 1))
        self.assertTrue(result.tail_empty)
        self.assertTrue(result.finite)

    def test_recurring_census(self):
        spectrum = linear_spectrum(40)
        dims = [1 if k % 5 == 0 else 0 for k in range(40)]
        result = z_census(GainCurve.from_arrays(spectrum, [1.0] * 40, dims))
        self.assertFalse(result.tail_empty)
        self.assertFalse(result.finite)
        self.assertEqual(result.tail_start, 30)


class SingleOperatorDiagnosticsTest(SimpleTestCase):
    def setUp(self):
        self.spectrum, self.sphere = sphere_spectrum(30)

    def test_elliptic_scalar_is_gh(self):
        P = synthetic_symbol(self.spectrum, SyntheticRecipe.SCALAR_PROFILE, profile=Profile.parse('power:1')).symbol
        report = diagnose_gh_single(P)
        self.assertEqual(report.verdict, Verdict.GH_CONSISTENT)
        self.assertEqual(report.exit_code, 0)
        self.assertAlmostEqual(report.fit.gamma, 1.0, places=9)
        self.assertTrue(report.z_census.finite)

    def test_rotation_is_solvable_not_hypoelliptic(self):
        P = sphere_rotation_field(self.sphere)
        report = diagnose_gh_single(P)
        self.assertEqual(report.verdict, Verdict.GS_NOT_GH_CONSISTENT)
        self.assertTrue(np.all(report.curve.gains == 0.0))
        self.assertIsNone(report.fit)
        self.assertEqual(report.solvability_fit.gamma, 0.0)
        self.assertAlmostEqual(report.solvability_fit.C, 1.0)
        self.assertEqual(len(report.z_census.members), 31)
        self.assertEqual(report.to_dict()['solvability_curve']['gain'][0], 'inf')

        gs = diagnose_gs_single(P)
        self.assertEqual(gs.verdict, Verdict.GS_NOT_GH_CONSISTENT)
        self.assertTrue(np.all(gs.curve.gains[1:] == 1.0))

    def test_rational_torus_field(self):
        _, model = torus_spectrum(2, 100)
        report = diagnose_gh_single(torus_vector_field(model, [1, '1/2']))
        self.assertEqual(report.verdict, Verdict.GS_NOT_GH_CONSISTENT)
        self.assertFalse(report.solvability_fit.super_polynomial)
        finite = report.solvability_curve.gains[np.isfinite(report.solvability_curve.gains)]
        self.assertGreaterEqual(float(np.min(finite)), 0.5)
        kernel_shells = {int(model.shells[k]) for k in report.z_census.members}
        self.assertEqual(kernel_shells, {0, 5, 20, 45, 80})

    def test_scaling_keeps_verdict_and_exponent(self):
        P = sphere_rotation_field(self.sphere)
        base = diagnose_gs_single(P)
        scaled = diagnose_gs_single(P.scaled(3j))
        self.assertEqual(base.verdict, scaled.verdict)
        self.assertAlmostEqual(base.solvability_fit.gamma, scaled.solvability_fit.gamma, places=9)
        self.assertAlmostEqual(scaled.solvability_fit.C / base.solvability_fit.C, 3.0, places=9)

    def test_normal_mode_matches_gs_for_one_operator(self):
        for P in (
            sphere_rotation_field(self.sphere),
            synthetic_symbol(self.spectrum, SyntheticRecipe.RANDOM_NORMAL, seed=2, kernel_dim=1).symbol,
        ):
            normal = diagnose_normal_system(SystemSymbol.single(P))
            gs = diagnose_gs_single(P)
            np.testing.assert_array_equal(normal.curve.gains, gs.curve.gains)
            self.assertEqual(normal.verdict, gs.verdict)


class SystemDiagnosticsTest(SimpleTestCase):
    def setUp(self):
        self.spectrum, self.torus = torus_spectrum(2, 50)
        self.coordinates = torus_coordinate_system(self.torus)

    def test_coordinate_system_is_gh(self):
        report = diagnose_system(self.coordinates)
        self.assertEqual(report.verdict, Verdict.GH_CONSISTENT)
        np.testing.assert_allclose(report.curve.gains[1:], np.sqrt(self.spectrum.eigenvalues[1:]), rtol=1e-12)
        self.assertEqual(report.z_census.members, (0,))

    def test_commuting_coordinate_system(self):
        report = diagnose_commuting(self.coordinates)
        self.assertEqual(report.mode, DiagnosticMode.COMMUTING)
        self.assertEqual(report.verdict, Verdict.GH_CONSISTENT)
        self.assertTrue(np.all(report.curve.gains[1:] >= 1.0))

    def test_zero_family_is_inconclusive(self):
        zero = InvariantSymbol.zeros(self.spectrum)
        report = diagnose_commuting(SystemSymbol((zero, zero)))
        self.assertEqual(report.verdict, Verdict.INCONCLUSIVE)
        self.assertEqual(report.exit_code, 3)
        self.assertFalse(report.z_census.finite)

    def test_zero_operator_adds_nothing(self):
        spectrum, sphere = sphere_spectrum(30)
        P = sphere_rotation_field(sphere)
        alone = diagnose_gh_single(P)
        padded = diagnose_system(SystemSymbol((P, InvariantSymbol.zeros(spectrum))))
        np.testing.assert_array_equal(alone.curve.gains, padded.curve.gains)
        np.testing.assert_array_equal(alone.solvability_curve.gains, padded.solvability_curve.gains)
        self.assertEqual(alone.verdict, padded.verdict)

    def test_adding_an_operator_never_demotes(self):
        spectrum, sphere = sphere_spectrum(30)
        P = sphere_rotation_field(sphere)
        Q = synthetic_symbol(spectrum, SyntheticRecipe.SCALAR_PROFILE, profile=Profile.parse('power:1')).symbol
        report = diagnose_system(SystemSymbol((P, Q)))
        self.assertEqual(report.verdict, Verdict.GH_CONSISTENT)
        self.assertTrue(np.all(report.curve.gains >= diagnose_gh_single(P).curve.gains))

    def test_normal_system(self):
        spectrum = linear_spectrum(20, multiplicity=2)
        S = SystemSymbol((
            InvariantSymbol.from_diagonals(spectrum, [[0.0, 3.0]] * 20),
            InvariantSymbol.from_diagonals(spectrum, [[5.0, 0.0]] * 20),
        ))
        report = diagnose_normal_system(S)
        self.assertEqual(report.verdict, Verdict.GH_CONSISTENT)
        self.assertTrue(np.all(report.curve.gains == 3.0))
        self.assertEqual(report.z_census.members, ())

    def test_normal_mode_rejects_non_normal(self):
        spectrum = linear_spectrum(3, multiplicity=2)
        jordan = InvariantSymbol(spectrum, tuple(np.array([[1.0, 1.0], [0.0, 1.0]]) for _ in range(3)))
        S = SystemSymbol((jordan, InvariantSymbol.identity(spectrum)))
        with self.assertRaises(StructuralError):
            diagnose_normal_system(S)
        self.assertEqual(detect_mode(S), DiagnosticMode.SYSTEM)

    def test_auto_mode(self):
        self.assertEqual(detect_mode(self.coordinates), DiagnosticMode.COMMUTING)
        self.assertEqual(detect_mode(SystemSymbol.single(self.coordinates.operators[0])), DiagnosticMode.GH_SINGLE)
        self.assertEqual(diagnose(self.coordinates).mode, DiagnosticMode.COMMUTING)
        with self.assertRaises(StructuralError):
            diagnose(self.coordinates, DiagnosticMode.GS_SINGLE)

    def test_workers_do_not_change_the_curve(self):
        serial = diagnose_system(self.coordinates, config=RunConfig(workers=1))
        threaded = diagnose_system(self.coordinates, config=RunConfig(workers=4))
        np.testing.assert_array_equal(serial.curve.gains, threaded.curve.gains)
