from fractions import Fraction

import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from spectra.engine.catalog import (
    CoefficientKind,
    DiophantineCoefficient,
    Profile,
    SyntheticRecipe,
    convergents,
    probe_shells_for,
    shell_points,
    sphere_rotation_field,
    sphere_spectrum,
    synthetic_field,
    synthetic_symbol,
    torus_coordinate_system,
    torus_multipliers,
    torus_spectrum,
    torus_vector_field,
)
from spectra.engine.symbols import block_gain, commutator, restricted_gain

GOLDEN = (1 + 5 ** 0.5) / 2


def shell_index(model, m):
    return model.shells.index(m)


class DiophantineCoefficientTest(SimpleTestCase):
    def test_parse(self):
        half = DiophantineCoefficient.parse('1/2')
        self.assertEqual(half.kind, CoefficientKind.RATIONAL)
        self.assertEqual(half.exact, Fraction(1, 2))
        self.assertAlmostEqual(float(DiophantineCoefficient.parse('golden')), GOLDEN, places=14)
        self.assertAlmostEqual(float(DiophantineCoefficient.parse('sqrt(2)')), 2 ** 0.5, places=14)
        self.assertEqual(DiophantineCoefficient.parse('sqrt(4)').exact, Fraction(2))
        self.assertEqual(DiophantineCoefficient.parse('0.25').kind, CoefficientKind.DECIMAL)

    def test_liouville_partial_sum(self):
        coefficient = DiophantineCoefficient.parse('liouville')
        self.assertEqual(coefficient.kind, CoefficientKind.LIOUVILLE)
        expected = Fraction(1, 10) + Fraction(1, 100) + Fraction(1, 10 ** 6) + Fraction(1, 10 ** 24) + Fraction(1, 10 ** 120)
        self.assertEqual(coefficient.exact, expected)
        self.assertEqual(DiophantineCoefficient.parse('liouville:2').exact, Fraction(11, 100))

    def test_parse_rejects_garbage(self):
        for text in ('abc', '1/0', 'liouville:x'):
            with self.assertRaises(ValidationError):
                DiophantineCoefficient.parse(text)

    def test_convergents(self):
        self.assertEqual(convergents(Fraction(1, 2)), [(0, 1), (1, 2)])
        golden = DiophantineCoefficient.golden().value
        self.assertEqual(convergents(golden)[:5], [(1, 1), (2, 1), (3, 2), (5, 3), (8, 5)])
        self.assertTrue(all(q <= 10 ** 6 for _, q in convergents(golden)))

    def test_liouville_convergent_reaches_small_divisor(self):
        alpha = DiophantineCoefficient.liouville().exact
        self.assertIn((110001, 10 ** 6), convergents(alpha))


class TorusModelTest(SimpleTestCase):
    def test_multiplicities(self):
        spectrum, model = torus_spectrum(2, 2)
        self.assertEqual(list(spectrum.eigenvalues), [0.0, 1.0, 2.0])
        self.assertEqual(list(spectrum.multiplicities), [1, 4, 4])
        spectrum, _ = torus_spectrum(1, 4)
        self.assertEqual(list(spectrum.multiplicities), [1, 2, 2])
        spectrum, _ = torus_spectrum(2, 0)
        self.assertEqual(spectrum.truncation, 1)

    def test_lattice_counts(self):
        spectrum, model = torus_spectrum(2, 50)
        for m, dim in zip(model.shells, spectrum.multiplicities):
            count = sum(1 for x in range(-8, 9) for y in range(-8, 9) if x * x + y * y == m)
            self.assertEqual(count, dim)
        self.assertEqual(len(model.block_basis[shell_index(model, 25)]), 12)

    def test_rational_field_block(self):
        _, model = torus_spectrum(2, 100)
        P = torus_vector_field(model, [1, '1/2'])
        k = shell_index(model, 5)
        self.assertEqual(
            sorted(np.abs(np.diag(P.blocks[k])).tolist()),
            [0.0, 0.0, 1.5, 1.5, 2.0, 2.0, 2.5, 2.5],
        )
        gain = block_gain(P, k)
        self.assertEqual(gain.restricted, 1.5)
        self.assertEqual(gain.kernel_dim, 2)

    def test_rational_multipliers_are_exact(self):
        _, model = torus_spectrum(2, 100)
        for block in torus_multipliers(model, [1, '1/2']):
            for value in block:
                self.assertIsInstance(value, Fraction)
                self.assertEqual((2 * value).denominator, 1)

    def test_golden_field_block(self):
        _, model = torus_spectrum(2, 10)
        P = torus_vector_field(model, [1, 'golden'])
        k = shell_index(model, 1)
        self.assertEqual(restricted_gain(P, k), 1.0)
        np.testing.assert_allclose(sorted(np.abs(np.diag(P.blocks[k]))), [1.0, 1.0, GOLDEN, GOLDEN])

    def test_coordinate_fields_commute(self):
        _, model = torus_spectrum(2, 30)
        d1, d2 = torus_coordinate_system(model).operators
        for block in commutator(d1, d2).blocks:
            self.assertFalse(np.any(block))

    def test_probe_shells(self):
        self.assertEqual(probe_shells_for([1, '1/2'], 25), [])
        shells = probe_shells_for([1, 'golden'], 25)
        self.assertEqual(shells[:2], [34, 89])
        self.assertTrue(all(m > 25 for m in shells))

    def test_probe_shell_block(self):
        spectrum, model = torus_spectrum(2, 25, probe_shells=[34])
        self.assertEqual(spectrum.eigenvalues[-1], 34.0)
        self.assertEqual(spectrum.multiplicities[-1], 8)
        self.assertIn('probe', spectrum.blocks[-1].label)
        self.assertEqual(model.probe_shells, (34,))
        with self.assertRaises(ValidationError):
            torus_spectrum(2, 25, probe_shells=[20])
        with self.assertRaises(ValidationError):
            torus_spectrum(2, 25, probe_shells=[35])

    def test_shell_points(self):
        self.assertEqual(shell_points(34), sorted([
            (3, 5), (3, -5), (-3, 5), (-3, -5), (5, 3), (5, -3), (-5, 3), (-5, -3),
        ]))
        self.assertEqual(shell_points(3), [])


class SphereModelTest(SimpleTestCase):
    def test_rotation_field(self):
        spectrum, model = sphere_spectrum(4)
        P = sphere_rotation_field(model)
        np.testing.assert_array_equal(np.diag(P.blocks[2]), 1j * np.arange(-2, 3))
        for k in range(1, 5):
            gain = block_gain(P, k)
            self.assertEqual(gain.full, 0.0)
            self.assertEqual(gain.restricted, 1.0)
            self.assertEqual(gain.kernel_dim, 1)
        self.assertEqual(restricted_gain(P, 0), float('inf'))


class SyntheticTest(SimpleTestCase):
    def setUp(self):
        self.spectrum, _ = sphere_spectrum(12)

    def test_profile_parse(self):
        self.assertEqual(Profile.parse('power:-2'), Profile('power', -2.0))
        self.assertEqual(str(Profile.parse('index-power:-1')), 'index-power:-1')
        for text in ('cubic:1', 'power', 'power:x'):
            with self.assertRaises(ValidationError):
                Profile.parse(text)

    def test_seeded_generation_is_deterministic(self):
        a = synthetic_symbol(self.spectrum, SyntheticRecipe.RANDOM_NORMAL, seed=7)
        b = synthetic_symbol(self.spectrum, SyntheticRecipe.RANDOM_NORMAL, seed=7)
        c = synthetic_symbol(self.spectrum, SyntheticRecipe.RANDOM_NORMAL, seed=8)
        for x, y in zip(a.symbol.blocks, b.symbol.blocks):
            np.testing.assert_array_equal(x, y)
        self.assertFalse(np.array_equal(a.symbol.blocks[3], c.symbol.blocks[3]))

    def test_planted_gain(self):
        profile = Profile.parse('power:-1')
        planted = synthetic_symbol(self.spectrum, SyntheticRecipe.PLANTED_GAIN, seed=1, profile=profile, kernel_dim=1)
        for k in range(self.spectrum.truncation):
            gain = block_gain(planted.symbol, k)
            self.assertAlmostEqual(gain.restricted / planted.planted_gains[k], 1.0, places=10)
            self.assertEqual(gain.kernel_dim, 0 if k == 0 else 1)

    def test_profile_requires_recipe_argument(self):
        with self.assertRaises(ValidationError):
            synthetic_symbol(self.spectrum, SyntheticRecipe.SCALAR_PROFILE)
        with self.assertRaises(ValidationError):
            synthetic_symbol(self.spectrum, 'triangular')

    def test_synthetic_field_norms(self):
        profile = Profile.parse('power:-1.5')
        u = synthetic_field(self.spectrum, profile, seed=3)
        np.testing.assert_allclose(u.block_norms, profile(self.spectrum), rtol=1e-12)
