import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from spectra.engine.catalog import sphere_spectrum
from spectra.engine.spectrum import (
    BlockInfo,
    SpectrumModel,
    multiplicity_growth_constant,
    sobolev_weight,
    sobolev_weights,
    summability_partial,
    summability_trace,
)
from spectra.exceptions import BlockIndexError


class SpectrumModelTest(SimpleTestCase):
    def test_from_sequences(self):
        spectrum = SpectrumModel.from_sequences(2, 2.0, [0.0, 1.0, 2.0], [1, 4, 4])
        self.assertEqual(spectrum.truncation, 3)
        self.assertEqual(spectrum.total_dim, 9)
        self.assertEqual(list(spectrum.offsets), [0, 1, 5, 9])
        np.testing.assert_allclose(spectrum.log_scale, np.log([1.0, 2.0, 3.0]))

    def test_rejects_negative_eigenvalue(self):
        with self.assertRaises(ValidationError) as ctx:
            SpectrumModel.from_sequences(1, 1.0, [-1.0, 2.0], [1, 1])
        self.assertEqual(ctx.exception.code, 'negative_eigenvalue')
        self.assertEqual(ctx.exception.params['index'], 0)

    def test_rejects_repeated_eigenvalue(self):
        with self.assertRaises(ValidationError) as ctx:
            SpectrumModel.from_sequences(1, 1.0, [0.0, 2.0, 2.0], [1, 1, 1])
        self.assertEqual(ctx.exception.code, 'not_increasing')
        self.assertEqual(ctx.exception.params['index'], 2)

    def test_rejects_zero_multiplicity(self):
        with self.assertRaises(ValidationError) as ctx:
            SpectrumModel.from_sequences(1, 1.0, [0.0, 1.0], [1, 0])
        self.assertEqual(ctx.exception.code, 'invalid_multiplicity')

    def test_rejects_misplaced_block(self):
        with self.assertRaises(ValidationError):
            SpectrumModel(1, 1.0, (BlockInfo(1, 0.0, 1),))

    def test_block_index_bounds(self):
        spectrum, _ = sphere_spectrum(3)
        self.assertEqual(spectrum.block(3).multiplicity, 7)
        with self.assertRaises(BlockIndexError):
            spectrum.block(4)
        with self.assertRaises(IndexError):
            spectrum.check_index(-1)

    def test_tail_start(self):
        spectrum = SpectrumModel.from_sequences(1, 1.0, list(range(10)), [1] * 10)
        self.assertEqual(spectrum.tail_start(0.5), 5)
        self.assertEqual(spectrum.tail_start(0.25), 7)
        single = SpectrumModel.from_sequences(1, 1.0, [0.0], [1])
        self.assertEqual(single.tail_start(0.5), 0)

    def test_hash_ignores_labels(self):
        a = SpectrumModel.from_sequences(1, 2.0, [0.0, 1.0], [1, 2], labels=['a', 'b'])
        b = SpectrumModel.from_sequences(1, 2.0, [0.0, 1.0], [1, 2])
        c = SpectrumModel.from_sequences(1, 2.0, [0.0, 1.5], [1, 2])
        self.assertEqual(a.spectrum_hash, b.spectrum_hash)
        self.assertTrue(a.matches(b))
        self.assertNotEqual(a.spectrum_hash, c.spectrum_hash)

    def test_prefix(self):
        spectrum, _ = sphere_spectrum(5)
        prefix = spectrum.prefix(3)
        self.assertEqual(prefix.truncation, 3)
        self.assertEqual(list(prefix.multiplicities), [1, 3, 5])
        with self.assertRaises(BlockIndexError):
            spectrum.prefix(7)


class SobolevWeightTest(SimpleTestCase):
    def test_weight(self):
        spectrum, _ = sphere_spectrum(3)
        # lambda_1 = 2, nu = 2: (1 + 2)^(2/2)
        self.assertAlmostEqual(sobolev_weight(spectrum, 1, 2.0), 3.0)
        np.testing.assert_allclose(sobolev_weights(spectrum, 2.0), 1.0 + spectrum.eigenvalues)

    def test_growth_constant_on_sphere(self):
        spectrum, _ = sphere_spectrum(10)
        constant, worst = multiplicity_growth_constant(spectrum)
        # d_k / (1 + k(k+1)) is 1 at k = 0 and k = 1, then decreases
        self.assertAlmostEqual(constant, 1.0)
        self.assertEqual(worst, 0)

    def test_summability(self):
        spectrum, _ = sphere_spectrum(50)
        trace = summability_trace(spectrum, 2.0)
        self.assertTrue(np.all(np.diff(trace) > 0))
        self.assertAlmostEqual(summability_partial(spectrum, 2.0), float(trace[-1]))
        # increments of the convergent series shrink
        increments = np.diff(trace)
        self.assertLess(increments[-1], increments[0])
