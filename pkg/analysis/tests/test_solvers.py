import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from analysis.engine.solvers import (
    SolveMethod,
    max_block_deviation,
    minimal_norm_block,
    residual,
    solve,
    solve_single,
    solve_system_commuting,
    solve_system_lsq,
    solve_system_normal,
)
from spectra.config import RunConfig
from spectra.engine.catalog import (
    Profile,
    SyntheticRecipe,
    random_unitary,
    sphere_spectrum,
    synthetic_field,
    synthetic_symbol,
    torus_coordinate_system,
    torus_spectrum,
)
from spectra.engine.fields import CoefficientField, inner, sobolev_norm
from spectra.engine.spectrum import SpectrumModel
from spectra.engine.symbols import InvariantSymbol, SystemSymbol, apply
from spectra.exceptions import StructuralError


def one_block(dim):
    return SpectrumModel.from_sequences(1, 1.0, [0.0], [dim])


def field(spectrum, *blocks):
    return CoefficientField(spectrum, tuple(np.asarray(b, dtype=complex) for b in blocks))


def symbol(spectrum, *blocks):
    return InvariantSymbol(spectrum, tuple(np.asarray(b, dtype=complex) for b in blocks))


class MinimalNormBlockTest(SimpleTestCase):
    def test_dense_and_diagonal_paths_agree(self):
        config = RunConfig()
        matrices = [np.diag([2.0, 0.0, 1j])]
        rhs = [np.array([4.0, 1.0, 3.0])]
        x_diag, kernel_diag, deficit_diag = minimal_norm_block(matrices, rhs, True, config)
        x_dense, kernel_dense, deficit_dense = minimal_norm_block(matrices, rhs, False, config)
        np.testing.assert_allclose(x_diag, [2.0, 0.0, -3j], atol=1e-14)
        np.testing.assert_allclose(x_dense, x_diag, atol=1e-12)
        self.assertEqual(kernel_diag, kernel_dense)
        self.assertAlmostEqual(deficit_diag, 1.0)
        self.assertAlmostEqual(deficit_dense, 1.0)


class SolveSingleTest(SimpleTestCase):
    def test_compatible_data(self):
        spectrum = one_block(2)
        P = symbol(spectrum, np.diag([2.0, 0.0]))
        outcome = solve_single(P, field(spectrum, [4.0, 0.0]))
        np.testing.assert_allclose(outcome.solution.flat(), [2.0, 0.0])
        self.assertTrue(outcome.ok)
        self.assertEqual(outcome.kernel_dims, (1,))

    def test_incompatible_data_is_recorded(self):
        spectrum = one_block(2)
        P = symbol(spectrum, np.diag([2.0, 0.0]))
        outcome = solve_single(P, field(spectrum, [4.0, 1.0]))
        np.testing.assert_allclose(outcome.solution.flat(), [2.0, 0.0])
        self.assertEqual(len(outcome.compat_failures), 1)
        k, deficit = outcome.compat_failures[0]
        self.assertEqual(k, 0)
        self.assertAlmostEqual(deficit, 1.0)
        self.assertAlmostEqual(float(outcome.residual[0]), 1.0)
        self.assertFalse(outcome.ok)

    def test_random_full_rank_blocks(self):
        spectrum, _ = sphere_spectrum(8)
        P = synthetic_symbol(spectrum, SyntheticRecipe.PLANTED_GAIN, seed=3, profile=Profile.parse('power:0')).symbol
        f = synthetic_field(spectrum, Profile.parse('power:0'), seed=4)
        outcome = solve_single(P, f)
        for k in range(spectrum.truncation):
            expected = np.linalg.solve(P.blocks[k], f.blocks[k])
            np.testing.assert_allclose(outcome.solution.blocks[k], expected, rtol=1e-10, atol=1e-12)
        self.assertLess(float(outcome.residual.max()), 1e-10)

    def test_solution_is_orthogonal_to_the_kernel(self):
        spectrum, _ = sphere_spectrum(8)
        P = synthetic_symbol(spectrum, SyntheticRecipe.PLANTED_GAIN, seed=5, profile=Profile.parse('power:-1'), kernel_dim=1).symbol
        f = apply(P, synthetic_field(spectrum, Profile.parse('power:0'), seed=6))
        outcome = solve_single(P, f)
        self.assertTrue(outcome.ok)
        for k in range(1, spectrum.truncation):
            _, s, vh = np.linalg.svd(P.blocks[k])
            kernel = vh[-1].conj()
            self.assertLess(abs(np.vdot(kernel, outcome.solution.blocks[k])), 1e-10)

    def test_resolving_an_image_is_idempotent(self):
        spectrum, _ = sphere_spectrum(8)
        P = synthetic_symbol(spectrum, SyntheticRecipe.RANDOM_NORMAL, seed=1, kernel_dim=1).symbol
        f = synthetic_field(spectrum, Profile.parse('power:-1'), seed=2)
        first = solve_single(P, f)
        second = solve_single(P, apply(P, first.solution))
        self.assertLess(max_block_deviation(second.solution, first.solution), 1e-10)

    def test_stability_estimate(self):
        spectrum, _ = sphere_spectrum(30)
        # gains (1 + lambda)^(-1) = (1 + lambda)^(t/nu) with t = -2, nu = 2, C = 1
        P = synthetic_symbol(spectrum, SyntheticRecipe.PLANTED_GAIN, seed=9, profile=Profile.parse('power:-1')).symbol
        for seed in range(5):
            f = synthetic_field(spectrum, Profile.parse('power:-2'), seed=seed)
            u = solve_single(P, f).solution
            for s in (0.0, 1.0):
                self.assertLessEqual(sobolev_norm(u, s - 2.0), sobolev_norm(f, s) * (1 + 1e-9))

    def test_data_count_and_spectrum_are_checked(self):
        spectrum = one_block(2)
        P = symbol(spectrum, np.eye(2))
        with self.assertRaises(ValidationError):
            solve_system_lsq(SystemSymbol.single(P), [])
        with self.assertRaises(StructuralError):
            solve(SystemSymbol((P, P)), [field(spectrum, [1, 0])] * 2, SolveMethod.SINGLE)


class SolveSystemTest(SimpleTestCase):
    def test_diagonal_pair(self):
        spectrum = one_block(2)
        S = SystemSymbol((symbol(spectrum, np.diag([0.0, 3.0])), symbol(spectrum, np.diag([5.0, 0.0]))))
        F = [field(spectrum, [0.0, 6.0]), field(spectrum, [10.0, 0.0])]
        for solver in (solve_system_lsq, solve_system_normal, solve_system_commuting):
            outcome = solver(S, F)
            np.testing.assert_allclose(outcome.solution.flat(), [2.0, 2.0], atol=1e-12)
            self.assertTrue(outcome.ok)

    def test_non_commuting_normal_pair(self):
        spectrum = one_block(2)
        S = SystemSymbol((
            symbol(spectrum, np.diag([0.0, 1.0])),
            symbol(spectrum, [[1.0, -1.0], [-1.0, 1.0]]),
        ))
        F = [field(spectrum, [0.0, 4.0]), field(spectrum, [-1.0, 1.0])]
        outcome = solve_system_normal(S, F)
        np.testing.assert_allclose(outcome.solution.flat(), [3.0, 4.0], atol=1e-10)
        self.assertTrue(outcome.ok)
        self.assertEqual(solve(S, F).method, SolveMethod.NORMAL)
        oracle = solve_system_lsq(S, F)
        self.assertLess(max_block_deviation(outcome.solution, oracle.solution), 1e-10)

    def test_invertible_working_operator(self):
        spectrum = one_block(2)
        sigma = np.array([[2.0, 1j], [-1j, 2.0]])
        S = SystemSymbol((symbol(spectrum, sigma), symbol(spectrum, np.eye(2))))
        u = np.array([1.0, -2.0 + 1j])
        F = [field(spectrum, sigma @ u), field(spectrum, u)]
        outcome = solve_system_normal(S, F)
        np.testing.assert_allclose(outcome.solution.flat(), u, atol=1e-12)

    def test_shared_zero_direction_is_the_joint_kernel(self):
        spectrum = one_block(2)
        S = SystemSymbol((symbol(spectrum, np.diag([0.0, 1.0])), symbol(spectrum, np.diag([0.0, 2.0]))))
        F = [field(spectrum, [0.0, 1.0]), field(spectrum, [0.0, 2.0])]
        outcome = solve_system_normal(S, F)
        self.assertEqual(outcome.kernel_dims, (1,))
        self.assertEqual(outcome.structural_failures, ())
        np.testing.assert_allclose(outcome.solution.flat(), [0.0, 1.0], atol=1e-12)

    def test_joint_kernel_data(self):
        spectrum = one_block(2)
        S = SystemSymbol((symbol(spectrum, np.diag([0.0, 1.0])), symbol(spectrum, np.diag([0.0, 2.0]))))
        clean = solve_system_normal(S, [field(spectrum, [0.0, 1.0]), field(spectrum, [0.0, 2.0])])
        self.assertEqual(clean.compat_failures, ())
        dirty = solve_system_normal(S, [field(spectrum, [1.0, 1.0]), field(spectrum, [0.0, 2.0])])
        self.assertEqual(len(dirty.compat_failures), 1)

    def test_commuting_coordinate_system(self):
        spectrum, torus = torus_spectrum(2, 40)
        S = torus_coordinate_system(torus)
        g = synthetic_field(spectrum, Profile.parse('power:-2'), seed=1)
        F = [apply(op, g) for op in S.operators]
        outcome = solve_system_commuting(S, F)
        self.assertTrue(outcome.ok)
        np.testing.assert_array_equal(outcome.solution.blocks[0], [0.0])
        for k in range(1, spectrum.truncation):
            np.testing.assert_allclose(outcome.solution.blocks[k], g.blocks[k], rtol=1e-12, atol=1e-15)
        self.assertEqual(solve(S, F).method, SolveMethod.COMMUTING)

    def test_lsq_planted_and_inconsistent(self):
        spectrum, _ = sphere_spectrum(6)
        P = synthetic_symbol(spectrum, SyntheticRecipe.RANDOM_GENERAL, seed=1).symbol
        Q = synthetic_symbol(spectrum, SyntheticRecipe.RANDOM_GENERAL, seed=2).symbol
        S = SystemSymbol((P, Q))
        u = synthetic_field(spectrum, Profile.parse('power:0'), seed=3)
        F = [apply(P, u), apply(Q, u)]
        outcome = solve_system_lsq(S, F)
        self.assertLess(max_block_deviation(outcome.solution, u), 1e-9)

        noise = synthetic_field(spectrum, Profile.parse('power:0'), seed=4)
        G = [F[0], CoefficientField(spectrum, tuple(a + b for a, b in zip(F[1].blocks, noise.blocks)))]
        noisy = solve_system_lsq(S, G)
        for k in range(spectrum.truncation):
            stacked = np.vstack([P.blocks[k], Q.blocks[k]])
            data = np.concatenate([G[0].blocks[k], G[1].blocks[k]])
            x = np.linalg.lstsq(stacked, data, rcond=None)[0]
            self.assertAlmostEqual(float(noisy.residual[k]), float(np.linalg.norm(stacked @ x - data)), places=9)

    def test_lsq_with_one_operator_matches_single(self):
        spectrum, _ = sphere_spectrum(6)
        P = synthetic_symbol(spectrum, SyntheticRecipe.RANDOM_NORMAL, seed=1, kernel_dim=1).symbol
        f = synthetic_field(spectrum, Profile.parse('power:0'), seed=2)
        single = solve_single(P, f)
        lsq = solve_system_lsq(SystemSymbol.single(P), [f])
        self.assertLess(max_block_deviation(lsq.solution, single.solution), 1e-12)

    def test_residual(self):
        spectrum, _ = sphere_spectrum(4)
        P = synthetic_symbol(spectrum, SyntheticRecipe.RANDOM_GENERAL, seed=1).symbol
        u = synthetic_field(spectrum, Profile.parse('power:0'), seed=2)
        f = apply(P, u)
        self.assertLess(float(residual(P, u, [f]).max()), 1e-12)
        np.testing.assert_allclose(residual(P, CoefficientField.zeros(spectrum), [f]), f.block_norms)

    def test_random_normal_families_match_the_oracle(self):
        rng = np.random.default_rng(17)
        for trial in range(40):
            dim = int(rng.integers(2, 6))
            n = int(rng.integers(2, 4))
            spectrum = one_block(dim)
            operators = []
            for _ in range(n):
                mu = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
                mu[:dim // n] = 0.0
                v = random_unitary(dim, rng)
                operators.append(symbol(spectrum, v @ np.diag(mu) @ v.conj().T))
            S = SystemSymbol(tuple(operators))
            u = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
            F = [field(spectrum, op.blocks[0] @ u) for op in operators]
            normal = solve_system_normal(S, F)
            oracle = solve_system_lsq(S, F)
            self.assertLess(max_block_deviation(normal.solution, oracle.solution), 1e-8, msg=f'trial {trial}')
            self.assertLess(float(normal.residual.max()), 1e-9, msg=f'trial {trial}')
            self.assertAlmostEqual(inner(normal.solution, normal.solution).real, np.vdot(u, u).real, places=6)
