"""
Unit Tests for Kernel Families and Kernel Vectors
"""

import unittest
from pathlib import Path
import sys

import numpy as np
import pytest

# Add src to path for testing
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))

from kernels import (  # noqa: E402
    Kernel,
    KernelSingularityError,
    SampleSet,
    assemble_matrix,
    assemble_normalized,
    assemble_vector,
    eval_kernel,
    normalize_columns,
)


@pytest.mark.unit
class TestKernelFamilies(unittest.TestCase):

    def test_point_values(self):
        self.assertAlmostEqual(eval_kernel(Kernel("cauchy"), 2, 0), 0.5)
        self.assertAlmostEqual(eval_kernel(Kernel("fourier"), 1, 0), 1.0)
        self.assertAlmostEqual(eval_kernel(Kernel("laplace"), 0, 0.7), 0.7)
        self.assertAlmostEqual(eval_kernel(Kernel("lorentzian", gamma=4.0), 0.5, 0.0), 0.5)
        self.assertAlmostEqual(eval_kernel(Kernel("power"), 3, 0.5j), (0.5j) ** 3)

    def test_power_principal_branch(self):
        # x^s = exp(s Log x) with Arg in (-pi, pi]
        value = eval_kernel(Kernel("power"), 0.5, -1.0)
        self.assertAlmostEqual(value, 1j)

    def test_power_at_origin(self):
        k = Kernel("power")
        self.assertEqual(eval_kernel(k, 0, 0), 1.0)
        self.assertEqual(eval_kernel(k, 2, 0), 0.0)
        with self.assertRaises(KernelSingularityError):
            eval_kernel(k, -1, 0)

    def test_cauchy_singularity_names_pair(self):
        with self.assertRaises(KernelSingularityError) as ctx:
            eval_kernel(Kernel("cauchy"), 1.5, 1.5)
        self.assertIn("1.5", str(ctx.exception))

    def test_lorentzian_pole(self):
        # 1 + gamma (s - x)^2 = 0 at s - x = i / sqrt(gamma)
        with self.assertRaises(KernelSingularityError):
            eval_kernel(Kernel("lorentzian", gamma=4.0), 0.5j, 0.0)

    def test_parameter_validation(self):
        with self.assertRaises(ValueError):
            Kernel("gaussian")
        with self.assertRaises(ValueError):
            Kernel("lorentzian")
        with self.assertRaises(ValueError):
            Kernel("lorentzian", gamma=-1.0)
        with self.assertRaises(ValueError):
            Kernel("cauchy", gamma=1.0)

    def test_dict_round_trip(self):
        for k in (Kernel("cauchy"), Kernel("lorentzian", gamma=4.0)):
            with self.subTest(kernel=k):
                self.assertEqual(Kernel.from_dict(k.to_dict()), k)


@pytest.mark.unit
class TestKernelVectors(unittest.TestCase):

    def test_single_sample(self):
        k = Kernel("laplace")
        g = assemble_vector(k, SampleSet([2.0]), 0.3)
        self.assertEqual(g.shape, (1,))
        self.assertAlmostEqual(g[0], eval_kernel(k, 2.0, 0.3))

    def test_direct_values(self):
        np.testing.assert_allclose(assemble_vector(Kernel("fourier"), SampleSet([0, 1, 2]), 0.0), [1, 1, 1])
        np.testing.assert_allclose(assemble_vector(Kernel("cauchy"), SampleSet([2, 3]), 1.0), [1, 0.5])

    def test_normalized_fourier_entries(self):
        rng = np.random.Generator(np.random.PCG64(1))
        S = SampleSet(rng.uniform(-5, 5, 64))
        g = assemble_normalized(Kernel("fourier"), S, 0.37)
        np.testing.assert_allclose(np.abs(g), 1 / np.sqrt(64), atol=1e-15)

    def test_normalized_cauchy(self):
        g = assemble_normalized(Kernel("cauchy"), SampleSet([2, 3]), 1.0)
        np.testing.assert_allclose(g, np.array([1, 0.5]) / np.sqrt(1.25))

    def test_unit_norm(self):
        rng = np.random.Generator(np.random.PCG64(2))
        S = SampleSet(1.5 * np.exp(2j * np.pi * rng.uniform(size=40)))
        for x in (0.0, 0.3 + 0.4j, -0.9):
            self.assertAlmostEqual(np.linalg.norm(assemble_normalized(Kernel("cauchy"), S, x)), 1.0, delta=1e-14)

    def test_zero_vector_rejected(self):
        # laplace kernel x exp(-s x) vanishes identically at x = 0
        with self.assertRaises(ValueError):
            assemble_normalized(Kernel("laplace"), SampleSet([0.0, 1.0]), 0.0)

    def test_matrix_columns_match_vectors(self):
        S = SampleSet([1.2, -2.0 + 1j, 3j])
        xs = np.array([0.1, 0.2j, -0.5])
        G = assemble_matrix(Kernel("cauchy"), S, xs)
        self.assertEqual(G.shape, (3, 3))
        for i, x in enumerate(xs):
            np.testing.assert_allclose(G[:, i], assemble_vector(Kernel("cauchy"), S, x))

    def test_normalize_columns(self):
        G = normalize_columns(np.array([[3.0, 0.0], [4.0, 2.0]]))
        np.testing.assert_allclose(np.linalg.norm(G, axis=0), [1, 1])


@pytest.mark.unit
class TestSampleSet(unittest.TestCase):

    def test_read_only(self):
        S = SampleSet([1.0, 2.0])
        self.assertEqual(len(S), 2)
        with self.assertRaises(ValueError):
            S.locations[0] = 5.0

    def test_rejects_empty_and_non_finite(self):
        with self.assertRaises(ValueError):
            SampleSet([])
        with self.assertRaises(ValueError):
            SampleSet([1.0, np.inf])


if __name__ == '__main__':
    unittest.main()
