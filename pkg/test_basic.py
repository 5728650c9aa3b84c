"""
Smoke Tests for Eigenmatrix Sparse Recovery

Fast checks that the package imports, the lattice shift matrix is reproduced
and a small noiseless recovery is exact.
"""

import unittest
import tempfile
import shutil
from pathlib import Path
import sys

import numpy as np

# Add src to path for testing
src_path = Path(__file__).parent / "src"
sys.path.insert(0, str(src_path))

try:
    import eigenmatrix
    from domains import DomainMap, ReferenceDomain
    from kernels import Kernel, SampleSet
    from recovery import Observations
    from refine import recover_spikes
    from utils import DataFileValidator, OutputManager
except ImportError as e:
    print(f"Import error: {e}")
    print("Make sure to install dependencies: pip install -r requirements.txt")
    sys.exit(1)


class TestShiftMatrix(unittest.TestCase):

    def test_lattice_gives_cyclic_shift(self):
        E = eigenmatrix.build(Kernel("power"), SampleSet(np.arange(32.0)), ReferenceDomain("disk"), DomainMap(), 32)
        np.testing.assert_allclose(E.matrix, np.roll(np.eye(32), 1, axis=1), atol=1e-10)


class TestFourierRecovery(unittest.TestCase):

    def test_two_spikes(self):
        k = Kernel("fourier")
        S = SampleSet(np.random.Generator(np.random.PCG64(0)).uniform(-5, 5, 64))
        x = np.array([-0.4, 0.3])
        u = Observations(k.evaluate(S.locations[:, None], x[None, :]) @ np.ones(2), S)
        E = eigenmatrix.build(k, S, ReferenceDomain("interval"), DomainMap(), 32)
        result = recover_spikes(k, S, u, E, 2)
        np.testing.assert_allclose(np.sort(result.refined.locations.real), x, atol=1e-8)


class TestUtilities(unittest.TestCase):

    def setUp(self):
        self.temp_dir = Path(tempfile.mkdtemp())

    def tearDown(self):
        if self.temp_dir.exists():
            shutil.rmtree(self.temp_dir)

    def test_supported_formats(self):
        self.assertTrue(DataFileValidator.is_supported_format(Path("obs.csv")))
        self.assertFalse(DataFileValidator.is_supported_format(Path("obs.wav")))

    def test_prepare_output_directory(self):
        result = OutputManager.prepare_output_directory(self.temp_dir / "out")
        self.assertTrue(result['success'])
        self.assertTrue(result['created'])


def create_test_suite():
    """Create and return a test suite."""
    loader = unittest.defaultTestLoader
    suite = unittest.TestSuite()
    for case in (TestShiftMatrix, TestFourierRecovery, TestUtilities):
        suite.addTests(loader.loadTestsFromTestCase(case))
    return suite


if __name__ == "__main__":
    runner = unittest.TextTestRunner(verbosity=2)
    result = runner.run(create_test_suite())

    if result.wasSuccessful():
        print("\n✅ All smoke tests passed!")
    else:
        print(f"\n❌ {len(result.failures)} test(s) failed")
        print(f"❌ {len(result.errors)} error(s) occurred")

    sys.exit(0 if result.wasSuccessful() else 1)
