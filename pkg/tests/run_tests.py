"""
Test Runner for Eigenmatrix Sparse Recovery

Checks dependencies, runs quick sanity checks and the unit-test modules, and
prints a summary. ``pytest`` remains the primary runner; this script is for
environments where only the standard test loader is wanted.
"""

import unittest
import sys
import time
from pathlib import Path
import importlib.util

# Add src to path for testing
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))

# Test discovery
unit_modules = [
    'test_numerics',
    'test_kernels',
    'test_domains',
    'test_eigenmatrix',
    'test_recovery',
    'test_refine',
    'test_harness',
    'test_utils',
]
slow_modules = [
    'test_integration',
    'test_cli',
]


def check_dependencies():
    """Check if all required dependencies are available."""
    required_modules = ['numpy', 'scipy', 'tqdm', 'json5', 'psutil']

    missing = []
    available = []

    for module in required_modules:
        try:
            importlib.import_module(module)
            available.append(module)
        except ImportError:
            missing.append(module)

    return available, missing


def run_basic_tests():
    """Import every module and reproduce the lattice shift matrix."""
    print("🧪 Running Basic Tests")
    print("=" * 50)

    available, missing = check_dependencies()
    print(f"✅ Available modules: {', '.join(available)}")
    if missing:
        print(f"❌ Missing modules: {', '.join(missing)}")
        return False

    print("\n1. Testing Core Imports:")
    try:
        import numpy as np
        import eigenmatrix
        from domains import DomainMap, ReferenceDomain
        from kernels import Kernel, SampleSet
        import harness  # noqa: F401
        import main  # noqa: F401
        print("   ✅ Library and CLI modules imported successfully")
    except ImportError as e:
        print(f"   ❌ Import failed: {e}")
        return False

    print("\n2. Testing Shift-Matrix Reproduction:")
    try:
        E = eigenmatrix.build(Kernel("power"), SampleSet(np.arange(32.0)), ReferenceDomain("disk"), DomainMap(), 32)
        deviation = eigenmatrix.shift_deviation(E)
        print(f"   ✅ ||M|| = {E.norm_M:.3f}, max shift deviation = {deviation['max']:.2e}")
    except Exception as e:
        print(f"   ❌ Eigenmatrix construction failed: {e}")
        return False

    print("\n✅ Basic tests completed successfully!")
    return True


def run_test_modules(module_names, title, verbosity=1):
    """Load and run the given test modules."""
    print(f"\n🔬 Running {title}")
    print("=" * 50)

    loader = unittest.TestLoader()
    suite = unittest.TestSuite()

    for module_name in module_names:
        try:
            spec = importlib.util.spec_from_file_location(
                module_name,
                Path(__file__).parent / f"{module_name}.py"
            )
            if spec and spec.loader:
                module = importlib.util.module_from_spec(spec)
                spec.loader.exec_module(module)
                suite.addTests(loader.loadTestsFromModule(module))
                print(f"   ✅ Loaded tests from {module_name}")
        except Exception as e:
            print(f"   ⚠️  Could not load {module_name}: {e}")

    runner = unittest.TextTestRunner(verbosity=verbosity, stream=sys.stdout)
    return runner.run(suite)


def generate_test_report(test_result):
    """Print totals and the names of failing tests."""
    print("\n📊 Test Report")
    print("=" * 50)

    total_tests = test_result.testsRun
    failures = len(test_result.failures)
    errors = len(test_result.errors)
    skipped = len(test_result.skipped)
    passed = total_tests - failures - errors - skipped

    print(f"Total Tests: {total_tests}")
    print(f"✅ Passed: {passed}")
    print(f"❌ Failed: {failures}")
    print(f"🚫 Errors: {errors}")
    print(f"⏭️  Skipped: {skipped}")

    if total_tests > 0:
        print(f"Success Rate: {passed / total_tests * 100:.1f}%")

    for label, items in (("Test Failures", test_result.failures), ("Test Errors", test_result.errors)):
        if items:
            print(f"\n{label} ({len(items)}):")
            for test, _ in items:
                print(f"   - {test}")

    return test_result.wasSuccessful()


def main():
    """Main test runner function."""
    print("Eigenmatrix Sparse Recovery - Test Suite")
    print("=" * 60)

    start_time = time.time()

    import argparse
    parser = argparse.ArgumentParser(description="Eigenmatrix Sparse Recovery Test Runner")
    parser.add_argument('--basic', action='store_true', help='Run only basic tests')
    parser.add_argument('--unit', action='store_true', help='Run only unit tests')
    parser.add_argument('--all', action='store_true', help='Also run integration and CLI tests')
    parser.add_argument('--verbose', '-v', action='store_true', help='Verbose output')

    args = parser.parse_args()
    verbosity = 2 if args.verbose else 1

    try:
        if not args.unit and not run_basic_tests():
            print("❌ Basic tests failed - aborting")
            return 1
        if args.basic:
            return 0

        modules = unit_modules + (slow_modules if args.all else [])
        success = generate_test_report(run_test_modules(modules, "Unit Tests" if not args.all else "All Tests",
                                                        verbosity))
        print(f"\n⏱️  Total test time: {time.time() - start_time:.1f}s")

        if success:
            print("\n🎉 All tests completed successfully!")
            return 0
        print("\n💥 Some tests failed!")
        return 1

    except KeyboardInterrupt:
        print("\n🛑 Tests interrupted by user")
        return 1


if __name__ == '__main__':
    sys.exit(main())
