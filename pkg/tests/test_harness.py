"""
Unit Tests for the Experiment Harness
"""

import json
import unittest
from dataclasses import replace
from pathlib import Path
from unittest.mock import patch
import sys

import numpy as np
import pytest

# Add src to path for testing
src_path = Path(__file__).parent.parent / "src"
sys.path.insert(0, str(src_path))

import harness  # noqa: E402
from config import DEFAULT_N_X, ConfigError  # noqa: E402
from domains import ReferenceDomain  # noqa: E402
from harness import (  # noqa: E402
    ExperimentConfig,
    NoiseSpec,
    SampleSpec,
    add_noise,
    check_pairing,
    generate_samples,
    load_config,
    match_and_score,
    run_experiment,
    scenario_config,
    sigma_sweep,
    spike_layout,
    trial_seed,
    write_report,
)
from kernels import Kernel, SampleSet  # noqa: E402
from recovery import Observations, SpikeModel  # noqa: E402
from test_config import TEST_CONFIG, TestBase  # noqa: E402
from utils import read_observations_csv  # noqa: E402


def _min_distance(points) -> float:
    points = np.asarray(points)
    d = np.abs(points[:, None] - points[None, :])
    return float(np.min(d[~np.eye(points.size, dtype=bool)]))


@pytest.mark.unit
class TestSamples(unittest.TestCase):

    def test_matsubara_grid(self):
        S = generate_samples(SampleSpec("matsubara", 256, beta=100.0))
        self.assertEqual(S.n_s, 256)
        self.assertAlmostEqual(S.locations[0], -255j * np.pi / 100)
        self.assertAlmostEqual(S.locations[-1], 255j * np.pi / 100)
        self.assertFalse(np.any(S.locations.real))

    def test_annulus_moduli(self):
        S = generate_samples(SampleSpec("annulus", 40, low=1.2, high=2.2), seed=7)
        r = np.abs(S.locations)
        self.assertTrue(np.all((r >= 1.2 - 1e-12) & (r <= 2.2 + 1e-12)))

    def test_interval_bounds_and_determinism(self):
        spec = SampleSpec("interval", 128, low=-5.0, high=5.0)
        S = generate_samples(spec, seed=11)
        self.assertTrue(np.all((S.locations.real >= -5) & (S.locations.real <= 5)))
        np.testing.assert_array_equal(S.locations, generate_samples(spec, seed=11).locations)
        self.assertFalse(np.array_equal(S.locations, generate_samples(spec, seed=12).locations))

    def test_lattice(self):
        np.testing.assert_array_equal(generate_samples(SampleSpec("lattice", 4)).locations, [0, 1, 2, 3])

    def test_perturbed_lattice(self):
        S = generate_samples(SampleSpec("perturbed_lattice", 32, jitter=0.3), seed=2)
        self.assertLessEqual(np.max(np.abs(S.locations - np.arange(32))), 0.15)

    def test_random_kind_needs_seed(self):
        with self.assertRaises(ConfigError):
            generate_samples(SampleSpec("interval", 8, low=0.0, high=1.0))

    def test_spec_validation(self):
        with self.assertRaises(ConfigError):
            SampleSpec("grid", 8)
        with self.assertRaises(ConfigError):
            SampleSpec("matsubara", 7, beta=10.0)
        with self.assertRaises(ConfigError):
            SampleSpec("annulus", 8, low=2.0, high=1.0)


@pytest.mark.unit
class TestNoise(TestBase):

    def test_multiplicative_moments(self):
        u = Observations(np.ones(100000), SampleSet(np.arange(100000, dtype=float)))
        ratio = add_noise(u, NoiseSpec(1e-2, 5)).values.real - 1.0
        self.assertLess(abs(np.mean(ratio)), 5e-2 / np.sqrt(ratio.size))
        self.assertAlmostEqual(np.std(ratio) / 1e-2, 1.0, delta=0.02)

    def test_same_seed_same_noise(self):
        u = self.make_observations(scenario_config("fourier").kernel, [0.1, 0.7, 2.0], [0.3])
        a = add_noise(u, NoiseSpec(1e-3, 99)).values
        np.testing.assert_array_equal(a, add_noise(u, NoiseSpec(1e-3, 99)).values)

    def test_zero_sigma_is_identity(self):
        u = Observations([1.0, 2.0], SampleSet([0.0, 1.0]))
        self.assertIs(add_noise(u, NoiseSpec(0.0, 1)), u)

    def test_noise_spec_validation(self):
        with self.assertRaises(ConfigError):
            NoiseSpec(-1.0, 1)
        with self.assertRaises(ConfigError):
            NoiseSpec(1e-3, -1)

    def test_trial_seeds_are_distinct(self):
        seeds = {trial_seed(1234, i, k) for i in range(5) for k in range(3)}
        self.assertEqual(len(seeds), 15)
        self.assertEqual(trial_seed(1234, 2, 1), trial_seed(1234, 2, 1))


@pytest.mark.unit
class TestLayouts(unittest.TestCase):

    def test_easy_separation(self):
        for name in TEST_CONFIG['SCENARIOS']:
            for seed in range(5):
                with self.subTest(scenario=name, seed=seed):
                    truth = spike_layout(name, "easy", seed)
                    self.assertEqual(truth.n_x, DEFAULT_N_X)
                    self.assertGreaterEqual(_min_distance(truth.locations), 0.3 - 1e-12)
                    np.testing.assert_array_equal(truth.weights, np.ones(DEFAULT_N_X))

    def test_hard_fourier_pair(self):
        for seed in range(5):
            truth = spike_layout("fourier", "hard", seed)
            self.assertAlmostEqual(_min_distance(truth.locations), 0.1, delta=1e-12)
            self.assertTrue(np.all(np.abs(truth.locations.real) <= 0.9 + 1e-12))
            self.assertFalse(np.any(truth.locations.imag))

    def test_hard_laplace_pair(self):
        truth = spike_layout("laplace", "hard", 3)
        self.assertAlmostEqual(_min_distance(truth.locations), 0.25, delta=1e-12)
        self.assertTrue(np.all((truth.locations.real >= 0.2 - 1e-12) & (truth.locations.real <= 2.0 + 1e-12)))

    def test_hard_disk_pair(self):
        truth = spike_layout("rational", "hard", 4)
        self.assertAlmostEqual(_min_distance(truth.locations), 0.1, delta=1e-12)
        self.assertTrue(np.all(np.abs(truth.locations) <= 0.8 + 1e-12))

    def test_layout_is_seeded(self):
        a = spike_layout("deconv", "easy", 9)
        np.testing.assert_array_equal(a.locations, spike_layout("deconv", "easy", 9).locations)

    def test_hard_needs_two_spikes(self):
        with self.assertRaises(ConfigError):
            spike_layout("fourier", "hard", 0, n_x=1)


@pytest.mark.unit
class TestScoring(unittest.TestCase):

    def setUp(self):
        self.truth = SpikeModel([-0.5, 0.1, 0.6], [1.0, 2.0, 3.0])

    def test_identity(self):
        score = match_and_score(self.truth, self.truth)
        self.assertEqual((score.location_error, score.weight_error, score.unmatched), (0.0, 0.0, 0))

    def test_permutation_invariant(self):
        shuffled = SpikeModel(self.truth.locations[[2, 0, 1]], self.truth.weights[[2, 0, 1]])
        self.assertEqual(match_and_score(self.truth, shuffled).location_error, 0.0)

    def test_offset(self):
        moved = SpikeModel(self.truth.locations + 0.01, self.truth.weights)
        self.assertAlmostEqual(match_and_score(self.truth, moved).location_error, 0.01, delta=1e-15)

    def test_symmetric(self):
        other = SpikeModel([-0.45, 0.12, 0.7], [1.0, 2.0, 3.0])
        a = match_and_score(self.truth, other)
        b = match_and_score(other, self.truth)
        self.assertAlmostEqual(a.location_error, b.location_error)
        self.assertAlmostEqual(a.weight_error, b.weight_error)

    def test_unmatched_penalty(self):
        estimate = SpikeModel([-0.5, 0.1], [1.0, 2.0])
        score = match_and_score(self.truth, estimate, diameter=2.0)
        self.assertEqual(score.unmatched, 1)
        self.assertAlmostEqual(score.location_error, 2.0)
        self.assertAlmostEqual(score.weight_error, 3.0)

    def test_empty_estimate(self):
        score = match_and_score(self.truth, SpikeModel([], []), diameter=10.0)
        self.assertEqual(score.unmatched, 3)
        self.assertAlmostEqual(score.location_error, 30.0)

    def test_large_sets_use_linear_assignment(self):
        x = np.linspace(-0.9, 0.9, 10)
        truth = SpikeModel(x, np.ones(10))
        estimate = SpikeModel(x[::-1] + 1e-3, np.ones(10))
        with patch.object(harness, "linear_sum_assignment", wraps=harness.linear_sum_assignment) as lsa:
            score = match_and_score(truth, estimate)
        lsa.assert_called_once()
        self.assertAlmostEqual(score.location_error, 1e-3, delta=1e-12)


@pytest.mark.unit
class TestExperimentConfig(TestBase):

    def test_round_trip_all_scenarios(self):
        for name in harness.SCENARIOS:
            with self.subTest(scenario=name):
                cfg = scenario_config(name)
                self.assertEqual(ExperimentConfig.from_dict(cfg.to_dict()), cfg)

    def test_shift_truth_sets_n_x(self):
        cfg = scenario_config("shift")
        self.assertEqual(cfg.n_x, 2)
        self.assertEqual(cfg.truth_model.n_x, 2)

    def test_json5_file(self):
        path = self.test_data_dir / "run.json5"
        path.write_text("""
        // fourier run with a hard layout
        {
          scenario: 'fourier',
          layout: 'hard',
          sigma: 1e-3,
          trials: 2,
          refine: {max_iterations: 50},
        }
        """)
        cfg = load_config(path)
        self.assertEqual(cfg.layout, "hard")
        self.assertEqual(cfg.sigma, 1e-3)
        self.assertEqual(cfg.refine.max_iterations, 50)
        self.assertEqual(cfg.samples, scenario_config("fourier").samples)

    def test_invalid_configs(self):
        bad = [
            {"scenario": "fourier", "colour": "blue"},
            {"scenario": "fourier", "layout": "medium"},
            {"scenario": "fourier", "domain": "disk"},
            {"scenario": "rational", "n_x": 30},
            {"scenario": "fourier", "estimator": "music"},
            {"scenario": "custom"},
        ]
        for data in bad:
            with self.subTest(config=data):
                with self.assertRaises(ConfigError):
                    ExperimentConfig.from_dict(data)

    def test_unreadable_files(self):
        with self.assertRaises(ConfigError):
            load_config(self.test_data_dir / "missing.json")
        broken = self.test_data_dir / "broken.json"
        broken.write_text("{scenario: ")
        with self.assertRaises(ConfigError):
            load_config(broken)

    def test_kernel_domain_pairing(self):
        with self.assertRaises(ConfigError):
            check_pairing(Kernel("fourier"), ReferenceDomain("disk"))
        with self.assertRaises(ConfigError):
            check_pairing(Kernel("power"), ReferenceDomain("interval"))
        for kind in ("disk", "interval"):
            check_pairing(Kernel("cauchy"), ReferenceDomain(kind))

    def test_unknown_scenario(self):
        with self.assertRaises(ConfigError):
            scenario_config("radar")


@pytest.mark.integration
class TestRunExperiment(TestBase):

    def setUp(self):
        super().setUp()
        self.cfg = scenario_config("fourier", n_x=2, trials=3, seed=TEST_CONFIG['SEED'])

    def test_deterministic(self):
        a = run_experiment(self.cfg)
        b = run_experiment(self.cfg)
        self.assertEqual(a.rows, b.rows)
        self.assertEqual(a.aggregate, b.aggregate)
        self.assertEqual([r["trial"] for r in a.rows], [0, 1, 2])

    def test_parallel_matches_serial(self):
        serial = run_experiment(self.cfg)
        parallel = run_experiment(self.cfg, workers=3)
        self.assertEqual(serial.rows, parallel.rows)
        self.assertEqual(serial.spikes, parallel.spikes)

    def test_noiseless_trials_are_exact(self):
        report = run_experiment(self.cfg)
        self.assertEqual(report.success_count, 3)
        for row in report.rows:
            self.assertLessEqual(row["refined_location_error"], TEST_CONFIG['EXACT_TOL'])
            self.assertTrue(row["refine_monotone"])
            self.assertLessEqual(row["residual_truth"], 1e-16)

    def test_failed_trials_are_recorded(self):
        cfg = scenario_config("shift", trials=2, norm_bound=0.5)
        report = run_experiment(cfg)
        self.assertTrue(report.all_failed)
        self.assertEqual(report.aggregate["failed"], 2)
        self.assertIsNone(report.aggregate["refined_location_error"])
        self.assertIn("best achievable norm", report.rows[0]["error"])

    def test_unexpected_errors_are_recorded(self):
        with patch.object(harness, "recover_spikes", side_effect=ZeroDivisionError("division by zero")):
            report = run_experiment(self.cfg)
        self.assertEqual(len(report.rows), 3)
        self.assertTrue(report.all_failed)
        for row in report.rows:
            self.assertEqual(row["status"], "failed")
            self.assertIn("ZeroDivisionError", row["error"])
        self.assertEqual(len(report.observations), 3)

    def test_write_report(self):
        report = run_experiment(replace(self.cfg, trials=2))
        written = write_report(report, self.temp_dir / "out", fmt="csv")
        data = json.loads(Path(written["report"]).read_text())
        self.assertEqual(len(data["rows"]), 2)
        self.assertTrue(Path(written["rows"]).exists())
        spikes = (self.temp_dir / "out" / "trials" / "trial_001_spikes.csv").read_text().splitlines()
        self.assertEqual(spikes[0], "series,x_re,x_im,w_re,w_im")
        self.assertEqual(len(spikes), 1 + 3 * 2)
        observed = self.temp_dir / "out" / "trials" / "trial_001_observations.csv"
        self.assertEqual(observed.read_text().splitlines()[0], "s_re,s_im,u_re,u_im")
        s, u = read_observations_csv(observed)
        np.testing.assert_array_equal(s, report.observations[1].samples.locations)
        np.testing.assert_array_equal(u, report.observations[1].values)

    def test_sigma_sweep(self):
        reports = sigma_sweep(replace(self.cfg, trials=1), [1e-4, 1e-3])
        self.assertEqual([r.config["sigma"] for r in reports], [1e-4, 1e-3])
        self.assertEqual([r.rows[0]["sigma"] for r in reports], [1e-4, 1e-3])


if __name__ == '__main__':
    unittest.main()
