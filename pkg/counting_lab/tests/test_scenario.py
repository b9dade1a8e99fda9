import json
import tempfile
from pathlib import Path
from unittest import mock

import numpy as np
from django.conf import settings
from django.test import SimpleTestCase, override_settings

from counting_lab.errors import ConfigError
from counting_lab.scenario import STAGE_FUNCTIONS, load_scenario, run_config, run_scenario

SCENARIOS = Path(settings.BASE_DIR) / 'scenarios'


class LoadScenarioTests(SimpleTestCase):
    def test_defaults_fill_missing_keys(self):
        sc = load_scenario({'name': 'x'})
        self.assertEqual(sc.generator, 'power')
        self.assertEqual(sc.a, 'auto')
        self.assertEqual(sc.b, 0.0)
        self.assertEqual(sc.truncation, 256)

    def test_r_grid_includes_stop(self):
        sc = load_scenario({'r_start': 10, 'r_stop': 11, 'r_step': 0.5})
        np.testing.assert_array_equal(sc.r_grid, [10.0, 10.5, 11.0])

    def test_json_text_and_overrides(self):
        sc = load_scenario('{"seed": 3, "b": "0.2"}', seed=None, beta=0.25)
        self.assertEqual(sc.seed, 3)
        self.assertEqual(sc.b, 0.2)
        self.assertEqual(sc.beta, 0.25)

    def test_shipped_configs_load(self):
        for path in sorted(SCENARIOS.glob('*.json')):
            with self.subTest(path=path.name):
                self.assertEqual(load_scenario(path).name, path.stem)

    def test_malformed_json(self):
        with self.assertRaisesMessage(ConfigError, "malformed config") as caught:
            load_scenario('{"seed": 1,')
        self.assertEqual(caught.exception.exit_code, 2)

    def test_missing_file(self):
        with self.assertRaisesMessage(ConfigError, "config not readable"):
            load_scenario('/nonexistent/scenario.json')

    def test_unknown_key(self):
        with self.assertRaisesMessage(ConfigError, "unknown config keys"):
            load_scenario({'radius': 3})

    def test_not_an_object(self):
        with self.assertRaises(ConfigError):
            load_scenario('[1, 2]')

    @override_settings(LAB={'MAX_DIM': 64})
    def test_truncation_above_max_dim(self):
        with self.assertRaisesMessage(ConfigError, "invalid scenario"):
            load_scenario({'truncation': 128})

    def test_fit_needs_a_given_perturbation(self):
        with self.assertRaises(ConfigError):
            load_scenario({'b': 'fit', 'perturbation': 'random'})
        self.assertEqual(load_scenario({'b': 'fit', 'generator': 'periodic', 'truncation': 64}).b, 'fit')

    def test_invalid_values(self):
        for data in ({'a': 0}, {'h': 'never'}, {'r_start': 20, 'r_stop': 10}, {'lacuna_points': 2},
                     {'generator': 'periodic', 'truncation': 63}):
            with self.subTest(data=data):
                with self.assertRaises(ConfigError):
                    load_scenario(data)


class RunScenarioTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.out = Path(self.tmp.name)

    def test_config_error_is_exit_two(self):
        result = run_config('{"radius": 1}')
        self.assertEqual(result.exit_code, 2)
        self.assertEqual(result.stage, 'config')

    def test_unperturbed_scenario_passes_every_stage(self):
        result = run_config(SCENARIOS / 'b0-alpha1.json', output_dir=str(self.out / 'b0'))
        self.assertEqual(result.exit_code, 0, result.error)
        written = {entry['path'] for entry in result.manifest['files']}
        for name in ('spectrum.json', 'perturbation.pmat', 'lacuna.json', 'bounds.json', 'determinant.json',
                     'sweep.csv', 'plot.csv', 'sweep.json', 'corollary.json'):
            self.assertIn(name, written)
        sweep = json.loads((self.out / 'b0' / 'sweep.json').read_text())
        self.assertEqual(sweep['max_deviation'], 0)
        corollary = json.loads((self.out / 'b0' / 'corollary.json').read_text())
        self.assertEqual(corollary['verdict'], 'inconclusive: deviations vanish')
        scales = sweep['comparison_scales']
        self.assertEqual(len(scales), sweep['records'])
        self.assertEqual((scales[0]['r'], scales[-1]['r']), (10.0, 60.0))
        self.assertTrue(all(entry['scales_coincide'] for entry in scales))

    def test_bound_reports_point_at_their_samples(self):
        sc = load_scenario({'truncation': 128, 'perturbation': 'zero', 'r_stop': 40.0,
                            'output_dir': str(self.out / 'samples')})
        result = run_scenario(sc, ('generate', 'subordination', 'noncondensing', 'lacuna', 'bounds'))
        self.assertTrue(result.passed, result.error)
        bounds = json.loads((self.out / 'samples' / 'bounds.json').read_text())
        written = {entry['path'] for entry in result.manifest['files']}
        paths = [strip['corrected_strip']['samples_path'] for strip in bounds['strips']]
        paths.append(bounds['parabola']['samples_path'])
        self.assertIn('parabola_samples.csv', paths)
        for path in paths:
            self.assertIn(path, written)
        rows = (self.out / 'samples' / 'parabola_samples.csv').read_text().splitlines()
        self.assertEqual(rows[0], 'lambda_re,lambda_im,value')
        self.assertEqual(len(rows) - 1, bounds['parabola']['sample_count'])

    def test_periodic_log_scenario_passes(self):
        result = run_config(SCENARIOS / 'periodic-log.json', output_dir=str(self.out / 'periodic'))
        self.assertEqual(result.exit_code, 0, result.error)
        determinant = json.loads((self.out / 'periodic' / 'determinant.json').read_text())
        self.assertTrue(determinant['radii'])
        self.assertTrue(all(entry['wa']['pass'] for entry in determinant['radii']))

    def test_infeasible_lacuna_is_recorded_and_the_sweep_still_runs(self):
        sc = load_scenario({'truncation': 128, 'beta': 0.4, 'b': 0.01, 'seed': 7,
                            'output_dir': str(self.out / 'no-radius')})
        result = run_scenario(sc)
        self.assertNotIn(result.stage, ('lacuna', 'bounds', 'determinant'), result.error)
        lacuna = json.loads((self.out / 'no-radius' / 'lacuna.json').read_text())
        self.assertEqual(lacuna['radii'], [])
        self.assertEqual(lacuna['skipped']['reason'], 'no admissible radius for the lacuna construction')
        self.assertGreater(lacuna['skipped']['strip_threshold'], lacuna['skipped']['trusted_range'])
        bounds = json.loads((self.out / 'no-radius' / 'bounds.json').read_text())
        self.assertEqual(bounds['parabola']['status'], 'inconclusive')
        written = {entry['path'] for entry in result.manifest['files']}
        self.assertTrue({'sweep.json', 'corollary.json'} <= written)

    def test_parabola_beyond_truncation_is_inconclusive(self):
        sc = load_scenario({'truncation': 128, 'beta': 0.2, 'b': 0.02, 'seed': 7,
                            'output_dir': str(self.out / 'parabola')})
        result = run_scenario(sc)
        self.assertNotEqual(result.stage, 'bounds', result.error)
        bounds = json.loads((self.out / 'parabola' / 'bounds.json').read_text())
        self.assertEqual(bounds['parabola']['status'], 'inconclusive')
        self.assertGreater(bounds['parabola']['sigma_h'], 0.9 * bounds['parabola']['mu_M'])
        self.assertIn('corollary.json', {entry['path'] for entry in result.manifest['files']})

    def test_numerical_exception_is_tagged_with_its_stage(self):
        def broken(state):
            raise np.linalg.LinAlgError("SVD did not converge")

        sc = load_scenario({'truncation': 64, 'r_stop': 30, 'output_dir': str(self.out / 'broken')})
        with mock.patch.dict(STAGE_FUNCTIONS, {'sweep': broken}):
            result = run_scenario(sc, ('generate', 'subordination', 'noncondensing', 'sweep'))
        self.assertEqual((result.exit_code, result.stage), (9, 'sweep'))
        failure = json.loads((self.out / 'broken' / 'failure.json').read_text())
        self.assertEqual(failure['error'], 'NumericalError')
        self.assertIn('LinAlgError', failure['details']['error'])
        manifest = json.loads((self.out / 'broken' / 'manifest.json').read_text())
        self.assertEqual(manifest['exit_code'], 9)

    def test_stage_subset(self):
        sc = load_scenario({'truncation': 64, 'output_dir': str(self.out / 'gen')})
        result = run_scenario(sc, ('generate', 'subordination', 'noncondensing'))
        self.assertTrue(result.passed)
        self.assertEqual(result.stage, 'noncondensing')
        self.assertFalse((self.out / 'gen' / 'sweep.csv').exists())

    def test_failing_stage_sets_exit_code_and_failure_report(self):
        sc = load_scenario({'truncation': 32, 'beta': 0.75, 'b': 0.1, 'output_dir': str(self.out / 'bad')})
        result = run_scenario(sc)
        self.assertEqual((result.exit_code, result.stage), (4, 'subordination'))
        failure = json.loads((self.out / 'bad' / 'failure.json').read_text())
        self.assertEqual(failure['message'], 'relative compactness not guaranteed')
        manifest = json.loads((self.out / 'bad' / 'manifest.json').read_text())
        self.assertEqual(manifest['exit_code'], 4)

    def test_same_seed_gives_identical_reports(self):
        hashes = []
        for run in ('one', 'two'):
            sc = load_scenario({'truncation': 64, 'b': 0.05, 'r_stop': 30, 'output_dir': str(self.out / run)})
            result = run_scenario(sc, ('generate', 'subordination', 'noncondensing', 'sweep'))
            self.assertTrue(result.passed, result.error)
            hashes.append({entry['path']: entry['sha256'] for entry in result.manifest['files']
                           if entry['path'] != 'scenario.json'})
        self.assertEqual(hashes[0], hashes[1])
