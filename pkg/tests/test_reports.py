"""
Unit tests for reports.py.
"""

import json
import logging
import pathlib
import tempfile
import unittest

import pandas as pd

from silicon_survey import design, documents, parsing, prompts, providers, reports, runner, store, survey
from silicon_survey.errors import EmptyMatrixError, PartialDataError

logging.basicConfig(level=logging.CRITICAL)

BACKEND = 'approximate'


class ReportsTestCase(unittest.TestCase):
    @classmethod
    def setUpClass(cls):
        cls.directory = tempfile.TemporaryDirectory()
        cls.root = pathlib.Path(cls.directory.name)

        cls.instrument = survey.load_instrument()
        cls.roster = survey.load_roster()
        cls.manifest = design.load_manifest(documents.bundled_path('manifest_mock.yaml'))

        built = runner.build_providers(cls.manifest, providers.load_providers(), cls.instrument, environ={})
        cls.complete_path = cls.root / 'complete.jsonl'
        with store.RunStore(cls.complete_path) as run_store:
            runner.execute_run(cls.manifest, run_store, built, cls.roster, cls.instrument,
                               prompts.PromptTemplate.load(), prompts.load_background(), backend=BACKEND, workers=4)

    @classmethod
    def tearDownClass(cls):
        cls.directory.cleanup()

    def copy_store(self, name, keep=None, replace=()):
        """
        A copy of the complete store, keeping the records ``keep`` accepts and failing the ``replace`` conditions.
        """

        path = self.root / name
        with store.RunStore(path) as copy:
            for record in store.RunStore(self.complete_path).records():
                if record.key.condition in replace:
                    copy.append(store.RunRecord(record.key, store.TRANSPORT_FAILED, record.prompt_digest,
                                                record.token_count, error='gave up'))
                elif keep is None or keep(record):
                    copy.append(record)

        return store.RunStore(path)

    def write(self, run_store, out_name, **options):
        return reports.write_reports(run_store, self.manifest, self.roster, self.instrument, self.root / out_name,
                                     backend=BACKEND, **options)


class TestWriteReports(ReportsTestCase):
    def test_row_counts(self):
        result = self.write(store.RunStore(self.complete_path), 'full')
        out = result.out_dir

        expected = {'item_stats.csv': 24 * 15 + 15, 'rmse_item.csv': 24 * 15, 'rmse_person.csv': 24 * 3,
                    'rmse_test.csv': 24, 'correlations_pairs.csv': 8, 'correlations_human.csv': 3 * 4 * 3,
                    'anova.csv': 4}
        for name, rows in expected.items():
            self.assertEqual(len(pd.read_csv(out / name)), rows, name)

        self.assertEqual(len(result.files), 8)
        self.assertListEqual(list(pd.read_csv(out / 'item_stats.csv').columns), list(reports.ITEM_STATS_COLUMNS))
        self.assertListEqual(list(pd.read_csv(out / 'anova.csv')['factor']),
                             ['pair', 'prompt', 'temperature', 'residual'])
        self.assertListEqual(list(pd.read_csv(out / 'anova.csv')['df']), [2, 3, 1, 17])

    def test_pairs_table(self):
        out = self.write(store.RunStore(self.complete_path), 'pairs').out_dir
        pairs = pd.read_csv(out / 'correlations_pairs.csv')

        self.assertListEqual(list(pairs.columns), ['temperature', 'variant', 'rho_mock-gpt_mock-claude',
                                                   'rho_mock-gpt_mock-gemini', 'rho_mock-claude_mock-gemini'])

        # Mock chatbots answer alike without jitter
        cold = pairs[pairs['temperature'] == 0.]
        self.assertEqual(len(cold), 4)
        for column in pairs.columns[2:]:
            for value in cold[column]:
                self.assertAlmostEqual(value, 1., delta=1e-12)

    def test_human_table(self):
        out = self.write(store.RunStore(self.complete_path), 'human').out_dir
        human = pd.read_csv(out / 'correlations_human.csv', dtype={'temperature': str})

        self.assertListEqual(list(human['temperature'][:3]), ['0.0', '0.5', reports.COLLAPSED_TEMPERATURE])
        self.assertEqual(set(human['chatbot']), {'mock-gpt', 'mock-claude', 'mock-gemini'})

    def test_summary(self):
        result = self.write(store.RunStore(self.complete_path), 'summary')
        summary = json.loads((result.out_dir / 'summary.json').read_text())

        self.assertEqual(summary['manifest_id'], 'breq-mock')
        self.assertEqual(summary['tokenizer_backend'], BACKEND)
        self.assertEqual(summary['correlation_mode'], 'flattened')
        self.assertEqual(summary['human_n'], 3)
        self.assertEqual(len(summary['effective_n']), 24)
        self.assertTrue(all(n == 3 for n in summary['effective_n'].values()))
        self.assertListEqual(summary['exclusions'], [])
        self.assertListEqual(summary['missing_keys'], [])
        self.assertIsNone(summary['anova_error'])
        self.assertEqual(summary['interview_length_association']['n'], 3)
        self.assertEqual(set(summary['factor_means']), {'temperature', 'variant', 'interview'})
        self.assertEqual(set(summary['valence_rmse']['mock-gpt|P_BR|0.0']), {'positive', 'negative'})

    def test_reproducible(self):
        first = self.write(store.RunStore(self.complete_path), 'first', plot_data=True)
        second = self.write(store.RunStore(self.complete_path), 'second', plot_data=True)

        self.assertEqual(len(first.files), len(second.files))
        for a, b in zip(first.files, second.files):
            self.assertEqual(a.name, b.name)
            self.assertEqual(a.read_bytes(), b.read_bytes(), a.name)

    def test_plot_data(self):
        result = self.write(store.RunStore(self.complete_path), 'plots', plot_data=True)
        plots = result.out_dir / 'plot_data'

        for name in ('item_means', 'item_variances', 'human_correlations', 'item_rmse', 'person_rmse', 'test_rmse'):
            frame = pd.read_csv(plots / '{}.csv'.format(name))
            self.assertListEqual(list(frame.columns), list(reports.PLOT_COLUMNS))
            self.assertTrue(len(frame) > 0)

        self.assertEqual(len(pd.read_csv(plots / 'test_rmse.csv')), 24)

    def test_per_respondent(self):
        result = self.write(store.RunStore(self.complete_path), 'per_respondent', per_respondent=True)
        self.assertEqual(result.summary['correlation_mode'], 'per_respondent')
        self.assertEqual(len(pd.read_csv(result.out_dir / 'correlations_pairs.csv')), 8)


class TestIncompleteStores(ReportsTestCase):
    def test_empty_store(self):
        with self.assertRaises(EmptyMatrixError):
            self.write(store.RunStore(self.root / 'empty.jsonl'), 'empty')

    def test_gaps(self):
        dropped = design.Condition('mock-claude', 'P_BR_DI', .5)
        partial = self.copy_store('partial.jsonl', keep=lambda record: record.key.condition != dropped)

        with self.assertRaises(PartialDataError) as caught:
            self.write(partial, 'refused')
        self.assertEqual(len(caught.exception.gaps), 3)
        self.assertFalse((self.root / 'refused').exists())

        result = self.write(partial, 'partial', partial=True)
        self.assertEqual(len(result.summary['missing_keys']), 3)
        self.assertIn(dropped.label, result.summary['excluded_conditions'])

    def test_failed_condition(self):
        failed = design.Condition('mock-gemini', 'P_BR', 0.)
        run_store = self.copy_store('failed.jsonl', replace=[failed])

        result = self.write(run_store, 'failed')
        summary = result.summary

        self.assertListEqual(summary['excluded_conditions'], [failed.label])
        self.assertEqual(len([e for e in summary['exclusions'] if e['condition'] == failed.label]), 3)
        self.assertNotIn(failed.label, summary['effective_n'])
        self.assertIsNotNone(summary['anova_error'])

        anova = pd.read_csv(result.out_dir / 'anova.csv')
        self.assertEqual(len(anova), 0)
        self.assertListEqual(list(anova.columns), list(reports.ANOVA_COLUMNS))

        pairs = (result.out_dir / 'correlations_pairs.csv').read_text().splitlines()
        self.assertIn('NA', pairs[1])
        self.assertEqual(len(pd.read_csv(result.out_dir / 'rmse_test.csv')), 23)

    def test_parse_failures_are_excluded(self):
        condition = design.Condition('mock-gpt', 'P_BR_PI', .5)
        path = self.root / 'unreadable.jsonl'
        with store.RunStore(path) as copy:
            for record in store.RunStore(self.complete_path).records():
                if record.key.condition == condition and record.key.respondent_id == 'S002':
                    failed = parsing.parse_ratings('no', self.instrument)
                    record = store.RunRecord(record.key, store.PARSE_FAILED, record.prompt_digest, record.token_count,
                                             raw_text='no', parsed=failed)
                copy.append(record)

        result = self.write(store.RunStore(path), 'unreadable')

        self.assertEqual(result.summary['effective_n'][condition.label], 2)
        self.assertIn({'condition': condition.label, 'respondent_id': 'S002', 'reason': store.PARSE_FAILED},
                      result.summary['exclusions'])
        self.assertIsNone(result.summary['anova_error'])


if __name__ == '__main__':
    unittest.main()
