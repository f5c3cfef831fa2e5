"""
Unit tests for survey.py.
"""

import logging
import os
import tempfile
import unittest

import numpy as np

from silicon_survey import survey
from silicon_survey.errors import ConfigurationError, StructuralError

logging.basicConfig(level=logging.CRITICAL)


def _ratings(external, introjected, identified, intrinsic):
    return (external,) * 4 + (introjected,) * 3 + (identified,) * 4 + (intrinsic,) * 4


def _instrument_data():
    return survey.load_instrument().model_dump()


class TestInstrument(unittest.TestCase):
    def setUp(self):
        self.instrument = survey.load_instrument()

    def test_bundled_breq(self):
        self.assertEqual(self.instrument.item_count, 15)
        self.assertEqual(self.instrument.item_ids, tuple(range(1, 16)))
        self.assertEqual([s.subscale_id for s in self.instrument.subscales],
                         ['external', 'introjected', 'identified', 'intrinsic'])
        self.assertEqual([s.rai_weight for s in self.instrument.subscales], [-2, -1, 1, 2])
        self.assertEqual(self.instrument.scale.min_rating, 1)
        self.assertEqual(self.instrument.scale.max_rating, 6)
        self.assertAlmostEqual(self.instrument.scale.midpoint, 3.5)

    def test_bundled_breq_is_valid(self):
        self.assertListEqual(survey.validate_instrument(self.instrument), [])

    def test_negative_items(self):
        negative = [item.item_id for item in self.instrument.items if item.valence_tag == 'negative']
        self.assertListEqual(negative, [6, 7, 11])

    def test_item_in_two_subscales(self):
        data = _instrument_data()
        data['subscales'][1]['item_ids'] = [4, 5, 6, 7]
        instrument = survey.SurveyInstrument.model_validate(data)

        messages = [str(v) for v in survey.validate_instrument(instrument, 'breq.yaml')]
        self.assertTrue(any('item 4' in m and 'several subscales' in m for m in messages), messages)

    def test_item_in_no_subscale(self):
        data = _instrument_data()
        data['subscales'][3]['item_ids'] = [12, 13, 14]
        instrument = survey.SurveyInstrument.model_validate(data)

        messages = [str(v) for v in survey.validate_instrument(instrument)]
        self.assertTrue(any('item 15' in m and 'no subscale' in m for m in messages), messages)
        self.assertTrue(any('BREQ expects 4' in m for m in messages), messages)

    def test_dangling_and_unknown_references(self):
        data = _instrument_data()
        data['subscales'][0]['item_ids'] = [1, 2, 3, 4, 99]
        data['items'][0]['subscale_id'] = 'nowhere'
        instrument = survey.SurveyInstrument.model_validate(data)

        messages = [str(v) for v in survey.validate_instrument(instrument)]
        self.assertTrue(any('item 99' in m for m in messages), messages)
        self.assertTrue(any('unknown subscale nowhere' in m for m in messages), messages)

    def test_bad_scale(self):
        data = _instrument_data()
        data['scale'] = {'min_rating': 6, 'max_rating': 1, 'labels': []}
        instrument = survey.SurveyInstrument.model_validate(data)

        locations = [v.location for v in survey.validate_instrument(instrument)]
        self.assertIn('scale', locations)

    def test_item_ids_follow_positions(self):
        data = _instrument_data()
        data['items'][0]['item_id'], data['items'][1]['item_id'] = 2, 1
        instrument = survey.SurveyInstrument.model_validate(data)

        messages = [str(v) for v in survey.validate_instrument(instrument)]
        self.assertTrue(any('1-based position' in m for m in messages), messages)

    def test_load_missing_file(self):
        with self.assertRaises(ConfigurationError):
            survey.load_instrument('/nonexistent/breq.yaml')

    def test_load_malformed_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = os.path.join(tmp, 'bad.yaml')
            with open(path, 'w') as handle:
                handle.write('name: X\nitems: [\n')

            with self.assertRaises(ConfigurationError):
                survey.load_instrument(path)


class TestRoster(unittest.TestCase):
    def setUp(self):
        self.instrument = survey.load_instrument()
        self.roster = survey.load_roster()

    def test_bundled_roster(self):
        self.assertEqual(self.roster.respondent_ids, ('S001', 'S002', 'S003'))
        self.assertListEqual(survey.validate_roster(self.roster, self.instrument), [])

        respondent = self.roster.get('S001')
        self.assertEqual(respondent.demographics['age'], '29')
        self.assertTrue(respondent.interview_transcript.strip())

    def test_rating_out_of_bounds(self):
        respondent = survey.Respondent(respondent_id='X', observed_ratings=(0,) + (3,) * 14)

        violations = survey.validate_respondent(respondent, self.instrument, 'roster.yaml')
        self.assertEqual(len(violations), 1)
        self.assertEqual(violations[0].location, 'respondent X item 1')
        self.assertIn('rating 0', violations[0].message)

    def test_wrong_length(self):
        respondent = survey.Respondent(respondent_id='X', observed_ratings=(3,) * 14)

        violations = survey.validate_respondent(respondent, self.instrument)
        self.assertEqual(len(violations), 1)
        self.assertIn('14 observed ratings', violations[0].message)

    def test_no_observed_ratings(self):
        respondent = survey.Respondent(respondent_id='X')
        self.assertListEqual(survey.validate_respondent(respondent, self.instrument), [])

    def test_duplicate_ids(self):
        roster = survey.Roster(respondents=(survey.Respondent(respondent_id='A'), survey.Respondent(respondent_id='A')))

        messages = [v.message for v in survey.validate_roster(roster, self.instrument)]
        self.assertIn('respondent id appears 2 times', messages)

    def test_missing_respondent(self):
        with self.assertRaises(KeyError):
            self.roster.get('nobody')


class TestScoring(unittest.TestCase):
    def setUp(self):
        self.instrument = survey.load_instrument()

    def test_subscale_mean(self):
        ratings = (1, 2, 3, 4) + (5,) * 11
        self.assertAlmostEqual(survey.subscale_mean(ratings, self.instrument.subscale('external')), 2.5)

    def test_subscale_mean_out_of_range(self):
        with self.assertRaises(StructuralError):
            survey.subscale_mean((1, 2, 3), self.instrument.subscale('intrinsic'))

    def test_subscale_means_length(self):
        with self.assertRaises(StructuralError):
            survey.subscale_means((1,) * 14, self.instrument)

    def test_rai_hand_case(self):
        self.assertEqual(survey.rai(_ratings(1, 2, 5, 6), self.instrument), 13)

    def test_rai_constant_vector(self):
        for rating in self.instrument.scale.points:
            self.assertEqual(survey.rai((rating,) * 15, self.instrument), 0)

    def test_rai_from_means(self):
        means = {'external': 1., 'introjected': 2., 'identified': 5., 'intrinsic': 6.}
        self.assertAlmostEqual(survey.rai_from_means(means, self.instrument), 13.)

    def test_rai_without_weights(self):
        data = _instrument_data()
        data['subscales'][0]['rai_weight'] = None
        instrument = survey.SurveyInstrument.model_validate(data)

        with self.assertRaises(ConfigurationError):
            survey.rai((3,) * 15, instrument)


class TestScoringProperties(unittest.TestCase):
    """
    Randomized checks of the scoring invariants against independent loops.
    """

    def setUp(self):
        self.instrument = survey.load_instrument()
        self.rng = np.random.default_rng(20250401)

    def random_ratings(self):
        scale = self.instrument.scale
        return tuple(int(r) for r in self.rng.integers(scale.min_rating, scale.max_rating + 1,
                                                       size=self.instrument.item_count))

    def brute_mean(self, ratings, subscale):
        total = 0
        for item_id in subscale.item_ids:
            total += ratings[item_id - 1]
        return total / len(subscale.item_ids)

    def test_subscale_mean_matches_loop(self):
        for _ in range(500):
            ratings = self.random_ratings()
            for subscale in self.instrument.subscales:
                self.assertAlmostEqual(survey.subscale_mean(ratings, subscale), self.brute_mean(ratings, subscale))

    def test_subscale_mean_within_scale(self):
        scale = self.instrument.scale
        for _ in range(1000):
            ratings = self.random_ratings()
            for subscale in self.instrument.subscales:
                mean = survey.subscale_mean(ratings, subscale)
                self.assertGreaterEqual(mean, scale.min_rating)
                self.assertLessEqual(mean, scale.max_rating)

    def test_rai_is_linear(self):
        for _ in range(500):
            first, second = self.random_ratings(), self.random_ratings()

            expected = 0.
            for subscale in self.instrument.subscales:
                summed = self.brute_mean(first, subscale) + self.brute_mean(second, subscale)
                expected += subscale.rai_weight * summed

            self.assertAlmostEqual(survey.rai(first, self.instrument) + survey.rai(second, self.instrument), expected)

            means = {subscale.subscale_id: self.brute_mean(first, subscale) + self.brute_mean(second, subscale)
                     for subscale in self.instrument.subscales}
            self.assertAlmostEqual(survey.rai_from_means(means, self.instrument), expected)

    def test_zero_weights(self):
        data = _instrument_data()
        for subscale in data['subscales']:
            subscale['rai_weight'] = 0.
        instrument = survey.SurveyInstrument.model_validate(data)

        for _ in range(50):
            self.assertEqual(survey.rai(self.random_ratings(), instrument), 0)

    def test_hand_means(self):
        ratings = [4] * 15
        for subscale in self.instrument.subscales:
            self.assertEqual(survey.subscale_mean(ratings, subscale), 4.)

        introjected = self.instrument.subscale('introjected')
        for item_id, rating in zip(introjected.item_ids, (2, 4, 6)):
            ratings[item_id - 1] = rating
        self.assertAlmostEqual(survey.subscale_mean(ratings, introjected), 4.)


def _break_item_id(data, rng):
    index = int(rng.integers(len(data['items'])))
    data['items'][index]['item_id'] = int(rng.integers(100, 200))


def _break_item_subscale(data, rng):
    item = data['items'][int(rng.integers(len(data['items'])))]
    others = [s['subscale_id'] for s in data['subscales'] if s['subscale_id'] != item['subscale_id']]
    item['subscale_id'] = others[int(rng.integers(len(others)))]


def _drop_member(data, rng):
    subscale = data['subscales'][int(rng.integers(len(data['subscales'])))]
    item_ids = list(subscale['item_ids'])
    del item_ids[int(rng.integers(len(item_ids)))]
    subscale['item_ids'] = item_ids


def _add_dangling_member(data, rng):
    subscale = data['subscales'][int(rng.integers(len(data['subscales'])))]
    subscale['item_ids'] = list(subscale['item_ids']) + [int(rng.integers(16, 100))]


def _duplicate_subscale_id(data, rng):
    first, second = rng.choice(len(data['subscales']), size=2, replace=False)
    data['subscales'][int(first)]['subscale_id'] = data['subscales'][int(second)]['subscale_id']


def _drop_label(data, rng):
    labels = list(data['scale']['labels'])
    del labels[int(rng.integers(len(labels)))]
    data['scale']['labels'] = labels


def _collapse_scale(data, rng):
    data['scale']['max_rating'] = data['scale']['min_rating'] - int(rng.integers(0, 3))


MUTATIONS = (_break_item_id, _break_item_subscale, _drop_member, _add_dangling_member, _duplicate_subscale_id,
             _drop_label, _collapse_scale)


class TestValidationProperties(unittest.TestCase):
    def test_default_is_clean(self):
        self.assertListEqual(survey.validate_instrument(survey.load_instrument()), [])

    def test_single_mutation_is_reported(self):
        rng = np.random.default_rng(7)

        for trial in range(200):
            mutation = MUTATIONS[trial % len(MUTATIONS)]
            data = _instrument_data()
            mutation(data, rng)
            instrument = survey.SurveyInstrument.model_validate(data)

            with self.subTest(trial=trial, mutation=mutation.__name__):
                self.assertNotEqual(survey.validate_instrument(instrument), [])


class TestResponseMatrix(unittest.TestCase):
    def setUp(self):
        self.instrument = survey.load_instrument()

    def test_from_roster(self):
        matrix = survey.ResponseMatrix.from_roster(survey.load_roster(), self.instrument)

        self.assertEqual(matrix.source, survey.HUMAN)
        self.assertEqual(len(matrix), 3)
        self.assertEqual(matrix.as_array().shape, (3, 15))
        self.assertEqual(matrix.row('S003')[0], 4)

    def test_rejects_bad_rows(self):
        with self.assertRaises(StructuralError):
            survey.ResponseMatrix('x', {'A': (3,) * 14}, self.instrument)

        with self.assertRaises(StructuralError):
            survey.ResponseMatrix('x', {'A': (7,) + (3,) * 14}, self.instrument)

    def test_restricted_keeps_order_and_exclusions(self):
        rows = {'A': (1,) * 15, 'B': (2,) * 15, 'C': (3,) * 15}
        matrix = survey.ResponseMatrix('x', rows, self.instrument, exclusions=[('D', 'parse_failed')])

        restricted = matrix.restricted(['C', 'A'])
        self.assertEqual(restricted.respondent_ids, ('C', 'A'))
        self.assertEqual(restricted.exclusions, (('D', 'parse_failed'),))
        np.testing.assert_array_equal(restricted.as_array()[:, 0], [3., 1.])
        self.assertNotIn('B', restricted)


if __name__ == '__main__':
    unittest.main()
