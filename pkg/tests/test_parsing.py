"""
Unit tests for parsing.py.
"""

import logging
import unittest

import numpy as np

from silicon_survey import parsing, survey

logging.basicConfig(level=logging.CRITICAL)

PREAMBLES = (
    '',
    'Sure! Here are my answers as this person.\n\n',
    'Thinking about my week, I would answer like this:\n',
    'Please reply with BEGIN RATINGS and END RATINGS.\n\nOkay.\n\n',
)


class TestRoundTrip(unittest.TestCase):
    def setUp(self):
        self.instrument = survey.load_instrument()
        self.rng = np.random.default_rng(20250401)

    def test_random_vectors(self):
        for trial in range(10000):
            ratings = tuple(int(r) for r in self.rng.integers(1, 7, size=self.instrument.item_count))
            text = PREAMBLES[trial % len(PREAMBLES)] + parsing.render_ratings(ratings) + '\nThanks.'

            parsed = parsing.parse_ratings(text, self.instrument)
            self.assertTrue(parsed.ok, parsed.failure)
            self.assertEqual(parsed.ratings, ratings)
            self.assertEqual(parsed.stage, 'strict')

    def test_preamble_does_not_change_result(self):
        ratings = (2, 3, 1, 4, 6, 5, 2, 3, 4, 1, 6, 5, 3, 2, 4)
        bare = parsing.parse_ratings(parsing.render_ratings(ratings), self.instrument)

        for preamble in PREAMBLES:
            self.assertEqual(parsing.parse_ratings(preamble + parsing.render_ratings(ratings), self.instrument), bare)

    def test_last_block_wins(self):
        first = (1,) * 15
        second = (6,) * 15
        text = parsing.render_ratings(first) + '\nActually, let me correct that.\n' + parsing.render_ratings(second)

        self.assertEqual(parsing.parse_ratings(text, self.instrument).ratings, second)

    def test_dict_round_trip(self):
        parsed = parsing.parse_ratings(parsing.render_ratings((3,) * 15), self.instrument)
        self.assertEqual(parsing.ParsedRatings.from_dict(parsed.to_dict()), parsed)

        failed = parsing.parse_ratings('no idea', self.instrument)
        self.assertEqual(parsing.ParsedRatings.from_dict(failed.to_dict()), failed)


class TestMalformed(unittest.TestCase):
    def setUp(self):
        self.instrument = survey.load_instrument()
        self.rng = np.random.default_rng(7)
        self.ratings = (1, 1, 2, 1, 3, 2, 2, 6, 5, 6, 4, 6, 5, 6, 6)

    def lines(self):
        return parsing.render_ratings(self.ratings).splitlines()

    def assertFailure(self, text, kind):
        parsed = parsing.parse_ratings(text, self.instrument)
        self.assertFalse(parsed.ok)
        self.assertIsNone(parsed.ratings)
        self.assertEqual(parsed.failure.failure_kind, kind)
        return parsed.failure

    def test_out_of_range(self):
        lines = self.lines()
        lines[4] = '4: 7'

        failure = self.assertFailure('\n'.join(lines), parsing.OUT_OF_RANGE)
        self.assertIn('item 4', failure.detail)
        self.assertIn('rating 7', failure.detail)

    def test_random_out_of_range(self):
        for _ in range(200):
            lines = self.lines()
            item = int(self.rng.integers(1, 16))
            rating = int(self.rng.choice([0, 7, 8, 12, -1]))
            lines[item] = '{}: {}'.format(item, rating)

            self.assertFailure('\n'.join(lines), parsing.OUT_OF_RANGE)

    def test_missing_line(self):
        for _ in range(100):
            lines = self.lines()
            del lines[int(self.rng.integers(1, 16))]

            failure = self.assertFailure('\n'.join(lines), parsing.WRONG_COUNT)
            self.assertIn('missing items', failure.detail)

    def test_repeated_line(self):
        lines = self.lines()
        lines.insert(3, lines[2])

        failure = self.assertFailure('\n'.join(lines), parsing.WRONG_COUNT)
        self.assertIn('repeated items [2]', failure.detail)

    def test_extra_item(self):
        lines = self.lines()
        lines.insert(-1, '16: 3')

        failure = self.assertFailure('\n'.join(lines), parsing.WRONG_COUNT)
        self.assertIn('unknown items [16]', failure.detail)

    def test_garbage(self):
        for text in ('', 'I would rather not answer.', 'BEGIN RATINGS\nEND RATINGS', 'lorem ipsum ' * 50):
            self.assertFailure(text, parsing.UNPARSEABLE)

    def test_excerpt_is_bounded(self):
        failure = self.assertFailure('x' * 1000, parsing.UNPARSEABLE)
        self.assertLessEqual(len(failure.excerpt), parsing.EXCERPT_LENGTH + 3)

    def test_exclusive_outcome(self):
        with self.assertRaises(ValueError):
            parsing.ParsedRatings()

        with self.assertRaises(ValueError):
            parsing.ParsedRatings(ratings=(1,), failure=parsing.ParseFailure(parsing.UNPARSEABLE, ''))


class TestFallback(unittest.TestCase):
    def setUp(self):
        self.instrument = survey.load_instrument()
        self.ratings = (4, 5, 3, 4, 2, 1, 1, 4, 3, 4, 1, 2, 2, 2, 2)

    def test_numbered_list(self):
        text = 'My answers:\n' + '\n'.join('{}. {}'.format(i, r) for i, r in enumerate(self.ratings, start=1))

        parsed = parsing.parse_ratings(text, self.instrument)
        self.assertEqual(parsed.ratings, self.ratings)
        self.assertEqual(parsed.stage, 'fallback')

    def test_item_labels(self):
        text = '\n'.join('Item {} = {}/6'.format(i, r) for i, r in enumerate(self.ratings, start=1))
        self.assertEqual(parsing.parse_ratings(text, self.instrument).ratings, self.ratings)

    def test_echoed_statements(self):
        lines = ['{}. {} - {}'.format(item.item_id, item.text.rstrip('.'), rating)
                 for item, rating in zip(self.instrument.items, self.ratings)]
        self.assertEqual(parsing.parse_ratings('\n'.join(lines), self.instrument).ratings, self.ratings)

    def test_inline(self):
        text = 'For this person: ' + ', '.join('item {}: {}'.format(i, r) for i, r in enumerate(self.ratings, start=1))
        self.assertEqual(parsing.parse_ratings(text, self.instrument).ratings, self.ratings)


if __name__ == '__main__':
    unittest.main()
