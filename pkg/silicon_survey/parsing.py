"""
Extraction of Likert ratings from raw model output.

Extraction has two stages. The strict stage reads the delimited block the prompt asks for. The fallback stage, used only
when no block with ratings exists, scans the whole text for "item N" / "N." / "N:" lines followed by an integer.
Failures are returned as data and never raised.
"""

import collections
import dataclasses
import re
from typing import Optional, Tuple

RATINGS_BEGIN = 'BEGIN RATINGS'
RATINGS_END = 'END RATINGS'

UNPARSEABLE = 'unparseable'
WRONG_COUNT = 'wrong_count'
OUT_OF_RANGE = 'out_of_range'

EXCERPT_LENGTH = 120

_BLOCK = re.compile(re.escape(RATINGS_BEGIN) + r'(.*?)' + re.escape(RATINGS_END), re.S | re.I)
_STRICT_LINE = re.compile(r'^[ \t]*(\d+)[ \t]*:[ \t]*(-?\d+)[ \t]*$', re.M)

# "3: 4", "Item 3 = 4", "3. 4", "- item 3: 4/6"
_FALLBACK_BARE = re.compile(r'^[ \t]*(?:[-*][ \t]*)?(?:item[ \t]*#?[ \t]*)?(\d+)[ \t]*[.:)=][ \t]*(-?\d+)[ \t]*(?:/[ \t]*\d+)?[ \t]*$',
                            re.M | re.I)
# "3. I value the benefits of exercise. - 5"
_FALLBACK_WORDED = re.compile(r'^[ \t]*(?:[-*][ \t]*)?(?:item[ \t]*#?[ \t]*)?(\d+)[ \t]*[.:)][ \t]+[^\d\n]*?(-?\d+)[ \t]*'
                              r'(?:/[ \t]*\d+)?[ \t]*\.?[ \t]*$', re.M | re.I)
# "Item 3: 4" anywhere in running text
_FALLBACK_INLINE = re.compile(r'\bitem[ \t]*#?[ \t]*(\d+)[ \t]*[:=][ \t]*(-?\d+)', re.I)


@dataclasses.dataclass(frozen=True)
class ParseFailure(object):
    failure_kind: str
    excerpt: str
    detail: str = ''


@dataclasses.dataclass(frozen=True)
class ParsedRatings(object):
    """
    @brief Either a complete ratings vector or a failure record, never both.
    """

    ratings: Optional[Tuple[int, ...]] = None
    failure: Optional[ParseFailure] = None
    stage: Optional[str] = None

    def __post_init__(self):
        if (self.ratings is None) == (self.failure is None):
            raise ValueError('ParsedRatings holds exactly one of ratings or failure')

    @property
    def ok(self):
        return self.ratings is not None

    def to_dict(self):
        if self.ok:
            return {'ratings': list(self.ratings), 'stage': self.stage}

        return {'failure_kind': self.failure.failure_kind, 'excerpt': self.failure.excerpt,
                'detail': self.failure.detail}

    @classmethod
    def from_dict(cls, data):
        if 'ratings' in data:
            return cls(ratings=tuple(data['ratings']), stage=data.get('stage'))

        return cls(failure=ParseFailure(data['failure_kind'], data.get('excerpt', ''), data.get('detail', '')))


def render_ratings(ratings):
    """
    @brief The canonical answer block the format instruction asks for.
    """

    lines = [RATINGS_BEGIN]
    lines.extend('{}: {}'.format(item_id, rating) for item_id, rating in enumerate(ratings, start=1))
    lines.append(RATINGS_END)
    return '\n'.join(lines)


def _excerpt(text):
    text = text.strip()
    return text if len(text) <= EXCERPT_LENGTH else text[:EXCERPT_LENGTH] + '...'


def _strict_pairs(raw_text):
    # The model may echo the instruction before answering, so prefer the last block that holds ratings
    for match in reversed(list(_BLOCK.finditer(raw_text))):
        pairs = [(int(item), int(rating), line.group(0)) for line in _STRICT_LINE.finditer(match.group(1))
                 for item, rating in [line.groups()]]
        if pairs:
            return pairs

    return []


def _fallback_pairs(raw_text):
    found = {}
    for pattern in (_FALLBACK_BARE, _FALLBACK_WORDED):
        for match in pattern.finditer(raw_text):
            found.setdefault(match.start(), (int(match.group(1)), int(match.group(2)), match.group(0)))

    if not found:
        for match in _FALLBACK_INLINE.finditer(raw_text):
            found[match.start()] = (int(match.group(1)), int(match.group(2)), match.group(0))

    return [found[position] for position in sorted(found)]


def _evaluate(pairs, instrument, stage):
    scale = instrument.scale

    for item_id, rating, line in pairs:
        if not scale.contains(rating):
            return ParsedRatings(failure=ParseFailure(
                OUT_OF_RANGE, _excerpt(line),
                'item {} rating {} is outside {}..{}'.format(item_id, rating, scale.min_rating, scale.max_rating)))

    counts = collections.Counter(item_id for item_id, _, _ in pairs)
    expected = set(instrument.item_ids)
    duplicated = sorted(item_id for item_id, count in counts.items() if count > 1)
    missing = sorted(expected - set(counts))
    unknown = sorted(set(counts) - expected)

    if duplicated or missing or unknown:
        detail = 'recovered {} of {} ratings'.format(len(pairs), instrument.item_count)
        if missing:
            detail += '; missing items {}'.format(missing)
        if duplicated:
            detail += '; repeated items {}'.format(duplicated)
        if unknown:
            detail += '; unknown items {}'.format(unknown)

        return ParsedRatings(failure=ParseFailure(WRONG_COUNT, _excerpt('\n'.join(line for _, _, line in pairs)),
                                                  detail))

    by_item = {item_id: rating for item_id, rating, _ in pairs}
    return ParsedRatings(ratings=tuple(by_item[item_id] for item_id in instrument.item_ids), stage=stage)


def parse_ratings(raw_text, instrument):
    """
    @brief Recover one rating per instrument item from model output.

    @param raw_text The model's reply
    @param instrument The SurveyInstrument answered
    @return A ParsedRatings holding the vector in item order or a failure record
    """

    raw_text = raw_text or ''

    pairs = _strict_pairs(raw_text)
    if pairs:
        return _evaluate(pairs, instrument, 'strict')

    pairs = _fallback_pairs(raw_text)
    if pairs:
        return _evaluate(pairs, instrument, 'fallback')

    return ParsedRatings(failure=ParseFailure(UNPARSEABLE, _excerpt(raw_text), 'no candidate ratings found'))
