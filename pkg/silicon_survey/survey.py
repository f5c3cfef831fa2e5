"""
Survey instruments, respondents and response matrices, plus subscale scoring and the relative autonomy index.
"""

import collections
import dataclasses
from typing import Dict, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator

from silicon_survey import documents
from silicon_survey.errors import ConfigurationError, StructuralError

# Source label for observed (human) response matrices
HUMAN = 'human'

# Item and subscale split of the Behavioral Regulations in Exercise Questionnaire
BREQ_ITEM_COUNT = 15
BREQ_SUBSCALE_SIZES = {'external': 4, 'introjected': 3, 'identified': 4, 'intrinsic': 4}


@dataclasses.dataclass(frozen=True)
class Violation(object):
    """
    @brief One broken invariant found while validating a definition file.
    """

    source: str
    location: str
    message: str

    def __str__(self):
        return '{}: {}: {}'.format(self.source, self.location, self.message)


class _Definition(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')


class LikertScale(_Definition):
    """
    @brief Bounds and point labels of a rating scale.
    """

    min_rating: int = 1
    max_rating: int = 6
    labels: Tuple[str, ...] = ()

    @property
    def midpoint(self):
        return (self.min_rating + self.max_rating) / 2.

    @property
    def points(self):
        return range(self.min_rating, self.max_rating + 1)

    def contains(self, rating):
        return self.min_rating <= rating <= self.max_rating


class SurveyItem(_Definition):
    item_id: int
    text: str
    subscale_id: str
    valence_tag: Optional[Literal['positive', 'negative', 'neutral']] = None


class Subscale(_Definition):
    """
    @brief A named group of items whose mean forms a component score.

    The RAI weight is data so that other weighting conventions are a definition-file edit.
    """

    subscale_id: str
    item_ids: Tuple[int, ...]
    rai_weight: Optional[float] = None


class SurveyInstrument(_Definition):
    """
    @brief The measurement definition everything else validates against.

    Item ids are 1-based positions, so the rating for item ``k`` lives at index ``k - 1`` of a rating vector.
    """

    name: str
    scale: LikertScale = LikertScale()
    items: Tuple[SurveyItem, ...]
    subscales: Tuple[Subscale, ...]

    @property
    def item_count(self):
        return len(self.items)

    @property
    def item_ids(self):
        return tuple(item.item_id for item in self.items)

    def item(self, item_id):
        for item in self.items:
            if item.item_id == item_id:
                return item

        raise KeyError(item_id)

    def subscale(self, subscale_id):
        for subscale in self.subscales:
            if subscale.subscale_id == subscale_id:
                return subscale

        raise KeyError(subscale_id)


class Respondent(_Definition):
    respondent_id: str
    interview_transcript: str = ''
    demographics: Dict[str, str] = {}
    observed_ratings: Optional[Tuple[int, ...]] = None

    @field_validator('respondent_id', mode='before')
    @classmethod
    def _id_as_text(cls, value):
        return value if isinstance(value, str) else str(value)

    @field_validator('demographics', mode='before')
    @classmethod
    def _values_as_text(cls, value):
        # YAML reads "age: 34" as an integer
        if isinstance(value, dict):
            return {str(key): '' if val is None else str(val) for key, val in value.items()}

        return value

    @field_validator('interview_transcript', mode='before')
    @classmethod
    def _transcript_as_text(cls, value):
        return '' if value is None else value


class Roster(_Definition):
    """
    @brief The respondents of one study, in file order.
    """

    respondents: Tuple[Respondent, ...]

    @property
    def respondent_ids(self):
        return tuple(respondent.respondent_id for respondent in self.respondents)

    def get(self, respondent_id):
        for respondent in self.respondents:
            if respondent.respondent_id == respondent_id:
                return respondent

        raise KeyError(respondent_id)

    def __len__(self):
        return len(self.respondents)

    def __iter__(self):
        return iter(self.respondents)


def load_instrument(path=None):
    """
    Load an instrument definition file; the bundled BREQ is used when no path is given.
    """

    return documents.load_document(path or documents.bundled_path('breq.yaml'), SurveyInstrument)


def load_roster(path=None):
    return documents.load_document(path or documents.bundled_path('roster_synthetic.yaml'), Roster)


def validate_instrument(instrument, source='instrument'):
    """
    @brief Check every instrument invariant and report all violations.

    Violations are data: this never raises for a structurally odd instrument.

    @param instrument The SurveyInstrument to check
    @param source Label used in each Violation (normally the file name)
    @return A list of Violations; empty iff the instrument is valid
    """

    violations = []

    def report(location, message):
        violations.append(Violation(source, location, message))

    scale = instrument.scale
    if scale.min_rating >= scale.max_rating:
        report('scale', 'min_rating {} must be below max_rating {}'.format(scale.min_rating, scale.max_rating))
    elif len(scale.labels) != scale.max_rating - scale.min_rating + 1:
        report('scale.labels', 'expected {} labels but got {}'.format(scale.max_rating - scale.min_rating + 1,
                                                                      len(scale.labels)))

    subscale_ids = collections.Counter(subscale.subscale_id for subscale in instrument.subscales)
    for subscale_id, count in subscale_ids.items():
        if count > 1:
            report('subscale {}'.format(subscale_id), 'subscale id is defined {} times'.format(count))

    item_counts = collections.Counter(item.item_id for item in instrument.items)
    for position, item in enumerate(instrument.items, start=1):
        location = 'item {}'.format(item.item_id)
        if item_counts[item.item_id] > 1:
            report(location, 'item id is not unique')
        if item.item_id != position:
            report(location, 'item id does not match its 1-based position {}'.format(position))
        if item.subscale_id not in subscale_ids:
            report(location, 'refers to unknown subscale {}'.format(item.subscale_id))

    membership = collections.defaultdict(list)
    for subscale in instrument.subscales:
        location = 'subscale {}'.format(subscale.subscale_id)
        if not subscale.item_ids:
            report(location, 'has no items')

        for item_id in subscale.item_ids:
            if item_id not in item_counts:
                report(location, 'refers to item {} which does not exist'.format(item_id))
            else:
                membership[item_id].append(subscale.subscale_id)

    for item in instrument.items:
        owners = membership.get(item.item_id, [])
        location = 'item {}'.format(item.item_id)
        if not owners:
            report(location, 'belongs to no subscale')
        elif len(owners) > 1:
            report(location, 'belongs to several subscales: {}'.format(', '.join(owners)))
        elif owners[0] != item.subscale_id:
            report(location, 'declares subscale {} but is listed under {}'.format(item.subscale_id, owners[0]))

    if instrument.name.strip().upper().startswith('BREQ'):
        if instrument.item_count != BREQ_ITEM_COUNT:
            report('items', 'BREQ has {} items but {} were defined'.format(BREQ_ITEM_COUNT, instrument.item_count))

        sizes = {subscale.subscale_id: len(subscale.item_ids) for subscale in instrument.subscales}
        for subscale_id, size in BREQ_SUBSCALE_SIZES.items():
            if sizes.get(subscale_id) != size:
                report('subscale {}'.format(subscale_id),
                       'BREQ expects {} items but found {}'.format(size, sizes.get(subscale_id, 0)))

    return violations


def validate_respondent(respondent, instrument, source='roster'):
    violations = []
    location = 'respondent {}'.format(respondent.respondent_id)

    if respondent.observed_ratings is None:
        return violations

    ratings = respondent.observed_ratings
    if len(ratings) != instrument.item_count:
        violations.append(Violation(source, location, 'has {} observed ratings but the instrument has {} items'.format(
            len(ratings), instrument.item_count)))

    for item_id, rating in enumerate(ratings, start=1):
        if not instrument.scale.contains(rating):
            violations.append(Violation(source, '{} item {}'.format(location, item_id),
                                        'rating {} is outside {}..{}'.format(rating, instrument.scale.min_rating,
                                                                              instrument.scale.max_rating)))

    return violations


def validate_roster(roster, instrument, source='roster'):
    """
    Check duplicate ids and every respondent's observed ratings against the instrument.
    """

    violations = []
    for respondent_id, count in collections.Counter(roster.respondent_ids).items():
        if count > 1:
            violations.append(Violation(source, 'respondent {}'.format(respondent_id),
                                        'respondent id appears {} times'.format(count)))

    for respondent in roster:
        violations.extend(validate_respondent(respondent, instrument, source=source))

    return violations


def subscale_mean(ratings, subscale):
    """
    @brief Arithmetic mean of the ratings at a subscale's items.

    @param ratings A rating vector indexed by item position
    @param subscale The Subscale to score
    @return The mean as a float
    """

    values = []
    for item_id in subscale.item_ids:
        if item_id < 1 or item_id > len(ratings):
            raise StructuralError('Subscale {} refers to item {} but the rating vector has {} entries'.format(
                subscale.subscale_id, item_id, len(ratings)))

        values.append(ratings[item_id - 1])

    if not values:
        raise StructuralError('Subscale {} has no items'.format(subscale.subscale_id))

    return float(np.mean(values))


def subscale_means(ratings, instrument):
    """
    @return An ordered mapping subscale_id -> mean rating.
    """

    if len(ratings) != instrument.item_count:
        raise StructuralError('Expected {} ratings but got {}'.format(instrument.item_count, len(ratings)))

    return collections.OrderedDict((subscale.subscale_id, subscale_mean(ratings, subscale))
                                   for subscale in instrument.subscales)


def rai_from_means(means, instrument):
    """
    @brief Relative autonomy index: the weighted sum of subscale means.

    @param means Mapping subscale_id -> mean score
    @param instrument Supplies the weights
    """

    total = 0.
    for subscale in instrument.subscales:
        if subscale.rai_weight is None:
            raise ConfigurationError('Subscale {} of {} has no RAI weight'.format(subscale.subscale_id,
                                                                                  instrument.name))
        total += subscale.rai_weight * means[subscale.subscale_id]

    return total


def rai(ratings, instrument):
    return rai_from_means(subscale_means(ratings, instrument), instrument)


class ResponseMatrix(object):
    """
    @brief A persons x items grid of integer ratings from one source.

    The source is either ``HUMAN`` or the Condition that generated the ratings. Rows keep insertion order.
    """

    def __init__(self, source, rows, instrument, exclusions=()):
        """
        @param source HUMAN or a Condition
        @param rows Mapping respondent_id -> rating vector
        @param instrument The instrument the ratings answer
        @param exclusions Respondents left out of the matrix, as (respondent_id, reason) pairs
        """

        self.source = source
        self.instrument = instrument
        self.exclusions = tuple(exclusions)
        self._rows = collections.OrderedDict()

        for respondent_id, ratings in rows.items():
            ratings = tuple(int(rating) for rating in ratings)
            if len(ratings) != instrument.item_count:
                raise StructuralError('Row {} has {} ratings; {} has {} items'.format(
                    respondent_id, len(ratings), instrument.name, instrument.item_count))

            for position, rating in enumerate(ratings, start=1):
                if not instrument.scale.contains(rating):
                    raise StructuralError('Row {} item {}: rating {} is out of bounds'.format(
                        respondent_id, position, rating))

            self._rows[respondent_id] = ratings

    @classmethod
    def from_roster(cls, roster, instrument):
        """
        Observed ratings of every respondent that has them.
        """

        rows = collections.OrderedDict((respondent.respondent_id, respondent.observed_ratings)
                                       for respondent in roster if respondent.observed_ratings is not None)
        return cls(HUMAN, rows, instrument)

    @property
    def respondent_ids(self):
        return tuple(self._rows)

    @property
    def item_count(self):
        return self.instrument.item_count

    def row(self, respondent_id):
        return self._rows[respondent_id]

    def restricted(self, respondent_ids):
        """
        A copy holding only the given respondents, in the given order.
        """

        return ResponseMatrix(self.source, collections.OrderedDict((rid, self._rows[rid]) for rid in respondent_ids),
                              self.instrument, self.exclusions)

    def as_array(self, respondent_ids=None):
        ids = self.respondent_ids if respondent_ids is None else respondent_ids
        if not ids:
            return np.zeros((0, self.item_count), dtype=float)

        return np.array([self._rows[rid] for rid in ids], dtype=float)

    def items(self):
        return self._rows.items()

    def __len__(self):
        return len(self._rows)

    def __contains__(self, respondent_id):
        return respondent_id in self._rows

    def __repr__(self):
        return 'ResponseMatrix(source={!r}, respondents={})'.format(self.source, len(self))
