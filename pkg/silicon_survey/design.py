"""
Run manifests and the factorial design of chatbot x prompt variant x temperature conditions.
"""

import collections
import dataclasses
import itertools
import logging
import pathlib
from typing import Optional, Tuple

from pydantic import BaseModel, ConfigDict, PositiveInt, model_validator

from silicon_survey import documents, prompts
from silicon_survey.errors import ManifestError
from silicon_survey.survey import Violation


@dataclasses.dataclass(frozen=True, order=True)
class Condition(object):
    """
    @brief One cell of the factorial design.
    """

    chatbot: str
    prompt_variant: str
    temperature: float

    @property
    def label(self):
        return '{}|{}|{!r}'.format(self.chatbot, self.prompt_variant, float(self.temperature))

    def to_dict(self):
        return {'chatbot': self.chatbot, 'prompt_variant': self.prompt_variant, 'temperature': float(self.temperature)}

    @classmethod
    def from_dict(cls, data):
        return cls(data['chatbot'], data['prompt_variant'], float(data['temperature']))

    def __str__(self):
        return self.label


@dataclasses.dataclass(frozen=True)
class RunKey(object):
    condition: Condition
    respondent_id: str
    repeat_index: int = 0

    def to_dict(self):
        return {'condition': self.condition.to_dict(), 'respondent_id': self.respondent_id,
                'repeat_index': self.repeat_index}

    @classmethod
    def from_dict(cls, data):
        return cls(Condition.from_dict(data['condition']), str(data['respondent_id']), int(data['repeat_index']))

    def __str__(self):
        return '{}|{}|{}'.format(self.condition.label, self.respondent_id, self.repeat_index)


class _ManifestPart(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')


class FactorialDesign(_ManifestPart):
    """
    Cross-product shorthand: every chatbot x variant x temperature.
    """

    chatbots: Tuple[str, ...]
    variants: Tuple[str, ...] = tuple(prompts.VARIANTS)
    temperatures: Tuple[float, ...] = (0., .5)


class ConditionEntry(_ManifestPart):
    chatbot: str
    prompt_variant: str
    temperature: float


class RunManifest(_ManifestPart):
    """
    @brief A complete, checked-in description of one experiment.

    Resource references resolve against ``base_dir`` (the manifest's directory); a name that does not exist there
    falls back to the bundled file of that name.
    """

    manifest_id: str
    instrument: str = 'breq.yaml'
    roster: str = 'roster_synthetic.yaml'
    template: str = 'prompt_template.txt'
    background: str = 'background.txt'
    providers: str = 'providers.yaml'
    design: Optional[FactorialDesign] = None
    conditions: Optional[Tuple[ConditionEntry, ...]] = None
    respondent_ids: Optional[Tuple[str, ...]] = None
    repeats_per_cell: PositiveInt = 1
    master_seed: int = 0
    max_output_tokens: PositiveInt = 1024
    base_dir: Optional[str] = None

    @model_validator(mode='after')
    def _one_condition_source(self):
        if (self.design is None) == (self.conditions is None):
            raise ValueError('give exactly one of "design" or "conditions"')

        return self

    def resolve(self, ref):
        """
        @brief Resolve a resource reference to a path.
        """

        path = pathlib.Path(ref)
        if not path.is_absolute() and self.base_dir is not None:
            path = pathlib.Path(self.base_dir) / path

        if not path.exists() and documents.bundled_path(ref).exists():
            return documents.bundled_path(ref)

        return path

    @property
    def chatbots(self):
        """
        Chatbot labels in first-appearance order.
        """

        return tuple(collections.OrderedDict.fromkeys(condition.chatbot for condition in enumerate_conditions(self)))


def load_manifest(path):
    path = pathlib.Path(path)
    manifest = documents.load_document(path, RunManifest)
    return manifest.model_copy(update={'base_dir': str(path.resolve().parent)})


def enumerate_conditions(manifest):
    """
    @brief The ordered conditions of a manifest.

    The cross-product shorthand orders by chatbot, then variant (as listed), then temperature ascending. An explicit
    condition list keeps its file order.

    @param manifest A RunManifest
    @return A list of Condition
    """

    if manifest.design is not None:
        design = manifest.design
        return [Condition(chatbot, variant, float(temperature))
                for chatbot, variant, temperature in itertools.product(design.chatbots, design.variants,
                                                                       sorted(design.temperatures))]

    return [Condition(entry.chatbot, entry.prompt_variant, float(entry.temperature)) for entry in manifest.conditions]


def manifest_respondents(manifest, roster):
    if manifest.respondent_ids is None:
        return roster.respondent_ids

    return tuple(manifest.respondent_ids)


def run_keys(manifest, roster):
    """
    @brief Every (condition, respondent, repeat) key of a manifest, in execution order.

    @throws ManifestError if a key occurs twice
    """

    keys = [RunKey(condition, respondent_id, repeat)
            for condition in enumerate_conditions(manifest)
            for respondent_id in manifest_respondents(manifest, roster)
            for repeat in range(manifest.repeats_per_cell)]

    duplicated = [key for key, count in collections.Counter(keys).items() if count > 1]
    if duplicated:
        logging.getLogger(__name__).error('Manifest %s repeats %d run key(s)', manifest.manifest_id, len(duplicated))
        raise ManifestError('Manifest {} repeats run keys: {}'.format(
            manifest.manifest_id, ', '.join(str(key) for key in duplicated[:5])))

    return keys


def validate_manifest(manifest, catalog, roster, source='manifest'):
    """
    @return Violations for unknown chatbots, variants and respondents, negative temperatures and duplicate cells
    """

    violations = []
    conditions = enumerate_conditions(manifest)

    for chatbot in sorted(set(condition.chatbot for condition in conditions)):
        if chatbot not in catalog.names:
            violations.append(Violation(source, 'chatbot {}'.format(chatbot), 'no provider with this name'))

    for variant in sorted(set(condition.prompt_variant for condition in conditions)):
        if variant not in prompts.VARIANTS:
            violations.append(Violation(source, 'variant {}'.format(variant), 'unknown prompt variant'))

    for temperature in sorted(set(condition.temperature for condition in conditions)):
        if temperature < 0:
            violations.append(Violation(source, 'temperature {}'.format(temperature), 'must be non-negative'))

    for condition, count in collections.Counter(conditions).items():
        if count > 1:
            violations.append(Violation(source, 'condition {}'.format(condition.label),
                                        'appears {} times'.format(count)))

    respondent_ids = manifest_respondents(manifest, roster)
    for respondent_id, count in collections.Counter(respondent_ids).items():
        if respondent_id not in roster.respondent_ids:
            violations.append(Violation(source, 'respondent {}'.format(respondent_id), 'not in roster'))
        if count > 1:
            violations.append(Violation(source, 'respondent {}'.format(respondent_id),
                                        'appears {} times'.format(count)))

    return violations
