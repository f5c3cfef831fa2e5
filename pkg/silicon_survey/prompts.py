"""
Assembly of the four prompt variants from research background, interview, demographics and survey content.
"""

import collections
import dataclasses
import enum
import hashlib
import pathlib
import re
from typing import Dict

from silicon_survey import documents, tokens
from silicon_survey.errors import AssemblyError, ConfigurationError
from silicon_survey.parsing import RATINGS_BEGIN, RATINGS_END
from silicon_survey.survey import Violation


class ComponentKind(str, enum.Enum):
    RESEARCH_BACKGROUND = 'research_background'
    PERSONAL_INTERVIEW = 'personal_interview'
    DEMOGRAPHICS = 'demographics'
    SURVEY_BLOCK = 'survey_block'


# Fixed component order within every prompt
COMPONENT_ORDER = (ComponentKind.RESEARCH_BACKGROUND, ComponentKind.PERSONAL_INTERVIEW, ComponentKind.DEMOGRAPHICS,
                   ComponentKind.SURVEY_BLOCK)


@dataclasses.dataclass(frozen=True)
class PromptVariant(object):
    variant_id: str
    component_kinds: tuple

    @property
    def uses_interview(self):
        return ComponentKind.PERSONAL_INTERVIEW in self.component_kinds

    @property
    def uses_demographics(self):
        return ComponentKind.DEMOGRAPHICS in self.component_kinds


def _variant(variant_id, *extra):
    kinds = {ComponentKind.RESEARCH_BACKGROUND, ComponentKind.SURVEY_BLOCK}.union(extra)
    return PromptVariant(variant_id, tuple(kind for kind in COMPONENT_ORDER if kind in kinds))


VARIANTS = collections.OrderedDict((variant.variant_id, variant) for variant in (
    _variant('P_BR'),
    _variant('P_BR_PI', ComponentKind.PERSONAL_INTERVIEW),
    _variant('P_BR_DI', ComponentKind.DEMOGRAPHICS),
    _variant('P_BR_PI_DI', ComponentKind.PERSONAL_INTERVIEW, ComponentKind.DEMOGRAPHICS),
))

# Variants whose prompts carry the interview transcript
INTERVIEW_VARIANTS = tuple(vid for vid, variant in VARIANTS.items() if variant.uses_interview)

CORRECTIVE_INSTRUCTION = (
    'Your previous answer could not be read. Reply again with only the ratings block: the line {begin}, then one '
    '"item_id: rating" line for every item, then the line {end}.'
).format(begin=RATINGS_BEGIN, end=RATINGS_END)


def get_variant(variant_id):
    try:
        return VARIANTS[variant_id]
    except KeyError:
        raise ConfigurationError('Unknown prompt variant {}; expected one of {}'.format(
            variant_id, ', '.join(VARIANTS))) from None


def variant_components(variant_id):
    """
    @brief The component kinds of a prompt variant, in prompt order.
    """

    return get_variant(variant_id).component_kinds


class PromptTemplate(object):
    """
    @brief Plain-text template with ``{{name}}`` placeholders.

    Every template must carry each placeholder in PLACEHOLDERS exactly once and in that order; a variant that omits a
    component renders its placeholder as empty text.
    """

    PLACEHOLDERS = ('background', 'interview', 'demographics', 'survey_items', 'format_instruction')
    _PATTERN = re.compile(r'\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}')

    def __init__(self, text, source='<template>'):
        self.text = text
        self.source = source

    @classmethod
    def load(cls, path=None):
        path = pathlib.Path(path or documents.bundled_path('prompt_template.txt'))
        try:
            text = path.read_text(encoding='utf-8')
        except OSError as exc:
            raise ConfigurationError('Cannot read template {}: {}'.format(path, exc)) from exc

        return cls(text, source=str(path))

    @property
    def placeholders(self):
        return [match.group(1) for match in self._PATTERN.finditer(self.text)]

    def validate(self):
        """
        @return A list of Violations for missing, unknown, repeated or out-of-order placeholders
        """

        found = self.placeholders
        counts = collections.Counter(found)
        violations = []

        for name in self.PLACEHOLDERS:
            if counts[name] == 0:
                violations.append(Violation(self.source, 'placeholder', 'missing {{{{{}}}}}'.format(name)))
            elif counts[name] > 1:
                violations.append(Violation(self.source, 'placeholder',
                                            '{{{{{}}}}} appears {} times'.format(name, counts[name])))

        for name in counts:
            if name not in self.PLACEHOLDERS:
                violations.append(Violation(self.source, 'placeholder', 'unknown {{{{{}}}}}'.format(name)))

        known = [name for name in found if name in self.PLACEHOLDERS]
        if not violations and known != list(self.PLACEHOLDERS):
            violations.append(Violation(self.source, 'placeholder', 'placeholders must appear in the order {}'.format(
                ', '.join(self.PLACEHOLDERS))))

        return violations

    def render(self, values):
        violations = self.validate()
        if violations:
            raise ConfigurationError('Invalid template: {}'.format('; '.join(str(v) for v in violations)))

        return self._PATTERN.sub(lambda match: values[match.group(1)], self.text)


@dataclasses.dataclass(frozen=True)
class RenderedPrompt(object):
    variant_id: str
    respondent_id: str
    full_text: str
    token_count: int
    component_digest: Dict[str, str]
    encoding_id: str
    backend: str

    @property
    def digest(self):
        return _sha256(self.full_text)


def _sha256(text):
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def survey_block(instrument):
    """
    The survey section: scale legend followed by every item in item order.
    """

    scale = instrument.scale
    lines = ['## Survey', 'Rate how true each statement is for you on a scale from {} to {}:'.format(
        scale.min_rating, scale.max_rating)]

    for point, label in zip(scale.points, scale.labels):
        lines.append('{} = {}'.format(point, label))

    lines.append('')
    lines.extend('{}. {}'.format(item.item_id, item.text) for item in instrument.items)

    return '\n'.join(lines)


def format_instruction(instrument):
    scale = instrument.scale
    return (
        '## Answer format\n'
        'Answer every statement. Reply with the line {begin}, then exactly one line per statement in the form '
        '"item_id: rating" (for example "1: {low}"), in item order from 1 to {count}, then the line {end}. Each '
        'rating must be a single whole number from {low} to {high}.'
    ).format(begin=RATINGS_BEGIN, end=RATINGS_END, low=scale.min_rating, high=scale.max_rating,
             count=instrument.item_count)


def _background_block(background):
    return '## Research background\n' + background.strip()


def _interview_block(transcript):
    return ('## Personal interview\nTranscript of an interview with the person you are simulating:\n\n'
            + transcript.strip())


def _demographics_block(demographics):
    lines = ['## Demographic information']
    lines.extend('- {}: {}'.format(key, value) for key, value in demographics.items())
    return '\n'.join(lines)


def _normalize(text):
    text = '\n'.join(line.rstrip() for line in text.splitlines())
    text = re.sub(r'\n{3,}', '\n\n', text)
    return text.strip() + '\n'


def assemble_prompt(variant_id, respondent, background, instrument, template, encoding_id=tokens.DEFAULT_ENCODING,
                    backend='auto'):
    """
    @brief Render one prompt variant for one respondent.

    The output is a pure function of the inputs: identical inputs give byte-identical text.

    @param variant_id One of VARIANTS
    @param respondent The Respondent being simulated
    @param background Research background text
    @param instrument The SurveyInstrument
    @param template A PromptTemplate
    @param encoding_id Encoding used for token_count
    @param backend Tokenizer backend (see tokens.get_tokenizer)
    @return A RenderedPrompt
    """

    variant = get_variant(variant_id)

    if not background or not background.strip():
        raise AssemblyError(variant_id, ComponentKind.RESEARCH_BACKGROUND.value)

    components = collections.OrderedDict()
    components[ComponentKind.RESEARCH_BACKGROUND] = _background_block(background)

    if variant.uses_interview:
        if not respondent.interview_transcript.strip():
            raise AssemblyError(variant_id, ComponentKind.PERSONAL_INTERVIEW.value,
                                'Cannot assemble {} for {}: interview transcript is empty'.format(
                                    variant_id, respondent.respondent_id))
        components[ComponentKind.PERSONAL_INTERVIEW] = _interview_block(respondent.interview_transcript)

    if variant.uses_demographics:
        if not respondent.demographics:
            raise AssemblyError(variant_id, ComponentKind.DEMOGRAPHICS.value,
                                'Cannot assemble {} for {}: no demographics'.format(variant_id,
                                                                                     respondent.respondent_id))
        components[ComponentKind.DEMOGRAPHICS] = _demographics_block(respondent.demographics)

    block = survey_block(instrument)
    components[ComponentKind.SURVEY_BLOCK] = block

    full_text = _normalize(template.render({
        'background': components[ComponentKind.RESEARCH_BACKGROUND],
        'interview': components.get(ComponentKind.PERSONAL_INTERVIEW, ''),
        'demographics': components.get(ComponentKind.DEMOGRAPHICS, ''),
        'survey_items': block,
        'format_instruction': format_instruction(instrument),
    }))

    if full_text.count(block) != 1:
        raise AssemblyError(variant_id, ComponentKind.SURVEY_BLOCK.value,
                            'Survey block appears {} times in {} for {}'.format(full_text.count(block), variant_id,
                                                                                 respondent.respondent_id))

    tokenizer = tokens.get_tokenizer(encoding_id, backend)

    return RenderedPrompt(
        variant_id=variant_id,
        respondent_id=respondent.respondent_id,
        full_text=full_text,
        token_count=tokenizer.count(full_text),
        component_digest={kind.value: _sha256(text) for kind, text in components.items()},
        encoding_id=encoding_id,
        backend=tokenizer.name,
    )


def load_background(path=None):
    path = pathlib.Path(path or documents.bundled_path('background.txt'))
    try:
        return path.read_text(encoding='utf-8')
    except OSError as exc:
        raise ConfigurationError('Cannot read background {}: {}'.format(path, exc)) from exc
