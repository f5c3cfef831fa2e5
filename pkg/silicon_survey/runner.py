"""
Execution of a run manifest against providers, and collection of per-condition response matrices from the store.
"""

import collections
import concurrent.futures
import dataclasses
import fractions
import hashlib
import logging
import math

from silicon_survey import design, parsing, prompts, providers, tokens
from silicon_survey.errors import (AuthenticationError, ConfigurationError, EmptyMatrixError, ProviderError,
                                   TransportError)
from silicon_survey.store import OK, PARSE_FAILED, STATUSES, TRANSPORT_FAILED, RunRecord
from silicon_survey.survey import ResponseMatrix


@dataclasses.dataclass(frozen=True)
class RunSummary(object):
    manifest_id: str
    planned: int
    skipped: int
    counts: dict

    @property
    def executed(self):
        return sum(self.counts.values())

    def count(self, status):
        return self.counts.get(status, 0)

    def __str__(self):
        return 'planned={} skipped={} executed={} {}'.format(
            self.planned, self.skipped, self.executed,
            ' '.join('{}={}'.format(status, self.count(status)) for status in STATUSES))


def derive_seed(master_seed, key):
    """
    @brief Per-key seed: a stable hash of the master seed and the run key.

    @return An integer in [0, 2**31)
    """

    text = '{}|{}'.format(master_seed, key)
    return int.from_bytes(hashlib.sha256(text.encode('utf-8')).digest()[:8], 'big') % (1 << 31)


def condition_key(spec, key):
    """
    Cell identity handed to the provider. Built from the model name, so chatbots sharing a model answer alike.
    """

    return '{}|{}|{!r}|{}'.format(spec.model_name or spec.name, key.condition.prompt_variant,
                                  float(key.condition.temperature), key.repeat_index)


def build_providers(manifest, catalog, instrument, clock=None, environ=None, transport=None):
    """
    @brief Create one provider per chatbot the manifest uses.

    @return An ordered mapping chatbot name -> Provider
    """

    built = collections.OrderedDict()
    for chatbot in manifest.chatbots:
        try:
            spec = catalog.get(chatbot)
        except KeyError:
            raise ConfigurationError('Manifest {} uses chatbot {} but no provider has that name'.format(
                manifest.manifest_id, chatbot)) from None

        built[chatbot] = providers.from_spec(spec, clock=clock, environ=environ, transport=transport,
                                             instrument=instrument, seed=manifest.master_seed)

    return built


def _render_prompts(manifest, keys, roster, instrument, template, background, encoding_id, backend):
    rendered = {}
    for key in keys:
        cell = (key.condition.prompt_variant, key.respondent_id)
        if cell not in rendered:
            rendered[cell] = prompts.assemble_prompt(key.condition.prompt_variant, roster.get(key.respondent_id),
                                                     background, instrument, template, encoding_id, backend)

    return rendered


class _KeyRunner(object):
    """
    Runs one key: complete, parse, re-ask on parse failure, and build the terminal record.
    """

    def __init__(self, manifest, providers_by_name, rendered, instrument):
        self.logger = logging.getLogger(self.__class__.__name__)
        self.manifest = manifest
        self.providers = providers_by_name
        self.rendered = rendered
        self.instrument = instrument

    def __call__(self, key):
        provider = self.providers[key.condition.chatbot]
        prompt = self.rendered[(key.condition.prompt_variant, key.respondent_id)]
        seed = derive_seed(self.manifest.master_seed, key)

        request = providers.CompletionRequest(
            prompt_text=prompt.full_text,
            temperature=key.condition.temperature,
            max_output_tokens=self.manifest.max_output_tokens,
            seed=seed,
            respondent_key=key.respondent_id,
            condition_key=condition_key(provider.spec, key),
        )
        base = dict(key=key, prompt_digest=prompt.digest, token_count=prompt.token_count, seed=seed)

        attempts = reasks = prompt_tokens = output_tokens = latency_ms = 0
        result = parsed = None

        try:
            while True:
                result = provider.complete(request)
                attempts += result.attempt_count
                prompt_tokens += result.prompt_tokens
                output_tokens += result.output_tokens
                latency_ms += result.latency_ms

                parsed = parsing.parse_ratings(result.raw_text, self.instrument)
                if parsed.ok or reasks >= provider.spec.max_retries:
                    break

                reasks += 1
                self.logger.debug('Re-asking %s [reason=%s]', key, parsed.failure.failure_kind)
                request = dataclasses.replace(
                    request, prompt_text='{}\n{}\n'.format(prompt.full_text, prompts.CORRECTIVE_INSTRUCTION))
        except (AuthenticationError, ConfigurationError):
            raise
        except ProviderError as exc:
            attempts += exc.attempts if isinstance(exc, TransportError) else 1
            self.logger.warning('Transport failure for %s: %s', key, exc)
            return RunRecord(status=TRANSPORT_FAILED, raw_text=result.raw_text if result else '',
                             attempt_count=attempts, reask_count=reasks, prompt_tokens=prompt_tokens,
                             output_tokens=output_tokens, latency_ms=latency_ms, error=str(exc),
                             error_kind=exc.__class__.__name__, **base)

        if not parsed.ok:
            self.logger.warning('Unreadable answer for %s [failure=%s, detail=%s]', key, parsed.failure.failure_kind,
                                parsed.failure.detail)

        return RunRecord(status=OK if parsed.ok else PARSE_FAILED, raw_text=result.raw_text, parsed=parsed,
                         attempt_count=attempts, reask_count=reasks, prompt_tokens=prompt_tokens,
                         output_tokens=output_tokens, latency_ms=latency_ms,
                         provider_metadata=result.provider_metadata, **base)


def execute_run(manifest, store, providers_by_name, roster, instrument, template, background,
                encoding_id=tokens.DEFAULT_ENCODING, backend='auto', workers=1):
    """
    @brief Run every key of a manifest that has no record in the store yet.

    Prompts are assembled and credentials resolved before the first provider call, so resource errors abort with
    nothing sent. Per-key failures become records; AuthenticationError and ConfigurationError abort the batch.

    @param manifest The RunManifest
    @param store A RunStore
    @param providers_by_name Mapping chatbot name -> Provider
    @param roster The Roster
    @param instrument The SurveyInstrument
    @param template A PromptTemplate
    @param background Research background text
    @param encoding_id Encoding for prompt token counts
    @param backend Tokenizer backend
    @param workers Number of concurrent provider calls
    @return A RunSummary
    """

    logger = logging.getLogger(__name__)

    if workers < 1:
        raise ValueError('Expected at least one worker but got {}'.format(workers))

    keys = design.run_keys(manifest, roster)

    unknown = [rid for rid in design.manifest_respondents(manifest, roster) if rid not in roster.respondent_ids]
    if unknown:
        raise ConfigurationError('Manifest {} names respondents missing from the roster: {}'.format(
            manifest.manifest_id, ', '.join(unknown)))

    for chatbot in manifest.chatbots:
        if chatbot not in providers_by_name:
            raise ConfigurationError('No provider for chatbot {}'.format(chatbot))
        providers_by_name[chatbot].resolve_credential()

    rendered = _render_prompts(manifest, keys, roster, instrument, template, background, encoding_id, backend)

    pending = [key for key in keys if key not in store]
    logger.info('Starting run %s [keys=%d, pending=%d, workers=%d]', manifest.manifest_id, len(keys), len(pending),
                workers)

    run_key = _KeyRunner(manifest, providers_by_name, rendered, instrument)
    counts = collections.Counter()

    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(run_key, key) for key in pending]
        try:
            # Appending in submission order keeps the store independent of scheduling
            for future in futures:
                record = future.result()
                store.append(record)
                counts[record.status] += 1
        except BaseException:
            for future in futures:
                future.cancel()
            logger.error('Aborted run %s after %d record(s)', manifest.manifest_id, sum(counts.values()))
            raise

    summary = RunSummary(manifest.manifest_id, planned=len(keys), skipped=len(keys) - len(pending),
                         counts={status: counts[status] for status in STATUSES})
    logger.info('Run finished [ok=%d, parse_failed=%d, transport_failed=%d, skipped=%d]', summary.count(OK),
                summary.count(PARSE_FAILED), summary.count(TRANSPORT_FAILED), summary.skipped)

    return summary


def aggregate_ratings(values, scale):
    """
    @brief Combine repeat ratings of one item into one integer rating.

    The mean is rounded to the nearest integer. An exact half goes to the neighbour closer to the scale midpoint, and
    to the lower neighbour when both are equally close.

    @param values The ok repeat ratings (non-empty)
    @param scale The LikertScale
    """

    if not values:
        raise ValueError('Cannot aggregate an empty set of ratings')

    mean = fractions.Fraction(sum(values), len(values))
    lower = math.floor(mean)

    if mean - lower != fractions.Fraction(1, 2):
        return int(math.floor(mean + fractions.Fraction(1, 2)))

    midpoint = fractions.Fraction(scale.min_rating + scale.max_rating, 2)
    upper = lower + 1
    if abs(upper - midpoint) < abs(lower - midpoint):
        return int(upper)

    return int(lower)


def collect_matrix(store, condition, instrument, roster, respondent_ids=None, repeats_per_cell=1):
    """
    @brief The response matrix of one condition.

    Respondents without an ok record are left out and listed in the matrix's ``exclusions``. With several repeats,
    each item is the aggregate of the ok repeats.

    @param store A RunStore
    @param condition The Condition
    @param instrument The SurveyInstrument
    @param roster The Roster (supplies row order)
    @param respondent_ids Respondents to collect; defaults to the whole roster
    @param repeats_per_cell Repeats per respondent
    @return A ResponseMatrix whose source is the condition
    @throws EmptyMatrixError if no respondent has an ok record
    """

    ids = roster.respondent_ids if respondent_ids is None else respondent_ids
    rows = collections.OrderedDict()
    exclusions = []

    for respondent_id in ids:
        records = [store.get(design.RunKey(condition, respondent_id, repeat)) for repeat in range(repeats_per_cell)]
        usable = [record.ratings for record in records if record is not None and record.status == OK]

        if not usable:
            reasons = sorted(set('missing' if record is None else record.status for record in records))
            exclusions.append((respondent_id, ','.join(reasons)))
            continue

        rows[respondent_id] = tuple(aggregate_ratings([ratings[position] for ratings in usable], instrument.scale)
                                    for position in range(instrument.item_count))

    if not rows:
        raise EmptyMatrixError('No ok records for condition {}'.format(condition.label))

    return ResponseMatrix(condition, rows, instrument, exclusions)


def human_matrix(roster, instrument, respondent_ids=None):
    matrix = ResponseMatrix.from_roster(roster, instrument)
    ids = matrix.respondent_ids if respondent_ids is None else [rid for rid in respondent_ids if rid in matrix]
    if not ids:
        raise EmptyMatrixError('No respondent in the roster has observed ratings')

    return matrix.restricted(ids)


def missing_keys(manifest, store, roster):
    """
    Keys of the manifest with no record in the store.
    """

    return [key for key in design.run_keys(manifest, roster) if key not in store]

