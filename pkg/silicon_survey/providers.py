"""
Uniform completion interface over commercial chat providers and a deterministic mock.

Every provider applies the same policy: a shared sliding-window rate limiter, exponential-backoff retries on transient
failures (timeouts, throttling, server errors), and no retries on authentication or malformed-request errors.
"""

import abc
import collections
import dataclasses
import hashlib
import logging
import os
from typing import Dict, Literal, Optional, Tuple

import httpx
import tenacity
from pydantic import BaseModel, ConfigDict, model_validator

from silicon_survey import documents, parsing, tokens
from silicon_survey.buffers import RateLimiter, SystemClock
from silicon_survey.errors import (AuthenticationError, ConfigurationError, ContextLengthError, RequestError,
                                   TransientError, TransportError)
from silicon_survey.survey import Violation

PROVIDER_IDS = ('gpt', 'claude', 'gemini', 'mock')

# Phrases vendors use when a prompt does not fit the context window
CONTEXT_LENGTH_MARKERS = ('context_length_exceeded', 'maximum context length', 'prompt is too long',
                          'input token count', 'exceeds the maximum number of tokens', 'too many tokens')


class ProviderSpec(BaseModel):
    """
    @brief One chatbot: the adapter to use, the vendor model name and the call policy.

    ``name`` is the chatbot label conditions refer to; it defaults to the provider_id so that a provider list with one
    record per vendor needs no names.
    """

    model_config = ConfigDict(frozen=True, extra='forbid')

    name: str
    provider_id: Literal['gpt', 'claude', 'gemini', 'mock']
    model_name: str = ''
    endpoint_url: Optional[str] = None
    auth_env_var: Optional[str] = None
    rate_limit: float = 60.
    max_retries: int = 3
    timeout_s: float = 120.
    backoff_initial_s: float = 1.
    backoff_max_s: float = 60.

    @model_validator(mode='before')
    @classmethod
    def _default_name(cls, data):
        if isinstance(data, dict) and not data.get('name') and data.get('provider_id'):
            data = dict(data, name=data['provider_id'])

        return data

    @property
    def is_mock(self):
        return self.provider_id == 'mock'


class ProviderCatalog(BaseModel):
    model_config = ConfigDict(frozen=True, extra='forbid')

    providers: Tuple[ProviderSpec, ...]

    @property
    def names(self):
        return tuple(spec.name for spec in self.providers)

    def get(self, name):
        for spec in self.providers:
            if spec.name == name:
                return spec

        raise KeyError(name)


def load_providers(path=None):
    return documents.load_document(path or documents.bundled_path('providers.yaml'), ProviderCatalog)


def validate_provider_specs(catalog, source='providers'):
    """
    @return Violations for duplicate names, non-positive rate limits, negative retry counts and missing credentials
    """

    violations = []
    for name, count in collections.Counter(catalog.names).items():
        if count > 1:
            violations.append(Violation(source, 'provider {}'.format(name), 'name appears {} times'.format(count)))

    for spec in catalog.providers:
        location = 'provider {}'.format(spec.name)
        if spec.rate_limit <= 0:
            violations.append(Violation(source, location, 'rate_limit must be positive, got {}'.format(spec.rate_limit)))
        if spec.max_retries < 0:
            violations.append(Violation(source, location,
                                        'max_retries must be non-negative, got {}'.format(spec.max_retries)))
        if not spec.is_mock and not spec.auth_env_var:
            violations.append(Violation(source, location, 'auth_env_var is required for {}'.format(spec.provider_id)))
        if not spec.is_mock and not spec.model_name:
            violations.append(Violation(source, location, 'model_name is required for {}'.format(spec.provider_id)))

    return violations


@dataclasses.dataclass(frozen=True)
class CompletionRequest(object):
    """
    @brief A single-turn completion request.

    respondent_key and condition_key identify the run cell; HTTP adapters ignore them and the mock derives its ratings
    from them.
    """

    prompt_text: str
    temperature: float = 0.
    max_output_tokens: int = 1024
    seed: Optional[int] = None
    respondent_key: str = ''
    condition_key: str = ''

    def __post_init__(self):
        if self.max_output_tokens <= 0:
            raise ValueError('max_output_tokens must be positive, got {}'.format(self.max_output_tokens))
        if self.temperature < 0:
            raise ValueError('temperature must be non-negative, got {}'.format(self.temperature))


@dataclasses.dataclass(frozen=True)
class CompletionResult(object):
    raw_text: str
    prompt_tokens: int = 0
    output_tokens: int = 0
    latency_ms: int = 0
    provider_metadata: Dict[str, str] = dataclasses.field(default_factory=dict)
    attempt_count: int = 1


class Provider(abc.ABC):
    """
    @brief Base class for completion providers.

    Subclasses set ``provider_id`` and implement _send(); complete() wraps it with credentials, rate limiting and
    retries.
    """

    provider_id = None

    def __init__(self, spec, clock=None, environ=None):
        """
        @param spec The ProviderSpec
        @param clock Object with now() and sleep(); shared by the rate limiter and the retry backoff
        @param environ Mapping to read credentials from; defaults to os.environ
        """

        if spec.rate_limit <= 0:
            raise ValueError('Provider {} rate_limit must be positive but got {}'.format(spec.name, spec.rate_limit))
        if spec.max_retries < 0:
            raise ValueError('Provider {} max_retries must be non-negative but got {}'.format(spec.name,
                                                                                            spec.max_retries))

        self.logger = logging.getLogger(self.__class__.__name__)
        self.spec = spec
        self.clock = clock or SystemClock()
        self.limiter = RateLimiter(spec.rate_limit, period=60., clock=self.clock, name=spec.name)
        self._environ = os.environ if environ is None else environ

        self.logger.debug('Created provider %s [adapter=%s, model=%s]', spec.name, spec.provider_id, spec.model_name)

    @property
    def name(self):
        return self.spec.name

    def resolve_credential(self):
        """
        @return The API credential, or None for providers that need none
        @throws AuthenticationError if the configured environment variable is unset
        """

        if self.spec.auth_env_var is None:
            raise AuthenticationError('Provider {} has no auth_env_var configured'.format(self.spec.name))

        value = self._environ.get(self.spec.auth_env_var)
        if not value:
            raise AuthenticationError('Environment variable {} is not set (needed by {})'.format(
                self.spec.auth_env_var, self.spec.name))

        return value

    @abc.abstractmethod
    def _send(self, request, credential):
        """
        Perform one attempt; raise TransientError for retryable failures.

        @return A CompletionResult (attempt_count is filled in by complete())
        """

        pass

    def complete(self, request):
        """
        @brief Send a request, retrying transient failures with exponential backoff.

        @param request A CompletionRequest
        @return A CompletionResult with attempt_count in 1..max_retries + 1
        @throws AuthenticationError, ContextLengthError, RequestError, ConfigurationError without retrying
        @throws TransportError when retries are exhausted
        """

        credential = self.resolve_credential()

        retrying = tenacity.Retrying(
            stop=tenacity.stop_after_attempt(self.spec.max_retries + 1),
            wait=tenacity.wait_exponential(multiplier=self.spec.backoff_initial_s, max=self.spec.backoff_max_s),
            retry=tenacity.retry_if_exception_type(TransientError),
            sleep=self.clock.sleep,
            before_sleep=self._log_retry,
            reraise=True,
        )

        attempts = 0
        try:
            for attempt in retrying:
                with attempt:
                    attempts = attempt.retry_state.attempt_number
                    self.limiter.acquire()
                    result = self._send(request, credential)
        except TransientError as exc:
            self.logger.error('Giving up on %s after %d attempt(s): %s', self.spec.name, attempts, exc)
            raise TransportError(attempts, exc) from exc

        return dataclasses.replace(result, attempt_count=attempts)

    def _log_retry(self, retry_state):
        self.logger.warning('Retrying %s [attempt=%d, error=%s]', self.spec.name, retry_state.attempt_number,
                            retry_state.outcome.exception())

    def close(self):
        pass


class HttpProvider(Provider):
    """
    @brief Shared HTTP plumbing for the vendor adapters: JSON POST, status classification and latency measurement.
    """

    default_endpoint = None

    def __init__(self, spec, clock=None, environ=None, transport=None, **_):
        """
        @param transport Optional httpx transport (tests pass an httpx.MockTransport)
        """

        super(HttpProvider, self).__init__(spec, clock=clock, environ=environ)

        self._transport = transport
        self._client = None

    def _http(self):
        if self._client is None:
            self._client = httpx.Client(timeout=httpx.Timeout(self.spec.timeout_s), transport=self._transport)

        return self._client

    def close(self):
        if self._client is not None:
            self._client.close()
            self._client = None

    def endpoint(self):
        url = self.spec.endpoint_url or self.default_endpoint
        if not url:
            raise ConfigurationError('Provider {} has no endpoint_url'.format(self.spec.name))

        return url

    @abc.abstractmethod
    def build_headers(self, credential):
        pass

    @abc.abstractmethod
    def build_payload(self, request):
        pass

    @abc.abstractmethod
    def parse_response(self, body):
        """
        @return (text, prompt_tokens, output_tokens, metadata)
        """

        pass

    def _send(self, request, credential):
        started = self.clock.now()
        try:
            response = self._http().post(self.endpoint(), json=self.build_payload(request),
                                         headers=self.build_headers(credential))
        except httpx.TimeoutException as exc:
            raise TransientError('Timed out calling {}: {}'.format(self.spec.name, exc)) from exc
        except httpx.TransportError as exc:
            raise TransientError('Transport failure calling {}: {}'.format(self.spec.name, exc)) from exc

        latency_ms = int(round((self.clock.now() - started) * 1000))
        self.raise_for_status(response)

        try:
            body = response.json()
            text, prompt_tokens, output_tokens, metadata = self.parse_response(body)
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise RequestError('Unexpected response from {}: {}'.format(self.spec.name, exc)) from exc

        return CompletionResult(
            raw_text=text,
            prompt_tokens=int(prompt_tokens or 0),
            output_tokens=int(output_tokens or 0),
            latency_ms=latency_ms,
            provider_metadata={key: str(value) for key, value in metadata.items() if value is not None},
        )

    def raise_for_status(self, response):
        """
        Map an HTTP error status to the error taxonomy.
        """

        status = response.status_code
        if status < 400:
            return

        message = response.text[:500]
        lowered = message.lower()
        summary = '{} returned HTTP {}: {}'.format(self.spec.name, status, message)

        if status in (401, 403):
            raise AuthenticationError(summary)
        if status in (408, 429) or status >= 500:
            raise TransientError(summary)
        if status == 413 or any(marker in lowered for marker in CONTEXT_LENGTH_MARKERS):
            raise ContextLengthError(summary)
        if 'temperature' in lowered:
            raise ConfigurationError(summary)

        raise RequestError(summary)


class ChatCompletionsProvider(HttpProvider):
    """
    Chat-completions wire shape.

    request: model, messages[{role: user, content}], temperature, max_tokens, seed
    response: choices[0].message.content, usage.prompt_tokens, usage.completion_tokens
    """

    provider_id = 'gpt'
    default_endpoint = 'https://api.openai.com/v1/chat/completions'

    def build_headers(self, credential):
        return {'Authorization': 'Bearer {}'.format(credential)}

    def build_payload(self, request):
        payload = {
            'model': self.spec.model_name,
            'messages': [{'role': 'user', 'content': request.prompt_text}],
            'temperature': request.temperature,
            'max_tokens': request.max_output_tokens,
        }
        if request.seed is not None:
            payload['seed'] = request.seed

        return payload

    def parse_response(self, body):
        choice = body['choices'][0]
        usage = body.get('usage') or {}
        metadata = {'id': body.get('id'), 'model': body.get('model'), 'finish_reason': choice.get('finish_reason'),
                    'system_fingerprint': body.get('system_fingerprint')}

        return choice['message']['content'] or '', usage.get('prompt_tokens'), usage.get('completion_tokens'), metadata


class MessagesProvider(HttpProvider):
    """
    Messages wire shape.

    request: model, max_tokens, temperature, messages[{role: user, content}]
    response: content[type=text].text, usage.input_tokens, usage.output_tokens
    """

    provider_id = 'claude'
    default_endpoint = 'https://api.anthropic.com/v1/messages'
    api_version = '2023-06-01'

    def build_headers(self, credential):
        return {'x-api-key': credential, 'anthropic-version': self.api_version}

    def build_payload(self, request):
        return {
            'model': self.spec.model_name,
            'max_tokens': request.max_output_tokens,
            'temperature': request.temperature,
            'messages': [{'role': 'user', 'content': request.prompt_text}],
        }

    def parse_response(self, body):
        text = ''.join(block.get('text', '') for block in body['content'] if block.get('type') == 'text')
        usage = body.get('usage') or {}
        metadata = {'id': body.get('id'), 'model': body.get('model'), 'stop_reason': body.get('stop_reason')}

        return text, usage.get('input_tokens'), usage.get('output_tokens'), metadata


class GenerateContentProvider(HttpProvider):
    """
    Generate-content wire shape.

    request: contents[{role: user, parts[{text}]}], generationConfig{temperature, maxOutputTokens, seed}
    response: candidates[0].content.parts[].text, usageMetadata.promptTokenCount, usageMetadata.candidatesTokenCount

    The endpoint is a models base URL; ``/<model_name>:generateContent`` is appended unless it contains ``{model}``.
    """

    provider_id = 'gemini'
    default_endpoint = 'https://generativelanguage.googleapis.com/v1beta/models'

    def endpoint(self):
        url = super(GenerateContentProvider, self).endpoint()
        if '{model}' in url:
            return url.format(model=self.spec.model_name)

        return '{}/{}:generateContent'.format(url.rstrip('/'), self.spec.model_name)

    def build_headers(self, credential):
        return {'x-goog-api-key': credential}

    def build_payload(self, request):
        config = {'temperature': request.temperature, 'maxOutputTokens': request.max_output_tokens}
        if request.seed is not None:
            config['seed'] = request.seed

        return {
            'contents': [{'role': 'user', 'parts': [{'text': request.prompt_text}]}],
            'generationConfig': config,
        }

    def parse_response(self, body):
        candidates = body.get('candidates') or []
        if not candidates:
            raise RequestError('{} returned no candidates: {}'.format(self.spec.name, body.get('promptFeedback')))

        candidate = candidates[0]
        text = ''.join(part.get('text', '') for part in candidate.get('content', {}).get('parts', []))
        usage = body.get('usageMetadata') or {}
        metadata = {'finish_reason': candidate.get('finishReason'), 'model': body.get('modelVersion')}

        return text, usage.get('promptTokenCount'), usage.get('candidatesTokenCount'), metadata


def _unit(*parts):
    """
    A uniform draw in [0, 1) that is a pure function of its arguments.
    """

    digest = hashlib.sha256('\x1f'.join(str(part) for part in parts).encode('utf-8')).digest()
    return int.from_bytes(digest[:8], 'big') / float(1 << 64)


def mock_ratings(seed, respondent_key, condition_key, temperature, scale, item_count):
    """
    @brief The ratings the mock answers with.

    The jitter-free base for item i depends only on (seed, respondent_key, i). At temperature t > 0 an item moves one
    point in a direction fixed by (seed, respondent_key, i) when a draw keyed by condition_key falls below min(t, 1);
    at a scale bound the move goes the other way. Two repeats therefore differ by at most one point per item.
    """

    points = scale.max_rating - scale.min_rating + 1
    ratings = []

    for item in range(1, item_count + 1):
        level = 0.6 * _unit(seed, 'item', item) + 0.4 * _unit(seed, 'person', respondent_key, item)
        rating = scale.min_rating + min(points - 1, int(level * points))

        if temperature > 0 and _unit(seed, 'jitter', respondent_key, condition_key, item) < min(temperature, 1.):
            step = 1 if _unit(seed, 'direction', respondent_key, item) < 0.5 else -1
            if not scale.contains(rating + step):
                step = -step
            rating += step

        ratings.append(rating)

    return tuple(ratings)


def mock_complete(request, seed, respondent_key, condition_key, scale, item_count):
    """
    @brief Deterministic stand-in for a chat provider.

    @param request The CompletionRequest (temperature is honored; seed is not, the caller's seed is)
    @param seed Master seed
    @param respondent_key Respondent identity
    @param condition_key Cell identity, including the repeat index
    @param scale LikertScale of the instrument
    @param item_count Number of items to answer
    @return A CompletionResult whose text is a well-formed ratings block
    """

    ratings = mock_ratings(seed, respondent_key, condition_key, request.temperature, scale, item_count)
    raw_text = 'Here are my answers.\n\n{}\n'.format(parsing.render_ratings(ratings))

    return CompletionResult(
        raw_text=raw_text,
        prompt_tokens=tokens.count_tokens(request.prompt_text, backend='approximate'),
        output_tokens=tokens.count_tokens(raw_text, backend='approximate'),
        latency_ms=0,
        provider_metadata={'model': 'mock', 'seed': str(seed)},
    )


class MockProvider(Provider):
    """
    @brief Offline provider answering through mock_complete.

    Needs no credentials and no endpoint. The instrument and master seed are bound at construction.
    """

    provider_id = 'mock'

    def __init__(self, spec, clock=None, environ=None, instrument=None, seed=0, **_):
        super(MockProvider, self).__init__(spec, clock=clock, environ=environ)

        self.instrument = instrument
        self.seed = seed

    def resolve_credential(self):
        return None

    def _send(self, request, credential):
        if self.instrument is None:
            raise ConfigurationError('Mock provider {} was created without an instrument'.format(self.spec.name))

        return mock_complete(request, self.seed, request.respondent_key, request.condition_key, self.instrument.scale,
                             self.instrument.item_count)


def _find_provider_class(provider_id, cls=Provider):
    for sub in cls.__subclasses__():
        if sub.provider_id == provider_id:
            return sub

        found = _find_provider_class(provider_id, cls=sub)
        if found is not None:
            return found

    return None


def from_spec(spec, **options):
    """
    Create a provider by looking for the Provider subclass (at any depth) whose provider_id matches ``spec.provider_id``.

    @param spec A ProviderSpec
    @param options Keyword arguments for the constructor (clock, environ, transport, instrument, seed)
    @return The provider
    """

    logger = logging.getLogger(__name__)

    cls = _find_provider_class(spec.provider_id)
    if cls is None:
        logger.error('Could not create %s; there is no adapter for %s', spec.name, spec.provider_id)
        raise ConfigurationError('No adapter for provider_id {}'.format(spec.provider_id))

    logger.debug('Found adapter %s for %s', cls.__name__, spec.name)
    return cls(spec, **options)
