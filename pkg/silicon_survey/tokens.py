"""
Token accounting for assembled prompts.

The default backend is tiktoken's BPE tables. When they cannot be loaded (tiktoken missing, or the encoding file not
cached and no network), the ``auto`` backend falls back to a word/punctuation approximation and says so through its
``name``, which is written next to every count.
"""

import abc
import functools
import logging
import math
import re

from silicon_survey.errors import ConfigurationError

DEFAULT_ENCODING = 'o200k_base'
SUPPORTED_ENCODINGS = ('o200k_base', 'cl100k_base', 'p50k_base', 'r50k_base')
BACKENDS = ('auto', 'tiktoken', 'approximate')


class TokenizerBackend(abc.ABC):
    """
    @brief Counts tokens of text under one encoding.

    merge_slack bounds how far ``count(a + b)`` may exceed ``count(a) + count(b)``.
    """

    name = None
    merge_slack = 0

    def __init__(self, encoding_id):
        if encoding_id not in SUPPORTED_ENCODINGS:
            raise ConfigurationError('Unknown encoding {}; expected one of {}'.format(
                encoding_id, ', '.join(SUPPORTED_ENCODINGS)))

        self.encoding_id = encoding_id
        self.logger = logging.getLogger(self.__class__.__name__)

    @abc.abstractmethod
    def count(self, text):
        """
        @param text Any text
        @return Non-negative token count
        """

        pass


class TiktokenBackend(TokenizerBackend):
    name = 'tiktoken'
    merge_slack = 3

    def __init__(self, encoding_id):
        super(TiktokenBackend, self).__init__(encoding_id)

        import tiktoken

        self._encoding = tiktoken.get_encoding(encoding_id)

    def count(self, text):
        if not text:
            return 0

        # Prompts are data; special-token strings inside a transcript are counted as plain text
        return len(self._encoding.encode(text, disallowed_special=()))


class ApproximateBackend(TokenizerBackend):
    """
    @brief Word/punctuation approximation: each word costs one token per started four characters and each punctuation
    mark costs one token.

    Joining two texts can only merge a word across the boundary, which never increases the count, so merge_slack is 0.
    """

    name = 'approximate'
    merge_slack = 0

    CHARS_PER_TOKEN = 4
    _PIECES = re.compile(r'\w+|[^\w\s]')

    def count(self, text):
        total = 0
        for piece in self._PIECES.findall(text):
            if piece[0].isalnum() or piece[0] == '_':
                total += int(math.ceil(len(piece) / float(self.CHARS_PER_TOKEN)))
            else:
                total += 1

        return total


@functools.lru_cache(maxsize=None)
def get_tokenizer(encoding_id=DEFAULT_ENCODING, backend='auto'):
    """
    @brief Resolve a tokenizer backend, cached per (encoding, backend).

    @param encoding_id A supported encoding name
    @param backend ``auto`` (tiktoken, falling back to the approximation), ``tiktoken`` or ``approximate``
    """

    logger = logging.getLogger(__name__)

    if backend not in BACKENDS:
        raise ConfigurationError('Unknown tokenizer backend {}; expected one of {}'.format(backend, ', '.join(BACKENDS)))

    if backend == 'approximate':
        return ApproximateBackend(encoding_id)

    try:
        return TiktokenBackend(encoding_id)
    except ConfigurationError:
        raise
    except Exception as exc:
        if backend == 'tiktoken':
            raise ConfigurationError('tiktoken cannot load {}: {}'.format(encoding_id, exc)) from exc

        logger.warning('Falling back to approximate token counts [encoding=%s, reason=%s]', encoding_id, exc)
        return ApproximateBackend(encoding_id)


def count_tokens(text, encoding_id=DEFAULT_ENCODING, backend='auto'):
    return get_tokenizer(encoding_id, backend).count(text)
