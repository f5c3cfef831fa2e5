"""
Append-only JSONL store of run records with a terminal-status index rebuilt on open.
"""

import dataclasses
import json
import logging
import pathlib
import threading
from typing import Dict, Optional

from silicon_survey.design import RunKey
from silicon_survey.errors import ConfigurationError
from silicon_survey.parsing import ParsedRatings

OK = 'ok'
PARSE_FAILED = 'parse_failed'
TRANSPORT_FAILED = 'transport_failed'
STATUSES = (OK, PARSE_FAILED, TRANSPORT_FAILED)


@dataclasses.dataclass(frozen=True)
class RunRecord(object):
    """
    @brief The terminal outcome of one run key.

    ``status`` is ok exactly when ``parsed`` holds a ratings vector. Transport failures carry no parse; their
    ``error_kind`` names the provider error class (for example ContextLengthError).
    """

    key: RunKey
    status: str
    prompt_digest: str
    token_count: int
    raw_text: str = ''
    parsed: Optional[ParsedRatings] = None
    seed: Optional[int] = None
    attempt_count: int = 0
    reask_count: int = 0
    prompt_tokens: int = 0
    output_tokens: int = 0
    latency_ms: int = 0
    provider_metadata: Dict[str, str] = dataclasses.field(default_factory=dict)
    error: Optional[str] = None
    error_kind: Optional[str] = None

    def __post_init__(self):
        if self.status not in STATUSES:
            raise ValueError('Unknown status {}; expected one of {}'.format(self.status, ', '.join(STATUSES)))

        parsed_ok = self.parsed is not None and self.parsed.ok
        if (self.status == OK) != parsed_ok:
            raise ValueError('Record {} has status {} but parsed ok={}'.format(self.key, self.status, parsed_ok))

    @property
    def ratings(self):
        return self.parsed.ratings if self.status == OK else None

    def to_dict(self):
        data = dataclasses.asdict(self)
        data['key'] = self.key.to_dict()
        data['parsed'] = None if self.parsed is None else self.parsed.to_dict()
        return data

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        data['key'] = RunKey.from_dict(data['key'])
        data['parsed'] = None if data.get('parsed') is None else ParsedRatings.from_dict(data['parsed'])
        return cls(**data)


class RunStore(object):
    """
    @brief Append-only record file: ``<output_dir>/runs/<manifest_id>.jsonl``.

    At most one record is kept per key; appending a key that already has one is a no-op. A torn last line (from an
    interrupted write) is cut off when the store is opened, so its key is run again on resume.
    """

    def __init__(self, path):
        self.logger = logging.getLogger(self.__class__.__name__)
        self.path = pathlib.Path(path)

        self._records = []
        self._index = {}
        self._lock = threading.Lock()
        self._handle = None

        self._load()

    def _load(self):
        if not self.path.exists():
            return

        data = self.path.read_bytes()
        offset = 0
        line_number = 0

        while offset < len(data):
            end = data.find(b'\n', offset)
            line_number += 1
            line = data[offset:] if end < 0 else data[offset:end]

            try:
                record = RunRecord.from_dict(json.loads(line.decode('utf-8')))
            except (ValueError, KeyError, TypeError) as exc:
                if end < 0 or end == len(data) - 1:
                    self.logger.warning('Dropping torn last line of %s [line=%d, error=%s]', self.path, line_number,
                                        exc)
                    with self.path.open('r+b') as handle:
                        handle.truncate(offset)
                    break

                raise ConfigurationError('Corrupt record on line {} of {}: {}'.format(line_number, self.path,
                                                                                      exc)) from exc

            if end < 0:
                # Complete JSON without its newline: keep the record and finish the line
                with self.path.open('ab') as handle:
                    handle.write(b'\n')

            self._remember(record)
            offset = len(data) if end < 0 else end + 1

        self.logger.debug('Opened %s [records=%d]', self.path, len(self._records))

    def _remember(self, record):
        if record.key in self._index:
            self.logger.warning('Ignoring second record for %s in %s', record.key, self.path)
            return

        self._index[record.key] = record
        self._records.append(record)

    def append(self, record):
        """
        @brief Persist a terminal record.

        @return True if written, False if the key already had a record
        """

        with self._lock:
            if record.key in self._index:
                return False

            if self._handle is None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                self._handle = self.path.open('a', encoding='utf-8')

            self._handle.write(json.dumps(record.to_dict(), sort_keys=True) + '\n')
            self._handle.flush()

            self._index[record.key] = record
            self._records.append(record)

        return True

    def get(self, key):
        return self._index.get(key)

    def records(self):
        return list(self._records)

    def close(self):
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def __contains__(self, key):
        return key in self._index

    def __len__(self):
        return len(self._records)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
