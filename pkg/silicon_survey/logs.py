"""
Line-oriented key=value logging to standard error.
"""

import datetime
import logging
import sys


class KeyValueFormatter(logging.Formatter):
    """
    @brief Render each record as a single ``key=value`` line.

    Messages are quoted and embedded quotes and newlines escaped so one record is always one line.
    """

    def format(self, record):
        message = record.getMessage()
        if record.exc_info:
            message = '{} {}'.format(message, self.formatException(record.exc_info))

        message = message.replace('\\', '\\\\').replace('"', '\\"').replace('\n', '\\n')
        timestamp = datetime.datetime.fromtimestamp(record.created, tz=datetime.timezone.utc)

        return 'time={} level={} logger={} msg="{}"'.format(
            timestamp.isoformat(timespec='milliseconds'), record.levelname, record.name, message
        )


def configure_logging(level='INFO', stream=None):
    """
    Install a single stderr handler on the root logger; calling again replaces it.

    @param level A level name or number
    @param stream Override the output stream (tests)
    @return The installed handler
    """

    if isinstance(level, str):
        numeric = logging.getLevelName(level.upper())
        if not isinstance(numeric, int):
            raise ValueError('Unknown log level %s' % level)
        level = numeric

    root = logging.getLogger()
    for handler in list(root.handlers):
        if getattr(handler, '_silicon_survey', False):
            root.removeHandler(handler)

    handler = logging.StreamHandler(stream or sys.stderr)
    handler.setFormatter(KeyValueFormatter())
    handler._silicon_survey = True

    root.addHandler(handler)
    root.setLevel(level)

    return handler
