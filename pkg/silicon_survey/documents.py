"""
Loading of the YAML definition files and the bundled defaults.
"""

import logging
import pathlib

import pydantic
import yaml

from silicon_survey.errors import ConfigurationError

DATA_DIR = pathlib.Path(__file__).resolve().parent / 'data'


def bundled_path(name):
    """
    @brief Path of a definition file shipped with the package (e.g. ``breq.yaml``).
    """

    return DATA_DIR / name


def read_yaml(path):
    """
    Read a YAML document, raising ConfigurationError for unreadable or malformed files.

    @param path Path to the document
    @return The parsed document (a dict for every format this package uses)
    """

    path = pathlib.Path(path)
    try:
        with path.open('r', encoding='utf-8') as handle:
            data = yaml.safe_load(handle)
    except OSError as exc:
        raise ConfigurationError('Cannot read {}: {}'.format(path, exc)) from exc
    except yaml.YAMLError as exc:
        raise ConfigurationError('Malformed YAML in {}: {}'.format(path, exc)) from exc

    if data is None:
        data = {}

    if not isinstance(data, dict):
        raise ConfigurationError('Expected a mapping at the top of {}, got {}'.format(path, type(data).__name__))

    logging.getLogger(__name__).debug('Read document %s', path)
    return data


def validate_document(model, data, source):
    """
    Validate parsed data against a pydantic model, flattening field errors into one ConfigurationError.

    @param model The pydantic model class
    @param data The parsed document
    @param source File name or label used in the error message
    @return The model instance
    """

    try:
        return model.model_validate(data)
    except pydantic.ValidationError as exc:
        problems = ['{}: {}'.format('.'.join(str(part) for part in error['loc']) or '<root>', error['msg'])
                    for error in exc.errors()]
        raise ConfigurationError('Invalid {}:\n  {}'.format(source, '\n  '.join(problems))) from exc


def load_document(path, model):
    return validate_document(model, read_yaml(path), str(path))
