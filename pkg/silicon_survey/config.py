"""
Workspace configuration: one YAML document naming the manifest, resource overrides and run settings.
"""

import logging
import os
import pathlib
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, PositiveInt

from silicon_survey import design, documents, prompts, providers, survey, tokens
from silicon_survey.errors import ConfigurationError, SurveyError
from silicon_survey.survey import Violation

CONFIG_ENV_VAR = 'SILICON_SURVEY_CONFIG'
RESOURCES = ('instrument', 'roster', 'template', 'background', 'providers')


class WorkspaceConfig(BaseModel):
    """
    @brief Settings for one workspace. Relative paths resolve against ``base_dir`` (the config file's directory).
    """

    model_config = ConfigDict(frozen=True, extra='forbid')

    manifest: str
    instrument: Optional[str] = None
    roster: Optional[str] = None
    template: Optional[str] = None
    background: Optional[str] = None
    providers: Optional[str] = None
    output_dir: str = 'out'
    encoding_id: str = tokens.DEFAULT_ENCODING
    tokenizer_backend: Literal['auto', 'tiktoken', 'approximate'] = 'auto'
    log_level: str = 'INFO'
    workers: PositiveInt = 4
    base_dir: Optional[str] = None

    def resolve(self, value):
        path = pathlib.Path(value)
        if not path.is_absolute() and self.base_dir is not None:
            path = pathlib.Path(self.base_dir) / path

        return path

    @property
    def manifest_path(self):
        path = self.resolve(self.manifest)
        if not path.exists() and documents.bundled_path(self.manifest).exists():
            return documents.bundled_path(self.manifest)

        return path

    @property
    def output_path(self):
        return self.resolve(self.output_dir)

    def with_overrides(self, **flags):
        """
        A copy with every flag that is not None applied.
        """

        return self.model_copy(update={name: value for name, value in flags.items() if value is not None})


def load_config(path=None, environ=None):
    """
    @brief Load the workspace config from ``path``, falling back to the SILICON_SURVEY_CONFIG variable.

    @throws ConfigurationError if neither names a readable, valid file
    """

    environ = os.environ if environ is None else environ
    path = path or environ.get(CONFIG_ENV_VAR)
    if not path:
        raise ConfigurationError('No workspace config: pass --config or set {}'.format(CONFIG_ENV_VAR))

    path = pathlib.Path(path)
    config = documents.load_document(path, WorkspaceConfig)
    logging.getLogger(__name__).debug('Loaded workspace config %s', path)

    return config.model_copy(update={'base_dir': str(path.resolve().parent)})


class Workspace(object):
    """
    @brief The loaded resources of a workspace: manifest, instrument, roster, template, background and providers.
    """

    def __init__(self, config):
        self.logger = logging.getLogger(self.__class__.__name__)
        self.config = config
        self.manifest = design.load_manifest(config.manifest_path)

        self.paths = {name: self.resource_path(name) for name in RESOURCES}

        self.instrument = survey.load_instrument(self.paths['instrument'])
        self.roster = survey.load_roster(self.paths['roster'])
        self.template = prompts.PromptTemplate.load(self.paths['template'])
        self.background = prompts.load_background(self.paths['background'])
        self.catalog = providers.load_providers(self.paths['providers'])

        self.logger.info('Loaded workspace [manifest=%s, respondents=%d, items=%d]', self.manifest.manifest_id,
                         len(self.roster), self.instrument.item_count)

    def resource_path(self, name):
        """
        The config's override for a resource if set, else the manifest's reference.
        """

        override = getattr(self.config, name)
        if override is not None:
            return self.config.resolve(override)

        return self.manifest.resolve(getattr(self.manifest, name))

    @property
    def store_path(self):
        return self.config.output_path / 'runs' / '{}.jsonl'.format(self.manifest.manifest_id)

    @property
    def reports_path(self):
        return self.config.output_path / 'reports' / self.manifest.manifest_id

    def violations(self):
        """
        @return Every load-time violation across instrument, roster, template, providers, manifest and output dir
        """

        violations = []
        violations.extend(survey.validate_instrument(self.instrument, str(self.paths['instrument'])))
        violations.extend(survey.validate_roster(self.roster, self.instrument, str(self.paths['roster'])))
        violations.extend(self.template.validate())
        violations.extend(providers.validate_provider_specs(self.catalog, str(self.paths['providers'])))
        violations.extend(design.validate_manifest(self.manifest, self.catalog, self.roster,
                                                   str(self.config.manifest_path)))

        if not self.background.strip():
            violations.append(Violation(str(self.paths['background']), 'background', 'research background is empty'))

        if self.config.encoding_id not in tokens.SUPPORTED_ENCODINGS:
            violations.append(Violation('config', 'encoding_id', 'unknown encoding {}'.format(
                self.config.encoding_id)))

        problem = output_dir_problem(self.config.output_path)
        if problem:
            violations.append(Violation('config', 'output_dir', problem))

        return violations


def output_dir_problem(path):
    """
    @return None if the directory exists or can be created, else a description of the problem
    """

    path = pathlib.Path(path).resolve()
    probe = path
    while not probe.exists():
        if probe.parent == probe:
            break
        probe = probe.parent

    if not probe.is_dir():
        return '{} is not a directory'.format(probe)
    if not os.access(str(probe), os.W_OK):
        return '{} is not writable'.format(probe)

    return None


def load_workspace(config):
    """
    @throws ConfigurationError (or another SurveyError) if a resource cannot be loaded
    """

    try:
        return Workspace(config)
    except SurveyError:
        raise
    except (OSError, ValueError) as exc:
        raise ConfigurationError('Cannot load workspace: {}'.format(exc)) from exc
