"""
Command-line entry point: validate, tokenize, simulate and metrics.

Exit codes: 0 success, 1 validation problems, 2 runtime errors, 3 refusal to report on a partial store.
"""

import functools
import logging
import pathlib

import click

from silicon_survey import config as workspace_config
from silicon_survey import logs, reports, runner, tokens
from silicon_survey.errors import ConfigurationError, PartialDataError, SurveyError
from silicon_survey.store import OK, PARSE_FAILED, TRANSPORT_FAILED, RunStore

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_PARTIAL = 3

manifest_option = click.option('--manifest', default=None, type=click.Path(dir_okay=False),
                               help='Use this run manifest instead of the one named in the workspace config.')


def _manifest_override(manifest):
    """
    A --manifest path that exists relative to the working directory is made absolute; any other value resolves
    against the config's directory and then the bundled files.
    """

    if manifest is None:
        return None

    path = pathlib.Path(manifest)
    return str(path.resolve()) if path.exists() else manifest


def _load(ctx, manifest=None):
    """
    Load the workspace named by the group options; configuration problems exit with the validation code.
    """

    options = ctx.obj
    try:
        config = workspace_config.load_config(options['config_path']).with_overrides(
            manifest=_manifest_override(manifest), output_dir=options['output_dir'], encoding_id=options['encoding'],
            log_level=options['log_level'], workers=options['workers'])
        logs.configure_logging(config.log_level)
        return workspace_config.load_workspace(config)
    except (SurveyError, ValueError) as exc:
        click.echo('error: {}'.format(exc), err=True)
        ctx.exit(EXIT_VALIDATION)


def _report_violations(workspace):
    violations = workspace.violations()
    for violation in violations:
        click.echo(str(violation))

    return violations


def _runtime_errors(command):
    """
    Map uncaught package errors in a command to the runtime exit code.
    """

    @functools.wraps(command)
    def wrapper(*args, **kwargs):
        ctx = click.get_current_context()
        try:
            return command(*args, **kwargs)
        except SurveyError as exc:
            logging.getLogger(__name__).error('%s failed: %s', ctx.info_name, exc)
            click.echo('error: {}'.format(exc), err=True)
            ctx.exit(EXIT_RUNTIME)

    return wrapper


@click.group()
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
              help='Workspace config file (default: $SILICON_SURVEY_CONFIG).')
@click.option('--output-dir', default=None, help='Override the output directory.')
@click.option('--encoding', default=None, type=click.Choice(tokens.SUPPORTED_ENCODINGS),
              help='Override the token encoding.')
@click.option('--log-level', default=None, type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR'],
                                                             case_sensitive=False), help='Override the log level.')
@click.option('--workers', default=None, type=click.IntRange(min=1), help='Override the worker count.')
@click.pass_context
def cli(ctx, config_path, output_dir, encoding, log_level, workers):
    """Simulate Likert survey responses with LLM prompts and measure alignment with human answers."""

    logs.configure_logging(log_level or 'INFO')
    ctx.obj = {'config_path': config_path, 'output_dir': output_dir, 'encoding': encoding, 'log_level': log_level,
               'workers': workers}


@cli.command()
@manifest_option
@click.pass_context
def validate(ctx, manifest):
    """Run every load-time validation; exit 0 only when clean."""

    workspace = _load(ctx, manifest)
    if _report_violations(workspace):
        ctx.exit(EXIT_VALIDATION)

    click.echo('ok: {} is valid'.format(workspace.config.manifest_path))


@cli.command()
@manifest_option
@click.pass_context
@_runtime_errors
def tokenize(ctx, manifest):
    """Print the token count of every prompt variant for every respondent as CSV."""

    workspace = _load(ctx, manifest)
    config = workspace.config

    frame = reports.token_count_frame(workspace.roster, workspace.background, workspace.instrument,
                                      workspace.template, config.encoding_id, config.tokenizer_backend)
    click.echo(frame.to_csv(index=False, na_rep=reports.NA), nl=False)


@cli.command()
@manifest_option
@click.option('--resume', is_flag=True, help='Continue an existing run store, running only missing keys.')
@click.pass_context
@_runtime_errors
def simulate(ctx, manifest, resume):
    """Execute the manifest against its providers and append records to the run store."""

    workspace = _load(ctx, manifest)
    if _report_violations(workspace):
        ctx.exit(EXIT_VALIDATION)

    config = workspace.config
    with RunStore(workspace.store_path) as store:
        if len(store) and not resume:
            raise ConfigurationError('Run store {} already holds {} record(s); pass --resume to continue it'.format(
                store.path, len(store)))

        built = runner.build_providers(workspace.manifest, workspace.catalog, workspace.instrument)
        try:
            summary = runner.execute_run(workspace.manifest, store, built, workspace.roster, workspace.instrument,
                                         workspace.template, workspace.background, config.encoding_id,
                                         config.tokenizer_backend, workers=config.workers)
        finally:
            for provider in built.values():
                provider.close()

    click.echo('ok={} parse_failed={} transport_failed={} skipped={}'.format(
        summary.count(OK), summary.count(PARSE_FAILED), summary.count(TRANSPORT_FAILED), summary.skipped))
    click.echo('store: {}'.format(workspace.store_path))


@cli.command()
@manifest_option
@click.option('--partial', is_flag=True, help='Report on a store with missing keys, listing the gaps.')
@click.option('--plot-data', is_flag=True, help='Also write long-format plot tables under plot_data/.')
@click.option('--per-respondent', is_flag=True,
              help='Average per-respondent correlations instead of pooling persons and items.')
@click.pass_context
@_runtime_errors
def metrics(ctx, manifest, partial, plot_data, per_respondent):
    """Compute every alignment metric from the run store and write the report files."""

    workspace = _load(ctx, manifest)
    config = workspace.config

    if not workspace.store_path.exists():
        raise ConfigurationError('No run store at {}; run simulate first'.format(workspace.store_path))

    with RunStore(workspace.store_path) as store:
        try:
            result = reports.write_reports(store, workspace.manifest, workspace.roster, workspace.instrument,
                                           workspace.reports_path, config.encoding_id, config.tokenizer_backend,
                                           partial=partial, plot_data=plot_data, per_respondent=per_respondent)
        except PartialDataError as exc:
            click.echo('error: {}; pass --partial to report anyway'.format(exc), err=True)
            for key in exc.gaps:
                click.echo('missing: {}'.format(key), err=True)
            ctx.exit(EXIT_PARTIAL)

    for path in result.files:
        click.echo(str(path))


def main():
    cli(prog_name='silicon-survey')


if __name__ == '__main__':
    main()
