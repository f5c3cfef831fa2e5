"""
CSV reports, the run summary document and long-format plot data for a completed (or partial) run.
"""

import collections
import dataclasses
import itertools
import json
import logging
import pathlib
from typing import List

import pandas as pd

from silicon_survey import design, metrics, prompts, runner, tokens
from silicon_survey.errors import AssemblyError, DesignError, EmptyMatrixError, PartialDataError
from silicon_survey.survey import HUMAN

NA = 'NA'

ITEM_STATS_COLUMNS = ('chatbot', 'variant', 'temperature', 'item_id', 'mean', 'variance', 'n')
RMSE_ITEM_COLUMNS = ('chatbot', 'variant', 'temperature', 'item_id', 'rmse', 'n')
RMSE_PERSON_COLUMNS = ('chatbot', 'variant', 'temperature', 'respondent_id', 'rmse', 'n_items')
RMSE_TEST_COLUMNS = ('chatbot', 'variant', 'temperature', 'rmse', 'n')
CORRELATIONS_HUMAN_COLUMNS = ('chatbot', 'variant', 'temperature', 'rho', 'n_points')
ANOVA_COLUMNS = ('factor', 'df', 'ss', 'ms', 'f', 'p')
PLOT_COLUMNS = ('figure', 'chatbot', 'variant', 'temperature', 'x', 'value')
TOKEN_COUNT_COLUMNS = ('respondent_id', 'variant', 'token_count', 'encoding', 'backend')

COLLAPSED_TEMPERATURE = 'mean'


@dataclasses.dataclass
class CollectedRun(object):
    """
    @brief Matrices of every usable condition plus what was left out.
    """

    human: object
    matrices: dict
    exclusions: List[dict]
    excluded_conditions: list
    gaps: list


@dataclasses.dataclass(frozen=True)
class ReportResult(object):
    out_dir: pathlib.Path
    files: tuple
    summary: dict


def _condition_columns(condition):
    return condition.chatbot, condition.prompt_variant, condition.temperature


def collect_run(store, manifest, roster, instrument, partial=False):
    """
    @brief Gather the response matrix of every condition, aligned with the human matrix.

    @param partial Accept a store with missing keys; without it a gap raises PartialDataError
    @throws EmptyMatrixError for an empty store
    @throws PartialDataError listing missing keys when partial is False
    """

    logger = logging.getLogger(__name__)

    if len(store) == 0:
        raise EmptyMatrixError('Run store {} holds no records'.format(store.path))

    gaps = runner.missing_keys(manifest, store, roster)
    if gaps and not partial:
        raise PartialDataError(gaps)
    if gaps:
        logger.warning('Reporting on a partial store [missing=%d]', len(gaps))

    respondent_ids = design.manifest_respondents(manifest, roster)
    human = runner.human_matrix(roster, instrument, respondent_ids)

    matrices = collections.OrderedDict()
    exclusions = []
    excluded_conditions = []

    for condition in design.enumerate_conditions(manifest):
        try:
            matrix = runner.collect_matrix(store, condition, instrument, roster, respondent_ids,
                                           manifest.repeats_per_cell)
        except EmptyMatrixError:
            logger.warning('Excluding condition %s: no ok records', condition.label)
            excluded_conditions.append(condition)
            exclusions.extend({'condition': condition.label, 'respondent_id': rid, 'reason': 'no ok record'}
                              for rid in respondent_ids)
            continue

        exclusions.extend({'condition': condition.label, 'respondent_id': rid, 'reason': reason}
                          for rid, reason in matrix.exclusions)

        # Respondents without observed ratings cannot be compared
        common = [rid for rid in matrix.respondent_ids if rid in human]
        if not common:
            logger.warning('Excluding condition %s: no respondent with observed ratings', condition.label)
            excluded_conditions.append(condition)
            continue

        matrices[condition] = matrix.restricted(common)

    return CollectedRun(human, matrices, exclusions, excluded_conditions, gaps)


def _frame(rows, columns):
    return pd.DataFrame(list(rows), columns=list(columns))


def _write(frame, path):
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, na_rep=NA)
    return path


def _item_stats_rows(collected):
    for condition, matrix in collected.matrices.items():
        for stats in metrics.item_stats(matrix):
            yield _condition_columns(condition) + (stats.item_id, stats.mean, stats.variance, stats.n)

    for stats in metrics.item_stats(collected.human):
        yield (HUMAN, None, None, stats.item_id, stats.mean, stats.variance, stats.n)


def _pairs_frame(pair_reports, manifest):
    conditions = design.enumerate_conditions(manifest)
    chatbots = list(collections.OrderedDict.fromkeys(condition.chatbot for condition in conditions))
    variants = list(collections.OrderedDict.fromkeys(condition.prompt_variant for condition in conditions))
    temperatures = sorted(set(condition.temperature for condition in conditions))

    pairs = ['rho_{}_{}'.format(first, second) for first, second in itertools.combinations(chatbots, 2)]
    by_cell = {(report.temperature, report.variant, 'rho_{}_{}'.format(*report.pair)): report.rho
               for report in pair_reports}

    rows = [[temperature, variant] + [by_cell.get((temperature, variant, pair)) for pair in pairs]
            for temperature in temperatures for variant in variants]

    return _frame(rows, ['temperature', 'variant'] + pairs)


def _human_rows(human_reports):
    for report in human_reports:
        temperature = COLLAPSED_TEMPERATURE if report.collapsed else report.temperature
        yield (report.pair[0], report.variant, temperature, report.rho, report.n_points)


def _anova_frame(pair_reports):
    logger = logging.getLogger(__name__)

    try:
        table = metrics.anova3_main_effects(metrics.anova_observations(pair_reports))
    except DesignError as exc:
        logger.warning('Skipping ANOVA: %s', exc)
        return _frame([], ANOVA_COLUMNS), str(exc)

    return _frame([(row.factor, row.df, row.ss, row.ms, row.f, row.p) for row in table.rows], ANOVA_COLUMNS), None


def _plot_frames(item_stats_frame, item_reports, person_reports, test_reports, human_reports):
    frames = collections.OrderedDict()

    def stat_rows(figure, column):
        for row in item_stats_frame.itertuples(index=False):
            yield (figure, row.chatbot, row.variant, row.temperature, row.item_id, getattr(row, column))

    frames['item_means'] = _frame(stat_rows('item_means', 'mean'), PLOT_COLUMNS)
    frames['item_variances'] = _frame(stat_rows('item_variances', 'variance'), PLOT_COLUMNS)
    frames['human_correlations'] = _frame(
        (('human_correlations', chatbot, variant, temperature, variant, rho)
         for chatbot, variant, temperature, rho, _ in _human_rows(human_reports)), PLOT_COLUMNS)
    frames['item_rmse'] = _frame(
        (('item_rmse',) + _condition_columns(report.source) + (item_id, value)
         for report in item_reports for item_id, value in report.values.items()), PLOT_COLUMNS)
    frames['person_rmse'] = _frame(
        (('person_rmse',) + _condition_columns(report.source) + (respondent_id, value)
         for report in person_reports for respondent_id, value in report.values.items()), PLOT_COLUMNS)
    frames['test_rmse'] = _frame(
        (('test_rmse',) + _condition_columns(report.source) + (report.source.prompt_variant, report.value)
         for report in test_reports), PLOT_COLUMNS)

    return frames


def _correlation_summary(report):
    return collections.OrderedDict((('rho', report.rho), ('p_value', report.p_value), ('n', report.n_points)))


def token_count_frame(roster, background, instrument, template, encoding_id=tokens.DEFAULT_ENCODING, backend='auto'):
    """
    @brief Token count of every prompt variant for every respondent.

    A variant that cannot be assembled for a respondent (for example an empty interview) gets no count.

    @return A DataFrame with TOKEN_COUNT_COLUMNS
    """

    logger = logging.getLogger(__name__)
    tokenizer = tokens.get_tokenizer(encoding_id, backend)

    rows = []
    for respondent in roster:
        for variant_id in prompts.VARIANTS:
            try:
                count = prompts.assemble_prompt(variant_id, respondent, background, instrument, template, encoding_id,
                                                backend).token_count
            except AssemblyError as exc:
                logger.warning('No token count for %s: %s', respondent.respondent_id, exc)
                count = None

            rows.append((respondent.respondent_id, variant_id, count, encoding_id, tokenizer.name))

    frame = _frame(rows, TOKEN_COUNT_COLUMNS)
    # Nullable integers keep counts integral next to a missing one
    frame['token_count'] = frame['token_count'].astype('Int64')
    return frame


def write_reports(store, manifest, roster, instrument, out_dir, encoding_id=tokens.DEFAULT_ENCODING, backend='auto',
                  partial=False, plot_data=False, per_respondent=False):
    """
    @brief Compute every alignment metric and write the report files.

    Writes item_stats.csv, rmse_item.csv, rmse_person.csv, rmse_test.csv, correlations_pairs.csv,
    correlations_human.csv, anova.csv and summary.json into out_dir, and plot_data/*.csv when plot_data is set.

    @return A ReportResult
    """

    logger = logging.getLogger(__name__)
    out_dir = pathlib.Path(out_dir)

    collected = collect_run(store, manifest, roster, instrument, partial=partial)
    human = collected.human
    files = []

    item_stats_frame = _frame(_item_stats_rows(collected), ITEM_STATS_COLUMNS)
    files.append(_write(item_stats_frame, out_dir / 'item_stats.csv'))

    item_reports = []
    person_reports = []
    test_reports = []
    for condition, matrix in collected.matrices.items():
        aligned_human = human.restricted(matrix.respondent_ids)
        item_reports.append(metrics.item_rmse(matrix, aligned_human))
        person_reports.append(metrics.person_rmse(matrix, aligned_human))
        test_reports.append(metrics.test_rmse(matrix, aligned_human, instrument))

    files.append(_write(_frame(
        (_condition_columns(report.source) + (item_id, value, report.n)
         for report in item_reports for item_id, value in report.values.items()), RMSE_ITEM_COLUMNS),
        out_dir / 'rmse_item.csv'))
    files.append(_write(_frame(
        (_condition_columns(report.source) + (respondent_id, value, instrument.item_count)
         for report in person_reports for respondent_id, value in report.values.items()), RMSE_PERSON_COLUMNS),
        out_dir / 'rmse_person.csv'))
    files.append(_write(_frame(
        (_condition_columns(report.source) + (report.value, report.n) for report in test_reports), RMSE_TEST_COLUMNS),
        out_dir / 'rmse_test.csv'))

    pair_reports = metrics.pair_correlations(collected.matrices, manifest, metrics.LLM_VS_LLM,
                                             per_respondent=per_respondent, excluded=collected.excluded_conditions)
    human_reports = metrics.pair_correlations(collected.matrices, manifest, metrics.LLM_VS_HUMAN, human=human,
                                              per_respondent=per_respondent, excluded=collected.excluded_conditions)

    files.append(_write(_pairs_frame(pair_reports, manifest), out_dir / 'correlations_pairs.csv'))
    files.append(_write(_frame(_human_rows(human_reports), CORRELATIONS_HUMAN_COLUMNS),
                        out_dir / 'correlations_human.csv'))

    anova_frame, anova_error = _anova_frame(pair_reports)
    files.append(_write(anova_frame, out_dir / 'anova.csv'))

    association = metrics.interview_length_association(roster, person_reports, encoding_id, backend)

    summary = collections.OrderedDict()
    summary['manifest_id'] = manifest.manifest_id
    summary['encoding_id'] = encoding_id
    summary['tokenizer_backend'] = tokens.get_tokenizer(encoding_id, backend).name
    summary['correlation_mode'] = 'per_respondent' if per_respondent else 'flattened'
    summary['effective_n'] = collections.OrderedDict(
        (condition.label, len(matrix)) for condition, matrix in collected.matrices.items())
    summary['human_n'] = len(human)
    summary['exclusions'] = collected.exclusions
    summary['excluded_conditions'] = [condition.label for condition in collected.excluded_conditions]
    summary['missing_keys'] = [str(key) for key in collected.gaps]
    summary['interview_length_association'] = _correlation_summary(association)
    summary['factor_means'] = metrics.factor_means(pair_reports)
    summary['valence_rmse'] = collections.OrderedDict(
        (report.source.label, metrics.valence_rmse(report, instrument)) for report in item_reports)
    summary['anova_error'] = anova_error

    summary_path = out_dir / 'summary.json'
    summary_path.write_text(json.dumps(summary, indent=2) + '\n', encoding='utf-8')
    files.append(summary_path)

    if plot_data:
        for name, frame in _plot_frames(item_stats_frame, item_reports, person_reports, test_reports,
                                        human_reports).items():
            files.append(_write(frame, out_dir / 'plot_data' / '{}.csv'.format(name)))

    logger.info('Wrote reports [dir=%s, files=%d, conditions=%d, excluded=%d]', out_dir, len(files),
                len(collected.matrices), len(collected.excluded_conditions))

    return ReportResult(out_dir, tuple(files), summary)
