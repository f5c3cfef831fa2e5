"""
Alignment statistics between generated and observed response matrices.

Item statistics, root-mean-square deviations at item, person and test (RAI) level, Pearson correlations between
sources, a main-effects ANOVA over correlation cells, and the association between interview length and person-level
deviation. Undefined values (zero variance, too few points) are None, never 0.
"""

import collections
import dataclasses
import itertools
import logging
from typing import Optional, Tuple

import numpy as np
from scipy import special

from silicon_survey import prompts, tokens
from silicon_survey.design import Condition, enumerate_conditions
from silicon_survey.errors import DesignError, PartialDataError, StructuralError
from silicon_survey.survey import HUMAN, rai

LLM_VS_LLM = 'llm_vs_llm'
LLM_VS_HUMAN = 'llm_vs_human'
MODES = (LLM_VS_LLM, LLM_VS_HUMAN)

ANOVA_FACTORS = ('pair', 'prompt', 'temperature')
RESIDUAL = 'residual'


@dataclasses.dataclass(frozen=True)
class ItemStats(object):
    source: object
    item_id: int
    mean: float
    variance: Optional[float]
    n: int


@dataclasses.dataclass(frozen=True)
class RmseReport(object):
    """
    @brief Deviations of one generated matrix from the human matrix at one level.

    ``values`` maps item_id (item level), respondent_id (person level) or ``'rai'`` (test level) to the RMSE.
    """

    level: str
    source: object
    values: dict
    n: int

    @property
    def value(self):
        if self.level != 'test':
            raise AttributeError('Only test-level reports have a single value')

        return self.values['rai']


@dataclasses.dataclass(frozen=True)
class CorrelationReport(object):
    """
    @brief One Pearson coefficient between two sources; rho is None when undefined.

    ``collapsed`` marks a coefficient averaged over temperature cells.
    """

    pair: Tuple[str, str]
    rho: Optional[float]
    n_points: int
    variant: Optional[str] = None
    temperature: Optional[float] = None
    p_value: Optional[float] = None
    collapsed: bool = False

    @property
    def defined(self):
        return self.rho is not None

    @property
    def pair_label(self):
        return '{}~{}'.format(*self.pair)


@dataclasses.dataclass(frozen=True)
class AnovaRow(object):
    factor: str
    df: int
    ss: float
    ms: Optional[float]
    f: Optional[float]
    p: Optional[float]


@dataclasses.dataclass(frozen=True)
class AnovaTable(object):
    rows: Tuple[AnovaRow, ...]
    n: int

    def row(self, factor):
        for row in self.rows:
            if row.factor == factor:
                return row

        raise KeyError(factor)

    @property
    def residual(self):
        return self.row(RESIDUAL)

    @property
    def total_ss(self):
        return sum(row.ss for row in self.rows)


def item_stats(matrix):
    """
    @brief Per-item sample mean and sample variance (n - 1 denominator) across respondents.

    @param matrix A non-empty ResponseMatrix
    @return A list of ItemStats in item order; variances are None when the matrix has one row
    """

    values = matrix.as_array()
    n = values.shape[0]
    if n == 0:
        raise StructuralError('Cannot describe an empty matrix from {}'.format(matrix.source))

    means = values.mean(axis=0)
    variances = values.var(axis=0, ddof=1) if n > 1 else [None] * matrix.item_count

    return [ItemStats(matrix.source, item_id, float(mean), None if variance is None else float(variance), n)
            for item_id, mean, variance in zip(matrix.instrument.item_ids, means, variances)]


def _aligned(ai, human):
    if set(ai.respondent_ids) != set(human.respondent_ids):
        difference = sorted(set(ai.respondent_ids).symmetric_difference(human.respondent_ids))
        raise StructuralError('Respondent sets differ between {} and {}: {}'.format(ai.source, human.source,
                                                                                   ', '.join(difference)))
    if ai.item_count != human.item_count:
        raise StructuralError('Item counts differ: {} vs {}'.format(ai.item_count, human.item_count))

    ids = human.respondent_ids
    return ids, ai.as_array(ids), human.as_array(ids)


def item_rmse(ai, human):
    """
    @brief For each item, the root of the mean squared difference across respondents.

    @throws StructuralError if the matrices do not cover the same respondents
    """

    ids, a, h = _aligned(ai, human)
    values = np.sqrt(np.mean((a - h) ** 2, axis=0))

    return RmseReport('item', ai.source, collections.OrderedDict(
        (item_id, float(value)) for item_id, value in zip(ai.instrument.item_ids, values)), len(ids))


def person_rmse(ai, human):
    """
    @brief For each respondent, the root of the mean squared difference across items.
    """

    ids, a, h = _aligned(ai, human)
    values = np.sqrt(np.mean((a - h) ** 2, axis=1))

    return RmseReport('person', ai.source, collections.OrderedDict(
        (respondent_id, float(value)) for respondent_id, value in zip(ids, values)), len(ids))


def test_rmse(ai, human, instrument):
    """
    @brief The root of the mean squared difference between generated and observed RAI totals.
    """

    ids, _, _ = _aligned(ai, human)
    differences = np.array([rai(ai.row(rid), instrument) - rai(human.row(rid), instrument) for rid in ids])

    return RmseReport('test', ai.source, {'rai': float(np.sqrt(np.mean(differences ** 2)))}, len(ids))


def pearson(x, y):
    """
    @brief Sample Pearson coefficient.

    @return The coefficient in [-1, 1], or None when either vector is constant
    @throws StructuralError for unequal lengths or fewer than two points
    """

    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise StructuralError('Expected two vectors of equal length but got shapes {} and {}'.format(x.shape, y.shape))
    if len(x) < 2:
        raise StructuralError('Need at least two points for a correlation, got {}'.format(len(x)))

    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return None

    dx = x - x.mean()
    dy = y - y.mean()
    rho = float(np.dot(dx, dy) / np.sqrt(np.dot(dx, dx) * np.dot(dy, dy)))

    return min(1., max(-1., rho))


def t_two_sided_p(t, df):
    """
    Two-sided tail probability of Student's t through the regularized incomplete beta.
    """

    if t is None or df <= 0:
        return None

    return float(special.betainc(df / 2., .5, df / (df + t * t)))


def f_sf(f, d1, d2):
    """
    Upper tail probability of the F distribution through the regularized incomplete beta.
    """

    if f is None or d1 <= 0 or d2 <= 0:
        return None

    return float(special.betainc(d2 / 2., d1 / 2., d2 / (d2 + d1 * f)))


def pearson_p(rho, n):
    """
    Two-sided p-value of a coefficient from n points; exact for |rho| = 1.
    """

    if rho is None or n < 3:
        return None

    df = n - 2
    return float(special.betainc(df / 2., .5, max(0., 1. - rho * rho)))


def _correlate(a, b, per_respondent):
    """
    Coefficient between two matrices over their common respondents.
    """

    common = [rid for rid in b.respondent_ids if rid in a]
    if not common:
        return None, 0

    if not per_respondent:
        x = a.as_array(common).ravel()
        y = b.as_array(common).ravel()
        if len(x) < 2:
            return None, len(x)

        return pearson(x, y), len(x)

    rhos = [pearson(a.row(rid), b.row(rid)) for rid in common]
    rhos = [rho for rho in rhos if rho is not None]
    if not rhos:
        return None, 0

    return float(np.mean(rhos)), len(rhos)


def pair_correlations(matrices, manifest, mode, human=None, per_respondent=False, excluded=()):
    """
    @brief Correlations between chatbots, or between each chatbot and the human responses.

    llm_vs_llm gives one coefficient per (temperature, variant) cell and chatbot pair over the flattened
    person x item vectors. llm_vs_human gives one coefficient per condition plus, per (chatbot, variant), the mean over
    temperatures marked ``collapsed``. With per_respondent the coefficient is computed per respondent over items and
    averaged; ``n_points`` then counts the respondents averaged.

    @param matrices Mapping Condition -> ResponseMatrix
    @param manifest The RunManifest (supplies the design order)
    @param mode LLM_VS_LLM or LLM_VS_HUMAN
    @param human The human ResponseMatrix (llm_vs_human only)
    @param per_respondent Average per-respondent coefficients instead of pooling
    @param excluded Conditions known to have no usable records; their cells are skipped
    @return A list of CorrelationReport
    @throws PartialDataError listing the conditions without a matrix that were not excluded
    """

    if mode not in MODES:
        raise ValueError('Unknown correlation mode {}; expected one of {}'.format(mode, ', '.join(MODES)))

    conditions = enumerate_conditions(manifest)
    gaps = [condition for condition in conditions if condition not in matrices and condition not in excluded]
    if gaps:
        raise PartialDataError(gaps)

    chatbots = list(collections.OrderedDict.fromkeys(condition.chatbot for condition in conditions))
    variants = list(collections.OrderedDict.fromkeys(condition.prompt_variant for condition in conditions))
    temperatures = sorted(set(condition.temperature for condition in conditions))

    reports = []

    if mode == LLM_VS_LLM:
        for temperature, variant in itertools.product(temperatures, variants):
            for first, second in itertools.combinations(chatbots, 2):
                a = matrices.get(Condition(first, variant, temperature))
                b = matrices.get(Condition(second, variant, temperature))
                if a is None or b is None:
                    continue

                rho, n_points = _correlate(a, b, per_respondent)
                reports.append(CorrelationReport((first, second), rho, n_points, variant, temperature,
                                                 None if per_respondent else pearson_p(rho, n_points)))
        return reports

    if human is None:
        raise ValueError('llm_vs_human correlations need the human matrix')

    for chatbot, variant in itertools.product(chatbots, variants):
        cells = []
        for temperature in temperatures:
            matrix = matrices.get(Condition(chatbot, variant, temperature))
            if matrix is None:
                continue

            rho, n_points = _correlate(matrix, human, per_respondent)
            cells.append(CorrelationReport((chatbot, HUMAN), rho, n_points, variant, temperature,
                                           None if per_respondent else pearson_p(rho, n_points)))

        if not cells:
            continue

        reports.extend(cells)
        defined = [cell.rho for cell in cells if cell.defined]
        reports.append(CorrelationReport((chatbot, HUMAN), float(np.mean(defined)) if defined else None,
                                         sum(cell.n_points for cell in cells), variant, None, None, collapsed=True))

    return reports


def anova3_main_effects(observations, factor_names=ANOVA_FACTORS):
    """
    @brief Fixed-effects, main-effects-only ANOVA of a balanced three-factor design with one observation per cell.

    @param observations Iterable of (level_a, level_b, level_c, response)
    @param factor_names Names of the three factors
    @return An AnovaTable with one row per factor and a residual row. A single-level factor has df 0 and no MS, F or p;
        F is None when the residual sum of squares vanishes
    @throws DesignError if any cell is missing or repeated
    """

    logger = logging.getLogger(__name__)

    observations = [tuple(observation) for observation in observations]
    if not observations:
        raise DesignError('No observations')

    levels = [list(collections.OrderedDict.fromkeys(observation[factor] for observation in observations))
              for factor in range(3)]

    cells = collections.Counter(observation[:3] for observation in observations)
    repeated = [cell for cell, count in cells.items() if count > 1]
    expected = int(np.prod([len(factor_levels) for factor_levels in levels]))
    if repeated or len(cells) != expected:
        logger.error('Unbalanced design [cells=%d, expected=%d, repeated=%d]', len(cells), expected, len(repeated))
        raise DesignError('Expected one observation in each of {} cells but found {} distinct cell(s) and {} '
                          'repeated'.format(expected, len(cells), len(repeated)))

    y = np.array([float(observation[3]) for observation in observations])
    n = len(y)
    grand = y.mean()
    constant = np.ptp(y) == 0

    fitted = np.full(n, grand)
    factor_rows = []
    for factor, name in enumerate(factor_names):
        labels = [observation[factor] for observation in observations]
        means = {level: y[[label == level for label in labels]].mean() for level in levels[factor]}
        effects = np.array([means[label] - grand for label in labels])

        fitted += effects
        ss = 0. if constant else float(np.sum(effects ** 2))
        factor_rows.append((name, len(levels[factor]) - 1, ss))

    df_residual = n - 1 - sum(df for _, df, _ in factor_rows)
    ss_residual = 0. if constant else float(np.sum((y - fitted) ** 2))

    ms_residual = ss_residual / df_residual if df_residual > 0 else None
    if ms_residual is not None and ss_residual <= 1e-20 * (1. + float(np.sum(y ** 2))):
        ms_residual_for_f = None
    else:
        ms_residual_for_f = ms_residual

    rows = []
    for name, df, ss in factor_rows:
        ms = ss / df if df > 0 else None
        f = ms / ms_residual_for_f if ms is not None and ms_residual_for_f is not None else None
        rows.append(AnovaRow(name, df, ss, ms, f, f_sf(f, df, df_residual)))

    rows.append(AnovaRow(RESIDUAL, df_residual, ss_residual, ms_residual, None, None))

    return AnovaTable(tuple(rows), n)


def anova_observations(pair_reports):
    """
    (pair, variant, temperature, rho) tuples from llm_vs_llm reports.

    @throws DesignError if a coefficient is undefined
    """

    observations = []
    for report in pair_reports:
        if not report.defined:
            raise DesignError('Correlation {} at {} / {} is undefined'.format(report.pair_label, report.variant,
                                                                             report.temperature))
        observations.append((report.pair_label, report.variant, report.temperature, report.rho))

    return observations


def interview_length_association(roster, person_reports, encoding_id=tokens.DEFAULT_ENCODING, backend='auto'):
    """
    @brief Correlation between interview length in tokens and each respondent's mean person-level RMSE.

    Only person-level reports of interview-bearing variants count. The p-value is the two-sided t-test of the
    coefficient.

    @param roster The Roster
    @param person_reports Person-level RmseReports, one per condition
    @param encoding_id Encoding for the interview token counts
    @param backend Tokenizer backend
    @return A CorrelationReport; rho is None for fewer than three respondents or constant inputs
    """

    collected = collections.OrderedDict()
    for report in person_reports:
        if report.level != 'person' or report.source == HUMAN:
            continue
        if report.source.prompt_variant not in prompts.INTERVIEW_VARIANTS:
            continue

        for respondent_id, value in report.values.items():
            collected.setdefault(respondent_id, []).append(value)

    lengths = []
    deviations = []
    for respondent in roster:
        if respondent.respondent_id in collected:
            lengths.append(tokens.count_tokens(respondent.interview_transcript, encoding_id, backend))
            deviations.append(float(np.mean(collected[respondent.respondent_id])))

    pair = ('interview_tokens', 'person_rmse')
    if len(lengths) < 3:
        return CorrelationReport(pair, None, len(lengths))

    rho = pearson(lengths, deviations)
    return CorrelationReport(pair, rho, len(lengths), p_value=pearson_p(rho, len(lengths)))


def factor_means(pair_reports):
    """
    @brief Mean LLM-vs-LLM coefficient per temperature, per variant and for interview vs no-interview variants.
    """

    def mean_of(selected):
        values = [report.rho for report in selected if report.defined]
        return float(np.mean(values)) if values else None

    temperatures = sorted(set(report.temperature for report in pair_reports))
    variants = list(collections.OrderedDict.fromkeys(report.variant for report in pair_reports))

    return {
        'temperature': collections.OrderedDict(
            (repr(temperature), mean_of(r for r in pair_reports if r.temperature == temperature))
            for temperature in temperatures),
        'variant': collections.OrderedDict(
            (variant, mean_of(r for r in pair_reports if r.variant == variant)) for variant in variants),
        'interview': collections.OrderedDict((
            ('with_interview', mean_of(r for r in pair_reports if r.variant in prompts.INTERVIEW_VARIANTS)),
            ('without_interview', mean_of(r for r in pair_reports if r.variant not in prompts.INTERVIEW_VARIANTS)),
        )),
    }


def valence_rmse(report, instrument):
    """
    Mean item-level RMSE over positively and negatively worded items.
    """

    groups = collections.OrderedDict()
    for item in instrument.items:
        groups.setdefault(item.valence_tag, []).append(report.values[item.item_id])

    return collections.OrderedDict((tag, float(np.mean(values))) for tag, values in groups.items())
