"""
Scoring of predicted tag sequences against gold, per-class ROC curves from
CRF marginals, and report/plot rendering.
"""

import csv
import io
import json
import logging
import os
from dataclasses import asdict, dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Dict, List, Sequence, Tuple

import numpy as np
from jinja2 import Environment, FileSystemLoader, select_autoescape

from utils import format_real
from xling.corpus import LabeledSequence, LabelScheme, canonicalize_iob, entity_spans
from xling.errors import EvaluationError

logger = logging.getLogger('xling.evaluation')

ENTITY_MODE = 'entity'
TOKEN_MODE = 'token'
MODES = (ENTITY_MODE, TOKEN_MODE)
REPORT_FORMATS = ('table', 'csv', 'json')
AVERAGE = 'Average'
CSV_HEADER = ('class', 'precision', 'recall', 'f1', 'support')

TEMPLATE_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), 'templates')

_env = Environment(loader=FileSystemLoader(TEMPLATE_DIR),
                   autoescape=select_autoescape(['svg', 'xml']),
                   trim_blocks=True, lstrip_blocks=True, keep_trailing_newline=True)


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int
    tp: int = 0
    fp: int = 0
    fn: int = 0


@dataclass(frozen=True)
class EvalReport:
    per_class: Dict[str, ClassScores]
    average: ClassScores
    mode: str = ENTITY_MODE


@dataclass(frozen=True)
class RocCurve:
    points: Tuple[Tuple[float, float], ...]
    auc: float


def harmonic_mean(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def prf(tp: int, fp: int, fn: int) -> ClassScores:
    if min(tp, fp, fn) < 0:
        raise EvaluationError(f'negative counts tp={tp} fp={fp} fn={fn}')
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    return ClassScores(precision=precision, recall=recall, f1=harmonic_mean(precision, recall),
                       support=tp + fn, tp=tp, fp=fp, fn=fn)


def _entity_counts(gold_tags, pred_tags, scheme: LabelScheme, counts: Dict[str, List[int]]) -> None:
    gold = set(entity_spans(canonicalize_iob(gold_tags, scheme), scheme))
    pred = set(entity_spans(canonicalize_iob(pred_tags, scheme), scheme))
    for span in gold & pred:
        counts[span.etype][0] += 1
    for span in pred - gold:
        counts[span.etype][1] += 1
    for span in gold - pred:
        counts[span.etype][2] += 1


def _token_counts(gold_tags, pred_tags, scheme: LabelScheme, counts: Dict[str, List[int]]) -> None:
    for g, p in zip(gold_tags, pred_tags):
        if g == p:
            if g != 0:
                counts[scheme.etype(g)][0] += 1
            continue
        if p != 0:
            counts[scheme.etype(p)][1] += 1
        if g != 0:
            counts[scheme.etype(g)][2] += 1


def score_entities(gold: Sequence[LabeledSequence], pred: Sequence[Sequence[int]], scheme: LabelScheme,
                   mode: str = ENTITY_MODE) -> EvalReport:
    """Exact-match span scores (or per-token scores), per class and micro-averaged"""
    if mode not in MODES:
        raise EvaluationError(f'unknown metric mode {mode!r}')
    if len(gold) != len(pred):
        raise EvaluationError(f'{len(gold)} gold sentences but {len(pred)} predicted')

    counts = {etype: [0, 0, 0] for etype in scheme.entity_types}
    count = _entity_counts if mode == ENTITY_MODE else _token_counts
    for index, (sentence, tags) in enumerate(zip(gold, pred)):
        tags = [int(t) for t in tags]
        if len(tags) != len(sentence.tags):
            raise EvaluationError(f'sentence {index}: {len(sentence.tags)} gold tags but {len(tags)} predicted')
        count(sentence.tags, tags, scheme, counts)

    per_class = {etype: prf(*counts[etype]) for etype in scheme.entity_types}
    total = [sum(c[i] for c in counts.values()) for i in range(3)]
    return EvalReport(per_class=per_class, average=prf(*total), mode=mode)


def roc_curve(scores: Sequence[float], positives: Sequence[bool]) -> RocCurve:
    """Threshold sweep over the distinct scores, descending; tied scores move together"""
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives, dtype=bool)
    if scores.shape != positives.shape or scores.ndim != 1:
        raise EvaluationError('scores and positives must be equal-length sequences')
    n_pos = int(positives.sum())
    n_neg = len(positives) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError('roc curve needs at least one positive and one negative')

    points = [(0.0, 0.0)]
    auc = 0.0
    for threshold in np.unique(scores)[::-1]:
        above = scores >= threshold
        tpr = int(np.sum(above & positives)) / n_pos
        fpr = int(np.sum(above & ~positives)) / n_neg
        prev_fpr, prev_tpr = points[-1]
        auc += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0
        points.append((fpr, tpr))
    return RocCurve(points=tuple(points), auc=auc)


def class_roc_curves(gold: Sequence[LabeledSequence], marginal_rows: Sequence[np.ndarray],
                     scheme: LabelScheme) -> Dict[str, RocCurve]:
    """One-vs-rest curve per entity type; score = P(B-T) + P(I-T) per token"""
    if len(gold) != len(marginal_rows):
        raise EvaluationError(f'{len(gold)} gold sentences but {len(marginal_rows)} marginal matrices')
    if not gold:
        return {}

    tags = np.concatenate([np.asarray(s.tags, dtype=np.int64) for s in gold])
    marg = np.vstack(marginal_rows)
    if marg.shape != (len(tags), scheme.size):
        raise EvaluationError(f'marginals have shape {marg.shape}, expected ({len(tags)}, {scheme.size})')

    curves = {}
    for etype in scheme.entity_types:
        b, i = scheme.begin_of(etype), scheme.inside_of(etype)
        positives = (tags == b) | (tags == i)
        if positives.all() or not positives.any():
            logger.warning('no roc curve for %s: needs both positive and negative tokens', etype)
            continue
        curves[etype] = roc_curve(marg[:, b] + marg[:, i], positives)
    return curves


def _round_half_up(value: float) -> str:
    return str(Decimal(repr(value)).quantize(Decimal('0.01'), rounding=ROUND_HALF_UP))


def _rows(report: EvalReport) -> List[Tuple[str, ClassScores]]:
    return list(report.per_class.items()) + [(AVERAGE, report.average)]


def emit_report(report: EvalReport, fmt: str = 'table') -> bytes:
    """Render as aligned text table, csv or json; classes in scheme order, Average last"""
    if fmt == 'table':
        rows = [{'name': name, 'precision': _round_half_up(s.precision), 'recall': _round_half_up(s.recall),
                 'f1': _round_half_up(s.f1), 'support': s.support} for name, s in _rows(report)]
        text = _env.get_template('report.txt').render(mode=report.mode, rows=rows)
    elif fmt == 'csv':
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator='\n')
        writer.writerow(CSV_HEADER)
        for name, s in _rows(report):
            writer.writerow([name, format_real(s.precision), format_real(s.recall), format_real(s.f1), s.support])
        text = buffer.getvalue()
    elif fmt == 'json':
        payload = {
            'mode': report.mode,
            'per_class': {name: asdict(s) for name, s in report.per_class.items()},
            'average': asdict(report.average),
        }
        text = json.dumps(payload, indent=2) + '\n'
    else:
        raise EvaluationError(f'unknown report format {fmt!r}')
    return text.encode('utf-8')


def emit_roc_plot(curves: Sequence[Tuple[str, RocCurve]], plot_size: int = 300) -> bytes:
    """SVG document with one chart per named curve"""
    if not curves:
        raise EvaluationError('roc plot needs at least one curve')
    margin = 50
    charts = []
    for index, (name, curve) in enumerate(curves):
        charts.append({
            'name': name,
            'x': margin + index * (plot_size + 2 * margin),
            'auc': f'{curve.auc:.3f}',
            'points': ' '.join(f'{format_real(x)},{format_real(y)}' for x, y in curve.points),
        })
    svg = _env.get_template('roc.svg').render(
        charts=charts, plot=plot_size, margin=margin,
        width=len(charts) * (plot_size + 2 * margin), height=plot_size + 2 * margin)
    return svg.encode('utf-8')


def parse_polyline(points: str) -> List[Tuple[float, float]]:
    """Inverse of the points attribute written by emit_roc_plot"""
    out = []
    for pair in points.split():
        x, y = pair.split(',')
        out.append((float(x), float(y)))
    return out
