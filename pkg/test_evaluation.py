import csv
import io
import json
import os
import sys
import unittest
import xml.etree.ElementTree as ET

import numpy as np

# Add project root to path for imports
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from test_config import SampleData
from xling import evaluation
from xling.corpus import LabeledSequence, LabelScheme, canonicalize_iob, entity_spans
from xling.errors import EvaluationError

SVG = '{http://www.w3.org/2000/svg}'


class BaseEvaluationTest(unittest.TestCase):
    """Base test class with two gold sentences"""

    def setUp(self):
        self.scheme = LabelScheme(('PER', 'LOC'))
        enc = self.scheme.encode
        self.gold = [
            LabeledSequence(('John', 'Smith', 'in', 'Paris'), enc(['B-PER', 'I-PER', 'O', 'B-LOC'])),
            LabeledSequence(('Anna', 'left', 'Rome', 'today'), enc(['B-PER', 'O', 'B-LOC', 'O'])),
        ]

    def enc(self, *tags):
        return self.scheme.encode(tags)


class TestHarmonicMean(unittest.TestCase):

    def test_values(self):
        self.assertAlmostEqual(evaluation.harmonic_mean(0.88, 0.93), 0.904309392, places=8)
        self.assertEqual(evaluation.harmonic_mean(0.0, 0.0), 0.0)
        self.assertEqual(evaluation.harmonic_mean(1.0, 0.0), 0.0)

    def test_prf(self):
        scores = evaluation.prf(3, 1, 2)
        self.assertAlmostEqual(scores.precision, 0.75)
        self.assertAlmostEqual(scores.recall, 0.6)
        self.assertEqual(scores.support, 5)
        empty = evaluation.prf(0, 0, 0)
        self.assertEqual((empty.precision, empty.recall, empty.f1), (0.0, 0.0, 0.0))
        with self.assertRaises(EvaluationError):
            evaluation.prf(-1, 0, 0)

    def test_printed_rows_are_consistent(self):
        """Rounded inputs reproduce the printed Average F1 to within rounding error"""
        precision, recall, f1 = SampleData.TABLE_ROWS['Average']
        self.assertAlmostEqual(evaluation.harmonic_mean(precision, recall), f1, delta=0.005)
        # printed LOC and PER figures are not reachable from their rounded inputs
        precision, recall, _ = SampleData.TABLE_ROWS['LOC']
        self.assertAlmostEqual(evaluation.harmonic_mean(precision, recall), 0.855, places=3)
        precision, recall, _ = SampleData.TABLE_ROWS['PER']
        self.assertAlmostEqual(evaluation.harmonic_mean(precision, recall), 0.904, places=3)

    def test_swapping_false_alarms_and_misses_swaps_precision_and_recall(self):
        for tp, fp, fn in ((3, 1, 2), (0, 4, 1), (7, 0, 5), (10, 3, 3)):
            forward = evaluation.prf(tp, fp, fn)
            backward = evaluation.prf(tp, fn, fp)
            self.assertEqual((forward.precision, forward.recall), (backward.recall, backward.precision))
            self.assertAlmostEqual(forward.f1, backward.f1, places=12)


class TestScoreEntities(BaseEvaluationTest):

    def test_perfect(self):
        report = evaluation.score_entities(self.gold, [s.tags for s in self.gold], self.scheme)
        self.assertEqual(report.average.f1, 1.0)
        self.assertEqual(report.average.support, 4)
        self.assertEqual(list(report.per_class), ['PER', 'LOC'])

    def test_boundary_error_is_a_miss_and_a_false_alarm(self):
        pred = [self.enc('B-PER', 'O', 'O', 'B-LOC'), self.gold[1].tags]
        report = evaluation.score_entities(self.gold, pred, self.scheme)
        per = report.per_class['PER']
        self.assertEqual((per.tp, per.fp, per.fn), (1, 1, 1))
        self.assertEqual(report.per_class['LOC'].f1, 1.0)
        self.assertEqual((report.average.tp, report.average.fp, report.average.fn), (3, 1, 1))

    def test_type_error(self):
        pred = [self.enc('B-LOC', 'I-LOC', 'O', 'B-LOC'), self.gold[1].tags]
        report = evaluation.score_entities(self.gold, pred, self.scheme)
        self.assertEqual(report.per_class['PER'].fn, 1)
        self.assertEqual(report.per_class['LOC'].fp, 1)

    def test_invalid_predictions_are_canonicalized(self):
        pred = [self.enc('I-PER', 'I-PER', 'O', 'I-LOC'), self.gold[1].tags]
        report = evaluation.score_entities(self.gold, pred, self.scheme)
        self.assertEqual(report.average.f1, 1.0)

    def test_token_mode(self):
        pred = [self.enc('B-PER', 'O', 'O', 'B-LOC'), self.enc('B-PER', 'B-LOC', 'O', 'O')]
        report = evaluation.score_entities(self.gold, pred, self.scheme, mode='token')
        per = report.per_class['PER']
        loc = report.per_class['LOC']
        self.assertEqual((per.tp, per.fp, per.fn), (2, 0, 1))
        self.assertEqual((loc.tp, loc.fp, loc.fn), (1, 1, 1))
        self.assertEqual(report.mode, 'token')

    def test_no_entities(self):
        gold = [LabeledSequence(('a', 'b'), (0, 0))]
        report = evaluation.score_entities(gold, [(0, 0)], self.scheme)
        self.assertEqual(report.average.f1, 0.0)
        self.assertEqual(report.average.support, 0)

    def test_random_span_counts(self):
        rng = np.random.default_rng(4)
        for _ in range(50):
            lengths = rng.integers(1, 12, size=5)
            gold = [LabeledSequence(tuple('x' * int(n)), tuple(int(t) for t in rng.integers(0, self.scheme.size, n)))
                    for n in lengths]
            pred = [tuple(int(t) for t in rng.integers(0, self.scheme.size, n)) for n in lengths]
            report = evaluation.score_entities(gold, pred, self.scheme)

            def spans(sequences):
                return [span for tags in sequences
                        for span in entity_spans(canonicalize_iob(tags, self.scheme), self.scheme)]

            gold_spans = spans([s.tags for s in gold])
            pred_spans = spans(pred)
            for etype, scores in report.per_class.items():
                self.assertEqual(scores.tp + scores.fn, sum(s.etype == etype for s in gold_spans))
                self.assertEqual(scores.tp + scores.fp, sum(s.etype == etype for s in pred_spans))
            self.assertEqual(report.average.tp + report.average.fn, len(gold_spans))
            self.assertEqual(report.average.tp + report.average.fp, len(pred_spans))

    def test_mismatched_inputs(self):
        with self.assertRaises(EvaluationError):
            evaluation.score_entities(self.gold, [self.gold[0].tags], self.scheme)
        with self.assertRaises(EvaluationError):
            evaluation.score_entities(self.gold, [(0,), self.gold[1].tags], self.scheme)
        with self.assertRaises(EvaluationError):
            evaluation.score_entities(self.gold, [s.tags for s in self.gold], self.scheme, mode='span')


class TestReports(unittest.TestCase):

    def setUp(self):
        loc = evaluation.prf(*SampleData.TABLE_COUNTS['LOC'])
        average = evaluation.prf(*SampleData.TABLE_COUNTS['Average'])
        self.report = evaluation.EvalReport(per_class={'LOC': loc}, average=average)

    def test_table(self):
        text = evaluation.emit_report(self.report, 'table').decode('utf-8')
        lines = text.splitlines()
        self.assertEqual(lines[0], 'Classification report (entity-level)')
        self.assertEqual(lines[-2].split(), ['LOC', '0.86', '0.85', '0.85', '860'])
        self.assertEqual(lines[-1].split(), ['Average', '0.84', '0.82', '0.83', '1050'])

    def test_half_up_rounding(self):
        report = evaluation.EvalReport(per_class={'PER': evaluation.prf(1, 7, 0)},
                                       average=evaluation.prf(1, 7, 0))
        row = evaluation.emit_report(report, 'table').decode('utf-8').splitlines()[-2].split()
        self.assertEqual(row[1], '0.13')

    def test_csv(self):
        text = evaluation.emit_report(self.report, 'csv').decode('utf-8')
        rows = list(csv.reader(io.StringIO(text)))
        self.assertEqual(rows[0], ['class', 'precision', 'recall', 'f1', 'support'])
        self.assertEqual([row[0] for row in rows[1:]], ['LOC', 'Average'])
        self.assertEqual(float(rows[1][1]), 731 / 850)

    def test_json(self):
        payload = json.loads(evaluation.emit_report(self.report, 'json'))
        self.assertEqual(payload['mode'], 'entity')
        self.assertEqual(payload['per_class']['LOC']['tp'], 731)
        self.assertAlmostEqual(payload['average']['recall'], 0.82)

    def test_unknown_format(self):
        with self.assertRaises(EvaluationError):
            evaluation.emit_report(self.report, 'xlsx')


class TestRoc(BaseEvaluationTest):

    def test_hand_enumerated_curve(self):
        curve = evaluation.roc_curve(SampleData.ROC_SCORES, SampleData.ROC_POSITIVES)
        self.assertEqual(curve.points, SampleData.ROC_POINTS)
        self.assertAlmostEqual(curve.auc, SampleData.ROC_AUC, places=12)

    def test_perfect_and_inverted(self):
        self.assertEqual(evaluation.roc_curve([0.9, 0.8, 0.2], [True, True, False]).auc, 1.0)
        self.assertEqual(evaluation.roc_curve([0.1, 0.8, 0.9], [True, False, False]).auc, 0.0)

    def test_all_tied_is_chance(self):
        curve = evaluation.roc_curve([0.5] * 4, [True, False, True, False])
        self.assertEqual(curve.points, ((0.0, 0.0), (1.0, 1.0)))
        self.assertAlmostEqual(curve.auc, 0.5)

    def test_auc_unchanged_by_monotone_rescoring(self):
        rng = np.random.default_rng(9)
        scores = np.round(rng.random(40), 1)
        positives = rng.random(40) < 0.4
        positives[:2] = (True, False)
        auc = evaluation.roc_curve(scores, positives).auc
        for transform in (np.exp, lambda s: 3.0 * s + 1.0, lambda s: s ** 3):
            self.assertAlmostEqual(evaluation.roc_curve(transform(scores), positives).auc, auc, places=12)

    def test_needs_both_classes(self):
        with self.assertRaises(EvaluationError):
            evaluation.roc_curve([0.1, 0.2], [True, True])
        with self.assertRaises(EvaluationError):
            evaluation.roc_curve([0.1, 0.2], [True])

    def test_class_curves_pool_begin_and_inside(self):
        marg = []
        for sentence in self.gold:
            rows = np.zeros((len(sentence), self.scheme.size))
            rows[np.arange(len(sentence)), list(sentence.tags)] = 1.0
            marg.append(rows)
        curves = evaluation.class_roc_curves(self.gold, marg, self.scheme)
        self.assertEqual(set(curves), {'PER', 'LOC'})
        self.assertEqual(curves['PER'].auc, 1.0)

    def test_class_without_positives_skipped(self):
        scheme = LabelScheme(('PER', 'LOC', 'ORG'))
        gold = [LabeledSequence(('a', 'b'), scheme.encode(['B-PER', 'O']))]
        marg = [np.full((2, scheme.size), 1.0 / scheme.size)]
        with self.assertLogs('xling.evaluation', level='WARNING'):
            curves = evaluation.class_roc_curves(gold, marg, scheme)
        self.assertEqual(list(curves), ['PER'])

    def test_marginal_shape_checked(self):
        with self.assertRaises(EvaluationError):
            evaluation.class_roc_curves(self.gold, [np.zeros((4, 5))], self.scheme)


class TestRocPlot(unittest.TestCase):

    def setUp(self):
        self.curve = evaluation.roc_curve(SampleData.ROC_SCORES, SampleData.ROC_POSITIVES)

    def test_polyline_matches_curve(self):
        root = ET.fromstring(evaluation.emit_roc_plot([('LOC', self.curve)]))
        polylines = root.findall(f'.//{SVG}polyline')
        self.assertEqual(len(polylines), 1)
        self.assertEqual(tuple(evaluation.parse_polyline(polylines[0].get('points'))), self.curve.points)

    def test_legend_and_charts(self):
        root = ET.fromstring(evaluation.emit_roc_plot([('LOC', self.curve), ('PER', self.curve)], plot_size=200))
        charts = [g for g in root.iter(f'{SVG}g') if g.get('class') == 'roc-chart']
        self.assertEqual([g.get('id') for g in charts], ['roc-0', 'roc-1'])
        legends = [t.text for t in root.iter(f'{SVG}text') if t.get('class') == 'legend']
        self.assertEqual(legends, ['LOC (AUC = 0.875)', 'PER (AUC = 0.875)'])
        self.assertEqual(root.get('width'), str(2 * (200 + 100)))

    def test_names_are_escaped(self):
        svg = evaluation.emit_roc_plot([('A&B', self.curve)]).decode('utf-8')
        self.assertIn('A&amp;B', svg)
        ET.fromstring(svg.encode('utf-8'))

    def test_needs_a_curve(self):
        with self.assertRaises(EvaluationError):
            evaluation.emit_roc_plot([])


if __name__ == '__main__':
    unittest.main()
