__all__ = ['MetricReport', 'METRIC_HEADER', 'classification_report', 'scores_from_confusion',
           'evaluate', 'cross_validate']

import io
import os
import shutil
import tempfile
import unittest

import numpy as np
from joblib import Parallel, delayed
from sklearn.metrics import accuracy_score, confusion_matrix, precision_recall_fscore_support

from ...preprocess.folds import kfold_split, group_kfold_split
from ...utils import derive_seed

METRIC_HEADER = 'fold,accuracy,precision,recall,f1,keep_fraction'
METRICS = ('accuracy', 'precision', 'recall', 'f1', 'keep_fraction')


class MetricReport(object):
    """
    Accuracy and macro precision/recall/F1 of one evaluation, or of a
    cross-validation when folds is given.  For a cross-validation the
    scalars are the fold means, std holds the sample standard deviations
    and confusion is the sum of the fold matrices.
    """
    def __init__(self, accuracy, precision, recall, f1, confusion, keep_fraction=1., folds=None, std=None):
        self.accuracy = float(accuracy)
        self.precision = float(precision)
        self.recall = float(recall)
        self.f1 = float(f1)
        self.confusion = np.asarray(confusion, dtype=int)
        self.keep_fraction = float(keep_fraction)
        self.folds = list(folds) if folds is not None else []
        self.std = std if std is not None else dict((k, np.nan) for k in METRICS)

    @classmethod
    def from_folds(cls, folds):
        if not folds:
            raise ValueError('MetricReport: no folds')
        table = np.array([[getattr(f, k) for k in METRICS] for f in folds])
        mean = table.mean(0)
        std = table.std(0, ddof=1) if len(folds) > 1 else np.zeros(len(METRICS))
        return cls(*(list(mean[:4]) + [sum(f.confusion for f in folds), mean[4]]), folds=folds,
                   std=dict(zip(METRICS, std)))

    def row(self, name):
        return '%s,%s' % (name, ','.join('%.10g' % getattr(self, k) for k in METRICS))

    def dumps(self):
        lines = [METRIC_HEADER]
        if self.folds:
            lines.extend(f.row(str(i)) for i, f in enumerate(self.folds))
            lines.append(self.row('mean'))
            lines.append('std,%s' % ','.join('%.10g' % self.std[k] for k in METRICS))
        else:
            lines.append(self.row('all'))
        return '\n'.join(lines) + '\n'

    def summary(self, classes=None):
        if self.folds:
            text = ['%d folds' % len(self.folds)]
            text.extend('%-13s %.4f +/- %.4f' % (k, getattr(self, k), self.std[k]) for k in METRICS)
        else:
            text = ['%-13s %.4f' % (k, getattr(self, k)) for k in METRICS]
        text.append('confusion (rows true, columns predicted):')
        names = classes if classes is not None else [str(i) for i in range(len(self.confusion))]
        for name, row in zip(names, self.confusion):
            text.append('%-12s %s' % (name, ' '.join('%5d' % v for v in row)))
        return '\n'.join(text) + '\n'

    def write(self, directory, classes=None):
        """metrics.csv, confusion.csv and summary.txt in directory"""
        if not os.path.isdir(directory):
            os.makedirs(directory)
        with io.open(os.path.join(directory, 'metrics.csv'), 'w', encoding='utf-8') as f:
            f.write(self.dumps())
        with io.open(os.path.join(directory, 'confusion.csv'), 'w', encoding='utf-8') as f:
            names = classes if classes is not None else [str(i) for i in range(len(self.confusion))]
            f.write('true,%s\n' % ','.join(names))
            for name, row in zip(names, self.confusion):
                f.write('%s,%s\n' % (name, ','.join(str(v) for v in row)))
        with io.open(os.path.join(directory, 'summary.txt'), 'w', encoding='utf-8') as f:
            f.write(self.summary(classes))


def classification_report(true, pred, nclasses, keep_fraction=1.):
    """
    MetricReport for label arrays.  Macro averages run over the classes
    that occur in true or pred; a class that is never predicted has
    precision 0.
    """
    true = np.asarray(true, dtype=int)
    pred = np.asarray(pred, dtype=int)
    if true.shape != pred.shape or true.ndim != 1:
        raise ValueError('classification_report: true %s and pred %s must be equal-length vectors'
                         % (true.shape, pred.shape))
    if len(true) == 0:
        raise ValueError('classification_report: no samples')
    p, r, f, _ = precision_recall_fscore_support(true, pred, average='macro', zero_division=0)
    confusion = confusion_matrix(true, pred, labels=np.arange(nclasses))
    return MetricReport(accuracy_score(true, pred), p, r, f, confusion, keep_fraction)


def scores_from_confusion(confusion):
    """(accuracy, precision, recall, f1) recomputed from a confusion matrix"""
    confusion = np.asarray(confusion, dtype='d')
    tp = np.diag(confusion)
    predicted = confusion.sum(0)
    actual = confusion.sum(1)
    present = (predicted > 0) | (actual > 0)
    with np.errstate(divide='ignore', invalid='ignore'):
        precision = np.where(predicted > 0, tp / predicted, 0.)
        recall = np.where(actual > 0, tp / actual, 0.)
        f1 = np.where(precision + recall > 0, 2 * precision * recall / (precision + recall), 0.)
    return (tp.sum() / confusion.sum(), precision[present].mean(), recall[present].mean(), f1[present].mean())


def evaluate(model, dataset, mode='infer', rng=None):
    """
    Score a trained GaitModel on dataset.

    mode - infer: pruned frames are removed and the scorer sees no noise;
           train: the training-mode forward (pruned frames zeroed, noise
           drawn from rng when given)
    """
    if len(dataset) == 0:
        raise ValueError('evaluate: empty dataset')
    if dataset.nclasses != model.nclasses:
        raise ValueError('evaluate: model has %d classes, dataset %d' % (model.nclasses, dataset.nclasses))
    if mode == 'infer':
        pred, _, kept = model.predict(dataset.cloud, dataset.flow, rng=rng)
    elif mode == 'train':
        out = model.forward(dataset.cloud, dataset.flow, rng=rng)
        pred, kept = out.log_probs.data.argmax(-1), out.mask.m.mean(-1)
    else:
        raise KeyError('evaluate: unknown mode %r; expected infer|train' % mode)
    return classification_report(dataset.labels, pred, model.nclasses, float(np.mean(kept)))


def fold_plan(config, dataset, k, seed):
    if config['data']['split'] == 'recording':
        return group_kfold_split(dataset.groups, k, seed)
    if config['data']['split'] != 'window':
        raise KeyError('unknown data.split %r; expected window|recording' % config['data']['split'])
    return kfold_split(len(dataset), k, seed)


def _run_fold(config, dataset, fold, train_idx, test_idx, out, verbose):
    from ..training.core import train
    if set(train_idx) & set(test_idx):
        raise ValueError('cross_validate: fold %d trains on its own test samples' % fold)
    config = config.copy()
    config['train']['seed'] = derive_seed(config['train']['seed'], fold + 1)
    model, history = train(config, dataset.subset(train_idx), verbose=max(0, verbose - 1))
    report = evaluate(model, dataset.subset(test_idx))
    if out is not None:
        model.params.save(os.path.join(out, 'fold%d.nc' % fold), fold=fold, nclasses=model.nclasses,
                          classes='\t'.join(dataset.classes), config=config.dumps())
        history.write(os.path.join(out, 'history_fold%d.csv' % fold))
    if verbose > 0:
        print('cross_validate: fold %d accuracy %.4f f1 %.4f' % (fold, report.accuracy, report.f1))
    return report


def cross_validate(config, dataset, k=None, threads=None, out=None, verbose=0):
    """
    k-fold cross-validation: one model per fold, trained from a seed
    derived from train.seed and the fold number, then evaluated on the
    held-out fold.  Folds run in parallel when threads > 1.  Splits are
    by window, or by recording when data.split is recording.

    Returns a MetricReport with per-fold reports in folds.
    """
    k = int(config['train']['folds'] if k is None else k)
    threads = int(config['train']['threads'] if threads is None else threads)
    plan = fold_plan(config, dataset, k, derive_seed(config['train']['seed'], 0))
    if (plan.sizes() == 0).any():
        raise ValueError('cross_validate: some of the %d folds are empty' % k)
    if out is not None and not os.path.isdir(out):
        os.makedirs(out)
    reports = Parallel(n_jobs=threads, prefer='threads')(
        delayed(_run_fold)(config, dataset, fold, train_idx, test_idx, out, verbose)
        for fold, (train_idx, test_idx) in enumerate(plan.splits()))
    return MetricReport.from_folds(reports)


class ReportTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def testKnownValues(self):
        report = classification_report([0, 0, 1, 1], [0, 1, 1, 1], 2)
        self.assertAlmostEqual(report.accuracy, 0.75)
        self.assertAlmostEqual(report.precision, 5. / 6)
        self.assertAlmostEqual(report.recall, 0.75)
        self.assertAlmostEqual(report.f1, (2. / 3 + 0.8) / 2)
        np.testing.assert_array_equal(report.confusion, [[1, 1], [0, 2]])

    def testPerfectSingleClass(self):
        report = classification_report([2, 2, 2], [2, 2, 2], 3)
        self.assertEqual(report.accuracy, 1.)
        self.assertEqual(report.f1, 1.)

    def testNeverPredictedClass(self):
        report = classification_report([0, 1, 2], [0, 0, 0], 3)
        self.assertAlmostEqual(report.precision, (1. / 3) / 3)
        self.assertAlmostEqual(report.recall, 1. / 3)

    def testConfusionConsistency(self):
        rng = np.random.default_rng(0)
        for trial in range(20):
            true = rng.integers(0, 5, size=40)
            pred = np.where(rng.random(40) < 0.6, true, rng.integers(0, 5, size=40))
            report = classification_report(true, pred, 5)
            again = scores_from_confusion(report.confusion)
            np.testing.assert_allclose(again, [report.accuracy, report.precision, report.recall, report.f1],
                                       rtol=0, atol=1e-12)

    def testFoldAggregate(self):
        folds = [classification_report([0, 1], [0, 1], 2), classification_report([0, 1], [1, 1], 2)]
        report = MetricReport.from_folds(folds)
        self.assertAlmostEqual(report.accuracy, 0.75)
        self.assertAlmostEqual(report.std['accuracy'], np.std([1., 0.5], ddof=1))
        np.testing.assert_array_equal(report.confusion, [[1, 1], [0, 2]])
        report.write(self.tmp, ['a', 'b'])
        with io.open(os.path.join(self.tmp, 'metrics.csv')) as f:
            lines = f.read().splitlines()
        self.assertEqual(lines[0], METRIC_HEADER)
        self.assertEqual([l.split(',')[0] for l in lines[1:]], ['0', '1', 'mean', 'std'])
        self.assertIn('+/-', report.summary())

    def testBadInput(self):
        self.assertRaises(ValueError, classification_report, [], [], 2)
        self.assertRaises(ValueError, classification_report, [0, 1], [0], 2)


class EvaluateTestCase(unittest.TestCase):
    def setUp(self):
        from ..training.core import _tiny, _toy_dataset
        self.config = _tiny(train__epochs=1, train__batch_size=4, train__folds=2)
        self.data = _toy_dataset(np.random.default_rng(1), per_class=3)

    def testModes(self):
        from ...models.network import GaitModel
        model = GaitModel(self.config, 2)
        for mode in ('infer', 'train'):
            report = evaluate(model, self.data, mode=mode)
            self.assertTrue(0 <= report.accuracy <= 1)
            self.assertEqual(report.confusion.sum(), len(self.data))
        self.assertRaises(KeyError, evaluate, model, self.data, mode='test')

    def testCrossValidate(self):
        tmp = tempfile.mkdtemp()
        try:
            report = cross_validate(self.config, self.data, out=tmp)
            self.assertEqual(len(report.folds), 2)
            self.assertEqual(report.confusion.sum(), len(self.data))
            self.assertTrue(os.path.exists(os.path.join(tmp, 'fold1.nc')))
            again = cross_validate(self.config, self.data, threads=2)
            self.assertEqual(report.dumps(), again.dumps())
        finally:
            shutil.rmtree(tmp)

    def testRecordingSplit(self):
        config = self.config.copy()
        config.set('data.split', 'recording')
        self.data.groups = ['r%d' % (i % 3) for i in range(len(self.data))]
        plan = fold_plan(config, self.data, 3, 0)
        for train_idx, test_idx in plan.splits():
            self.assertFalse(set(self.data.groups[i] for i in train_idx) & set(self.data.groups[i] for i in test_idx))

if __name__ == '__main__':
    unittest.main()
