__all__ = ['ResultTable', 'ABLATIONS', 'ratio_sweep', 'ablation_study']

import io
import os
import unittest
from collections import OrderedDict

import numpy as np
from joblib import Parallel, delayed

from ...preprocess.folds import holdout_split
from ...models.sampler import STRATEGIES
from ...utils import derive_seed

SCORES = ('accuracy', 'f1', 'keep_fraction')

ABLATIONS = OrderedDict([
    ('full', {}),
    ('no_flow', {'model.use_flow': False}),
    ('no_graph', {'backbone.kind': 'pointnet'}),
    ('no_transformer', {'ta.kind': 'lstm'}),
    ('no_sampling', {'dfs.strategy': 'none'}),
    ('positional', {'ta.positional': True}),
])


class ResultTable(object):
    """
    Rows of scores keyed by experiment settings; the last key is always
    seed and summaries average over it.
    """
    def __init__(self, keys, rows=()):
        self.keys = tuple(keys)
        self.rows = [tuple(r) for r in rows]

    def header(self):
        return ','.join(self.keys + SCORES)

    def dumps(self):
        lines = [self.header()]
        for row in self.rows:
            lines.append(','.join(['%s' % v for v in row[:len(self.keys)]] +
                                  ['%.10g' % v for v in row[len(self.keys):]]))
        return '\n'.join(lines) + '\n'

    def write(self, path):
        with io.open(path, 'w', encoding='utf-8') as f:
            f.write(self.dumps())

    def groups(self):
        """OrderedDict setting -> (n seeds, SCORES) array"""
        out = OrderedDict()
        nk = len(self.keys) - 1
        for row in self.rows:
            out.setdefault(row[:nk], []).append(row[nk + 1:])
        return OrderedDict((k, np.array(v, dtype='d')) for k, v in out.items())

    def summary(self):
        """Rows of setting, mean and sample std (0 for a single seed) of each score"""
        out = []
        for setting, table in self.groups().items():
            std = table.std(0, ddof=1) if len(table) > 1 else np.zeros(len(SCORES))
            out.append(setting + tuple(table.mean(0)) + tuple(std))
        return out

    def dumps_summary(self):
        names = self.keys[:-1] + tuple('%s_mean' % s for s in SCORES) + tuple('%s_std' % s for s in SCORES)
        nk = len(self.keys) - 1
        lines = [','.join(names)]
        for row in self.summary():
            lines.append(','.join(['%s' % v for v in row[:nk]] + ['%.10g' % v for v in row[nk:]]))
        return '\n'.join(lines) + '\n'

    def curve(self, strategy):
        """ratios, mean accuracy and its std for one strategy of a ratio sweep"""
        rows = [r for r in self.summary() if r[0] == strategy]
        rows.sort(key=lambda r: r[1])
        return (np.array([r[1] for r in rows]), np.array([r[2] for r in rows]),
                np.array([r[2 + len(SCORES)] for r in rows]))


def _run_cell(config, dataset, train_idx, test_idx, settings, seed, verbose):
    from ..training.core import train
    from ..evaluation.core import evaluate
    config = config.copy()
    for key, value in settings.items():
        config.set(key, value)
    config['train']['seed'] = int(seed)
    model, _ = train(config, dataset.subset(train_idx), verbose=max(0, verbose - 1))
    report = evaluate(model, dataset.subset(test_idx))
    if verbose > 0:
        print('sweep: %s seed %d accuracy %.4f keep %.3f' % (
            ' '.join('%s=%s' % kv for kv in settings.items()), seed, report.accuracy, report.keep_fraction))
    return report.accuracy, report.f1, report.keep_fraction


def _holdout(config, dataset):
    return holdout_split(dataset.labels, float(config['train']['test_fraction']),
                         derive_seed(config['train']['seed'], 0))


def ratio_sweep(config, dataset, ratios, strategies=('dfs', 'random'), seeds=(0,), threads=None, verbose=0):
    """
    Held-out accuracy for every (strategy, keep ratio, seed).  One split
    (train.test_fraction) is shared by all cells so strategies are
    compared on the same test windows.  Cells run in parallel when
    threads > 1.
    """
    ratios = [float(r) for r in ratios]
    for r in ratios:
        if not 0 < r <= 1:
            raise ValueError('ratio_sweep: keep ratios must lie in (0, 1], got %r' % r)
    if not ratios or not strategies or not seeds:
        raise ValueError('ratio_sweep: need at least one ratio, strategy and seed')
    for s in strategies:
        if s not in STRATEGIES:
            raise KeyError('ratio_sweep: unknown strategy %r; expected %s' % (s, '|'.join(STRATEGIES)))
    threads = int(config['train']['threads'] if threads is None else threads)
    train_idx, test_idx = _holdout(config, dataset)
    cells = [(s, r, seed) for s in strategies for r in ratios for seed in seeds]
    scores = Parallel(n_jobs=threads, prefer='threads')(
        delayed(_run_cell)(config, dataset, train_idx, test_idx,
                           OrderedDict([('dfs.strategy', s), ('dfs.keep_ratio', r)]), seed, verbose)
        for s, r, seed in cells)
    return ResultTable(('strategy', 'ratio', 'seed'), [c + tuple(v) for c, v in zip(cells, scores)])


def ablation_study(config, dataset, variants=None, seeds=(0,), threads=None, verbose=0):
    """Held-out scores of the full model and of each variant in ABLATIONS"""
    variants = list(ABLATIONS) if variants is None else list(variants)
    for v in variants:
        if v not in ABLATIONS:
            raise KeyError('unknown ablation %r; expected %s' % (v, '|'.join(ABLATIONS)))
    threads = int(config['train']['threads'] if threads is None else threads)
    train_idx, test_idx = _holdout(config, dataset)
    cells = [(v, seed) for v in variants for seed in seeds]
    scores = Parallel(n_jobs=threads, prefer='threads')(
        delayed(_run_cell)(config, dataset, train_idx, test_idx, ABLATIONS[v], seed, verbose)
        for v, seed in cells)
    return ResultTable(('variant', 'seed'), [c + tuple(s) for c, s in zip(cells, scores)])


class ResultTableTestCase(unittest.TestCase):
    def testSummary(self):
        table = ResultTable(('strategy', 'ratio', 'seed'), [
            ('dfs', 0.5, 0, 0.8, 0.7, 0.5), ('dfs', 0.5, 1, 0.6, 0.5, 0.5), ('dfs', 0.2, 0, 0.4, 0.3, 0.2)])
        summary = table.summary()
        self.assertEqual(summary[0][:2], ('dfs', 0.5))
        self.assertAlmostEqual(summary[0][2], 0.7)
        self.assertAlmostEqual(summary[0][5], np.std([0.8, 0.6], ddof=1))
        self.assertEqual(summary[1][5], 0.)
        ratios, acc, std = table.curve('dfs')
        np.testing.assert_allclose(ratios, [0.2, 0.5])
        np.testing.assert_allclose(acc, [0.4, 0.7])
        self.assertEqual(table.dumps().splitlines()[0], 'strategy,ratio,seed,accuracy,f1,keep_fraction')
        self.assertEqual(table.dumps_summary().splitlines()[0].split(',')[:3], ['strategy', 'ratio', 'accuracy_mean'])


class SweepTestCase(unittest.TestCase):
    def setUp(self):
        from ..training.core import _tiny, _toy_dataset
        self.config = _tiny(train__epochs=1, train__batch_size=4, train__test_fraction=0.25)
        self.data = _toy_dataset(np.random.default_rng(2), per_class=4)

    def testRatioSweep(self):
        table = ratio_sweep(self.config, self.data, [0.5, 1.0], seeds=(0, 1))
        self.assertEqual(len(table.rows), 8)
        for strategy, ratio, seed, acc, f1, keep in table.rows:
            self.assertTrue(0 <= acc <= 1)
            if strategy == 'random':
                self.assertAlmostEqual(keep, ratio)
        self.assertEqual(table.dumps(), ratio_sweep(self.config, self.data, [0.5, 1.0], seeds=(0, 1), threads=2).dumps())

    def testBadArguments(self):
        self.assertRaises(ValueError, ratio_sweep, self.config, self.data, [0.])
        self.assertRaises(KeyError, ratio_sweep, self.config, self.data, [0.5], strategies=('greedy',))
        self.assertRaises(KeyError, ablation_study, self.config, self.data, ['no_head'])

    def testAblation(self):
        table = ablation_study(self.config, self.data)
        self.assertEqual([r[0] for r in table.rows], list(ABLATIONS))
        no_sampling = [r for r in table.rows if r[0] == 'no_sampling'][0]
        self.assertEqual(no_sampling[-1], 1.)


@unittest.skipUnless(os.environ.get('RADGAIT_ACCEPTANCE') == '1', 'set RADGAIT_ACCEPTANCE=1')
class SweepAcceptanceTestCase(unittest.TestCase):
    def setUp(self):
        from ...synth import synth_dataset
        from ...config import RunConfig
        self.config = RunConfig.defaults(preset='desk')
        self.config.set('synth.noise_fraction', 0.4)
        self.data = synth_dataset(self.config)
        self.seeds = range(5)

    def assertNotWorse(self, table, better, worse):
        groups = table.groups()
        a, b = groups[better][:, 0], groups[worse][:, 0]
        self.assertGreaterEqual(a.mean(), b.mean(), '%s - %s accuracy gap %+.4f; per seed %s: %s, %s: %s' % (
            better[0], worse[0], a.mean() - b.mean(), better[0], np.round(a, 4), worse[0], np.round(b, 4)))

    def testLearnedBeatsRandomUnderClutter(self):
        table = ratio_sweep(self.config, self.data, [0.5], seeds=self.seeds)
        self.assertNotWorse(table, ('dfs', 0.5), ('random', 0.5))

    def testFlowDoesNotHurt(self):
        table = ablation_study(self.config, self.data, ['full', 'no_flow'], seeds=self.seeds)
        self.assertNotWorse(table, ('full',), ('no_flow',))

if __name__ == '__main__':
    unittest.main()
