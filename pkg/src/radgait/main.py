__all__ = ['parse_and_run', 'main', 'EXIT_OK', 'EXIT_USAGE', 'EXIT_DATA', 'EXIT_NUMERIC']

import io
import os
import shutil
import sys
import tempfile
import unittest
from argparse import ArgumentParser

import numpy as np

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(ArgumentParser):
    def error(self, message):
        raise UsageError('%s\n%s: error: %s' % (self.format_usage().rstrip(), self.prog, message))


def _common(parser):
    parser.add_argument('--config', dest='config', default=None, help='key=value run configuration file')
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help='override one config key (repeatable); wins over --config')
    parser.add_argument('--preset', dest='preset', default=None, help='desk|tiny model sizes, applied first')
    parser.add_argument('--out', dest='out', default='.', help='output directory')
    parser.add_argument('--threads', dest='threads', type=int, default=None, help='worker cap (train.threads)')
    parser.add_argument('-v', '--verbose', dest='verbose', action='count', default=0)


def _csv_list(kind):
    return lambda text: [kind(x) for x in text.split(',') if x.strip()]


def build_parser():
    parser = _Parser(prog='radgait', description='radgait (mmWave radar gait recognition)')
    sub = parser.add_subparsers(dest='command', metavar='command')

    p = sub.add_parser('ingest', help='recordings + manifest -> dataset directory')
    p.add_argument('input', help='directory of recordings')
    p.add_argument('--manifest', default=None, help='manifest CSV (default INPUT/manifest.csv)')
    p.add_argument('--format', dest='format_id', default=None, help='overrides data.format')

    p = sub.add_parser('synth', help='synthetic recordings and their dataset')
    p.add_argument('--classes', type=int, default=None)
    p.add_argument('--per-class', dest='per_class', type=int, default=None)
    p.add_argument('--recordings', type=int, default=None)
    p.add_argument('--noise-fraction', dest='noise_fraction', type=float, default=None)
    p.add_argument('--seed', type=int, default=None)

    p = sub.add_parser('train', help='fit a model; held-out metrics when train.test_fraction > 0')
    p.add_argument('dataset')

    p = sub.add_parser('eval', help='score a checkpoint on a dataset')
    p.add_argument('dataset')
    p.add_argument('--checkpoint', required=True)
    p.add_argument('--split', default=None, help='split.csv of the training run; only test rows are scored')
    p.add_argument('--mode', default='infer', help='infer|train')

    p = sub.add_parser('cv', help='k-fold cross-validation')
    p.add_argument('dataset')
    p.add_argument('--folds', type=int, default=None)

    p = sub.add_parser('sweep', help='accuracy against keep ratio for sampling strategies')
    p.add_argument('dataset')
    p.add_argument('--ratios', type=_csv_list(float), default=[0.1, 0.2, 0.3, 0.5, 0.7, 1.0])
    p.add_argument('--strategies', type=_csv_list(str), default=['dfs', 'random'])
    p.add_argument('--seeds', type=_csv_list(int), default=[0, 1, 2, 3, 4])

    p = sub.add_parser('ablate', help='held-out scores of the model variants')
    p.add_argument('dataset')
    p.add_argument('--variants', type=_csv_list(str), default=None)
    p.add_argument('--seeds', type=_csv_list(int), default=[0, 1, 2, 3, 4])

    p = sub.add_parser('gradcheck', help='finite-difference check of the full model')
    p.add_argument('--seed', type=int, default=0)
    p.add_argument('--frames', type=int, default=8)
    p.add_argument('--points', type=int, default=16)
    p.add_argument('--ncoords', type=int, default=200)
    p.add_argument('--tolerance', type=float, default=1e-4)

    for p in sub.choices.values():
        _common(p)
    return parser


def _start(options):
    """Resolved config, echoed with its seed into --out"""
    from .config import RunConfig
    config = RunConfig.from_sources(options.config, options.overrides, options.preset)
    if options.threads is not None:
        config.set('train.threads', options.threads)
    if not os.path.isdir(options.out):
        os.makedirs(options.out)
    config.write(os.path.join(options.out, 'config.txt'))
    with io.open(os.path.join(options.out, 'seed'), 'w') as f:
        f.write('%d\n' % config.train.seed)
    return config


def _load(path):
    from .core.Dataset import GaitDataset
    return GaitDataset.load(path)


def _dataset_from_recordings(config, directory, manifest, format_id, verbose):
    from .preprocess.ingest import ingest_directory, build_dataset
    streams = ingest_directory(directory, manifest, format_id=format_id, threads=config.train.threads,
                               verbose=verbose, eps=config.cluster.eps, min_pts=config.cluster.min_pts,
                               max_gap=config.track.max_gap, max_link_dist=config.track.max_link_dist,
                               longest_only=config.track.longest_only)
    return build_dataset(streams, config.data.frames, config.data.points, seed=config.train.seed,
                         center=config.data.center, verbose=verbose)


def run_ingest(options, config):
    if options.format_id is not None:
        config.set('data.format', options.format_id)
    manifest = options.manifest or os.path.join(options.input, 'manifest.csv')
    data = _dataset_from_recordings(config, options.input, manifest, config.data.format, options.verbose)
    data.save(options.out)
    print('ingest: %d samples, %d classes -> %s' % (len(data), data.nclasses, options.out))


def run_synth(options, config):
    from .synth import write_synth
    for flag, key in [('classes', 'synth.classes'), ('per_class', 'synth.per_class'),
                      ('recordings', 'synth.recordings'), ('noise_fraction', 'synth.noise_fraction'),
                      ('seed', 'synth.seed')]:
        if getattr(options, flag) is not None:
            config.set(key, getattr(options, flag))
    config.write(os.path.join(options.out, 'config.txt'))
    recordings = os.path.join(options.out, 'recordings')
    write_synth(config, recordings, verbose=options.verbose)
    data = _dataset_from_recordings(config, recordings, os.path.join(recordings, 'manifest.csv'), 'tracked',
                                    options.verbose)
    data.save(options.out)
    print('synth: %d samples, %d classes -> %s' % (len(data), data.nclasses, options.out))


def _write_split(path, train_idx, test_idx):
    with io.open(path, 'w', encoding='utf-8') as f:
        f.write('sample_id,role\n')
        for role, ids in (('train', train_idx), ('test', test_idx)):
            for i in ids:
                f.write('%d,%s\n' % (i, role))


def _read_split(path, role='test'):
    ids = []
    with io.open(path, 'r', encoding='utf-8') as f:
        for lineno, line in enumerate(f, 1):
            if lineno == 1 or not line.strip():
                continue
            sid, r = line.strip().split(',')
            if r == role:
                ids.append(int(sid))
    return sorted(ids)


def _save_model(model, path, config, data):
    model.params.save(path, nclasses=model.nclasses, classes='\t'.join(data.classes), config=config.dumps())


def _load_model(path):
    from .autodiff.params import ParamStore
    from .config import RunConfig
    from .models.network import GaitModel
    state, attrs = ParamStore.read(path)
    config = RunConfig.loads(attrs['config'], name=path)
    model = GaitModel(config, int(attrs['nclasses']))
    model.params.load_state(state)
    return model, config


def run_train(options, config):
    from .analyses.training.core import train
    from .analyses.evaluation.core import evaluate
    from .preprocess.folds import holdout_split
    from .graphing.history import history_plot
    from .utils import derive_seed
    data = _load(options.dataset)
    fraction = config.train.test_fraction
    if fraction > 0:
        train_idx, test_idx = holdout_split(data.labels, fraction, derive_seed(config.train.seed, 0))
    else:
        train_idx, test_idx = np.arange(len(data)), np.arange(len(data))
    _write_split(os.path.join(options.out, 'split.csv'), train_idx, test_idx)
    model, history = train(config, data.subset(train_idx), verbose=options.verbose)
    _save_model(model, os.path.join(options.out, 'model.nc'), config, data)
    history.write(os.path.join(options.out, 'history.csv'))
    history_plot(history, os.path.join(options.out, 'history.png'))
    report = evaluate(model, data.subset(test_idx))
    report.write(options.out, data.classes)
    sys.stdout.write(report.summary(data.classes))


def run_eval(options, config):
    from .analyses.evaluation.core import evaluate
    model, _ = _load_model(options.checkpoint)
    data = _load(options.dataset)
    if model.nclasses != data.nclasses:
        raise ValueError('eval: checkpoint has %d classes, dataset %d' % (model.nclasses, data.nclasses))
    if options.split is not None:
        data = data.subset(_read_split(options.split))
    report = evaluate(model, data, mode=options.mode)
    report.write(options.out, data.classes)
    sys.stdout.write(report.summary(data.classes))


def run_cv(options, config):
    from .analyses.evaluation.core import cross_validate
    data = _load(options.dataset)
    report = cross_validate(config, data, k=options.folds, out=options.out, verbose=options.verbose)
    report.write(options.out, data.classes)
    sys.stdout.write(report.summary(data.classes))


def run_sweep(options, config):
    from .analyses.sweep.core import ratio_sweep
    from .graphing.sweep import ratio_curve
    data = _load(options.dataset)
    table = ratio_sweep(config, data, options.ratios, options.strategies, options.seeds, verbose=options.verbose)
    table.write(os.path.join(options.out, 'sweep.csv'))
    with io.open(os.path.join(options.out, 'sweep_summary.csv'), 'w', encoding='utf-8') as f:
        f.write(table.dumps_summary())
    ratio_curve(table, os.path.join(options.out, 'sweep.png'))
    sys.stdout.write(table.dumps_summary())


def run_ablate(options, config):
    from .analyses.sweep.core import ablation_study
    from .graphing.sweep import ablation_bars
    data = _load(options.dataset)
    table = ablation_study(config, data, options.variants, options.seeds, verbose=options.verbose)
    table.write(os.path.join(options.out, 'ablation.csv'))
    with io.open(os.path.join(options.out, 'ablation_summary.csv'), 'w', encoding='utf-8') as f:
        f.write(table.dumps_summary())
    ablation_bars(table, os.path.join(options.out, 'ablation.png'))
    sys.stdout.write(table.dumps_summary())


def run_gradcheck(options, config):
    from .models.network import GaitModel, full_grad_check
    rng = np.random.default_rng(options.seed)
    model = GaitModel(config, 3, seed=options.seed)
    shape = (2, options.frames, options.points, 4)
    error = full_grad_check(model, rng.normal(size=shape), rng.normal(size=shape), [0, 2], seed=options.seed,
                            ncoords=options.ncoords, verbose=options.verbose)
    print('gradcheck: max relative error %.3e over %d parameters' % (error, model.params.size()))
    if not error < options.tolerance:
        raise FloatingPointError('gradcheck: max relative error %.3e exceeds %.1e' % (error, options.tolerance))


COMMANDS = dict(ingest=run_ingest, synth=run_synth, train=run_train, eval=run_eval, cv=run_cv,
                sweep=run_sweep, ablate=run_ablate, gradcheck=run_gradcheck)


def parse_and_run(argv=None):
    """Run one subcommand; returns the exit status"""
    parser = build_parser()
    try:
        options = parser.parse_args(argv)
        if options.command is None:
            parser.error('a command is required')
    except UsageError as e:
        sys.stderr.write('%s\n' % e)
        return EXIT_USAGE
    try:
        config = _start(options)
        COMMANDS[options.command](options, config)
    except FloatingPointError as e:
        sys.stderr.write('radgait %s: numeric failure: %s\n' % (options.command, e))
        return EXIT_NUMERIC
    except (ValueError, KeyError, OSError) as e:
        message = e.args[0] if isinstance(e, KeyError) and e.args else e
        sys.stderr.write('radgait %s: error: %s\n' % (options.command, message))
        return EXIT_DATA
    return EXIT_OK


def main():
    sys.exit(parse_and_run())


class MainTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def run_quiet(self, argv):
        stdout, stderr = sys.stdout, sys.stderr
        sys.stdout, sys.stderr = io.StringIO(), io.StringIO()
        try:
            status = parse_and_run(argv)
            return status, sys.stdout.getvalue(), sys.stderr.getvalue()
        finally:
            sys.stdout, sys.stderr = stdout, stderr

    def path(self, *parts):
        return os.path.join(self.tmp, *parts)

    def testNoArguments(self):
        status, _, err = self.run_quiet([])
        self.assertEqual(status, EXIT_USAGE)
        self.assertIn('usage', err)

    def testBadFlag(self):
        self.assertEqual(self.run_quiet(['train', '--bogus'])[0], EXIT_USAGE)

    def testUnknownConfigKey(self):
        status, _, err = self.run_quiet(['gradcheck', '--set', 'train.momentum=1', '--out', self.tmp])
        self.assertEqual(status, EXIT_DATA)
        self.assertIn('train.momentum', err)

    def testMissingDataset(self):
        status, _, err = self.run_quiet(['train', self.path('nowhere'), '--out', self.path('run')])
        self.assertEqual(status, EXIT_DATA)
        self.assertIn('samples.nc', err)

    def testGradcheck(self):
        status, out, _ = self.run_quiet(['gradcheck', '--preset', 'tiny', '--out', self.tmp])
        self.assertEqual(status, EXIT_OK, out)
        self.assertIn('max relative error', out)
        self.assertTrue(os.path.exists(self.path('config.txt')))

    def testPipeline(self):
        tiny = ['--preset', 'tiny', '--set', 'data.frames=6', '--set', 'train.epochs=2',
                '--set', 'train.batch_size=4']
        data = self.path('data')
        status, out, err = self.run_quiet(['synth', '--classes', '2', '--per-class', '5', '--recordings', '2',
                                           '--seed', '7', '--out', data] + tiny)
        self.assertEqual(status, EXIT_OK, err)
        self.assertTrue(os.path.exists(os.path.join(data, 'recordings', 'manifest.csv')))
        run = self.path('run')
        status, out, err = self.run_quiet(['train', data, '--out', run] + tiny)
        self.assertEqual(status, EXIT_OK, err)
        for name in ('config.txt', 'seed', 'model.nc', 'history.csv', 'metrics.csv', 'split.csv'):
            self.assertTrue(os.path.exists(os.path.join(run, name)), name)
        status, out, err = self.run_quiet(['eval', data, '--checkpoint', os.path.join(run, 'model.nc'),
                                           '--split', os.path.join(run, 'split.csv'), '--out', self.path('eval')])
        self.assertEqual(status, EXIT_OK, err)
        with io.open(os.path.join(run, 'metrics.csv')) as f:
            trained = f.read()
        with io.open(self.path('eval', 'metrics.csv')) as f:
            self.assertEqual(f.read(), trained)
        status, out, err = self.run_quiet(['cv', data, '--folds', '2', '--out', self.path('cv')] + tiny)
        self.assertEqual(status, EXIT_OK, err)
        self.assertTrue(os.path.exists(self.path('cv', 'fold1.nc')))

    def assertSameCheckpoint(self, a, b):
        from .autodiff.params import ParamStore
        sa, aa = ParamStore.read(a)
        sb, ab = ParamStore.read(b)
        self.assertEqual(list(sa), list(sb))
        for k in sa:
            self.assertEqual(sa[k].tobytes(), sb[k].tobytes(), k)
        self.assertEqual(aa, ab)

    def assertSameText(self, a, b):
        with io.open(a) as fa, io.open(b) as fb:
            self.assertEqual(fa.read(), fb.read(), a)

    def testRepeatedRunsIdentical(self):
        tiny = ['--preset', 'tiny', '--set', 'data.frames=6', '--set', 'train.epochs=2',
                '--set', 'train.batch_size=4', '--set', 'train.seed=3']
        data = self.path('data')
        status, _, err = self.run_quiet(['synth', '--classes', '2', '--per-class', '5', '--recordings', '2',
                                         '--seed', '7', '--out', data] + tiny)
        self.assertEqual(status, EXIT_OK, err)
        outs = []
        for run in ('a', 'b'):
            status, out, err = self.run_quiet(['train', data, '--out', self.path(run, 'train')] + tiny)
            self.assertEqual(status, EXIT_OK, err)
            status, cv_out, err = self.run_quiet(['cv', data, '--folds', '2', '--threads', '2',
                                                  '--out', self.path(run, 'cv')] + tiny)
            self.assertEqual(status, EXIT_OK, err)
            outs.append((out, cv_out))
        self.assertEqual(outs[0], outs[1])
        self.assertSameCheckpoint(self.path('a', 'train', 'model.nc'), self.path('b', 'train', 'model.nc'))
        for name in ('metrics.csv', 'confusion.csv', 'history.csv', 'split.csv'):
            self.assertSameText(self.path('a', 'train', name), self.path('b', 'train', name))
        for fold in range(2):
            self.assertSameCheckpoint(self.path('a', 'cv', 'fold%d.nc' % fold),
                                      self.path('b', 'cv', 'fold%d.nc' % fold))
        self.assertSameText(self.path('a', 'cv', 'metrics.csv'), self.path('b', 'cv', 'metrics.csv'))

if __name__ == '__main__':
    unittest.main()
