__all__ = ['Adam', 'History', 'HISTORY_HEADER', 'train', 'fit_batch']

import io
import os
import shutil
import tempfile
import unittest

import numpy as np

from ...autodiff.core import backward
from ...models.network import GaitModel
from ...utils import derive_seed

HISTORY_HEADER = 'epoch,loss,keep_fraction,accuracy'


class Adam(object):
    """
    Adam over every parameter of a ParamStore.  Moments are kept per
    parameter name; step() consumes the current grads.
    """
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr < 0:
            raise ValueError('Adam: lr must be >= 0, got %r' % lr)
        if not (0 <= beta1 < 1 and 0 <= beta2 < 1):
            raise ValueError('Adam: betas must lie in [0, 1), got %r, %r' % (beta1, beta2))
        self.params = params
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.t = 0
        self.m = dict((k, np.zeros(v.shape)) for k, v in params.items())
        self.v = dict((k, np.zeros(v.shape)) for k, v in params.items())

    @classmethod
    def from_config(cls, params, config):
        train = config['train']
        return cls(params, train['lr'], train['beta1'], train['beta2'], train['eps'])

    def step(self):
        self.t += 1
        c1 = 1. - self.beta1 ** self.t
        c2 = 1. - self.beta2 ** self.t
        for name, value in self.params.items():
            g = value.grad
            m = self.m[name] = self.beta1 * self.m[name] + (1. - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v[name] + (1. - self.beta2) * g * g
            self.params.update(name, -self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps))


class History(list):
    """Per-epoch rows (epoch, loss, keep_fraction, accuracy)"""
    def column(self, name):
        return np.array([row[HISTORY_HEADER.split(',').index(name)] for row in self], dtype='d')

    def dumps(self):
        lines = [HISTORY_HEADER]
        for epoch, loss, keep, acc in self:
            lines.append('%d,%.10g,%.10g,%.10g' % (epoch, loss, keep, acc))
        return '\n'.join(lines) + '\n'

    def write(self, path):
        with io.open(path, 'w', encoding='utf-8') as f:
            f.write(self.dumps())


def _check_finite(value, epoch, batch):
    loss = value.item()
    if not np.isfinite(loss):
        raise FloatingPointError('train: non-finite loss %r at epoch %d, batch %d' % (loss, epoch, batch))
    return loss


def fit_batch(model, cloud, flow, labels, steps, optimizer, rng=None, tau=None):
    """Repeated optimizer steps on one batch; returns the loss before each step"""
    losses = []
    for step in range(steps):
        model.params.zero_grad()
        value, _ = model.loss(cloud, flow, labels, rng=rng, tau=tau)
        losses.append(_check_finite(value, 0, step))
        backward(value)
        optimizer.step()
    return losses


def train(config, dataset, verbose=0, eval_data=None, model=None):
    """
    Fit a GaitModel to dataset with Adam.

    config - RunConfig (model, dfs, ta, backbone and train sections)
    dataset - GaitDataset
    eval_data - GaitDataset scored every train.eval_every epochs; the
                training set when None
    model - continue from these parameters instead of a fresh init

    Initialization, shuffling and mask noise use independent streams
    derived from train.seed, so a run is reproducible from config alone.
    Returns (model, History); accuracy is NaN on epochs that are not
    evaluated.
    """
    from ..evaluation.core import evaluate
    opts = config['train']
    epochs, batch_size = int(opts['epochs']), int(opts['batch_size'])
    if epochs < 0 or batch_size < 1:
        raise ValueError('train: need epochs >= 0 and batch_size >= 1, got %d and %d' % (epochs, batch_size))
    if len(dataset) == 0:
        raise ValueError('train: empty dataset')
    seed = int(opts['seed'])
    if model is None:
        model = GaitModel(config, dataset.nclasses, seed=derive_seed(seed, 0))
    shuffle_rng = np.random.default_rng(derive_seed(seed, 1))
    noise_rng = np.random.default_rng(derive_seed(seed, 2))
    optimizer = Adam.from_config(model.params, config)
    eval_every = max(1, int(opts['eval_every']))
    eval_data = dataset if eval_data is None else eval_data

    history = History()
    for epoch in range(epochs):
        tau = model.sampler.temperature(epoch, epochs)
        order = shuffle_rng.permutation(len(dataset))
        total, kept, seen = 0., 0., 0
        for bi, start in enumerate(range(0, len(order), batch_size)):
            idx = order[start:start + batch_size]
            model.params.zero_grad()
            value, out = model.loss(dataset.cloud[idx], dataset.flow[idx], dataset.labels[idx],
                                    rng=noise_rng, tau=tau)
            loss = _check_finite(value, epoch, bi)
            backward(value)
            optimizer.step()
            total += loss * len(idx)
            kept += float(out.mask.m.mean(-1).sum())
            seen += len(idx)
        accuracy = np.nan
        if (epoch + 1) % eval_every == 0 or epoch == epochs - 1:
            accuracy = evaluate(model, eval_data).accuracy
        history.append((epoch, total / seen, kept / seen, accuracy))
        if verbose > 0:
            print('train: epoch %d/%d loss %.4f keep %.3f acc %.3f tau %.3g' % (
                epoch + 1, epochs, total / seen, kept / seen, accuracy, tau))
    return model, history


def _tiny(**settings):
    from ...config import RunConfig
    config = RunConfig.defaults(preset='tiny')
    for k, v in settings.items():
        config.set(k.replace('__', '.'), v)
    return config


def _toy_dataset(rng, nclasses=2, per_class=4, nt=6, npts=8):
    from ...core.Dataset import GaitDataset
    labels = np.repeat(np.arange(nclasses), per_class)
    cloud = rng.normal(size=(len(labels), nt, npts, 4))
    cloud[..., 0] += 2. * labels[:, None, None]
    flow = 0.1 * rng.normal(size=cloud.shape)
    return GaitDataset(cloud, flow, labels, ['s%d' % c for c in range(nclasses)])


class AdamTestCase(unittest.TestCase):
    def testQuadratic(self):
        from ...autodiff.params import ParamStore
        from ...autodiff.core import mul, reduce_sum
        params = ParamStore()
        x = params.add('x', [3., -2.])
        opt = Adam(params, lr=0.1)
        for i in range(300):
            params.zero_grad()
            backward(reduce_sum(mul(x, x)))
            opt.step()
        np.testing.assert_allclose(x.data, 0., atol=1e-2)

    def testFirstStepIsLr(self):
        from ...autodiff.params import ParamStore
        params = ParamStore()
        x = params.add('x', [1., 1.])
        x.grad[...] = [5., -0.01]
        Adam(params, lr=0.5).step()
        np.testing.assert_allclose(x.data, [0.5, 1.5], rtol=1e-6)

    def testBadArguments(self):
        from ...autodiff.params import ParamStore
        self.assertRaises(ValueError, Adam, ParamStore(), lr=-1)
        self.assertRaises(ValueError, Adam, ParamStore(), beta1=1.)


class TrainTestCase(unittest.TestCase):
    def setUp(self):
        self.data = _toy_dataset(np.random.default_rng(0))
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def testZeroLearningRate(self):
        config = _tiny(train__lr=0., train__epochs=2, train__batch_size=3)
        before = GaitModel(config, 2, seed=derive_seed(0, 0)).params.state()
        model, history = train(config, self.data)
        for k, v in model.params.state().items():
            np.testing.assert_array_equal(v, before[k])
        self.assertEqual(len(history), 2)

    def testDeterministic(self):
        config = _tiny(train__epochs=2, train__batch_size=3, dfs__anneal=True)
        a, ha = train(config, self.data)
        b, hb = train(config, self.data)
        for k, v in a.params.state().items():
            np.testing.assert_array_equal(v, b.params.state()[k])
        self.assertEqual(ha.dumps(), hb.dumps())

    def testSingleBatchLossDecreases(self):
        monotone = 0
        nseeds = 20
        for seed in range(nseeds):
            config = _tiny(dfs__strategy='none')
            model = GaitModel(config, 2, seed=seed)
            losses = np.array(fit_batch(model, self.data.cloud, self.data.flow, self.data.labels, 100,
                                        Adam(model.params, lr=1e-3)))
            monotone += bool((np.diff(losses) <= 1e-12 * np.abs(losses[:-1])).all())
            self.assertLess(losses[-1], losses[0])
        self.assertGreaterEqual(monotone, int(np.ceil(0.95 * nseeds)))

    def testNonFiniteLoss(self):
        config = _tiny(train__epochs=1)
        model = GaitModel(config, 2)
        model.params['head.w'].data[...] = np.nan
        self.assertRaisesRegex(FloatingPointError, 'epoch 0, batch 0', train, config, self.data, model=model)

    def testHistory(self):
        config = _tiny(train__epochs=3, train__eval_every=2)
        _, history = train(config, self.data)
        self.assertEqual(list(history.column('epoch')), [0, 1, 2])
        acc = history.column('accuracy')
        self.assertTrue(np.isnan(acc[0]))
        self.assertTrue(0 <= acc[1] <= 1 and 0 <= acc[2] <= 1)
        path = os.path.join(self.tmp, 'history.csv')
        history.write(path)
        with io.open(path) as f:
            self.assertEqual(f.readline().strip(), HISTORY_HEADER)

    def testEmpty(self):
        self.assertRaises(ValueError, train, _tiny(), self.data.subset([]))


@unittest.skipUnless(os.environ.get('RADGAIT_ACCEPTANCE') == '1', 'set RADGAIT_ACCEPTANCE=1')
class TrainAcceptanceTestCase(unittest.TestCase):
    def setUp(self):
        from ...synth import synth_dataset
        from ...config import RunConfig
        self.config = RunConfig.defaults(preset='desk')
        self.data = synth_dataset(self.config)

    def testSeparatesSynthSubjects(self):
        from ...preprocess.folds import holdout_split
        from ..evaluation.core import evaluate
        train_idx, test_idx = holdout_split(self.data.labels, 0.2, 0)
        model, history = train(self.config, self.data.subset(train_idx))
        self.assertGreaterEqual(np.nanmax(history.column('accuracy')), 0.95)
        self.assertGreaterEqual(evaluate(model, self.data.subset(test_idx)).accuracy, 0.8)

    def testKeepFractionFollowsTarget(self):
        nt = 20
        data = _toy_dataset(np.random.default_rng(0), per_class=8, nt=nt)
        for t in (0.3, 0.7):
            fractions = []
            for seed in range(5):
                config = _tiny(dfs__keep_ratio=t, dfs__beta=10., train__lr=1e-2, train__epochs=40,
                               train__batch_size=4, train__eval_every=40, train__seed=seed)
                _, history = train(config, data)
                fractions.append(history.column('keep_fraction')[-10:].mean())
            for seed, kf in enumerate(fractions):
                self.assertLessEqual(abs(kf - t), 1. / nt, 't=%g seed %d: keep fraction %.4f (all seeds %s)'
                                     % (t, seed, kf, np.round(fractions, 4)))

if __name__ == '__main__':
    unittest.main()
