__all__ = ['SamplerConfig', 'FrameScores', 'KeepMask', 'init_sampler', 'score_frames',
           'gumbel_noise', 'gumbel_softmax', 'gumbel_softmax_logits', 'apply_mask',
           'mask_loss', 'random_keep', 'full_keep', 'keep_count', 'STRATEGIES']

import unittest
from collections import namedtuple
from warnings import warn

import numpy as np

from ..autodiff.core import Value, constant, affine, layer_norm, gelu, softmax, log_softmax, log, \
    add, sub, mul, scale, take, reshape, detach, mask_rows, reduce_mean, reduce_sum
from ..autodiff.params import ParamStore

STRATEGIES = ('dfs', 'random', 'none')


class SamplerConfig(namedtuple('SamplerConfig', 't tau beta hidden strategy anneal tau_final')):
    """
    t - target keep ratio in (0, 1]
    tau - Gumbel-Softmax temperature (start value when annealing)
    beta - mask loss weight
    hidden - scorer hidden width
    strategy - dfs, random (uniform frame subsets) or none (keep all)
    anneal, tau_final - linear temperature schedule over training
    """
    __slots__ = ()

    @classmethod
    def from_config(cls, config):
        dfs = config['dfs']
        out = cls(float(dfs['keep_ratio']), float(dfs['temperature']), float(dfs['beta']), int(dfs['hidden']),
                  str(dfs['strategy']), bool(dfs['anneal']), float(dfs['anneal_final']))
        out.check()
        return out

    def check(self):
        if not 0 < self.t <= 1:
            raise ValueError('dfs.keep_ratio must lie in (0, 1], got %r' % self.t)
        if self.tau <= 0 or self.tau_final <= 0:
            raise ValueError('dfs.temperature must be positive, got %r' % self.tau)
        if self.beta < 0:
            raise ValueError('dfs.beta must be >= 0, got %r' % self.beta)
        if self.strategy not in STRATEGIES:
            raise KeyError('unknown dfs.strategy %r; expected %s' % (self.strategy, '|'.join(STRATEGIES)))

    def temperature(self, epoch, epochs):
        """tau at epoch (0-based) of epochs"""
        if not self.anneal or epochs <= 1:
            return self.tau
        return self.tau + (self.tau_final - self.tau) * epoch / float(epochs - 1)


class FrameScores(object):
    """Keep/prune logits z (..., M, 2) and their row softmax pi"""
    def __init__(self, z):
        self.z = z
        self.pi = softmax(z)
        self.log_pi = log_softmax(z)


class KeepMask(object):
    """
    m - (..., M) array of 0/1 decisions
    soft - (..., M, 2) relaxed samples
    keep - (..., M) differentiable keep column fed to the masking
    tau - temperature the sample was drawn at
    """
    def __init__(self, m, soft, keep, tau):
        self.m = m
        self.soft = soft
        self.keep = keep
        self.tau = tau

    def __len__(self):
        return self.m.shape[-1]

    def kept_fraction(self):
        return self.m.mean(-1)


def init_sampler(params, config, dim, rng, prefix='dfs'):
    """Linear -> LN -> GeLU -> Linear(2); the last bias starts at (+2, -2) so nearly every frame is kept"""
    params.add(prefix + '.fc1.w', rng.normal(size=(dim, config.hidden)) / np.sqrt(dim))
    params.add(prefix + '.fc1.b', np.zeros(config.hidden))
    params.add(prefix + '.ln.g', np.ones(config.hidden))
    params.add(prefix + '.ln.b', np.zeros(config.hidden))
    params.add(prefix + '.fc2.w', rng.normal(size=(config.hidden, 2)) * 0.1 / np.sqrt(config.hidden))
    params.add(prefix + '.fc2.b', np.array([2., -2.]))


def score_frames(embeddings, params, prefix='dfs'):
    """FrameScores of per-frame embeddings (..., M, D)"""
    h = affine(embeddings, params[prefix + '.fc1.w'], params[prefix + '.fc1.b'])
    h = gelu(layer_norm(h, params[prefix + '.ln.g'], params[prefix + '.ln.b']))
    return FrameScores(affine(h, params[prefix + '.fc2.w'], params[prefix + '.fc2.b']))


def gumbel_noise(rng, shape):
    """Gumbel(0, 1) draws from an explicit generator"""
    return rng.gumbel(size=shape)


def _column(x, j):
    return reshape(take(x, [j], axis=-1), x.shape[:-1])


def gumbel_softmax_logits(log_pi, tau, noise, hard=True):
    """
    Relaxed sample softmax((log_pi + g) / tau) of log-probabilities
    log_pi (..., M, 2).

    hard: m[i] = 1 iff soft[i, 0] >= soft[i, 1]; keep carries m forward
    and the gradient of soft[:, 0] backward.  Otherwise keep is soft[:, 0]
    and m its threshold at 0.5.
    """
    if tau <= 0:
        raise ValueError('gumbel_softmax: temperature must be positive, got %r' % tau)
    log_pi = constant(log_pi)
    noise = np.asarray(noise, dtype='d')
    if noise.shape != log_pi.shape:
        raise ValueError('gumbel_softmax: noise %s does not match probabilities %s' % (noise.shape, log_pi.shape))
    soft = softmax(scale(add(log_pi, noise), 1. / tau))
    soft0 = _column(soft, 0)
    if hard:
        m = (soft.data[..., 0] >= soft.data[..., 1]).astype('d')
        keep = add(sub(soft0, detach(soft0)), m)
    else:
        m = (soft0.data >= 0.5).astype('d')
        keep = soft0
    return KeepMask(m, soft, keep, tau)


def gumbel_softmax(pi, tau, noise, hard=True):
    """gumbel_softmax_logits of probabilities pi (..., M, 2) with positive entries"""
    pi = constant(pi)
    if (pi.data <= 0).any():
        raise ValueError('gumbel_softmax: probabilities must be strictly positive')
    return gumbel_softmax_logits(log(pi), tau, noise, hard=hard)


def apply_mask(embeddings, mask, training=True):
    """
    Training: rows multiplied by the keep column, shape kept.
    Inference on one sample (M, D): rows with m = 0 removed.  When every
    row is pruned the row with the highest soft keep score is kept.
    Returns (rows, kept indices).
    """
    if training:
        return mask_rows(embeddings, mask.keep), np.arange(embeddings.shape[-2])
    m = np.asarray(mask.m)
    if m.ndim != 1 or embeddings.ndim != 2:
        raise ValueError('apply_mask: inference expects one sample, got mask %s, embeddings %s'
                         % (m.shape, embeddings.shape))
    kept = np.flatnonzero(m)
    if len(kept) == 0:
        soft0 = mask.soft.data[..., 0] if mask.soft is not None else np.zeros(len(m))
        kept = np.array([int(np.argmax(soft0))])
        warn('apply_mask: every frame pruned; keeping frame %d' % kept[0])
    return take(embeddings, kept, axis=0), kept


def mask_loss(mask, t):
    """(t - mean keep)^2 per sample, on the differentiable keep column"""
    keep = constant(mask.keep)
    ratio = reduce_mean(keep, axis=-1)
    diff = sub(constant(np.full(ratio.shape, float(t))), ratio)
    return mul(diff, diff)


def keep_count(ratio, M):
    """ceil(ratio * M), at least one frame"""
    return max(1, min(M, int(np.ceil(ratio * M - 1e-9))))


def random_keep(rng, M, ratio, batch=None):
    """KeepMask keeping keep_count(ratio, M) frames drawn uniformly without replacement"""
    shape = (M,) if batch is None else (batch, M)
    m = np.zeros(shape)
    n = keep_count(ratio, M)
    for row in m.reshape(-1, M):
        row[rng.choice(M, size=n, replace=False)] = 1.
    return KeepMask(m, None, Value(m), None)


def full_keep(M, batch=None):
    m = np.ones((M,) if batch is None else (batch, M))
    return KeepMask(m, None, Value(m), None)


class SamplerTestCase(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(0)

    def scorer(self, dim=6, hidden=5):
        params = ParamStore()
        init_sampler(params, SamplerConfig(0.5, 1., 0.5, hidden, 'dfs', False, 0.1), dim, self.rng)
        return params

    def testZeroWeights(self):
        params = self.scorer()
        for k, v in params.items():
            if not k.endswith('.g'):
                v.data[...] = 0.
        scores = score_frames(self.rng.normal(size=(4, 6)), params)
        np.testing.assert_array_equal(scores.z.data, 0.)
        np.testing.assert_array_equal(scores.pi.data, 0.5)

    def testRowsSumToOne(self):
        scores = score_frames(self.rng.normal(size=(3, 7, 6)) * 10, self.scorer())
        np.testing.assert_allclose(scores.pi.data.sum(-1), 1., atol=1e-9)

    def testIdenticalFrames(self):
        row = self.rng.normal(size=6)
        scores = score_frames(np.stack([row, row]), self.scorer())
        np.testing.assert_array_equal(scores.z.data[0], scores.z.data[1])

    def testInitialKeep(self):
        params = self.scorer()
        params['dfs.fc2.w'].data[...] = 0.
        scores = score_frames(self.rng.normal(size=(5, 6)), params)
        np.testing.assert_allclose(scores.pi.data[:, 0], 1. / (1. + np.exp(-4.)))

    def testIdentityCase(self):
        pi = np.array([[0.7, 0.3]])
        mask = gumbel_softmax(pi, 1., np.zeros((1, 2)))
        np.testing.assert_allclose(mask.soft.data, pi, atol=1e-12)
        self.assertEqual(list(mask.m), [1.])

    def testRowsSumAcrossTemperatures(self):
        pi = softmax(self.rng.normal(size=(20, 2))).data
        noise = gumbel_noise(self.rng, (20, 2))
        for tau in (0.01, 0.1, 1., 10.):
            mask = gumbel_softmax(pi, tau, noise)
            np.testing.assert_allclose(mask.soft.data.sum(-1), 1., atol=1e-9)

    def testLowTemperatureLimit(self):
        pi = softmax(self.rng.normal(size=(20, 2))).data
        noise = gumbel_noise(self.rng, (20, 2))
        soft = gumbel_softmax(pi, 0.01, noise).soft.data
        a = np.log(pi) + noise
        onehot = np.eye(2)[np.argmax(a, axis=-1)]
        close = np.abs(a[:, 0] - a[:, 1]) > 0.2
        np.testing.assert_allclose(soft[close], onehot[close], atol=1e-6)

    def testIndependentFormula(self):
        noise = gumbel_noise(self.rng, (6, 2))
        soft = gumbel_softmax(np.full((6, 2), 0.5), 0.7, noise).soft.data
        for i in range(6):
            e = [np.exp((np.log(0.5) + noise[i, j]) / 0.7) for j in range(2)]
            self.assertAlmostEqual(soft[i, 0], e[0] / (e[0] + e[1]), places=12)

    def testHardMaskIsArgmax(self):
        pi = softmax(self.rng.normal(size=(50, 2))).data
        noise = gumbel_noise(self.rng, (50, 2))
        mask = gumbel_softmax(pi, 0.5, noise)
        a = np.log(pi) + noise
        np.testing.assert_array_equal(mask.m, (a[:, 0] >= a[:, 1]).astype('d'))
        np.testing.assert_array_equal(mask.keep.data, mask.m)

    def testNonPositiveRejected(self):
        self.assertRaises(ValueError, gumbel_softmax, np.array([[1., 0.]]), 1., np.zeros((1, 2)))

    def testApplyMask(self):
        rows = self.rng.normal(size=(3, 4))
        ones = KeepMask(np.ones(3), None, Value(np.ones(3)), 1.)
        out, kept = apply_mask(Value(rows), ones, training=True)
        np.testing.assert_array_equal(out.data, rows)
        mask = KeepMask(np.array([1., 0., 1.]), None, Value(np.array([1., 0., 1.])), 1.)
        out, kept = apply_mask(Value(rows), mask, training=False)
        np.testing.assert_array_equal(out.data, rows[[0, 2]])
        self.assertEqual(list(kept), [0, 2])

    def testAllPrunedGuard(self):
        soft = Value(np.array([[0.2, 0.8], [0.4, 0.6], [0.1, 0.9]]))
        mask = KeepMask(np.zeros(3), soft, soft, 1.)
        with self.assertWarns(UserWarning):
            out, kept = apply_mask(Value(np.eye(3)), mask, training=False)
        self.assertEqual(list(kept), [1])

    def testMaskLoss(self):
        def loss(m, t):
            return mask_loss(KeepMask(m, None, Value(m), 1.), t).item()
        self.assertEqual(loss(np.r_[np.ones(10), np.zeros(10)], 0.5), 0.)
        self.assertAlmostEqual(loss(np.ones(10), 0.7), 0.09, places=12)
        self.assertAlmostEqual(loss(np.zeros(10), 0.3), 0.09, places=12)
        for t in np.linspace(0.05, 1., 20):
            for kept in range(11):
                value = loss(np.r_[np.ones(kept), np.zeros(10 - kept)], t)
                self.assertLessEqual(value, max(t, 1 - t) ** 2 + 1e-15)

    def testStraightThroughGradient(self):
        from ..autodiff.check import grad_check
        params = self.scorer()
        emb = self.rng.normal(size=(2, 5, 6))
        noise = gumbel_noise(self.rng, (2, 5, 2))
        weights = self.rng.normal(size=(2, 5, 6))

        def objective(p, hard):
            mask = gumbel_softmax_logits(score_frames(emb, p).log_pi, 0.8, noise, hard=hard)
            rows, _ = apply_mask(Value(emb), mask, training=True)
            return add(reduce_sum(mul(rows, weights)), scale(reduce_sum(mask_loss(mask, 0.5)), 3.))

        params.zero_grad()
        objective(params, True).backward()
        self.assertGreater(np.abs(params['dfs.fc1.w'].grad).sum(), 0.)
        self.assertLess(grad_check(lambda p: objective(p, False), params), 1e-4)

    def testRandomKeep(self):
        mask = random_keep(self.rng, 20, 0.3, batch=4)
        np.testing.assert_array_equal(mask.m.sum(-1), 6)
        self.assertEqual(keep_count(0.5, 20), 10)
        self.assertEqual(keep_count(1., 20), 20)

    def testAnnealSchedule(self):
        config = SamplerConfig(0.5, 1., 0.5, 4, 'dfs', True, 0.1)
        self.assertEqual(config.temperature(0, 10), 1.)
        self.assertAlmostEqual(config.temperature(9, 10), 0.1)
        self.assertEqual(config._replace(anneal=False).temperature(9, 10), 1.)

if __name__ == '__main__':
    unittest.main()
