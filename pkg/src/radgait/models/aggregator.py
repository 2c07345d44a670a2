__all__ = ['TAConfig', 'init_aggregator', 'init_classifier', 'concat_streams', 'positional_encoding',
           'self_attention', 'transformer_block', 'ta_forward', 'lstm_forward', 'classify',
           'total_loss']

import unittest
from collections import namedtuple

import numpy as np

from ..autodiff.core import Value, constant, affine, layer_norm, gelu, softmax, log_softmax, add, \
    sub, mul, scale, matmul, reshape, transpose, concat, reduce_mean, reduce_sum, take, pick, \
    sigmoid, tanh
from ..autodiff.params import ParamStore


class TAConfig(namedtuple('TAConfig', 'layers heads mlp_ratio positional kind')):
    """
    layers - number of pre-norm blocks L
    heads - attention heads H; the model width must divide by H
    mlp_ratio - MLP hidden width as a multiple of the model width
    positional - add sinusoidal frame encodings
    kind - transformer or lstm
    """
    __slots__ = ()

    @classmethod
    def from_config(cls, config):
        ta = config['ta']
        out = cls(int(ta['layers']), int(ta['heads']), int(ta['mlp_ratio']), bool(ta['positional']), str(ta['kind']))
        if out.layers < 1 or out.heads < 1 or out.mlp_ratio < 1:
            raise ValueError('ta.layers, ta.heads and ta.mlp_ratio must be >= 1, got %r' % (out,))
        if out.kind not in ('transformer', 'lstm'):
            raise KeyError('unknown ta.kind %r; expected transformer|lstm' % out.kind)
        return out


def _affine_params(params, name, fan_in, fan_out, rng):
    params.add(name + '.w', rng.normal(size=(fan_in, fan_out)) / np.sqrt(fan_in))
    params.add(name + '.b', np.zeros(fan_out))


def _norm_params(params, name, width):
    params.add(name + '.g', np.ones(width))
    params.add(name + '.b', np.zeros(width))


def init_aggregator(params, config, width, rng, prefix='ta'):
    if config.kind == 'lstm':
        _affine_params(params, prefix + '.lstm', 2 * width, 4 * width, rng)
        return
    if width % config.heads:
        raise ValueError('aggregator width %d is not divisible by %d heads' % (width, config.heads))
    for li in range(config.layers):
        name = '%s.block%d' % (prefix, li)
        _norm_params(params, name + '.ln1', width)
        for proj in ('q', 'k', 'v', 'o'):
            _affine_params(params, '%s.%s' % (name, proj), width, width, rng)
        _norm_params(params, name + '.ln2', width)
        _affine_params(params, name + '.fc1', width, config.mlp_ratio * width, rng)
        _affine_params(params, name + '.fc2', config.mlp_ratio * width, width, rng)


def init_classifier(params, width, nclasses, rng, prefix='head'):
    _affine_params(params, prefix, width, nclasses, rng)


def concat_streams(cloud_feats, flow_feats):
    """Per-frame concatenation, cloud features first"""
    cloud_feats, flow_feats = constant(cloud_feats), constant(flow_feats)
    if cloud_feats.shape[:-1] != flow_feats.shape[:-1]:
        raise ValueError('concat_streams: frame counts differ, %s vs %s' % (cloud_feats.shape, flow_feats.shape))
    return concat([cloud_feats, flow_feats], axis=-1)


def positional_encoding(positions, width):
    """Sinusoidal encodings (len(positions), width) of frame positions"""
    positions = np.asarray(positions, dtype='d')[:, None]
    rates = np.exp(-np.log(10000.) * (np.arange(width) // 2 * 2) / float(width))
    angles = positions * rates[None]
    return np.where(np.arange(width) % 2 == 0, np.sin(angles), np.cos(angles))


def _linear(x, params, name):
    return affine(x, params[name + '.w'], params[name + '.b'])


def _heads(x, nb, m, heads):
    # (B, M, E) -> (B, H, M, E/H)
    return transpose(reshape(x, (nb, m, heads, x.shape[-1] // heads)), (0, 2, 1, 3))


def self_attention(x, params, name, heads):
    """
    Multi-head scaled dot-product self-attention of x (B, M, E).
    Returns (output (B, M, E), attention weights (B, H, M, M)).
    """
    nb, m, width = x.shape
    dh = width // heads
    q = _heads(_linear(x, params, name + '.q'), nb, m, heads)
    k = _heads(_linear(x, params, name + '.k'), nb, m, heads)
    v = _heads(_linear(x, params, name + '.v'), nb, m, heads)
    att = softmax(scale(matmul(q, transpose(k, (0, 1, 3, 2))), 1. / np.sqrt(dh)))
    ctx = reshape(transpose(matmul(att, v), (0, 2, 1, 3)), (nb, m, width))
    return _linear(ctx, params, name + '.o'), att


def transformer_block(x, params, name, heads):
    """x + MSA(LN(x)), then + MLP(LN(.)); x is (B, M, E)"""
    x = constant(x)
    h = layer_norm(x, params[name + '.ln1.g'], params[name + '.ln1.b'])
    out, _ = self_attention(h, params, name, heads)
    x = add(x, out)
    h = layer_norm(x, params[name + '.ln2.g'], params[name + '.ln2.b'])
    return add(x, _linear(gelu(_linear(h, params, name + '.fc1')), params, name + '.fc2'))


def lstm_forward(x, params, prefix='ta'):
    """Single-layer LSTM over the frames of x (B, M, E); mean of the hidden states"""
    x = constant(x)
    nb, m, width = x.shape
    h = c = Value(np.zeros((nb, width)))
    states = []
    for t in range(m):
        xt = reshape(take(x, [t], axis=1), (nb, width))
        z = _linear(concat([xt, h]), params, prefix + '.lstm')
        i, f, g, o = [take(z, np.arange(j * width, (j + 1) * width), axis=1) for j in range(4)]
        c = add(mul(sigmoid(f), c), mul(sigmoid(i), tanh(g)))
        h = mul(sigmoid(o), tanh(c))
        states.append(reshape(h, (nb, 1, width)))
    return reduce_mean(concat(states, axis=1), axis=1)


def ta_forward(frames, config, params, prefix='ta', positions=None):
    """
    Aggregate per-frame features (B, M, E) or (M, E) into one vector per
    sample: L blocks then the mean over frames.  positions are the frame
    indices used for the optional positional encoding.
    """
    frames = constant(frames)
    single = frames.ndim == 2
    if single:
        frames = reshape(frames, (1,) + frames.shape)
    nb, m, width = frames.shape
    if m < 1:
        raise ValueError('ta_forward: no frames')
    if config.positional:
        pe = positional_encoding(np.arange(m) if positions is None else positions, width)
        frames = add(frames, np.broadcast_to(pe, frames.shape))
    if config.kind == 'lstm':
        out = lstm_forward(frames, params, prefix)
    else:
        x = frames
        for li in range(config.layers):
            x = transformer_block(x, params, '%s.block%d' % (prefix, li), config.heads)
        out = reduce_mean(x, axis=1)
    return reshape(out, (width,)) if single else out


def classify(pooled, params, prefix='head'):
    """Log-probabilities (B, C) of pooled features (B, E)"""
    return log_softmax(_linear(pooled, params, prefix))


def total_loss(log_probs, labels, mask_losses=None, beta=0.):
    """
    Mean over the batch of -log_probs[label] + beta * mask_loss.
    log_probs (B, C); labels (B,); mask_losses (B,) or None.
    """
    log_probs = constant(log_probs)
    labels = np.asarray(labels, dtype=int).reshape(-1)
    nclasses = log_probs.shape[-1]
    if len(labels) and (labels.min() < 0 or labels.max() >= nclasses):
        raise ValueError('total_loss: labels must lie in [0, %d), got %s' % (nclasses, labels))
    per_sample = scale(pick(log_probs, labels), -1.)
    if mask_losses is not None and beta:
        per_sample = add(per_sample, scale(mask_losses, beta))
    return reduce_mean(per_sample)


def _config(layers=2, heads=2, positional=False, kind='transformer'):
    return TAConfig(layers, heads, 2, positional, kind)


def _store(config, width, seed=0):
    params = ParamStore()
    init_aggregator(params, config, width, np.random.default_rng(seed))
    return params


class ConcatTestCase(unittest.TestCase):
    def testRows(self):
        out = concat_streams(np.array([[1., 2.]]), np.array([[3., 4.]]))
        self.assertEqual(out.data.tolist(), [[1., 2., 3., 4.]])

    def testZeroFlow(self):
        rng = np.random.default_rng(0)
        out = concat_streams(rng.normal(size=(5, 3)), np.zeros((5, 3)))
        self.assertEqual(out.shape, (5, 6))
        np.testing.assert_array_equal(out.data[:, 3:], 0.)

    def testMismatch(self):
        self.assertRaises(ValueError, concat_streams, np.zeros((4, 2)), np.zeros((5, 2)))


class TransformerTestCase(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(1)

    def testZeroOutputIsIdentity(self):
        params = _store(_config(layers=1), 4)
        for name in ('ta.block0.o.w', 'ta.block0.o.b', 'ta.block0.fc2.w', 'ta.block0.fc2.b'):
            params[name].data[...] = 0.
        x = self.rng.normal(size=(2, 5, 4))
        np.testing.assert_array_equal(transformer_block(x, params, 'ta.block0', 2).data, x)

    def testScalarAttention(self):
        params = _store(_config(layers=1, heads=1), 2)
        x = self.rng.normal(size=(1, 2, 2))
        out, att = self_attention(Value(x), params, 'ta.block0', 1)
        p = dict((k, v.data) for k, v in params.items())
        q = x[0].dot(p['ta.block0.q.w']) + p['ta.block0.q.b']
        k = x[0].dot(p['ta.block0.k.w']) + p['ta.block0.k.b']
        v = x[0].dot(p['ta.block0.v.w']) + p['ta.block0.v.b']
        for i in range(2):
            s = [(q[i, 0] * k[j, 0] + q[i, 1] * k[j, 1]) / np.sqrt(2.) for j in range(2)]
            w = [np.exp(s[j] - max(s)) / sum(np.exp(t - max(s)) for t in s) for j in range(2)]
            ctx = [w[0] * v[0, c] + w[1] * v[1, c] for c in range(2)]
            for c in range(2):
                expect = ctx[0] * p['ta.block0.o.w'][0, c] + ctx[1] * p['ta.block0.o.w'][1, c] + p['ta.block0.o.b'][c]
                self.assertAlmostEqual(out.data[0, i, c], expect, places=12)
            self.assertAlmostEqual(att.data[0, 0, i, 0], w[0], places=12)

    def testAttentionRowsSumToOne(self):
        params = _store(_config(layers=1, heads=2), 4)
        _, att = self_attention(Value(self.rng.normal(size=(3, 6, 4)) * 5), params, 'ta.block0', 2)
        np.testing.assert_allclose(att.data.sum(-1), 1., atol=1e-9)

    def testPermutationEquivariant(self):
        params = _store(_config(layers=1), 4)
        x = self.rng.normal(size=(1, 6, 4))
        perm = self.rng.permutation(6)
        a = transformer_block(x, params, 'ta.block0', 2).data
        b = transformer_block(x[:, perm], params, 'ta.block0', 2).data
        np.testing.assert_allclose(b, a[:, perm], atol=1e-12)

    def testSingleFrame(self):
        config = _config(layers=2)
        params = _store(config, 4)
        x = self.rng.normal(size=(1, 4))
        out = ta_forward(x, config, params)
        expect = transformer_block(transformer_block(x[None], params, 'ta.block0', 2), params, 'ta.block1', 2)
        np.testing.assert_allclose(out.data, expect.data[0, 0], atol=1e-15)

    def testIdenticalRows(self):
        config = _config()
        params = _store(config, 4)
        row = self.rng.normal(size=4)
        out = ta_forward(np.tile(row, (5, 1)), config, params)
        single = ta_forward(row[None], config, params)
        np.testing.assert_allclose(out.data, single.data, atol=1e-12)

    def testFramePermutationInvariant(self):
        config = _config()
        params = _store(config, 4)
        x = self.rng.normal(size=(7, 4))
        a = ta_forward(x, config, params).data
        b = ta_forward(x[self.rng.permutation(7)], config, params).data
        np.testing.assert_allclose(a, b, atol=1e-9)

    def testPositionalBreaksPermutation(self):
        config = _config(positional=True)
        params = _store(config, 4)
        x = self.rng.normal(size=(7, 4))
        a = ta_forward(x, config, params).data
        b = ta_forward(x[::-1], config, params).data
        self.assertGreater(np.abs(a - b).max(), 1e-6)

    def testGradCheck(self):
        from ..autodiff.check import grad_check
        config = _config()
        params = _store(config, 4)
        x = self.rng.normal(size=(2, 5, 4))
        weights = self.rng.normal(size=(2, 4))
        self.assertLess(grad_check(lambda p: reduce_sum(mul(ta_forward(x, config, p), weights)), params), 1e-4)

    def testLstm(self):
        from ..autodiff.check import grad_check
        config = _config(kind='lstm')
        params = _store(config, 3)
        x = self.rng.normal(size=(2, 4, 3))
        self.assertEqual(ta_forward(x, config, params).shape, (2, 3))
        weights = self.rng.normal(size=(2, 3))
        self.assertLess(grad_check(lambda p: reduce_sum(mul(ta_forward(x, config, p), weights)), params), 1e-4)


class LossTestCase(unittest.TestCase):
    def testUniform(self):
        logp = np.log(np.full((1, 10), 0.1))
        self.assertAlmostEqual(total_loss(logp, [3]).item(), np.log(10.), places=6)

    def testPerfect(self):
        logp = np.array([[0., -1e300]])
        self.assertEqual(total_loss(logp, [0], np.zeros(1), 0.5).item(), 0.)

    def testCombination(self):
        logp = np.array([[-1., np.log(1. - np.exp(-1.))]])
        self.assertAlmostEqual(total_loss(logp, [0], np.array([0.09]), 0.5).item(), 1.045, places=12)

    def testBatchMean(self):
        logp = np.log(np.array([[0.5, 0.5], [0.25, 0.75]]))
        self.assertAlmostEqual(total_loss(logp, [0, 1]).item(), -(np.log(0.5) + np.log(0.75)) / 2, places=12)

    def testInvalidLabel(self):
        self.assertRaises(ValueError, total_loss, np.zeros((1, 3)), [3])

    def testClassifierNormalized(self):
        params = ParamStore()
        init_classifier(params, 4, 6, np.random.default_rng(2))
        params['head.b'].data[...] = np.random.default_rng(3).normal(size=6) * 10
        logp = classify(np.random.default_rng(4).normal(size=(5, 4)) * 10, params).data
        np.testing.assert_allclose(np.log(np.exp(logp).sum(-1)), 0., atol=1e-9)

if __name__ == '__main__':
    unittest.main()
