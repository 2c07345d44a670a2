__all__ = ['GaitModel', 'Forward', 'full_grad_check']

import unittest
from collections import namedtuple

import numpy as np

from ..autodiff.core import Value, reshape, mask_rows
from ..autodiff.params import ParamStore
from ..autodiff.check import grad_check
from .backbone import BackboneConfig, init_backbone, embed_frames
from .sampler import SamplerConfig, init_sampler, score_frames, gumbel_noise, gumbel_softmax_logits, \
    apply_mask, mask_loss, random_keep, full_keep
from .aggregator import TAConfig, init_aggregator, init_classifier, concat_streams, ta_forward, \
    classify, total_loss


class Forward(namedtuple('Forward', 'log_probs mask_loss mask')):
    """Training-mode outputs: log_probs (B, C), per-sample mask loss (B,) or None, KeepMask"""
    __slots__ = ()


class GaitModel(object):
    """
    Two backbone streams (cloud and flow), dynamic frame sampling, the
    temporal aggregator and a classifier head over one ParamStore.

    The ablation switches come from the config: model.use_flow,
    backbone.kind, ta.kind and dfs.strategy.
    """
    def __init__(self, config, nclasses, seed=0, params=None):
        self.backbone = BackboneConfig.from_config(config)
        self.sampler = SamplerConfig.from_config(config)
        self.ta = TAConfig.from_config(config)
        self.use_flow = bool(config['model']['use_flow'])
        self.nclasses = int(nclasses)
        if self.nclasses < 1:
            raise ValueError('GaitModel: need at least one class')
        self.width = self.backbone.dim * (2 if self.use_flow else 1)
        self.params = params if params is not None else self.init_params(np.random.default_rng(seed))

    def init_params(self, rng):
        params = ParamStore()
        init_backbone(params, 'cloud', self.backbone, rng)
        if self.use_flow:
            init_backbone(params, 'flow', self.backbone, rng)
        if self.sampler.strategy == 'dfs':
            init_sampler(params, self.sampler, self.width, rng)
        init_aggregator(params, self.ta, self.width, rng)
        init_classifier(params, self.width, self.nclasses, rng)
        return params

    def embed(self, cloud, flow, params=None):
        """Per-frame features (B, T, E) of cloud and flow (B, T, N, 4)"""
        params = params if params is not None else self.params
        cloud = np.asarray(cloud, dtype='d')
        nb, nt, npts, nc = cloud.shape
        feats = reshape(embed_frames(cloud.reshape(nb * nt, npts, nc), self.backbone, params, 'cloud'),
                        (nb, nt, self.backbone.dim))
        if not self.use_flow:
            return feats
        flow = np.asarray(flow, dtype='d').reshape(nb * nt, npts, nc)
        ffeats = reshape(embed_frames(flow, self.backbone, params, 'flow'), (nb, nt, self.backbone.dim))
        return concat_streams(feats, ffeats)

    def sample_mask(self, feats, params=None, noise=None, tau=None, rng=None, hard=True):
        """KeepMask over (B, T) frames for the configured strategy"""
        params = params if params is not None else self.params
        nb, nt = feats.shape[:2]
        if self.sampler.strategy == 'dfs':
            scores = score_frames(feats, params)
            if noise is None:
                noise = gumbel_noise(rng, (nb, nt, 2)) if rng is not None else np.zeros((nb, nt, 2))
            return gumbel_softmax_logits(scores.log_pi, self.sampler.tau if tau is None else tau, noise, hard=hard)
        if self.sampler.strategy == 'random':
            return random_keep(rng if rng is not None else np.random.default_rng(0), nt, self.sampler.t, batch=nb)
        return full_keep(nt, batch=nb)

    def forward(self, cloud, flow, params=None, noise=None, tau=None, rng=None, hard=True):
        """Training-mode pass: pruned frames are multiplied by zero, shapes are kept"""
        params = params if params is not None else self.params
        feats = self.embed(cloud, flow, params)
        mask = self.sample_mask(feats, params, noise=noise, tau=tau, rng=rng, hard=hard)
        pooled = ta_forward(mask_rows(feats, mask.keep), self.ta, params)
        mloss = mask_loss(mask, self.sampler.t) if self.sampler.strategy == 'dfs' else None
        return Forward(classify(pooled, params), mloss, mask)

    def loss(self, cloud, flow, labels, params=None, noise=None, tau=None, rng=None, hard=True):
        """(scalar total loss, Forward)"""
        out = self.forward(cloud, flow, params=params, noise=noise, tau=tau, rng=rng, hard=hard)
        return total_loss(out.log_probs, labels, out.mask_loss, self.sampler.beta), out

    def predict(self, cloud, flow, rng=None):
        """
        Inference: frames are scored without noise and the pruned ones are
        removed before aggregation, one sample at a time.  Returns
        (predicted labels, log-probabilities (B, C), kept fraction per sample).
        """
        feats = self.embed(cloud, flow).data
        nb, nt = feats.shape[:2]
        if rng is None:
            rng = np.random.default_rng(0)
        labels, logps, kept_fraction = [], [], []
        for b in range(nb):
            rows = Value(feats[b])
            if self.sampler.strategy == 'dfs':
                scores = score_frames(rows, self.params)
                mask = gumbel_softmax_logits(scores.log_pi, self.sampler.tau, np.zeros((nt, 2)), hard=True)
            elif self.sampler.strategy == 'random':
                mask = random_keep(rng, nt, self.sampler.t)
            else:
                mask = full_keep(nt)
            kept_rows, kept = apply_mask(rows, mask, training=False)
            pooled = ta_forward(kept_rows, self.ta, self.params, positions=kept)
            logp = classify(reshape(pooled, (1, self.width)), self.params).data[0]
            logps.append(logp)
            labels.append(int(np.argmax(logp)))
            kept_fraction.append(len(kept) / float(nt))
        return np.array(labels, dtype=int), np.array(logps).reshape(nb, self.nclasses), np.array(kept_fraction)


def full_grad_check(model, cloud, flow, labels, seed=0, eps=1e-5, ncoords=200, verbose=0):
    """
    Finite-difference check of the whole model loss with frozen Gumbel
    noise.  The relaxed (non-hard) mask is used: its gradient is the one
    the straight-through path sends backward.
    """
    cloud = np.asarray(cloud, dtype='d')
    rng = np.random.default_rng(seed)
    noise = gumbel_noise(rng, cloud.shape[:2] + (2,))
    random_rng_state = rng.bit_generator.state

    def objective(params):
        rng.bit_generator.state = random_rng_state
        value, _ = model.loss(cloud, flow, labels, params=params, noise=noise, rng=rng, hard=False)
        return value
    return grad_check(objective, model.params, eps=eps, ncoords=ncoords, seed=seed, verbose=verbose)


def _tiny(**settings):
    from ..config import RunConfig
    config = RunConfig.defaults(preset='tiny')
    for k, v in settings.items():
        config.set(k.replace('__', '.'), v)
    return config


def _batch(rng, nb=2, nt=6, npts=8):
    cloud = rng.normal(size=(nb, nt, npts, 4))
    flow = rng.normal(size=(nb, nt, npts, 4))
    return cloud, flow


class GaitModelTestCase(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(0)

    def testShapes(self):
        model = GaitModel(_tiny(), 3, seed=1)
        cloud, flow = _batch(self.rng)
        out = model.forward(cloud, flow, rng=self.rng)
        self.assertEqual(out.log_probs.shape, (2, 3))
        self.assertEqual(out.mask_loss.shape, (2,))
        np.testing.assert_allclose(np.exp(out.log_probs.data).sum(-1), 1.)
        labels, logp, kept = model.predict(cloud, flow)
        self.assertEqual(labels.shape, (2,))
        self.assertTrue(((kept > 0) & (kept <= 1)).all())

    def testVariants(self):
        cloud, flow = _batch(self.rng)
        variants = [dict(model__use_flow=False), dict(backbone__kind='pointnet'), dict(ta__kind='lstm'),
                    dict(dfs__strategy='random'), dict(dfs__strategy='none'), dict(ta__positional=True)]
        for settings in variants:
            model = GaitModel(_tiny(**settings), 4, seed=2)
            value, out = model.loss(cloud, flow, [0, 3], rng=np.random.default_rng(3))
            self.assertTrue(np.isfinite(value.item()), settings)
            labels, _, kept = model.predict(cloud, flow)
            self.assertEqual(len(labels), 2)
        self.assertNotIn('flow.out.w', GaitModel(_tiny(model__use_flow=False), 2).params)
        self.assertNotIn('dfs.fc1.w', GaitModel(_tiny(dfs__strategy='none'), 2).params)

    def testInitialMaskKeepsEverything(self):
        model = GaitModel(_tiny(), 2, seed=4)
        cloud, flow = _batch(self.rng)
        out = model.forward(cloud, flow)
        np.testing.assert_array_equal(out.mask.m, 1.)

    def testRandomStrategyKeepCount(self):
        model = GaitModel(_tiny(dfs__strategy='random', dfs__keep_ratio=0.5), 2)
        cloud, flow = _batch(self.rng, nt=10)
        out = model.forward(cloud, flow, rng=self.rng)
        np.testing.assert_array_equal(out.mask.m.sum(-1), 5)
        self.assertIsNone(out.mask_loss)
        _, _, kept = model.predict(cloud, flow)
        np.testing.assert_array_equal(kept, 0.5)

    def testFullGradCheck(self):
        model = GaitModel(_tiny(), 3, seed=5)
        cloud, flow = _batch(self.rng, nt=8, npts=16)
        self.assertLess(full_grad_check(model, cloud, flow, [0, 2], seed=6), 1e-4)

    def testDeterministicInit(self):
        a = GaitModel(_tiny(), 3, seed=9).params.state()
        b = GaitModel(_tiny(), 3, seed=9).params.state()
        for k in a:
            np.testing.assert_array_equal(a[k], b[k])

if __name__ == '__main__':
    unittest.main()
