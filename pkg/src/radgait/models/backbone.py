__all__ = ['BackboneConfig', 'FrameGraph', 'knn_graph', 'knn_indices', 'init_affine',
           'init_backbone', 'adaptive_graph_conv', 'embed_frames', 'backbone_forward']

import unittest
from collections import namedtuple

import numpy as np

from ..autodiff.core import Value, constant, affine, gelu, concat, sub, reduce_max, reshape, \
    transpose, matmul, add, gather_points, reduce_sum, mul
from ..autodiff.params import ParamStore


class BackboneConfig(namedtuple('BackboneConfig', 'k widths dim kernel_hidden kind')):
    """
    k - neighbours per point
    widths - output width of each conv layer
    dim - frame embedding size D
    kernel_hidden - hidden width of the kernel generator
    kind - adaptive (graph conv) or pointnet (shared per-point MLP)
    """
    __slots__ = ()

    @classmethod
    def from_config(cls, config):
        section = config['backbone']
        return cls(int(section['k']), tuple(int(w) for w in section['widths']), int(section['dim']),
                   int(section['kernel_hidden']), str(section['kind']))


class FrameGraph(object):
    """k and the (N, k) neighbour indices of every point"""
    def __init__(self, k, edges):
        self.k = k
        self.edges = np.asarray(edges, dtype=int)

    def __len__(self):
        return len(self.edges)


def knn_indices(xyz, k):
    """
    Indices of the k nearest other points, nearest first, for xyz
    (..., N, >=3).  Equal distances go to the lower index.
    """
    xyz = np.asarray(xyz, dtype='d')[..., :3]
    n = xyz.shape[-2]
    if not 1 <= k < n:
        raise ValueError('knn_graph: need 1 <= k < N, got k=%d, N=%d' % (k, n))
    diff = xyz[..., :, None, :] - xyz[..., None, :, :]
    d2 = (diff * diff).sum(-1)
    d2[..., np.arange(n), np.arange(n)] = np.inf
    return np.argsort(d2, axis=-1, kind='stable')[..., :k]


def knn_graph(coords, k):
    return FrameGraph(k, knn_indices(coords, k))


def init_affine(params, name, fan_in, fan_out, rng, gain=1.):
    """name.w (fan_in, fan_out) scaled by gain/sqrt(fan_in) and zero name.b"""
    params.add(name + '.w', rng.normal(size=(fan_in, fan_out)) * gain / np.sqrt(fan_in))
    params.add(name + '.b', np.zeros(fan_out))


def init_backbone(params, prefix, config, rng, channels=4):
    """Register the parameters of one stream's backbone"""
    if config.kind == 'adaptive':
        fin = channels
        for li, fout in enumerate(config.widths):
            c = 3 + fin
            init_affine(params, '%s.conv%d.gen1' % (prefix, li), 2 * fin, config.kernel_hidden, rng)
            init_affine(params, '%s.conv%d.gen2' % (prefix, li), config.kernel_hidden, fout * c, rng,
                        gain=1. / np.sqrt(c))
            fin = fout
    elif config.kind == 'pointnet':
        fin = channels
        for li, fout in enumerate(config.widths):
            init_affine(params, '%s.mlp%d' % (prefix, li), fin, fout, rng)
            fin = fout
    else:
        raise KeyError('unknown backbone kind %r; expected adaptive|pointnet' % config.kind)
    init_affine(params, '%s.out' % prefix, config.widths[-1], config.dim, rng)


def adaptive_graph_conv(features, coords, edges, params, name):
    """
    One adaptive edge convolution over a batch of frames.

    features - (B, N, F) Value or array
    coords - (B, N, 3) array
    edges - (B, N, k) neighbour indices
    name - parameter prefix holding gen1 and gen2

    For edge (i, j) a kernel of shape (F', 3 + F) is generated from
    concat(f_i, f_j - f_i) and applied to concat(c_j - c_i, f_j - f_i).  The
    output of each point is GeLU of the max over its k edge responses.
    """
    features = constant(features)
    coords = np.asarray(coords, dtype='d')
    edges = np.asarray(edges, dtype=int)
    nb, npts, nf = features.shape
    if coords.shape != (nb, npts, 3) or edges.shape[:2] != (nb, npts):
        raise ValueError('adaptive_graph_conv: shape mismatch features %s, coords %s, edges %s'
                         % (features.shape, coords.shape, edges.shape))
    k = edges.shape[2]
    w1, b1 = params[name + '.gen1.w'], params[name + '.gen1.b']
    w2, b2 = params[name + '.gen2.w'], params[name + '.gen2.b']
    if w1.shape[0] != 2 * nf:
        raise ValueError('adaptive_graph_conv: %s expects %d features, got %d' % (name, w1.shape[0] // 2, nf))
    hidden = w1.shape[1]
    c = 3 + nf
    fout = w2.shape[1] // c

    self_idx = np.broadcast_to(np.arange(npts)[None, :, None], edges.shape)
    f_i = gather_points(features, self_idx)
    f_j = gather_points(features, edges)
    df = sub(f_j, f_i)
    ne = nb * npts * k
    rows = coords.reshape(nb * npts, 3)
    flat = (edges + (np.arange(nb) * npts)[:, None, None]).reshape(-1)
    dc = rows[flat] - np.repeat(rows, k, axis=0)

    h = gelu(affine(reshape(concat([f_i, df]), (ne, 2 * nf)), w1, b1))
    d = concat([constant(dc), reshape(df, (ne, nf))])
    # kernel[e, o, c] = sum_h h[e, h] w2[h, o, c] + b2[o, c], applied to d[e, c]
    w2t = reshape(transpose(reshape(w2, (hidden, fout, c)), (2, 0, 1)), (c, hidden * fout))
    b2t = transpose(reshape(b2, (fout, c)), (1, 0))
    proj = reshape(matmul(d, w2t), (ne, hidden, fout))
    response = add(reshape(matmul(reshape(h, (ne, 1, hidden)), proj), (ne, fout)), matmul(d, b2t))
    return gelu(reduce_max(reshape(response, (nb, npts, k, fout)), axis=2))


def embed_frames(frames, config, params, prefix, edges=None):
    """
    Frame embeddings (B, D) of a batch of frames (B, N, 4).  The graph is
    built on the x, y, z columns unless edges (B, N, k) is given.
    """
    frames = np.asarray(frames, dtype='d')
    if frames.ndim != 3 or frames.shape[-1] != 4:
        raise ValueError('embed_frames: expected (B, N, 4) frames, got %s' % (frames.shape,))
    if config.kind == 'adaptive':
        coords = frames[..., :3]
        if edges is None:
            edges = knn_indices(coords, config.k)
        x = Value(frames)
        for li in range(len(config.widths)):
            x = adaptive_graph_conv(x, coords, edges, params, '%s.conv%d' % (prefix, li))
    else:
        x = Value(frames)
        for li in range(len(config.widths)):
            x = gelu(affine(x, params['%s.mlp%d.w' % (prefix, li)], params['%s.mlp%d.b' % (prefix, li)]))
    pooled = reduce_max(x, axis=1)
    return affine(pooled, params[prefix + '.out.w'], params[prefix + '.out.b'])


def backbone_forward(frame_points, config, params, prefix='cloud'):
    """D-vector embedding of one frame's (N, 4) cloud or flow rows"""
    frame_points = np.asarray(frame_points, dtype='d')
    return reshape(embed_frames(frame_points[None], config, params, prefix), (config.dim,))


def _gelu(x):
    return 0.5 * x * (1. + np.tanh(np.sqrt(2. / np.pi) * (x + 0.044715 * x ** 3)))


def _small_config(kind='adaptive'):
    return BackboneConfig(3, (5, 6), 7, 4, kind)


def _store(config, seed=0, channels=4):
    params = ParamStore()
    init_backbone(params, 'cloud', config, np.random.default_rng(seed), channels=channels)
    return params


class KnnTestCase(unittest.TestCase):
    def testCollinear(self):
        g = knn_graph(np.array([[0., 0, 0], [1, 0, 0], [3, 0, 0]]), 1)
        self.assertEqual(list(g.edges[:, 0]), [1, 0, 1])

    def testDuplicatesDeterministic(self):
        xyz = np.array([[0., 0, 0], [0, 0, 0], [0, 0, 0], [1, 0, 0]])
        g = knn_graph(xyz, 2)
        self.assertEqual(g.edges.tolist(), [[1, 2], [0, 2], [0, 1], [0, 1]])

    def testMatchesSortOracle(self):
        rng = np.random.default_rng(0)
        for trial in range(50):
            xyz = rng.normal(size=(20, 3))
            edges = knn_indices(xyz, 5)
            for i in range(20):
                cand = sorted((((xyz[i] - xyz[j]) ** 2).sum(), j) for j in range(20) if j != i)
                self.assertEqual(list(edges[i]), [j for _, j in cand[:5]])

    def testNoSelfLoops(self):
        edges = knn_indices(np.random.default_rng(1).normal(size=(10, 3)), 9)
        for i in range(10):
            self.assertNotIn(i, edges[i])

    def testKTooLarge(self):
        self.assertRaises(ValueError, knn_graph, np.zeros((4, 3)), 4)


class AdaptiveConvTestCase(unittest.TestCase):
    def testScalarInstance(self):
        rng = np.random.default_rng(3)
        params = ParamStore()
        init_affine(params, 'c.gen1', 2, 2, rng)
        init_affine(params, 'c.gen2', 2, 1 * 4, rng)
        params['c.gen1.b'].data[...] = rng.normal(size=2)
        params['c.gen2.b'].data[...] = rng.normal(size=4)
        coords = rng.normal(size=(3, 3))
        feats = rng.normal(size=(3, 1))
        edges = knn_indices(coords, 1)
        out = adaptive_graph_conv(feats[None], coords[None], edges[None], params, 'c').data[0]
        w1, b1 = params['c.gen1.w'].data, params['c.gen1.b'].data
        w2, b2 = params['c.gen2.w'].data, params['c.gen2.b'].data
        for i in range(3):
            j = edges[i, 0]
            e = [feats[i, 0], feats[j, 0] - feats[i, 0]]
            h = [_gelu(e[0] * w1[0, q] + e[1] * w1[1, q] + b1[q]) for q in range(2)]
            kernel = [h[0] * w2[0, m] + h[1] * w2[1, m] + b2[m] for m in range(4)]
            d = list(coords[j] - coords[i]) + [feats[j, 0] - feats[i, 0]]
            response = sum(kernel[m] * d[m] for m in range(4))
            self.assertAlmostEqual(out[i, 0], _gelu(response), places=12)

    def testIdenticalPoints(self):
        params = _store(_small_config())
        frames = np.tile(np.array([0.3, -1., 2., 0.5]), (1, 6, 1))
        edges = knn_indices(frames[..., :3], 3)
        out = adaptive_graph_conv(frames, frames[..., :3], edges, params, 'cloud.conv0').data
        np.testing.assert_array_equal(out, np.broadcast_to(out[:, :1], out.shape))
        # zero differences leave only the generated bias applied to zeros
        np.testing.assert_array_equal(out, 0.)

    def testPermutationEquivariant(self):
        rng = np.random.default_rng(4)
        params = _store(_small_config())
        frames = rng.normal(size=(1, 10, 4))
        perm = rng.permutation(10)
        inv = np.argsort(perm)
        edges = knn_indices(frames[..., :3], 3)
        out = adaptive_graph_conv(frames, frames[..., :3], edges, params, 'cloud.conv0').data[0]
        pedges = inv[edges[0][perm]][None]
        pout = adaptive_graph_conv(frames[:, perm], frames[:, perm, :3], pedges, params, 'cloud.conv0').data[0]
        np.testing.assert_array_equal(pout, out[perm])


class BackboneTestCase(unittest.TestCase):
    def testShape(self):
        for kind in ('adaptive', 'pointnet'):
            config = _small_config(kind)
            params = _store(config)
            rng = np.random.default_rng(5)
            for n in (4, 9, 16):
                self.assertEqual(backbone_forward(rng.normal(size=(n, 4)), config, params).shape, (7,))

    def testPermutationInvariant(self):
        config = _small_config()
        params = _store(config)
        rng = np.random.default_rng(6)
        for trial in range(100):
            rows = rng.normal(size=(16, 4))
            a = backbone_forward(rows, config, params).data
            b = backbone_forward(rows[rng.permutation(16)], config, params).data
            np.testing.assert_array_equal(a, b)

    def testDuplicatedPointsWithDuplicatedEdges(self):
        config = _small_config()
        params = _store(config)
        rng = np.random.default_rng(7)
        rows = rng.normal(size=(8, 4))
        edges = knn_indices(rows[:, :3], 3)
        twice = np.concatenate([rows, rows])
        # each copy links to both copies of its k neighbours (2k edges)
        doubled = np.concatenate([np.concatenate([edges, edges + 8], axis=1)] * 2)
        a = embed_frames(rows[None], config, params, 'cloud', edges=edges[None]).data
        b = embed_frames(twice[None], config, params, 'cloud', edges=doubled[None]).data
        np.testing.assert_array_equal(a, b)

    def testEmbeddingGradCheck(self):
        from ..autodiff.check import grad_check
        config = _small_config()
        params = _store(config, seed=8)
        frames = np.random.default_rng(9).normal(size=(2, 10, 4))
        weights = np.random.default_rng(10).normal(size=(2, 7))
        err = grad_check(lambda p: reduce_sum(mul(embed_frames(frames, config, p, 'cloud'), weights)), params)
        self.assertLess(err, 1e-4)

    def testUnknownKind(self):
        self.assertRaises(KeyError, _store, BackboneConfig(3, (4,), 4, 2, 'voxel'))

if __name__ == '__main__':
    unittest.main()
