__all__ = ['Value', 'constant', 'backward', 'detach',
           'add', 'sub', 'mul', 'scale', 'matmul', 'affine',
           'gelu', 'sigmoid', 'tanh', 'exp', 'log',
           'layer_norm', 'softmax', 'log_softmax',
           'reduce_sum', 'reduce_mean', 'reduce_max',
           'concat', 'mask_rows', 'reshape', 'transpose',
           'take', 'pick', 'gather_points']

import unittest

import numpy as np

_GELU_C = np.sqrt(2. / np.pi)
_GELU_A = 0.044715


class Value(object):
    """
    A node in a reverse-mode graph.  data and grad are 64-bit arrays of
    the same shape; parents and the backward closure record how the node
    was made.  Leaves have no parents.  Only nodes with requires_grad
    receive gradients.
    """
    def __init__(self, data, parents=(), op='leaf', backward_fn=None, requires_grad=False):
        self.data = np.array(data, dtype='d')
        self.grad = np.zeros(self.data.shape, dtype='d')
        self.parents = tuple(parents)
        self.op = op
        self._backward = backward_fn
        self.requires_grad = requires_grad or any(p.requires_grad for p in self.parents)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    def zero_grad(self):
        self.grad[...] = 0.

    def backward(self):
        backward(self)

    def item(self):
        return float(self.data.reshape(-1)[0])

    def __repr__(self):
        return 'Value(op=%s, shape=%s)' % (self.op, self.data.shape)

    def __add__(self, rhs):
        return add(self, rhs)

    def __sub__(self, rhs):
        return sub(self, rhs)

    def __mul__(self, rhs):
        if isinstance(rhs, (int, float)):
            return scale(self, rhs)
        return mul(self, rhs)

    __rmul__ = __mul__

    def __neg__(self):
        return scale(self, -1.)

    def __matmul__(self, rhs):
        return matmul(self, rhs)


def constant(data):
    """Wrap an array as a leaf that never receives gradients"""
    if isinstance(data, Value):
        return data
    return Value(data)


def _node(data, parents, op, backward_fn):
    parents = tuple(parents)
    out = Value(data, parents, op)
    if out.requires_grad:
        out._backward = backward_fn
    else:
        out.parents = ()
    return out


def _accumulate(value, grad):
    if value.requires_grad:
        value.grad += grad


def _topological_order(root):
    order = []
    seen = set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node.parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    return order


def backward(root):
    """
    Accumulate d(root)/d(leaf) into the grad of every reachable leaf that
    requires gradients.  Interior gradients are reset on every call, so
    repeated calls add into leaves only.
    """
    if root.data.size != 1:
        raise ValueError('backward: root must be a scalar, got shape %s' % (root.data.shape,))
    order = _topological_order(root)
    for node in order:
        if node.parents:
            node.grad = np.zeros(node.data.shape, dtype='d')
    if root.parents:
        root.grad = np.ones(root.data.shape, dtype='d')
    else:
        root.grad += 1.
    for node in reversed(order):
        if node._backward is not None and node.parents:
            node._backward(node.grad)


def detach(x):
    return Value(constant(x).data.copy())


def _check_same(op, a, b):
    if a.shape != b.shape:
        raise ValueError('%s: shape mismatch %s vs %s' % (op, a.shape, b.shape))


def _sum_to_row(grad, ncol):
    return grad.reshape(-1, ncol).sum(0)


def add(a, b):
    """
    Elementwise sum.  b may also be a bias row whose length equals the
    last axis of a; that is the only broadcast allowed.
    """
    a, b = constant(a), constant(b)
    if a.shape == b.shape:
        def _back(g):
            _accumulate(a, g)
            _accumulate(b, g)
        return _node(a.data + b.data, (a, b), 'add', _back)
    if b.ndim == 1 and a.ndim >= 1 and a.shape[-1] == b.shape[0]:
        def _back(g):
            _accumulate(a, g)
            _accumulate(b, _sum_to_row(g, b.shape[0]))
        return _node(a.data + b.data, (a, b), 'add', _back)
    raise ValueError('add: shape mismatch %s vs %s' % (a.shape, b.shape))


def sub(a, b):
    a, b = constant(a), constant(b)
    _check_same('sub', a, b)

    def _back(g):
        _accumulate(a, g)
        _accumulate(b, -g)
    return _node(a.data - b.data, (a, b), 'sub', _back)


def mul(a, b):
    a, b = constant(a), constant(b)
    _check_same('mul', a, b)

    def _back(g):
        _accumulate(a, g * b.data)
        _accumulate(b, g * a.data)
    return _node(a.data * b.data, (a, b), 'mul', _back)


def scale(a, factor):
    a = constant(a)
    factor = float(factor)

    def _back(g):
        _accumulate(a, g * factor)
    return _node(a.data * factor, (a,), 'scale', _back)


def _swap(x):
    return np.swapaxes(x, -1, -2)


def matmul(a, b):
    """
    Matrix product over the last two axes.  b is either a matrix shared by
    every leading index of a, or carries exactly the same leading axes.
    """
    a, b = constant(a), constant(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ValueError('matmul: shape mismatch %s vs %s' % (a.shape, b.shape))
    shared = b.ndim == 2
    if not shared and a.shape[:-2] != b.shape[:-2]:
        raise ValueError('matmul: shape mismatch %s vs %s' % (a.shape, b.shape))

    def _back(g):
        if a.requires_grad:
            a.grad += np.matmul(g, _swap(b.data))
        if b.requires_grad:
            if shared:
                a2 = a.data.reshape(-1, a.shape[-1])
                g2 = g.reshape(-1, g.shape[-1])
                b.grad += np.matmul(a2.T, g2)
            else:
                b.grad += np.matmul(_swap(a.data), g)
    return _node(np.matmul(a.data, b.data), (a, b), 'matmul', _back)


def affine(x, weight, bias):
    """x @ weight + bias over the last axis of x"""
    x, weight, bias = constant(x), constant(weight), constant(bias)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[0] or bias.shape != (weight.shape[1],):
        raise ValueError('affine: shape mismatch %s, %s, %s' % (x.shape, weight.shape, bias.shape))
    x2 = x.data.reshape(-1, x.shape[-1])
    out = np.dot(x2, weight.data) + bias.data

    def _back(g):
        g2 = g.reshape(-1, weight.shape[1])
        if x.requires_grad:
            x.grad += np.dot(g2, weight.data.T).reshape(x.shape)
        if weight.requires_grad:
            weight.grad += np.dot(x2.T, g2)
        _accumulate(bias, g2.sum(0))
    return _node(out.reshape(x.shape[:-1] + (weight.shape[1],)), (x, weight, bias), 'affine', _back)


def gelu(x):
    """GeLU, tanh approximation"""
    x = constant(x)
    u = _GELU_C * (x.data + _GELU_A * x.data ** 3)
    t = np.tanh(u)

    def _back(g):
        du = _GELU_C * (1. + 3. * _GELU_A * x.data ** 2)
        _accumulate(x, g * (0.5 * (1. + t) + 0.5 * x.data * (1. - t * t) * du))
    return _node(0.5 * x.data * (1. + t), (x,), 'gelu', _back)


def sigmoid(x):
    x = constant(x)
    y = 0.5 * (1. + np.tanh(0.5 * x.data))

    def _back(g):
        _accumulate(x, g * y * (1. - y))
    return _node(y, (x,), 'sigmoid', _back)


def tanh(x):
    x = constant(x)
    y = np.tanh(x.data)

    def _back(g):
        _accumulate(x, g * (1. - y * y))
    return _node(y, (x,), 'tanh', _back)


def exp(x):
    x = constant(x)
    y = np.exp(x.data)

    def _back(g):
        _accumulate(x, g * y)
    return _node(y, (x,), 'exp', _back)


def log(x):
    x = constant(x)
    if (x.data <= 0).any():
        raise ValueError('log: non-positive input')

    def _back(g):
        _accumulate(x, g / x.data)
    return _node(np.log(x.data), (x,), 'log', _back)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize the last axis to zero mean, unit variance; then gain and bias"""
    x, gain, bias = constant(x), constant(gain), constant(bias)
    if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
        raise ValueError('layer_norm: shape mismatch %s, %s, %s' % (x.shape, gain.shape, bias.shape))
    mu = x.data.mean(-1, keepdims=True)
    centered = x.data - mu
    var = (centered ** 2).mean(-1, keepdims=True)
    inv = 1. / np.sqrt(var + eps)
    xhat = centered * inv

    def _back(g):
        n = x.shape[-1]
        _accumulate(gain, _sum_to_row(g * xhat, n))
        _accumulate(bias, _sum_to_row(g, n))
        if x.requires_grad:
            gx = g * gain.data
            x.grad += inv * (gx - gx.mean(-1, keepdims=True)
                             - xhat * (gx * xhat).mean(-1, keepdims=True))
    return _node(xhat * gain.data + bias.data, (x, gain, bias), 'layer_norm', _back)


def softmax(x):
    """Row-wise softmax over the last axis"""
    x = constant(x)
    shifted = x.data - x.data.max(-1, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(-1, keepdims=True)

    def _back(g):
        _accumulate(x, y * (g - (g * y).sum(-1, keepdims=True)))
    return _node(y, (x,), 'softmax', _back)


def log_softmax(x):
    x = constant(x)
    shifted = x.data - x.data.max(-1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(-1, keepdims=True))
    y = shifted - lse

    def _back(g):
        _accumulate(x, g - np.exp(y) * g.sum(-1, keepdims=True))
    return _node(y, (x,), 'log_softmax', _back)


def reduce_sum(x, axis=None):
    x = constant(x)
    y = x.data.sum(axis=axis)

    def _back(g):
        if axis is None:
            _accumulate(x, np.full(x.shape, float(g)))
        else:
            _accumulate(x, np.broadcast_to(np.expand_dims(g, axis), x.shape))
    return _node(y, (x,), 'sum', _back)


def reduce_mean(x, axis=None):
    x = constant(x)
    n = x.data.size if axis is None else x.shape[axis]
    return scale(reduce_sum(x, axis), 1. / n)


def reduce_max(x, axis):
    """Max along axis; the gradient goes to the lowest index among ties"""
    x = constant(x)
    idx = np.expand_dims(np.argmax(x.data, axis=axis), axis)
    y = np.take_along_axis(x.data, idx, axis=axis)

    def _back(g):
        if x.requires_grad:
            gx = np.zeros(x.shape, dtype='d')
            np.put_along_axis(gx, idx, np.expand_dims(g, axis), axis=axis)
            x.grad += gx
    return _node(np.squeeze(y, axis=axis), (x,), 'max', _back)


def concat(values, axis=-1):
    values = [constant(v) for v in values]
    ref = values[0]
    ax = axis % ref.ndim
    for v in values[1:]:
        if v.ndim != ref.ndim or v.shape[:ax] + v.shape[ax + 1:] != ref.shape[:ax] + ref.shape[ax + 1:]:
            raise ValueError('concat: shape mismatch %s vs %s' % (ref.shape, v.shape))
    bounds = np.cumsum([0] + [v.shape[ax] for v in values])

    def _back(g):
        for v, lo, hi in zip(values, bounds[:-1], bounds[1:]):
            _accumulate(v, np.take(g, np.arange(lo, hi), axis=ax))
    return _node(np.concatenate([v.data for v in values], axis=ax), values, 'concat', _back)


def mask_rows(x, mask):
    """Multiply row i of x (..., M, D) by mask (..., M)"""
    x, mask = constant(x), constant(mask)
    if x.shape[:-1] != mask.shape:
        raise ValueError('mask_rows: shape mismatch %s vs %s' % (x.shape, mask.shape))
    m = mask.data[..., None]

    def _back(g):
        _accumulate(x, g * m)
        _accumulate(mask, (g * x.data).sum(-1))
    return _node(x.data * m, (x, mask), 'mask_rows', _back)


def reshape(x, shape):
    x = constant(x)
    try:
        y = x.data.reshape(shape)
    except ValueError:
        raise ValueError('reshape: cannot reshape %s to %s' % (x.shape, shape))

    def _back(g):
        _accumulate(x, g.reshape(x.shape))
    return _node(y, (x,), 'reshape', _back)


def transpose(x, axes):
    x = constant(x)
    inverse = np.argsort(axes)

    def _back(g):
        _accumulate(x, np.transpose(g, inverse))
    return _node(np.transpose(x.data, axes), (x,), 'transpose', _back)


def take(x, indices, axis):
    """Select entries along one axis; repeated indices add their gradients"""
    x = constant(x)
    indices = np.atleast_1d(np.asarray(indices, dtype=int))
    ax = axis % x.ndim

    def _back(g):
        if x.requires_grad:
            gx = np.zeros(x.shape, dtype='d')
            moved = np.moveaxis(gx, ax, 0)
            np.add.at(moved, indices, np.moveaxis(g, ax, 0))
            x.grad += gx
    return _node(np.take(x.data, indices, axis=ax), (x,), 'take', _back)


def pick(x, labels):
    """Row b of x (B, C) at column labels[b]"""
    x = constant(x)
    labels = np.asarray(labels, dtype=int)
    if x.ndim != 2 or labels.shape != (x.shape[0],):
        raise ValueError('pick: shape mismatch %s vs %s' % (x.shape, labels.shape))
    rows = np.arange(x.shape[0])

    def _back(g):
        if x.requires_grad:
            gx = np.zeros(x.shape, dtype='d')
            gx[rows, labels] = g
            x.grad += gx
    return _node(x.data[rows, labels], (x,), 'pick', _back)


def gather_points(x, index):
    """
    x (B, N, C) and integer index (B, P, K) give (B, P, K, C) with
    out[b, p, k] = x[b, index[b, p, k]].
    """
    x = constant(x)
    index = np.asarray(index, dtype=int)
    if x.ndim != 3 or index.ndim != 3 or index.shape[0] != x.shape[0]:
        raise ValueError('gather_points: shape mismatch %s vs %s' % (x.shape, index.shape))
    nb, npts, nc = x.shape
    flat = (index + (np.arange(nb) * npts)[:, None, None]).reshape(-1)
    y = x.data.reshape(nb * npts, nc)[flat].reshape(index.shape + (nc,))

    def _back(g):
        if x.requires_grad:
            gx = np.zeros((nb * npts, nc), dtype='d')
            np.add.at(gx, flat, g.reshape(-1, nc))
            x.grad += gx.reshape(x.shape)
    return _node(y, (x,), 'gather', _back)


def _leaf(rng, *shape):
    return Value(rng.normal(size=shape), requires_grad=True)


class PrimitiveTestCase(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(3)

    def testProductRule(self):
        x = Value(3., requires_grad=True)
        y = Value(4., requires_grad=True)
        backward(mul(x, y))
        self.assertEqual(float(x.grad), 4.)
        self.assertEqual(float(y.grad), 3.)

    def testSumGradIsOnes(self):
        x = _leaf(self.rng, 3, 4)
        backward(reduce_sum(x))
        self.assertTrue((x.grad == 1.).all())

    def testRepeatedBackwardAccumulates(self):
        x = _leaf(self.rng, 5)
        root = reduce_sum(mul(x, x))
        backward(root)
        backward(root)
        np.testing.assert_allclose(x.grad, 4. * x.data, rtol=1e-12)

    def testNonScalarRoot(self):
        x = _leaf(self.rng, 3)
        self.assertRaises(ValueError, backward, gelu(x))

    def testGeluZero(self):
        self.assertEqual(float(gelu(Value(0.)).data), 0.)

    def testSoftmaxConstantRow(self):
        y = softmax(Value(np.full((2, 5), 3.7)))
        np.testing.assert_allclose(y.data, 0.2, atol=1e-15)

    def testLayerNormMoments(self):
        x = Value(1000. * self.rng.normal(size=(4, 16)))
        y = layer_norm(x, np.ones(16), np.zeros(16))
        np.testing.assert_allclose(y.data.mean(-1), 0., atol=1e-9)
        np.testing.assert_allclose(y.data.var(-1), 1., atol=1e-9)

    def testSoftmaxSumGradientVanishes(self):
        x = _leaf(self.rng, 3, 6)
        backward(reduce_sum(softmax(x)))
        np.testing.assert_allclose(x.grad, 0., atol=1e-9)

    def testLogSoftmaxNormalized(self):
        y = log_softmax(Value(self.rng.normal(size=(4, 7)) * 20))
        np.testing.assert_allclose(np.log(np.exp(y.data).sum(-1)), 0., atol=1e-9)

    def testShapeMismatchNamesOperation(self):
        try:
            add(Value(np.zeros((2, 3))), Value(np.zeros((3, 2))))
        except ValueError as e:
            self.assertIn('add', str(e))
            self.assertIn('(2, 3)', str(e))
        else:
            self.fail('add accepted mismatched shapes')

    def testBiasRowBroadcast(self):
        x = _leaf(self.rng, 2, 3, 4)
        b = _leaf(self.rng, 4)
        backward(reduce_sum(add(x, b)))
        np.testing.assert_allclose(b.grad, 6.)

    def testMaxTieRoutesToLowestIndex(self):
        x = Value(np.array([[1., 5., 5.], [2., 2., 0.]]), requires_grad=True)
        backward(reduce_sum(reduce_max(x, axis=1)))
        np.testing.assert_array_equal(x.grad, [[0., 1., 0.], [1., 0., 0.]])

    def testGatherPoints(self):
        x = _leaf(self.rng, 2, 3, 2)
        idx = np.array([[[1, 1], [0, 2], [2, 0]], [[0, 0], [1, 2], [2, 1]]])
        y = gather_points(x, idx)
        self.assertEqual(y.shape, (2, 3, 2, 2))
        np.testing.assert_array_equal(y.data[1, 1, 1], x.data[1, 2])
        backward(reduce_sum(y))
        np.testing.assert_array_equal(x.grad[0, :, 0], [2., 2., 2.])

    def testLinearityOfBackward(self):
        x = _leaf(self.rng, 4, 3)
        f = lambda: reduce_sum(gelu(x))
        g = lambda: reduce_sum(mul(tanh(x), x))
        backward(f())
        gf = x.grad.copy()
        x.zero_grad()
        backward(g())
        gg = x.grad.copy()
        x.zero_grad()
        backward(add(scale(f(), 2.5), scale(g(), -1.5)))
        np.testing.assert_allclose(x.grad, 2.5 * gf - 1.5 * gg, atol=1e-9)

    def testConstantsCarryNoGraph(self):
        y = gelu(constant(np.ones(3)))
        self.assertFalse(y.requires_grad)
        self.assertEqual(y.parents, ())

if __name__ == '__main__':
    unittest.main()
