__all__ = ['grad_check']

import unittest

import numpy as np

from .core import backward, Value, affine, reduce_sum, gelu, layer_norm, softmax, \
    log_softmax, reduce_mean, reduce_max, concat, mask_rows, exp, log, mul, matmul, \
    scale, add, sigmoid, tanh, transpose, reshape, take, pick, gather_points
from .params import ParamStore


def _scalar(value):
    out = float(np.asarray(value.data).reshape(-1)[0])
    if not np.isfinite(out):
        raise FloatingPointError('grad_check: objective is not finite (%r)' % out)
    return out


def grad_check(f, params, eps=1e-5, ncoords=200, seed=0, atol=1e-9, verbose=0):
    """
    Compare reverse-mode gradients of f(params) with central differences.

    f - callable taking the ParamStore and returning a scalar Value
    params - ParamStore
    eps - finite-difference step
    ncoords - coordinates checked; all of them when the store is smaller
    seed - chooses the coordinate subsample
    atol - coordinates where both gradients are below atol count as agreeing

    Returns the largest |analytic - numeric| / max(1e-8, |analytic| + |numeric|)
    over the remaining coordinates.
    """
    if eps <= 0:
        raise ValueError('grad_check: eps must be positive, got %r' % eps)
    params.zero_grad()
    root = f(params)
    _scalar(root)
    backward(root)
    analytic = dict((k, v.grad.copy()) for k, v in params.items())

    coords = [(k, i) for k, v in params.items() for i in range(v.data.size)]
    if len(coords) > ncoords:
        rng = np.random.default_rng(seed)
        chosen = sorted(rng.choice(len(coords), size=ncoords, replace=False))
        coords = [coords[i] for i in chosen]

    worst = 0.
    for name, i in coords:
        flat = params[name].data.reshape(-1)
        orig = flat[i]
        flat[i] = orig + eps
        fp = _scalar(f(params))
        flat[i] = orig - eps
        fm = _scalar(f(params))
        flat[i] = orig
        numeric = (fp - fm) / (2. * eps)
        a = analytic[name].reshape(-1)[i]
        if abs(a) < atol and abs(numeric) < atol:
            continue
        err = abs(a - numeric) / max(1e-8, abs(a) + abs(numeric))
        if verbose > 1 and err > worst:
            print('grad_check: %s[%d] analytic=%.6e numeric=%.6e err=%.3e' % (name, i, a, numeric, err))
        worst = max(worst, err)
    params.zero_grad()
    return worst


class GradCheckTestCase(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(11)
        self.params = ParamStore()

    def add(self, name, *shape):
        return self.params.add(name, self.rng.normal(size=shape))

    def testLinearIsExact(self):
        self.add('w', 5, 3)
        self.add('b', 3)
        x = self.rng.normal(size=(4, 5))
        err = grad_check(lambda p: reduce_sum(affine(x, p['w'], p['b'])), self.params)
        self.assertLess(err, 1e-9)

    def testDeadParameter(self):
        self.add('w', 4)
        self.add('unused', 3)
        err = grad_check(lambda p: reduce_sum(mul(p['w'], p['w'])), self.params)
        self.assertLess(err, 1e-6)

    def testShiftInvariantBias(self):
        # a key bias only shifts each softmax row, so its gradient is zero up to rounding
        self.add('k', 4, 3)
        self.add('kb', 3)
        q = self.rng.normal(size=(2, 3))
        weights = self.rng.normal(size=(2, 4))

        def f(p):
            scores = matmul(q, transpose(add(p['k'], p['kb']), (1, 0)))
            return reduce_sum(mul(softmax(scores), weights))
        self.assertLess(grad_check(f, self.params), 1e-6)
        self.params.zero_grad()
        backward(f(self.params))
        self.assertLess(np.abs(self.params['kb'].grad).max(), 1e-12)
        self.assertGreater(np.abs(self.params['k'].grad).max(), 1e-3)
        self.params.zero_grad()

    def testNonFiniteObjective(self):
        self.add('w', 2)
        self.assertRaises(FloatingPointError, grad_check,
                          lambda p: reduce_sum(scale(p['w'], np.inf)), self.params)

    def testEachPrimitive(self):
        self.add('x', 3, 4)
        self.add('y', 3, 4)
        self.add('w', 4, 2)
        self.add('g', 4)
        self.add('b', 4)
        self.add('m', 3)
        weights = self.rng.normal(size=(3, 4))
        cases = [
            lambda p: reduce_sum(mul(gelu(p['x']), weights)),
            lambda p: reduce_sum(mul(sigmoid(p['x']), weights)),
            lambda p: reduce_sum(mul(tanh(p['x']), weights)),
            lambda p: reduce_sum(mul(exp(scale(p['x'], 0.3)), weights)),
            lambda p: reduce_sum(log(add(mul(p['x'], p['x']), np.ones((3, 4))))),
            lambda p: reduce_sum(mul(layer_norm(p['x'], p['g'], p['b']), weights)),
            lambda p: reduce_sum(mul(softmax(p['x']), weights)),
            lambda p: reduce_sum(mul(log_softmax(p['x']), weights)),
            lambda p: reduce_sum(mul(matmul(p['x'], p['w']), self.rng_fixed(3, 2))),
            lambda p: reduce_sum(mul(reduce_mean(p['x'], axis=0), p['g'])),
            lambda p: reduce_sum(mul(reduce_max(p['x'], axis=1), p['m'])),
            lambda p: reduce_sum(mul(concat([p['x'], p['y']]), self.rng_fixed(3, 8))),
            lambda p: reduce_sum(mul(mask_rows(p['x'], p['m']), weights)),
            lambda p: reduce_sum(mul(transpose(reshape(p['x'], (3, 2, 2)), (2, 0, 1)), self.rng_fixed(2, 3, 2))),
            lambda p: reduce_sum(mul(take(p['y'], [0, 2, 2], axis=0), self.rng_fixed(3, 4))),
            lambda p: reduce_sum(pick(log_softmax(p['y']), [1, 0, 3])),
            lambda p: reduce_sum(mul(gather_points(reshape(p['x'], (1, 3, 4)), [[[1, 2], [0, 0], [2, 1]]]),
                                     self.rng_fixed(1, 3, 2, 4))),
        ]
        for ci, f in enumerate(cases):
            err = grad_check(f, self.params, eps=1e-6)
            self.assertLess(err, 1e-6, 'case %d: %g' % (ci, err))

    def rng_fixed(self, *shape):
        return np.random.default_rng(sum(shape)).normal(size=shape)

if __name__ == '__main__':
    unittest.main()
