__all__ = ['ParamStore']

import os
import tempfile
import threading
import unittest
from collections import OrderedDict

import numpy as np

from .core import Value


class ParamStore(object):
    """
    Ordered name -> Value map of trainable parameters.

    Reads may be shared; assign/load/update hold the store lock.  Names are
    dotted paths (cloud.conv0.gen_w1) and must be unique.

    Checkpoints are netCDF files: one float64 variable per parameter,
    named as in the store, with one dimension per axis; global attributes
    format_version and names (space separated, store order).
    """
    def __init__(self):
        self._values = OrderedDict()
        self._lock = threading.Lock()

    def add(self, name, data):
        if name in self._values:
            raise KeyError('duplicate parameter %s' % name)
        value = self._values[name] = Value(np.array(data, dtype='d'), requires_grad=True)
        return value

    def __getitem__(self, name):
        try:
            return self._values[name]
        except KeyError:
            raise KeyError('unknown parameter %s' % name)

    def __contains__(self, name):
        return name in self._values

    def __len__(self):
        return len(self._values)

    def __iter__(self):
        return iter(self._values)

    def keys(self):
        return list(self._values.keys())

    def items(self):
        return list(self._values.items())

    def size(self):
        """Total number of scalar coordinates"""
        return int(sum(v.data.size for v in self._values.values()))

    def zero_grad(self):
        for v in self._values.values():
            v.zero_grad()

    def state(self):
        return OrderedDict((k, v.data.copy()) for k, v in self._values.items())

    def load_state(self, state):
        with self._lock:
            missing = set(self._values).symmetric_difference(state)
            if missing:
                raise KeyError('parameter sets differ: %s' % ', '.join(sorted(missing)))
            for k, v in self._values.items():
                data = np.asarray(state[k], dtype='d')
                if data.shape != v.data.shape:
                    raise ValueError('%s: shape %s does not match %s' % (k, data.shape, v.data.shape))
                v.data[...] = data

    def update(self, name, delta):
        with self._lock:
            self._values[name].data += delta

    def save(self, path, **attrs):
        from ..netcdf import NetCDFFile, FORMAT_VERSION
        ncf = NetCDFFile(path, 'w', format='NETCDF4')
        try:
            ncf.format_version = FORMAT_VERSION
            ncf.names = ' '.join(self._values.keys())
            for k, v in attrs.items():
                setattr(ncf, k, v)
            for name, value in self._values.items():
                dims = []
                for ai, n in enumerate(value.data.shape):
                    dim = '%s_%d' % (name, ai)
                    ncf.createDimension(dim, n)
                    dims.append(dim)
                var = ncf.createVariable(name, 'f8', tuple(dims))
                var[...] = value.data
        finally:
            ncf.close()

    @classmethod
    def read(cls, path):
        """Return (state, attrs) from a checkpoint"""
        from ..netcdf import NetCDFFile, check_version
        ncf = NetCDFFile(path, 'r')
        try:
            check_version(ncf, path)
            names = ncf.names.split()
            state = OrderedDict((n, np.array(ncf.variables[n][...], dtype='d')) for n in names)
            attrs = dict((k, ncf.getncattr(k)) for k in ncf.ncattrs())
        finally:
            ncf.close()
        return state, attrs

    def load(self, path):
        state, attrs = self.read(path)
        self.load_state(state)
        return attrs


class ParamStoreTestCase(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(0)
        self.store = ParamStore()
        self.store.add('a.w', rng.normal(size=(3, 4)))
        self.store.add('a.b', rng.normal(size=4))
        self.store.add('head', rng.normal(size=(2, 2, 5)))

    def testDuplicateName(self):
        self.assertRaises(KeyError, self.store.add, 'a.w', np.zeros(2))

    def testSize(self):
        self.assertEqual(self.store.size(), 12 + 4 + 20)

    def testSaveLoadLossless(self):
        fd, path = tempfile.mkstemp(suffix='.nc')
        os.close(fd)
        try:
            self.store.save(path, classes=3)
            other = ParamStore()
            for k, v in self.store.items():
                other.add(k, np.zeros(v.shape))
            attrs = other.load(path)
            self.assertEqual(int(attrs['classes']), 3)
            self.assertEqual(other.keys(), self.store.keys())
            for k in self.store:
                np.testing.assert_array_equal(other[k].data, self.store[k].data)
        finally:
            os.remove(path)

    def testLoadStateShapeCheck(self):
        state = self.store.state()
        state['a.b'] = np.zeros(5)
        self.assertRaises(ValueError, self.store.load_state, state)

if __name__ == '__main__':
    unittest.main()
