__all__ = ['GaitDataset', 'INDEX_HEADER']

import io
import os
import shutil
import tempfile
import unittest

import numpy as np

from .PointFlow import GaitSample

INDEX_HEADER = 'sample_id,label,source_file,window_offset'


class GaitDataset(object):
    """
    Stacked GaitSamples.

    cloud, flow - (S, T, N, 4) arrays
    labels - (S,) class indices in [0, C)
    classes - subject names; classes[c] is the subject of label c
    sources - originating file name per sample
    offsets - index of the first frame of each window in its filtered stream
    groups - recording id per sample (used for per-recording splits)
    """
    def __init__(self, cloud, flow, labels, classes, sources=None, offsets=None, groups=None):
        self.cloud = np.asarray(cloud, dtype='d')
        self.flow = np.asarray(flow, dtype='d')
        self.labels = np.asarray(labels, dtype=int)
        self.classes = [str(c) for c in classes]
        n = len(self.labels)
        if self.cloud.shape != self.flow.shape or self.cloud.ndim != 4 or self.cloud.shape[0] != n:
            raise ValueError('GaitDataset: cloud %s, flow %s and %d labels disagree' % (self.cloud.shape, self.flow.shape, n))
        if n and (self.labels.min() < 0 or self.labels.max() >= len(self.classes)):
            raise ValueError('GaitDataset: labels must lie in [0, %d)' % len(self.classes))
        self.sources = list(sources) if sources is not None else [''] * n
        self.offsets = np.asarray(offsets if offsets is not None else np.zeros(n), dtype=int)
        if groups is None:
            groups = self.sources
        self.groups = list(groups)

    @classmethod
    def from_samples(cls, samples, classes, sources=None, offsets=None, groups=None):
        if len(samples) == 0:
            raise ValueError('GaitDataset: no samples')
        return cls(np.stack([s.cloud for s in samples]), np.stack([s.flow for s in samples]),
                   [s.label for s in samples], classes, sources, offsets, groups)

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i):
        return GaitSample(self.cloud[i], self.flow[i], self.labels[i])

    @property
    def frames(self):
        return self.cloud.shape[1]

    @property
    def points(self):
        return self.cloud.shape[2]

    @property
    def nclasses(self):
        return len(self.classes)

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        return GaitDataset(self.cloud[indices], self.flow[indices], self.labels[indices], self.classes,
                           [self.sources[i] for i in indices], self.offsets[indices],
                           [self.groups[i] for i in indices])

    def index_rows(self):
        return [(i, int(self.labels[i]), self.sources[i], int(self.offsets[i])) for i in range(len(self))]

    def save(self, directory):
        """Write samples.nc and index.csv into directory"""
        from ..netcdf import NetCDFFile, FORMAT_VERSION
        if not os.path.isdir(directory):
            os.makedirs(directory)
        ncf = NetCDFFile(os.path.join(directory, 'samples.nc'), 'w', format='NETCDF4')
        try:
            ncf.format_version = FORMAT_VERSION
            ncf.frames = self.frames
            ncf.points = self.points
            ncf.classes = '\t'.join(self.classes)
            ncf.createDimension('sample', len(self))
            ncf.createDimension('frame', self.frames)
            ncf.createDimension('point', self.points)
            ncf.createDimension('channel', 4)
            for name in ('cloud', 'flow'):
                var = ncf.createVariable(name, 'f8', ('sample', 'frame', 'point', 'channel'))
                var[...] = getattr(self, name)
            ncf.createVariable('label', 'i4', ('sample',))[...] = self.labels
        finally:
            ncf.close()
        with io.open(os.path.join(directory, 'index.csv'), 'w', encoding='utf-8') as f:
            f.write(INDEX_HEADER + '\n')
            for row in self.index_rows():
                f.write('%d,%d,%s,%d\n' % row)

    @classmethod
    def load(cls, directory):
        from ..netcdf import NetCDFFile, check_version
        path = os.path.join(directory, 'samples.nc')
        if not os.path.exists(path):
            raise ValueError('%s: not a dataset directory (no samples.nc)' % directory)
        ncf = NetCDFFile(path, 'r')
        try:
            check_version(ncf, path)
            classes = ncf.classes.split('\t') if ncf.classes else []
            cloud = np.array(ncf.variables['cloud'][...], dtype='d')
            flow = np.array(ncf.variables['flow'][...], dtype='d')
            labels = np.array(ncf.variables['label'][...], dtype=int)
        finally:
            ncf.close()
        sources, offsets = [], []
        with io.open(os.path.join(directory, 'index.csv'), 'r', encoding='utf-8') as f:
            header = f.readline().strip()
            if header != INDEX_HEADER:
                raise ValueError('%s: bad index header %r' % (directory, header))
            for lineno, line in enumerate(f, 2):
                if not line.strip():
                    continue
                fields = line.strip().split(',')
                if len(fields) < 4:
                    raise ValueError('%s/index.csv:%d: expected 4 fields' % (directory, lineno))
                label, source, offset = fields[1], ','.join(fields[2:-1]), fields[-1]
                if int(label) != labels[len(sources)]:
                    raise ValueError('%s/index.csv:%d: label disagrees with samples.nc' % (directory, lineno))
                sources.append(source)
                offsets.append(int(offset))
        return cls(cloud, flow, labels, classes, sources, offsets)


class GaitDatasetTestCase(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(2)
        self.ds = GaitDataset(rng.normal(size=(5, 3, 4, 4)), rng.normal(size=(5, 3, 4, 4)),
                              [0, 1, 1, 0, 2], ['anna', 'bo', 'cy'],
                              ['a.csv', 'b.csv', 'b.csv', 'a.csv', 'c.csv'], [0, 0, 3, 3, 0])

    def testLabelRange(self):
        self.assertRaises(ValueError, GaitDataset, self.ds.cloud, self.ds.flow, [0, 1, 1, 0, 3], ['a', 'b', 'c'])

    def testSubset(self):
        sub = self.ds.subset([4, 1])
        self.assertEqual(list(sub.labels), [2, 1])
        self.assertEqual(sub.sources, ['c.csv', 'b.csv'])
        np.testing.assert_array_equal(sub.cloud[0], self.ds.cloud[4])

    def testSaveLoad(self):
        directory = tempfile.mkdtemp()
        try:
            self.ds.save(directory)
            back = GaitDataset.load(directory)
        finally:
            shutil.rmtree(directory)
        np.testing.assert_array_equal(back.cloud, self.ds.cloud)
        np.testing.assert_array_equal(back.flow, self.ds.flow)
        self.assertEqual(list(back.labels), list(self.ds.labels))
        self.assertEqual(back.classes, self.ds.classes)
        self.assertEqual(back.index_rows(), self.ds.index_rows())

if __name__ == '__main__':
    unittest.main()
