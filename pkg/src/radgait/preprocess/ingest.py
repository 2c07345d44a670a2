__all__ = ['MANIFEST_HEADER', 'FORMATS', 'ManifestEntry', 'read_manifest', 'write_manifest',
           'ingest', 'ingest_directory', 'build_dataset']

import io
import os
import shutil
import tempfile
import unittest
from collections import namedtuple, OrderedDict
from warnings import warn

import numpy as np
from joblib import Parallel, delayed

from ..core.PointStream import read_point_rows, frames_from_rows, streams_from_rows, \
    filter_sparse_frames, window_stream, format_streams, PointStream, RadarFrame, STREAM_HEADER
from ..core.PointFlow import build_sample
from ..core.Dataset import GaitDataset
from .tracking import track_persons
from ..utils import derive_seed

MANIFEST_HEADER = 'file_name,subject_id,environment'

# tracked: rows carry the dataset's own track ids
# raw: one walker per recording, tracked here
FORMATS = OrderedDict([('stpointgcn', 'tracked'), ('mmgait', 'raw'), ('tracked', 'tracked'),
                       ('raw', 'raw'), ('auto', 'auto')])


class ManifestEntry(namedtuple('ManifestEntry', 'subject environment')):
    __slots__ = ()


def read_manifest(path):
    """file name -> ManifestEntry, in file order"""
    entries = OrderedDict()
    with io.open(path, 'r', encoding='utf-8') as f:
        header = None
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            if header is None:
                header = line
                if [h.strip() for h in line.split(',')] != MANIFEST_HEADER.split(','):
                    raise ValueError('%s:%d: expected header %r, got %r' % (path, lineno, MANIFEST_HEADER, line))
                continue
            fields = [x.strip() for x in line.split(',')]
            if len(fields) != 3 or not fields[0] or not fields[1]:
                raise ValueError('%s:%d: expected file_name,subject_id,environment' % (path, lineno))
            if fields[0] in entries:
                raise ValueError('%s:%d: %s listed twice' % (path, lineno, fields[0]))
            entries[fields[0]] = ManifestEntry(fields[1], fields[2])
    return entries


def write_manifest(entries, path):
    with io.open(path, 'w', encoding='utf-8') as f:
        f.write(MANIFEST_HEADER + '\n')
        for name, entry in entries.items():
            f.write('%s,%s,%s\n' % (name, entry.subject, entry.environment))


def subject_from_name(name):
    """Leading token of the file name: 'p03_lab_1.csv' -> 'p03'"""
    return os.path.basename(name).split('_')[0].split('.')[0]


def ingest(path, format_id='auto', subject=None, eps=0.5, min_pts=10, max_gap=5, max_link_dist=1.0,
           longest_only=True, verbose=0):
    """
    Read one recording into labeled single-walker PointStreams.

    Tracked formats are grouped by their track_id column (rows with
    track_id -1 are dropped).  Raw formats run track_persons; with
    longest_only, only the longest track is kept (one walker per
    recording).  auto picks tracked when any track_id is >= 0.
    subject defaults to the leading token of the file name.
    """
    if format_id not in FORMATS:
        raise KeyError('unknown format %r; expected one of %s' % (format_id, '|'.join(FORMATS)))
    name = os.path.basename(path)
    if subject is None:
        subject = subject_from_name(name)
    with io.open(path, 'r', encoding='utf-8') as f:
        rows = read_point_rows(f, name=path)
    kind = FORMATS[format_id]
    if kind == 'auto':
        kind = 'tracked' if (rows[:, 1] >= 0).any() else 'raw'
    if kind == 'tracked':
        streams = streams_from_rows(rows, subject=subject, source=name)
    else:
        if len(rows) == 0:
            return []
        streams = track_persons(frames_from_rows(rows), eps=eps, min_pts=min_pts, max_gap=max_gap,
                                max_link_dist=max_link_dist, subject=subject, source=name, verbose=verbose)
        if longest_only and len(streams) > 1:
            streams = [max(streams, key=len)]
    if verbose:
        print('ingest: %s -> %d stream(s), %s' % (name, len(streams), [len(s) for s in streams]))
    return streams


def ingest_directory(directory, manifest, format_id='auto', threads=1, verbose=0, **kwds):
    """
    Ingest every file the manifest lists.  Files run concurrently on up to
    threads workers; the merged result is ordered by file name.
    """
    if not isinstance(manifest, dict):
        manifest = read_manifest(manifest)
    names = sorted(manifest)
    missing = [n for n in names if not os.path.exists(os.path.join(directory, n))]
    if missing:
        raise ValueError('%s: manifest lists missing files: %s' % (directory, ', '.join(missing)))
    results = Parallel(n_jobs=threads)(
        delayed(ingest)(os.path.join(directory, n), format_id, manifest[n].subject, verbose=verbose, **kwds)
        for n in names)
    return [s for streams in results for s in streams]


def build_dataset(streams, frames=20, points=16, seed=0, center=False, classes=None, verbose=0):
    """
    Filter frames with fewer than points points, cut windows of frames
    frames and build one GaitSample per window.  Labels index the sorted
    subject names (or classes, when given).  Streams yielding no window are
    reported with a warning.
    """
    if classes is None:
        classes = sorted(set(str(s.subject) for s in streams))
    lookup = dict((c, i) for i, c in enumerate(classes))
    samples, sources, offsets, groups = [], [], [], []
    for si, stream in enumerate(streams):
        subject = str(stream.subject)
        if subject not in lookup:
            raise ValueError('build_dataset: subject %r of %s not among classes %s' % (subject, stream.source, classes))
        kept = filter_sparse_frames(stream, points)
        windows = window_stream(kept, frames)
        if not windows:
            warn('%s track %d: %d usable frames, fewer than one window of %d; dropped'
                 % (stream.source, stream.track_id, len(kept), frames))
            continue
        for wi, window in enumerate(windows):
            samples.append(build_sample(window, points, derive_seed(seed, si, wi), lookup[subject], center=center))
            sources.append(stream.source or '')
            offsets.append(wi * frames)
            groups.append('%s:%d' % (stream.source, stream.track_id))
    if verbose:
        print('build_dataset: %d streams -> %d samples, %d classes' % (len(streams), len(samples), len(classes)))
    if not samples:
        raise ValueError('build_dataset: no stream yields a window of %d frames with >= %d points' % (frames, points))
    return GaitDataset.from_samples(samples, classes, sources, offsets, groups)


def _rows_text(rows):
    lines = [STREAM_HEADER] + ['%d,%d,%.17g,%.17g,%.17g,%.17g' % tuple([int(r[0]), int(r[1])] + [float(x) for x in r[2:]])
                               for r in rows]
    return '\n'.join(lines) + '\n'


class IngestTestCase(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.mkdtemp()

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def write(self, name, text):
        path = os.path.join(self.tmp, name)
        with io.open(path, 'w', encoding='utf-8') as f:
            f.write(text)
        return path

    def testTrackedGroupBy(self):
        rng = np.random.default_rng(0)
        rows = np.column_stack([rng.integers(0, 6, 60), rng.integers(-1, 3, 60), rng.normal(size=(60, 4))])
        rows = rows[np.lexsort((rows[:, 1], rows[:, 0]))]
        path = self.write('s1_x.csv', _rows_text(rows))
        streams = ingest(path, 'stpointgcn')
        for tid in range(3):
            sel = rows[rows[:, 1] == tid]
            stream = [s for s in streams if s.track_id == tid][0]
            got = np.concatenate([f.as_array() for f in stream.frames])
            order = np.argsort(sel[:, 0], kind='stable')
            np.testing.assert_array_equal(got, sel[order][:, 2:])
            self.assertEqual(stream.subject, 's1')
        self.assertNotIn(-1, [s.track_id for s in streams])

    def testRowsTextFromNumpyScalars(self):
        rows = np.array([[0, 1, 0.1, -2.5, np.float64(1) / 3, 0.5]])
        text = _rows_text(rows)
        self.assertNotIn('np.', text)
        np.testing.assert_array_equal(read_point_rows(text.splitlines(True)), rows)

    def testHeaderOnly(self):
        path = self.write('a.csv', STREAM_HEADER + '\n')
        self.assertEqual(ingest(path, 'stpointgcn'), [])
        self.assertEqual(ingest(path, 'mmgait'), [])

    def testBadLine(self):
        path = self.write('a.csv', STREAM_HEADER + '\n0,0,1,2,3,4\n1,0,1,zz,3,4\n')
        self.assertRaisesRegex(ValueError, 'a.csv:3', ingest, path, 'auto')

    def testUnknownFormat(self):
        path = self.write('a.csv', STREAM_HEADER + '\n')
        self.assertRaises(KeyError, ingest, path, 'pcd')

    def testRawTracksLongest(self):
        rng = np.random.default_rng(1)
        rows = []
        for i in range(30):
            for p in rng.uniform(-0.1, 0.1, size=(15, 3)) + [0.02 * i, 3., 1.]:
                rows.append([i, -1] + list(p) + [0.5])
            if i < 4:
                for p in rng.uniform(-0.1, 0.1, size=(15, 3)) + [2., 7., 1.]:
                    rows.append([i, -1] + list(p) + [0.0])
        path = self.write('p2_lab.csv', _rows_text(np.array(rows)))
        streams = ingest(path, 'mmgait', eps=0.5, min_pts=5)
        self.assertEqual(len(streams), 1)
        self.assertEqual(len(streams[0]), 30)
        self.assertEqual(streams[0].subject, 'p2')

    def testManifest(self):
        path = self.write('m.csv', MANIFEST_HEADER + '\na.csv,s1,lab\nb.csv,s2,hall\n')
        m = read_manifest(path)
        self.assertEqual(list(m), ['a.csv', 'b.csv'])
        self.assertEqual(m['b.csv'], ManifestEntry('s2', 'hall'))
        self.write('n.csv', 'name,subject\n')
        self.assertRaises(ValueError, read_manifest, os.path.join(self.tmp, 'n.csv'))

    def testDirectoryOrderedAndDataset(self):
        rng = np.random.default_rng(2)
        entries = OrderedDict()
        for name, subject in [('z.csv', 'bo'), ('a.csv', 'anna')]:
            frames = [RadarFrame.from_array(i, rng.normal(size=(18, 4))) for i in range(45)]
            self.write(name, format_streams([PointStream(frames, track_id=0)]))
            entries[name] = ManifestEntry(subject, 'lab')
        write_manifest(entries, os.path.join(self.tmp, 'manifest.csv'))
        streams = ingest_directory(self.tmp, os.path.join(self.tmp, 'manifest.csv'), 'stpointgcn', threads=2)
        self.assertEqual([s.source for s in streams], ['a.csv', 'z.csv'])
        ds = build_dataset(streams, frames=20, points=16, seed=0)
        self.assertEqual(ds.classes, ['anna', 'bo'])
        self.assertEqual(len(ds), 4)
        self.assertEqual(list(ds.offsets), [0, 20, 0, 20])
        self.assertEqual(ds.cloud.shape, (4, 20, 16, 4))
        again = build_dataset(streams, frames=20, points=16, seed=0)
        np.testing.assert_array_equal(ds.cloud, again.cloud)

if __name__ == '__main__':
    unittest.main()
