__all__ = ['RadarPoint', 'RadarFrame', 'PointStream', 'filter_sparse_frames',
           'window_stream', 'read_point_rows', 'streams_from_rows', 'load_stream',
           'save_streams', 'STREAM_HEADER']

import io
import os
import tempfile
import unittest
from collections import namedtuple, OrderedDict

import numpy as np

STREAM_HEADER = 'frame_index,track_id,x,y,z,v'


class RadarPoint(namedtuple('RadarPoint', 'x y z v')):
    """
    One radar return: radar-relative position (m) and Doppler velocity (m/s)
    """
    __slots__ = ()

    def __new__(cls, x, y, z, v):
        vals = (float(x), float(y), float(z), float(v))
        if not np.isfinite(vals).all():
            raise ValueError('RadarPoint fields must be finite: %r' % (vals,))
        return super(RadarPoint, cls).__new__(cls, *vals)


class RadarFrame(object):
    """
    Points reported in one sampling interval, in sensor order
    """
    def __init__(self, index, points):
        if index < 0:
            raise ValueError('frame index must be non-negative, got %d' % index)
        self.index = int(index)
        self.points = [p if isinstance(p, RadarPoint) else RadarPoint(*p) for p in points]

    @classmethod
    def from_array(cls, index, rows):
        return cls(index, [RadarPoint(*r) for r in np.asarray(rows, dtype='d').reshape(-1, 4)])

    def as_array(self):
        """(n, 4) array of x, y, z, v"""
        return np.array(self.points, dtype='d').reshape(-1, 4)

    def __len__(self):
        return len(self.points)

    def __eq__(self, other):
        return isinstance(other, RadarFrame) and self.index == other.index and self.points == other.points

    def __repr__(self):
        return 'RadarFrame(index=%d, points=%d)' % (self.index, len(self.points))


class PointStream(object):
    """
    Time-ordered radar frames of one walker.

    subject - label identifier or None
    track_id - id written to the text format (-1 when unassigned)
    source - originating file name, if any
    """
    def __init__(self, frames, subject=None, track_id=-1, source=None):
        self.frames = list(frames)
        indices = [f.index for f in self.frames]
        if any(b <= a for a, b in zip(indices[:-1], indices[1:])):
            raise ValueError('frame indices must be strictly increasing: %s' % indices)
        self.subject = subject
        self.track_id = int(track_id)
        self.source = source

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __getitem__(self, key):
        if isinstance(key, slice):
            return self.derive(self.frames[key])
        return self.frames[key]

    def derive(self, frames):
        """New stream with other frames and the same metadata"""
        return PointStream(frames, subject=self.subject, track_id=self.track_id, source=self.source)

    def point_counts(self):
        return [len(f) for f in self.frames]

    def __eq__(self, other):
        return (isinstance(other, PointStream) and self.frames == other.frames
                and self.subject == other.subject and self.track_id == other.track_id)

    def __repr__(self):
        return 'PointStream(frames=%d, subject=%r, track_id=%d)' % (len(self.frames), self.subject, self.track_id)


def filter_sparse_frames(stream, min_points):
    """Keep frames with at least min_points points, in order"""
    if min_points < 1:
        raise ValueError('min_points must be >= 1, got %d' % min_points)
    return stream.derive([f for f in stream.frames if len(f) >= min_points])


def window_stream(stream, T):
    """
    Cut a stream into consecutive, non-overlapping windows of T frames.
    A trailing remainder shorter than T is dropped.
    """
    if T < 1:
        raise ValueError('window length must be >= 1, got %d' % T)
    return [stream[s:s + T] for s in range(0, len(stream) - T + 1, T)]


def read_point_rows(lines, name='<stream>'):
    """
    Parse the stream text format.  Returns an (n, 6) array of
    frame_index, track_id, x, y, z, v.  Errors name the 1-based line.
    """
    rows = []
    header = None
    for lineno, line in enumerate(lines, 1):
        line = line.strip()
        if line == '':
            continue
        if header is None:
            header = [h.strip() for h in line.split(',')]
            if header != STREAM_HEADER.split(','):
                raise ValueError('%s:%d: expected header %r, got %r' % (name, lineno, STREAM_HEADER, line))
            continue
        fields = line.split(',')
        if len(fields) != 6:
            raise ValueError('%s:%d: expected 6 fields, got %d' % (name, lineno, len(fields)))
        try:
            frame_index, track_id = int(fields[0]), int(fields[1])
            coords = [float(f) for f in fields[2:]]
        except ValueError:
            raise ValueError('%s:%d: non-numeric field in %r' % (name, lineno, line))
        if not np.isfinite(coords).all():
            raise ValueError('%s:%d: non-finite value in %r' % (name, lineno, line))
        if frame_index < 0 or track_id < -1:
            raise ValueError('%s:%d: invalid frame_index/track_id in %r' % (name, lineno, line))
        rows.append([frame_index, track_id] + coords)
    if header is None:
        raise ValueError('%s: missing header line' % name)
    return np.array(rows, dtype='d').reshape(-1, 6)


def frames_from_rows(rows):
    """Group (n, 6) rows into RadarFrames by frame_index, keeping row order"""
    frames = OrderedDict()
    for r in rows:
        frames.setdefault(int(r[0]), []).append(RadarPoint(*r[2:]))
    return [RadarFrame(i, frames[i]) for i in sorted(frames)]


def streams_from_rows(rows, subject=None, source=None):
    """One PointStream per non-negative track_id, in track order"""
    out = []
    for tid in sorted(set(int(t) for t in rows[:, 1] if t >= 0)):
        sel = rows[rows[:, 1] == tid]
        out.append(PointStream(frames_from_rows(sel), subject=subject, track_id=tid, source=source))
    return out


def load_stream(path):
    """Read a single-track stream file"""
    with io.open(path, 'r', encoding='utf-8') as f:
        rows = read_point_rows(f, name=path)
    tids = set(int(t) for t in rows[:, 1])
    if len(tids) > 1:
        raise ValueError('%s: holds %d tracks; use streams_from_rows' % (path, len(tids)))
    tid = tids.pop() if tids else -1
    return PointStream(frames_from_rows(rows), track_id=tid, source=os.path.basename(path))


def format_streams(streams):
    lines = [STREAM_HEADER]
    for stream in streams:
        for frame in stream.frames:
            for p in frame.points:
                lines.append('%d,%d,%r,%r,%r,%r' % (frame.index, stream.track_id, p.x, p.y, p.z, p.v))
    return '\n'.join(lines) + '\n'


def save_streams(streams, path):
    with io.open(path, 'w', encoding='utf-8') as f:
        f.write(format_streams(streams))


def _stream(counts, start=0):
    rng = np.random.default_rng(len(counts))
    return PointStream([RadarFrame.from_array(start + i, rng.normal(size=(n, 4))) for i, n in enumerate(counts)],
                       subject='s1', track_id=2)


class PointStreamTestCase(unittest.TestCase):
    def testNonFinitePoint(self):
        self.assertRaises(ValueError, RadarPoint, 0., float('nan'), 0., 1.)

    def testIndicesIncreasing(self):
        self.assertRaises(ValueError, PointStream, [RadarFrame(3, []), RadarFrame(3, [])])

    def testFilterSparse(self):
        s = _stream([20, 3, 16])
        self.assertEqual(filter_sparse_frames(s, 16).point_counts(), [20, 16])
        self.assertEqual(filter_sparse_frames(s, 1), s)
        self.assertEqual(len(filter_sparse_frames(s, 50)), 0)

    def testWindowCounts(self):
        s = _stream([1] * 45)
        windows = window_stream(s, 20)
        self.assertEqual(len(windows), 2)
        self.assertEqual([f.index for f in windows[1].frames], list(range(20, 40)))
        self.assertEqual(window_stream(_stream([1] * 20), 20)[0], _stream([1] * 20))
        self.assertEqual(window_stream(_stream([1] * 19), 20), [])

    def testWindowsArePrefixPartition(self):
        s = _stream(list(range(1, 48)))
        windows = window_stream(s, 7)
        joined = [f for w in windows for f in w.frames]
        self.assertEqual(joined, s.frames[:len(joined)])
        self.assertEqual(len(set(f.index for f in joined)), len(joined))

    def testTextRoundTrip(self):
        s = _stream([5, 7, 1], start=4)
        fd, path = tempfile.mkstemp(suffix='.csv')
        os.close(fd)
        try:
            save_streams([s], path)
            back = load_stream(path)
        finally:
            os.remove(path)
        self.assertEqual(back.frames, s.frames)
        self.assertEqual(back.track_id, 2)

    def testHeaderOnly(self):
        rows = read_point_rows([STREAM_HEADER])
        self.assertEqual(rows.shape, (0, 6))
        self.assertEqual(streams_from_rows(rows), [])

    def testBadLineNamed(self):
        lines = [STREAM_HEADER, '0,0,1.0,2.0,3.0,0.5', '1,0,abc,2.0,3.0,0.5']
        try:
            read_point_rows(lines, name='rec.csv')
        except ValueError as e:
            self.assertIn('rec.csv:3', str(e))
        else:
            self.fail('accepted a non-numeric coordinate')

if __name__ == '__main__':
    unittest.main()
