__all__ = ['FlowPoint', 'FlowFrame', 'GaitSample', 'nearest_indices', 'point_flow_arrays',
           'compute_point_flow', 'furthest_point_indices', 'furthest_point_sample',
           'build_sample']

import unittest
from collections import namedtuple

import numpy as np

from .PointStream import RadarFrame, PointStream


class FlowPoint(namedtuple('FlowPoint', 'x y z a')):
    """
    Point flow record: source coordinates (m) and the Doppler change (m/s)
    to the nearest point of the next frame
    """
    __slots__ = ()


class FlowFrame(object):
    def __init__(self, index, flows):
        self.index = index
        self.flows = list(flows)

    def as_array(self):
        return np.array(self.flows, dtype='d').reshape(-1, 4)

    def __len__(self):
        return len(self.flows)

    def __repr__(self):
        return 'FlowFrame(index=%d, flows=%d)' % (self.index, len(self.flows))


class GaitSample(object):
    """
    Model input: cloud (T, N, 4) x,y,z,v; flow (T, N, 4) x,y,z,a; label
    """
    def __init__(self, cloud, flow, label):
        cloud = np.asarray(cloud, dtype='d')
        flow = np.asarray(flow, dtype='d')
        if cloud.ndim != 3 or cloud.shape[-1] != 4 or cloud.shape != flow.shape:
            raise ValueError('GaitSample: cloud %s and flow %s must both be (T, N, 4)' % (cloud.shape, flow.shape))
        self.cloud = cloud
        self.flow = flow
        self.label = int(label)

    @property
    def shape(self):
        return self.cloud.shape[:2]


def _sqdist(a, b):
    diff = a[:, None, :3] - b[None, :, :3]
    return (diff * diff).sum(-1)


def nearest_indices(src, dst):
    """
    For each row of src (n, >=3), the index of the spatially nearest row of
    dst (m, >=3); the lowest index wins ties.
    """
    return np.argmin(_sqdist(np.asarray(src, dtype='d'), np.asarray(dst, dtype='d')), axis=1)


def point_flow_arrays(frames):
    """
    frames - sequence of (n_i, 4) arrays x,y,z,v
    Returns a list of (n_i, 4) arrays x,y,z,a.  The last frame has a = 0.
    """
    out = []
    for i, cur in enumerate(frames):
        flow = cur.copy()
        if i + 1 < len(frames):
            nxt = frames[i + 1]
            k = nearest_indices(cur, nxt)
            flow[:, 3] = nxt[k, 3] - cur[:, 3]
        else:
            flow[:, 3] = 0.
        out.append(flow)
    return out


def compute_point_flow(stream):
    """
    Point flow of every frame of stream: for each point, the Doppler
    velocity of its spatially nearest neighbour in the next frame minus its
    own.  The final frame has no successor and gets a = 0.
    """
    if len(stream) == 0:
        raise ValueError('compute_point_flow: stream has no frames')
    for f in stream.frames:
        if len(f) == 0:
            raise ValueError('compute_point_flow: frame %d is empty' % f.index)
    flows = point_flow_arrays([f.as_array() for f in stream.frames])
    return [FlowFrame(f.index, [FlowPoint(*r) for r in fl]) for f, fl in zip(stream.frames, flows)]


def furthest_point_indices(xyz, N, seed, first=None):
    """
    Max-min selection of N rows of xyz.  The first row is drawn from a
    generator seeded with seed unless first is given; later rows maximize
    the squared distance to the selected set (lowest index on ties).
    """
    n = len(xyz)
    if not 1 <= N <= n:
        raise ValueError('furthest_point_sample: need 1 <= N <= %d points, got N=%d' % (n, N))
    if first is None:
        first = int(np.random.default_rng(seed).integers(n))
    xyz = np.asarray(xyz, dtype='d')[:, :3]
    chosen = [first]
    mindist = _sqdist(xyz, xyz[[first]])[:, 0]
    mindist[first] = -1.
    for _ in range(N - 1):
        nxt = int(np.argmax(mindist))
        chosen.append(nxt)
        mindist = np.minimum(mindist, _sqdist(xyz, xyz[[nxt]])[:, 0])
        mindist[chosen] = -1.
    return np.array(chosen)


def furthest_point_sample(frame, N, seed, first=None):
    """Return a RadarFrame with N furthest-point-sampled points in selection order"""
    if len(frame) < N:
        raise ValueError('furthest_point_sample: frame %d has %d points, fewer than N=%d' % (frame.index, len(frame), N))
    idx = furthest_point_indices(frame.as_array(), N, seed, first=first)
    return RadarFrame(frame.index, [frame.points[i] for i in idx])


def build_sample(window, N, seed, label, center=False):
    """
    Sample N points per frame with furthest point sampling, compute point
    flow on the sampled window and pack both into a GaitSample.  With
    center, the window's mean position is subtracted from x, y, z.
    """
    sampled = [furthest_point_sample(f, N, seed) for f in window.frames]
    cloud = np.stack([f.as_array() for f in sampled])
    flow = np.stack(point_flow_arrays(list(cloud)))
    if center:
        mean = cloud[..., :3].reshape(-1, 3).mean(0)
        cloud[..., :3] -= mean
        flow[..., :3] -= mean
    return GaitSample(cloud, flow, label)


def _brute_flow(cur, nxt):
    out = []
    for p in cur:
        best, bestd = 0, None
        for k, q in enumerate(nxt):
            dx, dy, dz = p[0] - q[0], p[1] - q[1], p[2] - q[2]
            d = dx * dx + dy * dy + dz * dz
            if bestd is None or d < bestd:
                best, bestd = k, d
        out.append((best, nxt[best][3] - p[3]))
    return out


class PointFlowTestCase(unittest.TestCase):
    def testIdenticalFramesZeroFlow(self):
        rows = np.random.default_rng(0).normal(size=(6, 4))
        s = PointStream([RadarFrame.from_array(0, rows), RadarFrame.from_array(1, rows)])
        for ff in compute_point_flow(s):
            np.testing.assert_array_equal(ff.as_array()[:, 3], 0.)
            np.testing.assert_array_equal(ff.as_array()[:, :3], rows[:, :3])

    def testNearestPointDelta(self):
        s = PointStream([RadarFrame(0, [(0, 0, 0, 1.0)]),
                         RadarFrame(1, [(0.1, 0, 0, 1.5), (5, 5, 5, 9.0)])])
        flow = compute_point_flow(s)
        self.assertEqual(flow[0].flows, [FlowPoint(0., 0., 0., 0.5)])
        self.assertEqual([f.a for f in flow[1].flows], [0., 0.])

    def testSingleFrame(self):
        s = PointStream([RadarFrame(0, [(1, 2, 3, 4), (2, 3, 4, 5)])])
        flow = compute_point_flow(s)
        self.assertEqual(len(flow), 1)
        self.assertEqual([f.a for f in flow[0].flows], [0., 0.])

    def testEmptyFrameRejected(self):
        s = PointStream([RadarFrame(0, [(1, 2, 3, 4)]), RadarFrame(5, [])])
        self.assertRaisesRegex(ValueError, 'frame 5', compute_point_flow, s)

    def testBruteForceOracle(self):
        rng = np.random.default_rng(42)
        for trial in range(1000):
            n, m = rng.integers(1, 65, size=2)
            cur = rng.normal(size=(n, 4))
            nxt = rng.normal(size=(m, 4))
            flow = point_flow_arrays([cur, nxt])[0]
            k = nearest_indices(cur, nxt)
            oracle = _brute_flow(cur, nxt)
            self.assertEqual(list(k), [o[0] for o in oracle])
            self.assertEqual(list(flow[:, 3]), [o[1] for o in oracle])

    def testArgminProperty(self):
        rng = np.random.default_rng(5)
        cur, nxt = rng.normal(size=(30, 4)), rng.normal(size=(25, 4))
        k = nearest_indices(cur, nxt)
        d = np.sqrt(_sqdist(cur, nxt))
        for i, ki in enumerate(k):
            self.assertTrue((d[i] >= d[i, ki]).all())

    def testFurthestPointCollinear(self):
        frame = RadarFrame(0, [(x, 0, 0, 0) for x in range(10)])
        picked = furthest_point_sample(frame, 2, seed=0, first=0)
        self.assertEqual([p.x for p in picked.points], [0., 9.])

    def testFurthestPointFullAndSingle(self):
        rng = np.random.default_rng(1)
        frame = RadarFrame.from_array(0, rng.normal(size=(12, 4)))
        full = furthest_point_sample(frame, 12, seed=3)
        self.assertEqual(set(full.points), set(frame.points))
        one = furthest_point_sample(frame, 1, seed=3)
        first = int(np.random.default_rng(3).integers(12))
        self.assertEqual(one.points, [frame.points[first]])
        self.assertRaises(ValueError, furthest_point_sample, frame, 13, 3)

    def testFurthestPointMaxMin(self):
        rng = np.random.default_rng(9)
        xyz = rng.normal(size=(40, 4))
        idx = furthest_point_indices(xyz, 15, seed=2)
        d = np.sqrt(_sqdist(xyz, xyz))
        for k in range(1, len(idx)):
            chosen = idx[:k]
            rest = [j for j in range(40) if j not in idx[:k + 1]]
            best = d[idx[k], chosen].min()
            for j in rest:
                self.assertGreaterEqual(best, d[j, chosen].min())

    def testFurthestPointDeterministic(self):
        rng = np.random.default_rng(4)
        frame = RadarFrame.from_array(2, rng.normal(size=(30, 4)))
        self.assertEqual(furthest_point_sample(frame, 9, 7).points, furthest_point_sample(frame, 9, 7).points)

    def testPermutationKeepsSampledSet(self):
        rng = np.random.default_rng(8)
        rows = rng.normal(size=(25, 4))
        perm = rng.permutation(25)
        a = furthest_point_sample(RadarFrame.from_array(0, rows), 10, 0, first=4)
        inv = int(np.flatnonzero(perm == 4)[0])
        b = furthest_point_sample(RadarFrame.from_array(0, rows[perm]), 10, 0, first=inv)
        self.assertEqual(set(a.points), set(b.points))

    def testBuildSampleShapes(self):
        rng = np.random.default_rng(3)
        frames = [RadarFrame.from_array(i, rng.normal(size=(rng.integers(16, 30), 4))) for i in range(20)]
        sample = build_sample(PointStream(frames), 16, 0, label=2)
        self.assertEqual(sample.cloud.shape, (20, 16, 4))
        self.assertEqual(sample.flow.shape, (20, 16, 4))
        self.assertEqual(sample.label, 2)
        np.testing.assert_array_equal(sample.cloud[..., :3], sample.flow[..., :3])

    def testBuildSampleIdenticalFrames(self):
        rows = np.random.default_rng(6).normal(size=(20, 4))
        window = PointStream([RadarFrame.from_array(i, rows) for i in range(5)])
        sample = build_sample(window, 8, 1, label=0)
        for t in range(1, 5):
            np.testing.assert_array_equal(sample.cloud[t], sample.cloud[0])
        np.testing.assert_array_equal(sample.flow[..., 3], 0.)

if __name__ == '__main__':
    unittest.main()
