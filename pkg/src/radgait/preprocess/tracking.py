__all__ = ['hungarian_assign', 'Track', 'track_persons']

import itertools
import unittest

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.spatial.distance import cdist

from ..core.PointStream import RadarFrame, PointStream
from .clustering import dbscan


def hungarian_assign(cost):
    """
    Minimum-total-cost assignment of an m x n cost matrix.
    Returns min(m, n) (row, col) pairs ordered by row.
    """
    cost = np.asarray(cost, dtype='d')
    if cost.ndim != 2:
        raise ValueError('hungarian_assign: cost must be a matrix, got shape %s' % (cost.shape,))
    if cost.size == 0:
        return []
    if not np.isfinite(cost).all():
        raise ValueError('hungarian_assign: cost matrix has non-finite entries')
    rows, cols = linear_sum_assignment(cost)
    return [(int(r), int(c)) for r, c in zip(rows, cols)]


def assignment_cost(cost, pairs):
    return float(sum(cost[r][c] for r, c in pairs))


class Track(object):
    """
    A walker followed across frames.

    frames - frame indices the track was seen in (strictly increasing)
    centroids - cluster centroid (x, y, z) per seen frame
    members - point indices into the source frame per seen frame
    gap - frames since the track was last seen
    """
    def __init__(self, track_id, frame, centroid, members):
        self.track_id = track_id
        self.frames = [frame.index]
        self.centroids = [centroid]
        self.members = [members]
        self.points = [[frame.points[i] for i in members]]
        self.gap = 0

    @property
    def last_index(self):
        return self.frames[-1]

    @property
    def centroid(self):
        return self.centroids[-1]

    def extend(self, frame, centroid, members):
        if frame.index <= self.last_index:
            raise ValueError('track %d: frame %d is not after %d' % (self.track_id, frame.index, self.last_index))
        self.frames.append(frame.index)
        self.centroids.append(centroid)
        self.members.append(members)
        self.points.append([frame.points[i] for i in members])
        self.gap = 0

    def __len__(self):
        return len(self.frames)

    def to_stream(self, subject=None, source=None):
        return PointStream([RadarFrame(i, pts) for i, pts in zip(self.frames, self.points)],
                           subject=subject, track_id=self.track_id, source=source)


def _frame_clusters(frame, eps, min_pts):
    if len(frame) == 0:
        return [], np.zeros((0, 3))
    xyz = frame.as_array()[:, :3]
    members = dbscan(xyz, eps, min_pts).clusters()
    centroids = np.array([xyz[m].mean(0) for m in members]).reshape(-1, 3)
    return members, centroids


def track_persons(frames, eps=0.5, min_pts=10, max_gap=5, max_link_dist=1.0, subject=None, source=None, verbose=0):
    """
    Cluster every frame with dbscan and link the clusters into tracks by
    optimal assignment on centroid distance.

    A link longer than max_link_dist is refused and the cluster starts a
    new track.  A track not seen for more than max_gap frames is closed.
    Returns one PointStream per track, ordered by track id.
    """
    if eps <= 0 or min_pts < 1 or max_gap < 0 or max_link_dist <= 0:
        raise ValueError('track_persons: invalid parameters eps=%r min_pts=%r max_gap=%r max_link_dist=%r'
                         % (eps, min_pts, max_gap, max_link_dist))
    active, closed = [], []
    next_id = 0
    for frame in frames:
        still = []
        for track in active:
            track.gap = frame.index - track.last_index - 1
            (closed if track.gap > max_gap else still).append(track)
        active = still

        members, centroids = _frame_clusters(frame, eps, min_pts)
        linked = set()
        if active and len(members):
            cost = cdist(np.array([t.centroid for t in active]), centroids)
            for r, c in hungarian_assign(cost):
                if cost[r, c] <= max_link_dist:
                    active[r].extend(frame, centroids[c], members[c])
                    linked.add(c)
        for c in range(len(members)):
            if c not in linked:
                active.append(Track(next_id, frame, centroids[c], members[c]))
                next_id += 1
        if verbose > 1:
            print('track_persons: frame %d, %d clusters, %d active tracks' % (frame.index, len(members), len(active)))
    closed.extend(active)
    closed.sort(key=lambda t: t.track_id)
    return [t.to_stream(subject=subject, source=source) for t in closed]


def _walker(center, n, rng, spread=0.1):
    return center + rng.uniform(-spread, spread, size=(n, 4)) * [1, 1, 1, 0]


class HungarianTestCase(unittest.TestCase):
    def testZeroDiagonal(self):
        cost = np.ones((3, 3)) - np.eye(3)
        pairs = hungarian_assign(cost)
        self.assertEqual(pairs, [(0, 0), (1, 1), (2, 2)])
        self.assertEqual(assignment_cost(cost, pairs), 0.)

    def testSquareMatchesPermutationSearch(self):
        rng = np.random.default_rng(0)
        for trial in range(250):
            cost = rng.uniform(0, 10, size=(5, 5))
            best = min(sum(cost[i, p[i]] for i in range(5)) for p in itertools.permutations(range(5)))
            self.assertAlmostEqual(assignment_cost(cost, hungarian_assign(cost)), best, places=12)

    def testRectangularMatchesInjectionSearch(self):
        rng = np.random.default_rng(1)
        for trial in range(250):
            m, n = rng.integers(1, 7, size=2)
            cost = rng.normal(size=(m, n))
            if m <= n:
                best = min(sum(cost[i, p[i]] for i in range(m)) for p in itertools.permutations(range(n), int(m)))
            else:
                best = min(sum(cost[p[j], j] for j in range(n)) for p in itertools.permutations(range(m), int(n)))
            pairs = hungarian_assign(cost)
            self.assertEqual(len(pairs), min(m, n))
            self.assertAlmostEqual(assignment_cost(cost, pairs), best, places=12)

    def testTwoByThree(self):
        cost = np.array([[4., 1., 3.], [2., 0., 5.]])
        pairs = hungarian_assign(cost)
        self.assertEqual(len(pairs), 2)
        self.assertEqual(assignment_cost(cost, pairs), 3.)

    def testNonFiniteRejected(self):
        self.assertRaises(ValueError, hungarian_assign, [[0., np.nan], [1., 2.]])


class TrackPersonsTestCase(unittest.TestCase):
    def testSingleWalker(self):
        rng = np.random.default_rng(0)
        frames = [RadarFrame.from_array(i, _walker([0.05 * i, 3., 1., 0.5], 20, rng)) for i in range(30)]
        streams = track_persons(frames, eps=0.5, min_pts=5)
        self.assertEqual(len(streams), 1)
        self.assertEqual([f.index for f in streams[0].frames], list(range(30)))
        self.assertEqual(streams[0].point_counts(), [20] * 30)

    def testTwoParallelWalkers(self):
        rng = np.random.default_rng(1)
        frames = []
        for i in range(25):
            a = _walker([0.1 * i, 2., 1., 1.], 15, rng)
            b = _walker([0.1 * i, 6., 1., -1.], 15, rng)
            rows = np.concatenate([a, b])
            frames.append(RadarFrame.from_array(i, rows[rng.permutation(30)]))
        streams = track_persons(frames, eps=0.5, min_pts=5)
        self.assertEqual(len(streams), 2)
        for s in streams:
            self.assertEqual(len(s), 25)
            ys = np.concatenate([f.as_array()[:, 1] for f in s.frames])
            self.assertLess(ys.max() - ys.min(), 1.)

    def testPointsBelongToOneTrack(self):
        rng = np.random.default_rng(2)
        frames = [RadarFrame.from_array(i, np.concatenate([_walker([0, 2., 1., 0], 12, rng),
                                                            _walker([0, 5., 1., 0], 12, rng)]))
                  for i in range(10)]
        streams = track_persons(frames, eps=0.5, min_pts=4)
        for i in range(10):
            seen = [p for s in streams for f in s.frames if f.index == i for p in f.points]
            self.assertEqual(len(seen), len(set(seen)))

    def testGapSplitsTrack(self):
        rng = np.random.default_rng(3)
        max_gap = 5
        present = [i for i in range(30) if not 10 <= i < 10 + max_gap + 1]
        frames = [RadarFrame.from_array(i, _walker([0, 3., 1., 0], 12, rng) if i in present else np.zeros((0, 4)))
                  for i in range(30)]
        streams = track_persons(frames, eps=0.5, min_pts=4, max_gap=max_gap)
        self.assertEqual(len(streams), 2)
        self.assertEqual(streams[0].frames[-1].index, 9)
        self.assertEqual(streams[1].frames[0].index, 10 + max_gap + 1)

    def testShortGapKeepsTrack(self):
        rng = np.random.default_rng(4)
        frames = [RadarFrame.from_array(i, _walker([0, 3., 1., 0], 12, rng)) for i in range(30) if not 10 <= i < 15]
        self.assertEqual(len(track_persons(frames, eps=0.5, min_pts=4, max_gap=5)), 1)

    def testLongJumpRefused(self):
        rng = np.random.default_rng(5)
        frames = [RadarFrame.from_array(i, _walker([0 if i < 5 else 4., 3., 1., 0], 12, rng)) for i in range(10)]
        self.assertEqual(len(track_persons(frames, eps=0.5, min_pts=4, max_link_dist=1.0)), 2)

    def testEmpty(self):
        self.assertEqual(track_persons([]), [])

if __name__ == '__main__':
    unittest.main()
