__all__ = ['ClusterLabeling', 'dbscan', 'NOISE']

import unittest

import numpy as np
from sklearn.cluster import DBSCAN

NOISE = -1


class ClusterLabeling(object):
    """
    Per-point cluster ids (contiguous from 0) or NOISE
    """
    def __init__(self, labels):
        self.labels = np.asarray(labels, dtype=int)

    @property
    def nclusters(self):
        return int(self.labels.max()) + 1 if len(self.labels) and self.labels.max() >= 0 else 0

    def members(self, cluster):
        return np.flatnonzero(self.labels == cluster)

    def clusters(self):
        """List of member index arrays, by cluster id"""
        return [self.members(c) for c in range(self.nclusters)]

    def noise(self):
        return np.flatnonzero(self.labels == NOISE)

    def __len__(self):
        return len(self.labels)


def dbscan(points, eps, min_pts):
    """
    Density clustering of 3-D positions.

    A point is core when at least min_pts points (itself included) lie
    within eps (inclusive).  Clusters are numbered in scan order of their
    first core point; a border point joins the first cluster that reaches
    it; everything else is NOISE.
    """
    if eps <= 0 or min_pts < 1:
        raise ValueError('dbscan: need eps > 0 and min_pts >= 1, got eps=%r min_pts=%r' % (eps, min_pts))
    xyz = np.asarray(points, dtype='d')
    if xyz.size == 0:
        return ClusterLabeling(np.zeros(0, dtype=int))
    xyz = xyz.reshape(len(xyz), -1)[:, :3]
    labels = DBSCAN(eps=eps, min_samples=min_pts, metric='euclidean').fit(xyz).labels_
    return ClusterLabeling(labels)


def _oracle_partition(xyz, eps, min_pts):
    """Reachability closure over core points, border points to the first reaching cluster"""
    import networkx as nx
    n = len(xyz)
    d = np.sqrt(((xyz[:, None] - xyz[None]) ** 2).sum(-1))
    near = d <= eps
    core = near.sum(1) >= min_pts
    graph = nx.Graph()
    graph.add_nodes_from(np.flatnonzero(core))
    for i in np.flatnonzero(core):
        for j in np.flatnonzero(near[i] & core):
            graph.add_edge(i, j)
    comps = sorted((sorted(c) for c in nx.connected_components(graph)), key=lambda c: c[0])
    labels = np.full(n, NOISE)
    for ci, comp in enumerate(comps):
        labels[comp] = ci
    for i in np.flatnonzero(~core):
        reach = [labels[j] for j in np.flatnonzero(near[i] & core)]
        if reach:
            labels[i] = min(reach)
    return labels


def _same_partition(a, b):
    pairs = set(zip(a, b))
    return len(pairs) == len(set(a)) == len(set(b)) and all((x == NOISE) == (y == NOISE) for x, y in pairs)


class DBSCANTestCase(unittest.TestCase):
    def testTwoBlobs(self):
        rng = np.random.default_rng(0)
        blob = rng.uniform(-0.1, 0.1, size=(10, 3))
        pts = np.concatenate([blob, blob + [5., 0., 0.]])
        lab = dbscan(pts, 0.5, 4)
        self.assertEqual(lab.nclusters, 2)
        self.assertEqual(len(lab.noise()), 0)
        self.assertEqual(sorted(lab.labels[:10]), [0] * 10)

    def testIsolatedPointIsNoise(self):
        pts = np.array([[0., 0, 0], [0.1, 0, 0], [0, 0.1, 0], [0.1, 0.1, 0], [9, 9, 9]])
        lab = dbscan(pts, 0.5, 4)
        self.assertEqual(lab.labels[-1], NOISE)

    def testEmpty(self):
        self.assertEqual(len(dbscan(np.zeros((0, 3)), 0.5, 3)), 0)

    def testMatchesReachabilityOracle(self):
        rng = np.random.default_rng(7)
        for trial in range(20):
            xyz = rng.uniform(0, 3, size=(50, 3))
            lab = dbscan(xyz, 0.6, 4)
            oracle = _oracle_partition(xyz, 0.6, 4)
            self.assertTrue(_same_partition(lab.labels, oracle), 'trial %d' % trial)

    def testCoreNoiseStatusPermutationInvariant(self):
        rng = np.random.default_rng(3)
        xyz = rng.uniform(0, 2, size=(60, 3))
        perm = rng.permutation(60)
        a = dbscan(xyz, 0.4, 5).labels == NOISE
        b = dbscan(xyz[perm], 0.4, 5).labels == NOISE
        np.testing.assert_array_equal(a[perm], b)

if __name__ == '__main__':
    unittest.main()
