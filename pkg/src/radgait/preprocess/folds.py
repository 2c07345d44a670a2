__all__ = ['FoldPlan', 'kfold_split', 'group_kfold_split', 'holdout_split']

import unittest

import numpy as np
from sklearn.model_selection import train_test_split


class FoldPlan(object):
    """
    k and the fold in [0, k) of every sample
    """
    def __init__(self, k, assignment):
        self.k = int(k)
        self.assignment = np.asarray(assignment, dtype=int)

    def __len__(self):
        return len(self.assignment)

    def test_indices(self, fold):
        return np.flatnonzero(self.assignment == fold)

    def train_indices(self, fold):
        return np.flatnonzero(self.assignment != fold)

    def splits(self):
        """(train, test) index arrays, by fold"""
        return [(self.train_indices(f), self.test_indices(f)) for f in range(self.k)]

    def sizes(self):
        return np.bincount(self.assignment, minlength=self.k)


def kfold_split(n_samples, k, seed):
    """Seeded shuffle of the sample ids, then round-robin over folds"""
    if k < 2:
        raise ValueError('kfold_split: k must be >= 2, got %d' % k)
    if n_samples < k:
        raise ValueError('kfold_split: %d samples cannot fill %d folds' % (n_samples, k))
    order = np.random.default_rng(seed).permutation(n_samples)
    assignment = np.empty(n_samples, dtype=int)
    assignment[order] = np.arange(n_samples) % k
    return FoldPlan(k, assignment)


def group_kfold_split(groups, k, seed):
    """
    Like kfold_split but over distinct groups (recordings): all samples of
    a group share a fold.  Fold sizes are balanced in groups, not samples.
    """
    names = sorted(set(groups))
    plan = kfold_split(len(names), k, seed)
    lookup = dict(zip(names, plan.assignment))
    return FoldPlan(k, [lookup[g] for g in groups])


def holdout_split(labels, fraction, seed):
    """
    (train, test) index arrays with about fraction of the samples held out,
    stratified by label when every class has at least two samples
    """
    labels = np.asarray(labels, dtype=int)
    if not 0 < fraction < 1:
        raise ValueError('holdout_split: fraction must lie in (0, 1), got %r' % fraction)
    ids = np.arange(len(labels))
    counts = np.bincount(labels) if len(labels) else np.zeros(0, dtype=int)
    stratify = labels if len(counts) and counts[counts > 0].min() >= 2 else None
    try:
        train, test = train_test_split(ids, test_size=fraction, random_state=seed % (1 << 32), stratify=stratify)
    except ValueError:
        train, test = train_test_split(ids, test_size=fraction, random_state=seed % (1 << 32))
    return np.sort(train), np.sort(test)


class FoldTestCase(unittest.TestCase):
    def testEqualFolds(self):
        self.assertEqual(list(kfold_split(10, 5, 0).sizes()), [2] * 5)

    def testSizesDifferByOne(self):
        for n in range(5, 40):
            sizes = kfold_split(n, 5, n).sizes()
            self.assertLessEqual(sizes.max() - sizes.min(), 1)

    def testDeterministic(self):
        np.testing.assert_array_equal(kfold_split(37, 5, 3).assignment, kfold_split(37, 5, 3).assignment)

    def testPartition(self):
        plan = kfold_split(23, 4, 1)
        tests = [set(plan.test_indices(f)) for f in range(4)]
        self.assertEqual(set().union(*tests), set(range(23)))
        self.assertEqual(sum(len(t) for t in tests), 23)
        for train, test in plan.splits():
            self.assertFalse(set(train) & set(test))

    def testTooFewSamples(self):
        self.assertRaises(ValueError, kfold_split, 3, 5, 0)
        self.assertRaises(ValueError, kfold_split, 10, 1, 0)

    def testGroupsStayTogether(self):
        groups = ['r%d' % (i // 3) for i in range(30)]
        plan = group_kfold_split(groups, 5, 2)
        for g in set(groups):
            self.assertEqual(len(set(plan.assignment[[i for i, x in enumerate(groups) if x == g]])), 1)

    def testHoldout(self):
        labels = np.repeat(np.arange(5), 20)
        train, test = holdout_split(labels, 0.2, 0)
        self.assertEqual(len(test), 20)
        self.assertFalse(set(train) & set(test))
        self.assertEqual(list(np.bincount(labels[test])), [4] * 5)
        np.testing.assert_array_equal(test, holdout_split(labels, 0.2, 0)[1])
        self.assertRaises(ValueError, holdout_split, labels, 1.5, 0)

if __name__ == '__main__':
    unittest.main()
