__all__ = ['AttrDict', 'derive_seed']

import unittest

import numpy as np


class AttrDict(dict):
    """For easy access to values; nested dicts become AttrDicts"""
    def __init__(self, *args, **kwds):
        dict.__init__(self, *args, **kwds)
        for k, v in self.items():
            if isinstance(v, dict) and not isinstance(v, AttrDict):
                self[k] = AttrDict(v)

    def __setattr__(self, attr, value):
        self[attr] = value

    def __getattr__(self, attr):
        try:
            return self[attr]
        except KeyError:
            raise AttributeError(attr)

    def copy(self):
        return type(self)((k, v.copy() if isinstance(v, dict) else v) for k, v in self.items())


def derive_seed(seed, *keys):
    """Independent 32-bit seed for (seed, *keys); keys are non-negative integers"""
    return int(np.random.SeedSequence([int(seed)] + [int(k) for k in keys]).generate_state(1)[0])


class AttrDictTestCase(unittest.TestCase):
    def setUp(self):
        self.base_dict = {'one': 1, 'two': {'two': 2}}
        self.attr_dict = AttrDict(self.base_dict)

    def testInitFromDict(self):
        for k in self.base_dict:
            self.assertEqual(self.base_dict[k], self.attr_dict[k])

    def testNestedAttribute(self):
        self.assertEqual(self.attr_dict.two.two, 2)
        self.attr_dict.two.three = 3
        self.assertEqual(self.attr_dict['two']['three'], 3)

    def testMissingAttribute(self):
        self.assertRaises(AttributeError, getattr, self.attr_dict, 'three')

    def testCopyIsDeep(self):
        other = self.attr_dict.copy()
        other.two.two = 5
        self.assertEqual(self.attr_dict.two.two, 2)


class SeedTestCase(unittest.TestCase):
    def testDeriveSeed(self):
        self.assertEqual(derive_seed(3, 1, 2), derive_seed(3, 1, 2))
        self.assertNotEqual(derive_seed(3, 1, 2), derive_seed(3, 2, 1))

if __name__ == '__main__':
    unittest.main()
