__all__ = ['MODULES', 'suite', 'run']

import unittest

MODULES = ['radgait.utils', 'radgait.config',
           'radgait.autodiff.core', 'radgait.autodiff.params', 'radgait.autodiff.check',
           'radgait.core.PointStream', 'radgait.core.PointFlow', 'radgait.core.Dataset',
           'radgait.preprocess.clustering', 'radgait.preprocess.tracking', 'radgait.preprocess.folds',
           'radgait.preprocess.ingest',
           'radgait.models.backbone', 'radgait.models.sampler', 'radgait.models.aggregator',
           'radgait.models.network',
           'radgait.analyses.training.core', 'radgait.analyses.evaluation.core', 'radgait.analyses.sweep.core',
           'radgait.synth', 'radgait.graphing.sweep', 'radgait.graphing.history', 'radgait.main']


def suite():
    return unittest.defaultTestLoader.loadTestsFromNames(MODULES)


def load_tests(loader, tests, pattern):
    return loader.loadTestsFromNames(MODULES)


def run(verbosity=1):
    return unittest.TextTestRunner(verbosity=verbosity).run(suite())

if __name__ == '__main__':
    import sys
    sys.exit(not run(2).wasSuccessful())
