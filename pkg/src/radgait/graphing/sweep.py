__all__ = ['ratio_curve', 'ablation_bars']

import os
import shutil
import tempfile
import unittest

import numpy as np
from matplotlib import colormaps
from matplotlib.figure import Figure


def ratio_curve(table, path=None, title='Accuracy by keep ratio', cmap='viridis'):
    """
    Mean held-out accuracy against keep ratio, one line per strategy,
    with one-std error bars over seeds.  Saved to path when given.
    """
    strategies = []
    for row in table.rows:
        if row[0] not in strategies:
            strategies.append(row[0])
    colors = colormaps[cmap](np.linspace(0, 0.85, max(len(strategies), 1)))
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot(111)
    for strategy, color in zip(strategies, colors):
        ratios, acc, std = table.curve(strategy)
        ax.errorbar(ratios, acc, yerr=std, label=strategy, color=color, marker='o', capsize=3)
    ax.set_xlabel('keep ratio')
    ax.set_ylabel('accuracy')
    ax.set_ylim(0, 1.05)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(loc='lower right')
    if path is not None:
        fig.savefig(path)
    return fig


def ablation_bars(table, path=None, title='Ablations', cmap='viridis'):
    """Mean held-out accuracy per variant with one-std error bars"""
    summary = table.summary()
    names = [r[0] for r in summary]
    means = np.array([r[1] for r in summary])
    stds = np.array([r[4] for r in summary])
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot(111)
    loc = np.arange(len(names))
    ax.bar(loc, means, 0.8, yerr=stds, capsize=3,
           color=colormaps[cmap](np.linspace(0, 0.85, max(len(names), 1))))
    ax.set_xticks(loc)
    ax.set_xticklabels(names, rotation=30, ha='right')
    ax.set_ylabel('accuracy')
    ax.set_ylim(0, 1.05)
    ax.set_title(title)
    fig.tight_layout()
    if path is not None:
        fig.savefig(path)
    return fig


class SweepPlotTestCase(unittest.TestCase):
    def setUp(self):
        from ..analyses.sweep.core import ResultTable
        self.tmp = tempfile.mkdtemp()
        self.sweep = ResultTable(('strategy', 'ratio', 'seed'), [
            ('dfs', 0.5, 0, 0.8, 0.7, 0.5), ('dfs', 0.5, 1, 0.6, 0.5, 0.5),
            ('random', 0.5, 0, 0.5, 0.4, 0.5), ('random', 1.0, 0, 0.7, 0.6, 1.)])
        self.ablation = ResultTable(('variant', 'seed'), [
            ('full', 0, 0.9, 0.9, 0.5), ('no_flow', 0, 0.8, 0.8, 0.5)])

    def tearDown(self):
        shutil.rmtree(self.tmp)

    def testRatioCurve(self):
        path = os.path.join(self.tmp, 'sweep.png')
        fig = ratio_curve(self.sweep, path)
        self.assertEqual(len(fig.axes[0].get_legend().get_texts()), 2)
        self.assertTrue(os.path.getsize(path) > 0)

    def testAblationBars(self):
        path = os.path.join(self.tmp, 'ablation.png')
        fig = ablation_bars(self.ablation, path)
        self.assertEqual(len(fig.axes[0].patches), 2)
        self.assertTrue(os.path.exists(path))

if __name__ == '__main__':
    unittest.main()
