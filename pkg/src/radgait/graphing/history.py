__all__ = ['history_plot']

import os
import shutil
import tempfile
import unittest

import numpy as np
from matplotlib.figure import Figure


def history_plot(history, path=None, title='Training'):
    """
    Loss on the left axis; keep fraction and evaluated accuracy on the
    right.  Epochs without an evaluation are skipped in the accuracy line.
    """
    epoch = history.column('epoch') + 1
    fig = Figure(figsize=(6, 4))
    ax = fig.add_subplot(111)
    ax.plot(epoch, history.column('loss'), color='k', linewidth=2, label='loss')
    ax.set_xlabel('epoch')
    ax.set_ylabel('loss')
    ax.set_title(title)
    right = ax.twinx()
    acc = history.column('accuracy')
    evaluated = np.isfinite(acc)
    right.plot(epoch[evaluated], acc[evaluated], color='b', marker='o', label='accuracy')
    right.plot(epoch, history.column('keep_fraction'), color='r', linestyle='--', label='keep fraction')
    right.set_ylim(0, 1.05)
    lines = ax.get_lines() + right.get_lines()
    ax.legend(lines, [l.get_label() for l in lines], loc='center right')
    if path is not None:
        fig.savefig(path)
    return fig


class HistoryPlotTestCase(unittest.TestCase):
    def testPlot(self):
        from ..analyses.training.core import History
        history = History([(0, 1.5, 1., np.nan), (1, 1.2, 0.8, 0.5), (2, 0.9, 0.6, 0.75)])
        tmp = tempfile.mkdtemp()
        try:
            fig = history_plot(history, os.path.join(tmp, 'history.png'))
            self.assertEqual(len(fig.axes), 2)
            self.assertEqual(len(fig.axes[1].get_lines()[0].get_xdata()), 2)
            self.assertTrue(os.path.exists(os.path.join(tmp, 'history.png')))
        finally:
            shutil.rmtree(tmp)

if __name__ == '__main__':
    unittest.main()
