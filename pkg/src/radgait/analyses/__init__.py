__all__ = ['training', 'evaluation', 'sweep']

from . import training
from . import evaluation
from . import sweep
