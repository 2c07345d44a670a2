__all__ = ['sweep', 'history']

from . import sweep
from . import history
