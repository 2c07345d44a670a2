__all__ = ['clustering', 'tracking', 'folds', 'ingest']

from . import clustering
from . import tracking
from . import folds
from . import ingest
