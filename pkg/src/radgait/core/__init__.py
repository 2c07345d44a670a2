__all__ = ['PointStream', 'PointFlow', 'Dataset']

from . import PointStream
from . import PointFlow
from . import Dataset
