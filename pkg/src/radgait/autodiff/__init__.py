__all__ = ['core', 'params', 'check', 'Value', 'ParamStore', 'grad_check']

from . import core
from . import params
from . import check
from .core import Value
from .params import ParamStore
from .check import grad_check
