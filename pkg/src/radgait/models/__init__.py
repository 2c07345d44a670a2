__all__ = ['backbone', 'sampler', 'aggregator', 'network', 'GaitModel']

from . import backbone
from . import sampler
from . import aggregator
from . import network
from .network import GaitModel
