__all__ = ['core']

from .core import Adam, train
