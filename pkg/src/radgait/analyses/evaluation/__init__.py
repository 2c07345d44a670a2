__all__ = ['core']

from .core import MetricReport, evaluate, cross_validate
