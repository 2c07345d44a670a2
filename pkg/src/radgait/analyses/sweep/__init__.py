__all__ = ['core']

from .core import ratio_sweep, ablation_study
