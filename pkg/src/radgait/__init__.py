__all__ = ['PointStream', 'GaitDataset', 'GaitModel', 'RunConfig', 'ParamStore', 'train', 'evaluate',
           'cross_validate', 'ratio_sweep', 'ablation_study']

from .core.PointStream import PointStream
from .core.Dataset import GaitDataset
from .models.network import GaitModel
from .config import RunConfig
from .autodiff.params import ParamStore
from .analyses.training.core import train
from .analyses.evaluation.core import evaluate, cross_validate
from .analyses.sweep.core import ratio_sweep, ablation_study

if __name__ == '__main__':
    from radgait.main import main
    main()
