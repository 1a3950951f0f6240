"""Multiscale discriminant saliency with wavelet hidden Markov trees."""

from .evaluation import FixationSet, MetricReport, auc, evaluate_batch, fixation_density, lcc, nss
from .fusion import LabelField, map_labels
from .hmt import (
    HmtParams,
    LikelihoodTree,
    NodeTree,
    em_train,
    em_train_vector,
    init_params,
    universal_params,
    upward_downward,
)
from .pyramid import WaveletQuadTree, block_upsample, dwt2d, idwt2d, prepare_image, to_grayscale
from .saliency import (
    SaliencyMap,
    SaliencyPyramid,
    compute_saliency,
    discriminant_power,
    integrate_max,
    mdis,
    mdis_pyramid,
)
from .synthetic import pink_noise_image, popout_stimulus

__version__ = "0.1.0"
