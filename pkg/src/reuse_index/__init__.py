"""Learned indexes that reuse models pre-trained on synthetic key distributions."""

from .distribution import (DomainSpan, Histogram, build_histogram, empirical_cdf_at,
                           histogram_distance, ks_distance, normalize)
from .errors import (CorrectnessError, DomainError, PoolFormatError, PoolTruncatedError,
                     PoolVersionError, ReuseIndexError, SosdCountMismatchError, SosdError,
                     SosdTruncatedError, SosdUnsortedError, TrainingError)
from .index import BinarySearchIndex, RmiIndex, RmrtIndex, build_rmi, build_rmrt
from .models import (AdaptedModel, AffineMap, ErrorBounds, LinearModel, TinyNet,
                     adapt_error_bounds, compute_error_bounds, fit_linear, fit_tinynet,
                     fold_affine, make_maps)
from .pool import (ModelPool, agile_model_reuse, enumerate_histograms, load_pool,
                   pretrain_pool, save_pool, synthesize_dataset)

__version__ = "0.1.0"
