"""Compression-based descriptors of temporal structure in feature sequences,
and the regression pipelines that evaluate them."""

from .data import Dataset, FeatureSequence, PairRating, TrackRecord, dedup_split, load_dataset
from .descriptors import DescriptorConfig, DescriptorSet, compute_descriptors
from .distances import cross_prediction_error, distance_table, kld_distance
from .errors import (
    ConvergenceError,
    DatasetError,
    InfeasibleSplitError,
    LeakageError,
    SeqcompError,
    UndefinedStatisticError,
    ValidationError,
)
from .metrics import balanced_accuracy, bootstrap, kendall_tau_b, mae_rmse, merge_four_point, spearman_rho
from .ppm import compression_rate, ppm_codelength
from .regress import fit_linear_enr, fit_multinomial_enr, predict_rating, predict_year, standardise, tune
from .symbolic import downsample, equal_frequency_edges, quantise, symbolise

__version__ = "0.1.0"
