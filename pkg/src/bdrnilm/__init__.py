"""Sequence-to-point energy disaggregation with a bidirectional dilated residual network."""
from .data import (
    APPLIANCE_STATS,
    AlignedPair,
    NormStats,
    RawSeries,
    WindowedDataset,
    align_series,
    denormalize,
    make_windows,
    normalize,
    parse_channel_file,
    parse_labels,
    split_dataset,
)
from .estimator import Seq2PointDisaggregator, Seq2PointRegressor, SlidingWindowTransformer
from .metrics import MetricsReport, build_report, mae, sae
from .network import (
    Network,
    NetworkConfig,
    ReceptiveField,
    build_network,
    param_count,
    receptive_field,
)
from .synth import ApplianceProfile, synth_generate
from .training import History, TrainConfig, disaggregate, predict_midpoints, train
from .weights import load_weights, save_weights

__version__ = "0.1.0"
