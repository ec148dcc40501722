from .corpus import (
    Corpus,
    FeatureStats,
    TimeSeriesInstance,
    compute_feature_stats,
    corpus_from_array,
    normalize,
)
from .manifest import load_corpus, save_corpus, sniff_format
from .splits import (
    ExperimentSplit,
    assert_no_leakage,
    make_ead_split,
    make_iad_split,
    unwindow_series,
    window_instance,
    window_offset,
)
from .synthetic import SyntheticSpec, make_synthetic, make_synthetic_iad

__all__ = [
    "Corpus",
    "FeatureStats",
    "TimeSeriesInstance",
    "compute_feature_stats",
    "corpus_from_array",
    "normalize",
    "load_corpus",
    "save_corpus",
    "sniff_format",
    "ExperimentSplit",
    "assert_no_leakage",
    "make_ead_split",
    "make_iad_split",
    "unwindow_series",
    "window_instance",
    "window_offset",
    "SyntheticSpec",
    "make_synthetic",
    "make_synthetic_iad",
]
