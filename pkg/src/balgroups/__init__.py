"""Group-balancing baselines and robust training for linear classifiers.

Worst-group evaluation, subsampling and reweighting samplers, JTT and group
DRO, a synthetic spurious-correlation problem, an Alexander-Govern test and
a small random-search harness.
"""

from .balancing import (
    SamplerKind,
    SamplerSpec,
    draw_batch,
    epoch_batches,
    expected_unique,
    make_sampler,
    reweight_classes,
    reweight_groups,
    subsample_classes,
    subsample_groups,
    uniform,
)
from .data import (
    CsvSchema,
    DataError,
    GroupedDataset,
    GroupStats,
    SyntheticConfig,
    build_grouped_dataset,
    core_only_error,
    group_stats,
    group_stats_from_counts,
    load_csv,
    load_synthetic_config,
    synth_generate,
    write_csv,
)
from .evaluation import GroupMetrics, SelectionCriterion, evaluate, select_best, summarize_seeds, top_k_summary
from .linear import LinearModel, TrainConfig, batch_gradient, init_model, predict_proba, sgd_step
from .methods import (
    GdroState,
    JttConfig,
    TrainedRun,
    gdro_update,
    train_erm,
    train_gdro,
    train_jtt,
    train_method,
)
from .records import RecordStore, RunRecord, load_records
from .search import SearchSpace, random_search, toy_search_space
from .stats import AgResult, alexander_govern, chi_square_sf, significance_flags
from .table import emit_table
from .toy import GridSpec, heatmap, run_toy

__version__ = "0.1.0"
