"""Gated neural function approximation toolkit.

Tiny MLP approximators mimic expensive target functions, classifiers gate
which inputs are safe to hand to them, and an analytic cost model turns
routing statistics into modeled speedup and energy numbers.
"""

__version__ = "0.1.0"

from .benchmarks import (
    Benchmark,
    Dataset,
    bessel_jn,
    customize,
    evaluate_exact,
    generate_dataset,
    get_benchmark,
    list_benchmarks,
    load_dataset,
    save_dataset,
)
from .mlp import (
    Mlp,
    Topology,
    TrainConfig,
    TrainingDiverged,
    forward,
    forward_batch,
    init_mlp,
    load_mlp,
    predict_class,
    save_mlp,
    train,
)
from .pipelines import (
    PIPELINE_NAMES,
    PipelineConfig,
    TrainedSystem,
    derive_seed,
    load_system,
    save_system,
    train_iterative,
    train_mcca,
    train_mcma,
    train_one_pass,
    train_pipeline,
)
from .quality import (
    EvalReport,
    SampleVerdict,
    aggregate_report,
    confusion_of,
    is_safe,
    label_competitive,
    label_complementary,
    sample_error,
)
from .runtime import (
    CostModelParams,
    count_reloads,
    dispatch,
    evaluate,
    model_cost,
)
