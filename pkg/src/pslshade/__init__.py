"""LSHADE and pre-screening LSHADE with a benchmark harness and scoring pipeline."""

from .benchmark import (
    BIAS_VALUE,
    COMBOS,
    ConfigurationError,
    ObjectiveFunction,
    SearchBounds,
    TransformationSpec,
    apply_transformation,
    make_suite,
    make_transformation,
    random_rotation,
    suite_manifest,
)
from .de_core import (
    ControlParams,
    ExternalArchive,
    GenerationStats,
    Individual,
    LshadeEngine,
    ParameterMemory,
    Population,
    crossover,
    generate_trial_batch,
    lpsr_next_size,
    mutate,
    repair_box,
    sample_CR,
    sample_F,
    select,
    shrink_population,
    weighted_lehmer,
)
from .harness import (
    AlgorithmSpec,
    EvaluationBudget,
    EvaluationError,
    ExperimentConfig,
    ResultStore,
    build_objective,
    cell_seed,
    dump_config,
    load_config,
    parse_algorithm,
    run_cell,
    run_experiment,
)
from .metrics import (
    DiagnosticTrace,
    RunRecord,
    Scoreboard,
    ScoreRow,
    checkpoint_nfe,
    hyper_volume,
    kendall_tau,
    normalized_error,
    r_squared,
    score_pipeline,
    selection_accuracy,
)
from .prescreen import (
    MetaModel,
    PslshadeEngine,
    SampleArchive,
    ScreeningConfig,
    df_mm,
    feature_map,
    feature_matrix,
    lhs_init,
    screen,
)

__version__ = "0.1.0"
