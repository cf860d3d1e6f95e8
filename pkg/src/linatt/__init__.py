"""Factorized-softmax linear attention, baselines, and the experiments that
check its claims: sketching lemmas, low-rank structure of the attention map,
evaluation-order equivalence, gradient correctness, and complexity slopes.
"""

from .linalg import (
    NumericalError,
    ShapeError,
    as_matrix,
    exp_elementwise,
    frobenius_norm,
    l2_norm,
    matmul,
    read_matrix_csv,
    scale,
    singular_values,
    softmax_columns,
    softmax_rows,
    transpose,
    write_matrix_csv,
)
from .rng import RngStream, gaussian_matrix
from .projections import (
    ProjectionPair,
    delta_schedule,
    jl_dimension,
    jl_dimension_rank,
    load_projection_pair,
    make_projection_pair,
    save_projection_pair,
)
from .attention import (
    AttentionInput,
    AttentionParams,
    FactorizationTrace,
    Gradients,
    approx_context_map,
    context_map,
    factorized_attention,
    factorized_attention_backward,
    linformer_attention,
    scaled_linear_attention,
    vanilla_attention,
)
from .analysis import (
    GradCheckReport,
    LemmaVerdict,
    SpectrumReport,
    approx_error_experiment,
    factorized_error_experiment,
    gradcheck,
    k_independence_experiment,
    spectrum_report,
    verify_lemma1,
    verify_lemma2,
)
from .bench import (
    VARIANTS,
    AllocTracker,
    BenchRecord,
    SlopeFit,
    fit_slope,
    time_variant,
)

__version__ = "0.1.0"
