"""Certification suite for discrete pairwise MRF inference.

Builds grid-structured Markov random fields, runs exact (junction tree) and
approximate (loopy belief propagation) inference, trains by maximum
likelihood, verifies reliability and complexity bounds against an expert
knowledge database, measures runtime/memory/energy, and renders the result
as a two-segment care label.
"""
__version__ = "0.1.0"

from .mrf import (
    DiscreteMRF,
    GraphStructure,
    MarginalSet,
    SampleSet,
    StateSpaceTooLarge,
    build_grid_mrf,
    empirical_marginals,
    gibbs_sample,
    marginals_bruteforce,
    partition_function_bruteforce,
    unnormalized_log_score,
)
from .inference import (
    CliqueTableTooLarge,
    InferenceReport,
    JunctionTree,
    LBPConfig,
    bethe_log_partition,
    build_junction_tree,
    condition,
    jt_infer,
    lbp_infer,
)
from .training import (
    FitTrace,
    GradientVector,
    gradient_descent_fit,
    negative_avg_log_likelihood,
    nll_gradient,
)
from .checks import (
    CANDIDATE_CLASSES,
    CheckConfig,
    CheckResult,
    ComplexityClass,
    convergence_check,
    distribution_recovery_check,
    fit_complexity_class,
    performance_bound_check,
)
from .profiling import (
    Measurement,
    ModelBasedMeter,
    ProfilingSuite,
    RaplMeter,
    generate_profiling_suite,
    measure_task,
    run_scaling_experiment,
)
from .knowledge import (
    KnowledgeDB,
    MethodConfiguration,
    Rating,
    collect_badges,
    combine_ratings,
    default_knowledge_db,
    load_knowledge_db,
    measurement_badge,
)
from .label import CareLabel, SuiteParams, certify
from .render import render_json, render_svg, render_text
