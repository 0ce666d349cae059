"""Critical beta-splitting tree laboratory.

Exact split/descent laws, dynamic programs for the random-leaf height law
and its moments (discrete and continuous time), every asymptotic expansion
constant, contraction-decay diagnostics, and a reproducible Monte Carlo
engine with CLT checks.
"""

__version__ = "0.1.0"

from .errors import GuardError, NumericsError
from .splitlaw import (
    EULER_GAMMA,
    HarmonicTable,
    LeafStepLaw,
    SplitLaw,
    default_table,
    harmonic,
    leaf_step_cdf,
    leaf_step_prob,
    sample_leaf_step,
    sample_split,
    split_prob,
)
from .exact_engine import (
    HeightPMF,
    cont_mean_table,
    cont_variance_table,
    height_pmf_table,
    mean_table,
    moment_tables,
    moments_from_pmf,
    standardized_cdf_distance,
    variance_table,
    write_moments_csv,
    write_pmf_csv,
)
from .asymptotics import (
    DYADIC_GRID,
    Constants,
    RemainderFit,
    appendix_sum_fits,
    compute_constants,
    expected_log_power,
    mean_expansion,
    mean_remainder_fit,
    mean_sensitivity_fit,
    remainder_check,
    sum_log3_normalized,
    sum_log_r,
    sum_mu_squared,
    variance_expansion,
    variance_remainder_fit,
    variance_sensitivity_fit,
    xi_bound_sums,
    write_fit_csv,
)
from .contraction import (
    CONTRACTION_GRID,
    ContractionDiagnostics,
    DecayCheck,
    decay_check,
    diagnostics,
    ell,
    two_term_variance_model,
    write_diagnostics_csv,
)
from .simulate import (
    DEFAULT_SEED,
    ExperimentConfig,
    LeafPathSample,
    SampledTree,
    SimSummary,
    derive_rng,
    joint_sample,
    joint_values,
    ks_normal,
    newick_export,
    run_experiment,
    sample_leaf_height,
    sample_tree,
    tree_leaf_samples,
)
