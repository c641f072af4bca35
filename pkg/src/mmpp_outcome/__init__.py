"""Bayesian inference for Markov-modulated Poisson processes with marked
outcomes and an absorbing death state."""

from .dataio import (
    load_config,
    prior_from_config,
    read_dataset,
    read_samples,
    read_truth,
    sampler_from_config,
    structure_from_config,
    truth_params_from_config,
    write_dataset,
    write_run_summary,
    write_samples,
    write_truth,
)
from .diagnostics import (
    TraceSummary,
    autocorrelations,
    ess,
    extract_traces,
    iact,
    relabel,
    summarize,
    write_exports,
)
from .errors import (
    ConfigError,
    DataError,
    InfeasibleDataError,
    InfeasibleEndpointsError,
    NumericalError,
    TruncationError,
)
from .experiments import PRESETS, ExperimentResult, preset_config, run_experiment
from .forward_backward import (
    MODE_CTHMM,
    MODE_MMPP,
    backward_sample,
    forward_filter,
)
from .gibbs import (
    ChainState,
    PosteriorSample,
    SamplerConfig,
    gibbs_sweep,
    init_from_data,
    init_from_prior,
    run_chain,
)
from .linalg import eta_matrices, eta_matrix, expm, expm_batch
from .model import (
    GaussianOutcome,
    GeneratorMatrix,
    ModelParams,
    PoissonOutcome,
    PriorConfig,
    SufficientStats,
    complete_data_loglik,
    extract_sufficient_stats,
    log_linear_coefficients,
)
from .path_sampler import assemble_full_path, sample_conditioned_interval
from .records import LatentPath, SubjectRecord
from .simulate import simulate_ctmc, simulate_dataset, simulate_subject
from .streams import stream

__version__ = "0.1.0"
