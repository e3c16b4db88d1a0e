"""Bayesian optimisation of expensive black-box functions.

Gaussian-process surrogates (``surrogate``), analytic and Monte Carlo
acquisition functions (``acquisition``), multistart inner optimisers with
constraint and discrete-dimension handling (``optimise``), space-filling
designs and transforms (``design``), synthetic benchmarks (``testfuncs``),
and the ask/tell campaign engine with persistence (``campaign``).
"""

from .acquisition import (
    AcquisitionFunction,
    AcquisitionSpec,
    ei,
    mc_ei,
    mc_ucb,
    ucb,
    with_pending,
)
from .campaign import (
    BenchmarkResult,
    CampaignConfig,
    CampaignState,
    ask,
    benchmark_compare,
    best,
    export_history,
    initialise,
    load_state,
    run_loop,
    run_test_function,
    save_state,
    tell,
)
from .design import DesignConfig, gen_inputs, normalise, standardise, unnormalise
from .optimise import (
    ConstraintRecord,
    InputSpace,
    OptimiserConfig,
    bounded_maximise,
    constrained_maximise,
    multi_joint,
    multi_sequential,
    multistart_candidates,
    optimise_mixed,
    single,
    stochastic_maximise,
)
from .surrogate import (
    Dataset,
    GPHyperparameters,
    GPModel,
    GPPredictor,
    PosteriorDistribution,
    default_model,
    fit,
    kernel_eval,
    log_marginal_likelihood,
    posterior,
)
from .testfuncs import Ackley, Hartmann3D, Hartmann6D, TestFunction

__version__ = "0.1.0"

__all__ = [
    "AcquisitionFunction", "AcquisitionSpec", "ei", "ucb", "mc_ei", "mc_ucb",
    "with_pending", "BenchmarkResult", "CampaignConfig", "CampaignState", "ask",
    "benchmark_compare", "best", "export_history", "initialise", "load_state",
    "run_loop", "run_test_function", "save_state", "tell", "DesignConfig",
    "gen_inputs", "normalise", "standardise", "unnormalise", "ConstraintRecord",
    "InputSpace", "OptimiserConfig", "bounded_maximise", "constrained_maximise",
    "multi_joint", "multi_sequential", "multistart_candidates", "optimise_mixed",
    "single", "stochastic_maximise", "Dataset", "GPHyperparameters", "GPModel",
    "GPPredictor", "PosteriorDistribution", "default_model", "fit", "kernel_eval",
    "log_marginal_likelihood", "posterior", "Ackley", "Hartmann3D", "Hartmann6D",
    "TestFunction",
]
