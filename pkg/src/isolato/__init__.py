"""Local hidden-variable simulation of the spin-singlet experiment with isolato-mode data rejection."""

from .engine import (
    ChshResult,
    ChshSpec,
    CountsTable,
    DelayedChoiceSpec,
    NoDataError,
    Normalization,
    correlation,
    run_chsh,
    run_delayed_choice,
    run_experiment,
    run_scan,
)
from .model import (
    HiddenPairState,
    InvalidArgumentError,
    ModelParams,
    Settings,
    Variant,
    nonquantized_spin,
    sigma1_density,
    sigma2_density,
    spin_projection,
    wrap,
)
from .sampler import RngStream, TrialOutcome, measure_trial, sample_initial_pair

__version__ = "0.1.0"
