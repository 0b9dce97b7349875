"""MCMC kernels, tuning, traces and budgeted runs."""

from .kernels import (RwmProposal, SwapOutcome, amsda_step, da_sweep, initial_bias, metropolis_coupled_step,
                      msda_step, rwm_step, single_site_sweep)
from .runner import (KERNELS, AMSDADriver, CoupledDriver, DADriver, Driver, MSDADriver, RunSettings, RwmDriver,
                     SingleSiteDriver, chain_rngs, run)
from .state import ChainState, ConfigurationError, CostWeights, Counters, Tally, accept
from .trace import Trace, TraceFormatError
from .tuning import ScaleTuner, tune_scale

__all__ = [
    "AMSDADriver", "ChainState", "ConfigurationError", "CostWeights", "CoupledDriver", "Counters", "DADriver",
    "Driver", "KERNELS", "MSDADriver", "RunSettings", "RwmDriver", "RwmProposal", "ScaleTuner",
    "SingleSiteDriver", "SwapOutcome", "Tally", "Trace", "TraceFormatError", "accept", "amsda_step",
    "chain_rngs", "da_sweep", "initial_bias", "metropolis_coupled_step", "msda_step", "run", "rwm_step",
    "single_site_sweep", "tune_scale",
]
