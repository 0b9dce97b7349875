"""Synthetic data, the toy oracle, diagnostics, configuration and the CLI."""

from .data import default_tracked, generate_data, noise_sd, truth_image
from .diagnostics import compare, effective_sample_size, mode_switches, summarize
from .toy import ToyPosterior, empirical_distribution, enumerate_posterior, tv_distance

__all__ = [
    "ToyPosterior", "compare", "default_tracked", "effective_sample_size", "empirical_distribution",
    "enumerate_posterior", "generate_data", "mode_switches", "noise_sd", "summarize", "truth_image",
    "tv_distance",
]
