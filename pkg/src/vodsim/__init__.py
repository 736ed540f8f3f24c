"""Discrete-event simulator for prefix caching with client chaining in a
hierarchical video-on-demand system (main server, tracker ring, proxy rings,
client chains)."""

from vodsim.catalog import (
    PopularityEstimate,
    Video,
    ZipfModel,
    estimate_popularity,
    make_catalog,
    prefix_sizes,
    zipf_pmf,
)
from vodsim.experiment import Scenario, parse_scenario, run_experiment
from vodsim.metrics import MetricsReport
from vodsim.simcore import InvariantViolation, RunConfig, Simulation, run, run_paired

__all__ = [
    "InvariantViolation",
    "MetricsReport",
    "PopularityEstimate",
    "RunConfig",
    "Scenario",
    "Simulation",
    "Video",
    "ZipfModel",
    "estimate_popularity",
    "make_catalog",
    "parse_scenario",
    "prefix_sizes",
    "run",
    "run_experiment",
    "run_paired",
    "zipf_pmf",
]
