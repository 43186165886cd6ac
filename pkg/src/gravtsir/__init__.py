"""Gravity-coupled epidemic simulation with emulator-based calibration.

The package covers the full pipeline: a stochastic metapopulation
transmission model whose cities exchange infection through a gravity
kernel; per-city summary statistics; a factorial simulation design; a
Gaussian-process emulator of the summary-distance surface; slice-sampling
calibration of the gravity parameters with an explicit discrepancy term;
and posterior infection-flux analysis between cities.
"""

from .calibrate import (CalibrationSample, CredibleRegion2D, PosteriorChain,
                        credible_interval, credible_region_2d, log_posterior,
                        posterior_mode, run_mcmc)
from .design import (DesignGrid, SimulationSettings, TrainingSet,
                     build_training_set, make_grid)
from .emulator import DistanceEmulator, GpHyper, fit_emulator
from .errors import ConfigError, NumericalError, SchemaError
from .flux import (FluxSummary, city_flux, degree_histogram, export_network,
                   flux_posterior_summary, movement_matrix)
from .io import (RunConfig, adjust_births_for_vaccination,
                 correct_underreporting, load_config, load_mask, load_panel,
                 read_panel)
from .model import (Demographics, DistanceMatrix, EpidemicPanel,
                    EpidemicState, GravityParams, LocalDynamics,
                    SEASONAL_BETA, gravity_mean, gravity_means,
                    infection_intensity, reparam_from_theta, sample_influx,
                    sample_poisson, seasonal_beta, simulate, step,
                    theta_from_reparam)
from .rng import StreamFamily, spawn_seed
from .summaries import (SummaryVector, max_incidence, summarize_panel,
                        summary_distance, zero_proportion)

__version__ = "1.0.0"

__all__ = [
    "__version__",
    # model
    "SEASONAL_BETA", "GravityParams", "LocalDynamics", "Demographics",
    "DistanceMatrix", "EpidemicState", "EpidemicPanel", "seasonal_beta",
    "gravity_mean", "gravity_means", "sample_influx", "infection_intensity",
    "sample_poisson", "step", "simulate", "theta_from_reparam",
    "reparam_from_theta",
    # rng
    "StreamFamily", "spawn_seed",
    # summaries
    "SummaryVector", "max_incidence", "zero_proportion", "summarize_panel",
    "summary_distance",
    # design
    "DesignGrid", "SimulationSettings", "TrainingSet", "make_grid",
    "build_training_set",
    # emulator
    "GpHyper", "DistanceEmulator", "fit_emulator",
    # calibration
    "CalibrationSample", "PosteriorChain", "log_posterior", "run_mcmc",
    "posterior_mode", "credible_interval", "CredibleRegion2D",
    "credible_region_2d",
    # flux
    "FluxSummary", "movement_matrix", "city_flux", "flux_posterior_summary",
    "export_network", "degree_histogram",
    # io
    "RunConfig", "load_config", "load_panel", "read_panel", "load_mask",
    "correct_underreporting", "adjust_births_for_vaccination",
    # errors
    "SchemaError", "ConfigError", "NumericalError",
]
