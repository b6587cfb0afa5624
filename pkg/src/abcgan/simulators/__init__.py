"""Benchmark simulators behind a common black-box interface."""
from .base import (SimulatorError, SimulatorSpec, derive_seed, dump_csv,
                   dump_matrices_csv, rng_from)
from .dcc import N_ATTENDEES, N_CENTERS, N_STRAINS, sim_dcc
from .features import dcc_features_gutmann, dcc_features_numminen
from .glm import SingularDesign, glm_base_matrix, glm_design_matrix, sim_glm
from .normal import mixture_pdf, sim_mixture_normal, sim_mvn, sim_univariate_normal
from .ricker import ricker_latent, sim_ricker

sim_mvn16 = sim_mvn

__all__ = [
    "SimulatorError", "SimulatorSpec", "derive_seed", "dump_csv", "dump_matrices_csv",
    "rng_from", "N_ATTENDEES", "N_CENTERS", "N_STRAINS", "sim_dcc",
    "dcc_features_gutmann", "dcc_features_numminen", "SingularDesign",
    "glm_base_matrix", "glm_design_matrix", "sim_glm", "mixture_pdf",
    "sim_mixture_normal", "sim_mvn", "sim_mvn16", "sim_univariate_normal",
    "ricker_latent", "sim_ricker",
]
