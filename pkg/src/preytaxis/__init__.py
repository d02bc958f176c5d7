"""Spectral Galerkin simulation of a stochastic predator-prey system with prey-taxis."""

from .model import ModelParams
from .spectral import BasisSet, Domain, SpectralState, build_basis
from .noise import NoiseModel, SeedPolicy
from .galerkin import GalerkinSystem, StepConfig, Trajectory, TrajectoryBatch, integrate
from .ensemble import EnsembleConfig, InitialCondition, run_ensemble, stability_experiment
from .checks import Verifier, VerifySettings, run_checks

__version__ = "0.1.0"

__all__ = [
    "BasisSet", "Domain", "EnsembleConfig", "GalerkinSystem", "InitialCondition",
    "ModelParams", "NoiseModel", "SeedPolicy", "SpectralState", "StepConfig",
    "Trajectory", "TrajectoryBatch", "Verifier", "VerifySettings", "build_basis",
    "integrate", "run_checks", "run_ensemble", "stability_experiment",
]
