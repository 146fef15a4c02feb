"""Adaptive random-walk Metropolis, its diffusion limit, and checks on both."""
__version__ = "0.1.0"

from .targets import TargetDensity, DensityError, standard_normal, acceptance_probability
from .amcmc import (ChainState, DiscreteAdaptParams, ScaledChainParams, step_discrete,
                    step_scaled, run_chain, simulate_chain_ensemble)
from .diffusion import (SdeConfig, DiffusionState, SimulationError, drift_general,
                        drift_normal, em_step, simulate_sde, eta_closed_form,
                        theta_closed_form)
from .rng import RandomSource
