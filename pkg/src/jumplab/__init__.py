"""Numerical laboratory for thermalization under repeated projective
measurement: small lattice models, exact diagonalization, quantum-jump
trajectories, and the random-matrix predictions they are tested against.
"""

__version__ = "0.1.0"

from .basis import FreeBasis, build_free_basis
from .dynamics import (equilibrium_fluctuations, evolve_expectation, fit_decay,
                       measure_dos_experiment, select_initial_state)
from .models import (HamiltonianPair, Observable, build_blbq_chain,
                     build_observable, build_oscillator_chain,
                     build_spin_half_chain)
from .ou import OuParams, simulate_ou, simulate_shaken_ou
from .rmt import (ChaoticEnsembleSampler, MarkovKernel, RandomHamiltonianEnsemble,
                  chapman_kolmogorov_check, gibbs_entropy, markov_kernel,
                  microcanonical_weights, predicted_entropy_curve,
                  stationary_distribution, system_distribution)
from .spectral import Spectrum, diagonalize, estimate_dos, fit_envelope
from .trajectories import (MeasurementEngine, ensemble_run,
                           run_trajectory)

__all__ = [
    "__version__",
    "FreeBasis", "build_free_basis",
    "HamiltonianPair", "Observable", "build_oscillator_chain",
    "build_blbq_chain", "build_spin_half_chain", "build_observable",
    "Spectrum", "diagonalize", "estimate_dos", "fit_envelope",
    "evolve_expectation", "fit_decay", "select_initial_state",
    "equilibrium_fluctuations", "measure_dos_experiment",
    "MarkovKernel", "markov_kernel", "microcanonical_weights",
    "stationary_distribution", "chapman_kolmogorov_check", "gibbs_entropy",
    "predicted_entropy_curve", "system_distribution", "ChaoticEnsembleSampler",
    "RandomHamiltonianEnsemble",
    "MeasurementEngine", "run_trajectory", "ensemble_run",
    "OuParams", "simulate_ou", "simulate_shaken_ou",
]
