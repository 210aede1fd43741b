"""Relativistic wave equations as Schrodinger-type systems, with a fibre-bundle layer.

Modules
-------
lattice     periodic grids and finite-difference operators
reduction   companion-form reduction and frame changes
models      Dirac, Klein-Gordon, Maxwell and spin-1 Hamiltonians
evolution   Crank-Nicolson propagators and trajectories
bundle      frames, liftings, evolution transport, transport coefficients
harness     exact per-mode oracles and the invariant suite
cli         command-line entry point
"""

from .bundle import (EvolutionTransport, FrameFamily, Lifting, Path, TransportCoefficients,
                     derivation_along_path, evolution_transport, fibre_inner, lift_operator,
                     lift_state, lower_state, mean_value, transport_coefficients_from_hamiltonian,
                     transport_coefficients_from_transport)
from .evolution import Propagator, Trajectory, propagate, propagator_matrix, schrodinger_residual, step
from .harness import Report, SuiteConfig, convergence_study, fourier_oracle, run_invariant_suite
from .lattice import Grid, LatticeOperator, make_grid
from .models import PhysicalParams, Potentials, build_model
from .reduction import EquationSpec, Hamiltonian, companion_hamiltonian, frame_change

__version__ = "0.1.0"
