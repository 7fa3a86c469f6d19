"""Numerical laboratory for canonical systems, de Branges functions and BC-method operators."""
from .builders import (DiracReduction, JacobiSystem, build_H_from_density, build_H_from_dirac,
                       build_H_from_potential, build_H_jacobi, build_jacobi_from_partition, diagonalize_H,
                       eikonal, eikonal_from_reduction, normalize_trace, solve_amplitude_A, transport_amplitude)
from .core import (BoundaryControl, CFLError, GridError, HamiltonianError, HamiltonianField, ResponseMatrix,
                   SpaceGrid, TimeGrid, constant_hamiltonian, hamiltonian_from_function, smooth_pulse,
                   smoothed_delta)
from .frequency import (DeBrangesFunction, debranges_E, debranges_inner, hb_check, kernel_gram,
                        reproducing_kernel, solve_theta_dirichlet, transfer_matrix)

__version__ = "0.1.0"
