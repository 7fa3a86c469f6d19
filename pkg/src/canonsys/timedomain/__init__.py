"""Forward solvers, field transformations, residuals and response operators."""
from .equivalence import (PairResult, convergence, dirac_pair, relative_l2, rotation_pair,
                          wave_density_pair, wave_potential_pair)
from .residual import ResidualReport, canonical_residual, convergence_slopes
from .response import ResponseDiscrepancy, compare_responses, response_matrix
from .solvers import (EvolutionResult, solve_canonical_i, solve_dirac, solve_dirac_type,
                      solve_jacobi_continuous, solve_jacobi_discrete, solve_wave_density,
                      solve_wave_potential)
from .transforms import (JacobiFields, canonical_boundary_trace, canonical_fields_from_wave,
                         jacobi_fields_from_v, jacobi_response_derived, jacobi_response_stated)

__all__ = [
    "EvolutionResult", "ResidualReport", "ResponseDiscrepancy", "PairResult", "JacobiFields",
    "solve_wave_potential", "solve_wave_density", "solve_dirac", "solve_dirac_type",
    "solve_canonical_i", "solve_jacobi_continuous", "solve_jacobi_discrete",
    "canonical_fields_from_wave", "canonical_boundary_trace", "jacobi_fields_from_v",
    "jacobi_response_stated", "jacobi_response_derived",
    "canonical_residual", "convergence_slopes", "response_matrix", "compare_responses",
    "wave_potential_pair", "wave_density_pair", "dirac_pair", "rotation_pair",
    "convergence", "relative_l2",
]
