"""Variable-exponent Hardy spaces on weighted graphs.

Finite weighted graphs, their Markov operators and heat kernels,
variable-exponent Lebesgue norms, tent spaces and square functions,
constructive atomic and molecular decompositions, spectral calculus and
empirical verifiers for the associated boundedness estimates.
"""

__version__ = "0.1.0"

from .graph import (Ball, DeltaAlphaError, GraphError, WeightedGraph, build_lattice,
                    check_delta_alpha, check_poincare, fit_doubling, read_edge_list,
                    two_lattices_joined)
from .markov import MarkovOperator, fit_composite_bound, fit_gaussian_upper
from .results import HypothesisError, VerificationResult
from .sampling import make_rng
from .varexp import ExponentFunction, luxemburg_norm, parse_exponent
from .tent import TentFunction, area_functional, square_function_GN, square_function_SL
from .atomic import (hardy_atomic_decomposition, pi_M, tent_atomic_decomposition,
                     verify_hardy_atom, verify_molecule)
from .spectral import (MultiplierSpec, gradient, riesz_transform_series,
                       riesz_transform_spectral, spectral_multiplier)

__all__ = [
    "__version__",
    "Ball", "DeltaAlphaError", "GraphError", "WeightedGraph", "build_lattice",
    "check_delta_alpha", "check_poincare", "fit_doubling", "read_edge_list",
    "two_lattices_joined",
    "MarkovOperator", "fit_composite_bound", "fit_gaussian_upper",
    "HypothesisError", "VerificationResult", "make_rng",
    "ExponentFunction", "luxemburg_norm", "parse_exponent",
    "TentFunction", "area_functional", "square_function_GN", "square_function_SL",
    "hardy_atomic_decomposition", "pi_M", "tent_atomic_decomposition",
    "verify_hardy_atom", "verify_molecule",
    "MultiplierSpec", "gradient", "riesz_transform_series", "riesz_transform_spectral",
    "spectral_multiplier",
]
