"""Discrete Feynman-Kac semigroups on truncated countable spaces.

Kernels live on a finite guard window with tracked tail mass; potentials
kill paths; harmonic functions of ``U = V^-1 P`` are solved and certified
against two-sided bounds derived from the direct step property.
"""

__version__ = "0.1.0"

from .errors import (CapacityError, CertificateError, ConfigError, ConvergenceError,  # noqa: E402
                     DegreeError, DisconnectedError, DomainError, FKChainError,
                     InsufficientDataError, InsufficientDepthError, InsufficientWindowError,
                     NoConvergenceError, PositivityError, PreconditionError, SummabilityError,
                     TruncationError)
from .space import (TruncatedSpace, WeightedGraph, ball, build_lattice,  # noqa: E402
                    geodesic_distance, geodesic_path, graph_from_edges, is_geodesically_convex,
                    lattice_graph, random_weighted_graph)
from .kernel import (Kernel, check_reversible, compose, generic_kernel,  # noqa: E402
                     identity_kernel, n_step, nn_kernel, normalize_general, product_kernel,
                     profile_kernel)
from .dsp import (check_doubling, check_subadditive_factor, dsp_constant,  # noqa: E402
                  dsp_pmf_check, kb_bounds)
from .subordination import (SubordinatorPMF, convolve_pmf, heat_kernel_sequence,  # noqa: E402
                            relativistic_pmf, stable_pmf, subordinate_kernel,
                            verify_subordinate_decay, wendel_check, z1_subordinate_kernel)
from .feynman_kac import (BoundCertificate, FKOperator, Potential, apply_U,  # noqa: E402
                          apply_conjugate_W, bhi_check, bhi_ratio, bound_constants,
                          classify_harmonicity, conjugate_semigroup_apply, find_B0,
                          proof_iteration_check, semigroup_apply, solve_harmonic,
                          verify_two_sided)
from .nn_estimates import (ProfileW, asymptotic_decay_check, decay_table,  # noqa: E402
                           nagaev_ratio, nn_sandwich_check, product_lower_bound,
                           product_upper_bound, z1_nn_harmonic)
from .schrodinger import (GraphLaplacian, apply_H, eigenfunction_decay_cert,  # noqa: E402
                          eigenpairs, finite_rank_gap, ground_state, mu_conditions_check,
                          reduce_to_fk, self_adjoint_check)
from .montecarlo import (SimConfig, fk_estimate, simulate_chain,  # noqa: E402
                         simulate_subordinated)
