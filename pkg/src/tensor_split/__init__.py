"""Berger-Ebin and York splittings of symmetric 2-tensors on discretized flat tori."""

from .decomposition import (BergerEbinResult, OrthoDiagnostics, YorkResult, berger_ebin,
                            orthogonality_report, york)
from .errors import (ConfigError, GridError, InconsistentRHSError, MetricError, MismatchError,
                     SolverError, TensorSplitError)
from .grid import (Grid, OneFormField, ScalarField, SymTensorField, TwoFormField, VectorField,
                   make_grid, read_field, write_field)
from .immersion import (GraphHypersurface, MapReport, TorusMap, codazzi_divergence_check, energy,
                        graph_hypersurface, harmonic_balance_check, hypersurface_decomposition_report,
                        pullback_metric, tension_field, torus_map)
from .metric import (CurvatureBundle, MetricField, curvature, directional_derivative, flat, l2_inner,
                     l2_norm, pointwise_inner, sample_metric, sharp, trace_g)
from .operators import (ahlfors_laplacian, ahlfors_operator, cauchy_ahlfors, cauchy_ahlfors_adjoint,
                        codifferential, dds_operator, divergence_sym, exterior_derivative,
                        hodge_laplacian, killing_op, sampson_laplacian, trace_and_traceless,
                        weitzenboeck_residual)
from .ricci import (SolitonReport, Theorem1Report, Theorem2Report, ricci_berger_ebin, ricci_york,
                    sampson_identity_check, soliton_residual)
from .solver import KernelOptions, SolveOptions, SolveStats, kernel_basis, kernel_spectrum, solve_spsd
from .specs import MetricSpec, analytic_curvature, builtin_spec

__version__ = "0.1.0"
