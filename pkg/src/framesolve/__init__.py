"""Adaptive wavelet-frame discretization and solution of elliptic and
quadratically nonlinear operator equations on overlapping patch covers."""

from . import coeffs, fixpt, frame, operators, oracle, solve, wavelets
from .coeffs import (FrameIndex, Kind, SparsenessParams, SparseVector, axpy,
                     best_n_term, coarse, read_vector, weak_quasinorm,
                     write_vector)
from .counting import Counters
from .fixpt import (CertificationError, FixptConfig, NonlinearSpec,
                    apply_nonlinear, check_contraction)
from .frame import (AggregatedFrame, Patch1D, Patch2D, analyze, decompose,
                    lift_piola, lift_scalar, load_frame_file, parse_frame_text,
                    synthesize)
from .operators import (OperatorSpec, SpectralEstimates, apply, apply_adjoint,
                        entry, estimate_spectrum)
from .oracle import (DenseSnapshot, assemble, dual_coefficients,
                     least_squares_solve, project_ran)
from .solve import ResidualHistory, SolveConfig, rhs
from .wavelets import (PreconditionerWeights, ReferenceBasis, evaluate,
                       inner_product, support)

__version__ = "0.1.0"
