"""Recycling MINRES: deflated Krylov solves for sequences of self-adjoint systems."""
from .errors import (ConfigError, DeflationSpaceError, DimensionError, DivergenceError,
                     InnerProductError, InputError, KrecycleError, NumericsError,
                     OrthogonalityError, ParseError, PreconditionerError)
from .hilbert import (InnerProduct, Operator, as_operator, block_inner, orthonormalize,
                      right_multiply)
from .lanczos import LanczosData, lanczos_run
from .minres import MinresConfig, SolveReport, minres_bound, minres_solve
from .deflation import Deflator, build_deflator
from .ritz import RitzSelectionWarning, RitzSet, ritz_pairs, select_ritz
from .recycler import (ItemReport, RecycleConfig, RecyclingMinres, SequenceItem, SequenceReport,
                       cost_model, solve_sequence)

__version__ = "0.1.0"
