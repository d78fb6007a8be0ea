"""Finite-difference solvers and verification tools for singular
p-Laplacian systems with convection terms."""

from .barriers import BarrierSet, build_barriers, build_singular_barrier, build_y, build_z, verify_lemma2
from .errors import (
    BarrierFailure,
    CalibrationError,
    ClosureFailure,
    ConfigurationError,
    DomainError,
    HypothesisViolation,
    InadmissibleSpecError,
    IterationLimitError,
    NonIntegrableExponentError,
    PlapsysError,
    SpecInvalidError,
)
from .estimates import CalibrationReport, calibrate_kp, check_hardy, energy_chain_report, load_family, validate_kp
from .fixedpoint import FixpointState, Rectangle, apply_T, iterate, make_rectangle, membership, select_C
from .mesh import Mesh, ScalarField, build_mesh, gradient, integrate_singular, norm_Lr, norm_sup_grad, refine
from .plap import PlapConfig, SingularLoad, plap_energy, plap_residual, plap_solve
from .system import SystemSpec, check_envelope, eval_f, load_spec, parse_spec, validate_cdt

__version__ = "0.1.0"
