"""Phase retrieval lab: spectral initializers, descending solvers, and
parametric-manifold theory curves for Gaussian phaseless measurements."""

from .core import (BarrierDomainError, BelowWeakThresholdError, ConvergenceError,
                   Instance, InvalidArgumentError, NumericFailureError, RngStream,
                   generate_instance, overlap, success_check)
from .quadrature import QuadratureSpec
from .spectral import (OptSpinTheoryPoint, PreprocessSpec, SpectralResult,
                       optspin_init, overlap_curve, preprocess, solve_gamma_hat,
                       spectral_apply, top_eigenpair)
from .rdt import (CurveTable, ManifoldQuery, OptimizerSpec, RdtEstimate,
                  cubic_candidates, f_q_lift, f_q_plain, f_q_sq, manifold_curve,
                  phi_lifted, phi_lifted_sq, phi_plain, phi_plain_sq)
from .dpr import (DprConfig, RunRecord, f_bar, f_plain_sq, grad_f_bar,
                  grad_f_plain_sq, gradbar, gradplain, hybrid, reshuffle)
from .harness import (SweepConfig, SweepResult, emit_theory_tables, run_trial,
                      sweep_phase_transition)

__version__ = "0.1.0"
