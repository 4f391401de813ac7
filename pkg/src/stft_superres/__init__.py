"""Super-resolution of spike trains from band-limited STFT measurements.

Recovers discrete complex measures on the torus from short-time Fourier
transform coefficients by total-variation minimization, solved through a
finite semidefinite predual, and constructs/verifies the associated dual
certificates on the line and the torus.
"""

from .measure import (
    InstanceSpec,
    SpikeTrain,
    min_wraparound_distance,
    random_instance,
    support_error,
    tv_norm,
)
from .gabor import (
    DualPolynomial,
    DualVariable,
    Measurements,
    WindowSpec,
    default_truncation,
    forward_stft,
    window_coeffs,
)
from .sdpsolve import SolverConfig, SolverResult, SolverStatus, solve_predual_sdp
from .recover import (
    RecoveryConfig,
    RecoveryResult,
    RecoveryStatus,
    recover,
    recover_fourier_baseline,
)
from .certificate import (
    CertificateProblem,
    CertificateReport,
    KernelSpec,
    appendix_bound_chain,
    bound_functions,
    solve_certificate,
    verify_certificate,
)

__version__ = "0.1.0"
