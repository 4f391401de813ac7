"""End-to-end spike recovery: SDP solve, peak extraction, amplitude fit.

The pipeline solves the predual SDP, reads off the dual trigonometric
polynomial p, locates the points where |p| reaches 1 (candidate support),
refines them by Newton iterations on d/dt |p|^2, and estimates the
weights by least squares against the measurement matrix.  A pure-Fourier
baseline (unit window, N = 0) reproduces the classical band-limited dual
program for comparison.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np
from numpy.typing import NDArray

from .gabor import (
    DualPolynomial,
    Measurements,
    WindowSpec,
    default_truncation,
    eval_dual_poly_derivatives,
    eval_dual_poly_grid,
    window_coeffs,
)
from .measure import SpikeTrain, tv_norm
from .sdpsolve import SolverConfig, SolverResult, SolverStatus, solve_predual_sdp

__all__ = [
    "RecoveryConfig",
    "RecoveryResult",
    "RecoveryStatus",
    "DegenerateDualError",
    "default_sigma",
    "extract_support",
    "estimate_amplitudes",
    "recover",
    "recover_fourier_baseline",
]


class DegenerateDualError(RuntimeError):
    """|p| is at peak level everywhere: no isolated maxima to localize."""


class RecoveryStatus(Enum):
    SUCCESS = "Success"
    FAILED = "Failed"


def default_sigma(K: int) -> float:
    """Window width sigma = 1/(4(K + 1/2)) matched to the cutoff."""
    return 1.0 / (4.0 * (K + 0.5))


@dataclass(frozen=True)
class RecoveryConfig:
    """Pipeline parameters; defaults follow the recovery guarantees.

    sigma defaults to 1/(4(K+1/2)); N defaults to the smallest value with
    g_N/g_0 <= 1e-12.  grid_size must be at least 4(K+N) so the sampling
    cannot miss a peak of the degree-(K+N) dual polynomial.
    """

    K: int
    N: int | None = None
    sigma: float | None = None
    grid_size: int = 1 << 14
    peak_threshold: float = 1.0 - 1e-4
    newton_iters: int = 30
    merge_radius: float = 1e-4
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("K must be >= 0")
        if not (0.0 < self.peak_threshold < 1.0):
            raise ValueError("peak_threshold must lie in (0, 1)")
        sigma = self.sigma if self.sigma is not None else default_sigma(self.K)
        N = self.N if self.N is not None else default_truncation(sigma)
        object.__setattr__(self, "sigma", float(sigma))
        object.__setattr__(self, "N", int(N))
        if self.grid_size < 4 * (self.K + self.N):
            raise ValueError(
                f"grid_size {self.grid_size} < 4(K+N) = {4*(self.K+self.N)}"
            )

    def window(self) -> WindowSpec:
        return WindowSpec(sigma=self.sigma, truncation=self.N)


@dataclass(frozen=True)
class RecoveryResult:
    estimate: SpikeTrain
    dual_poly: DualPolynomial
    solver: SolverResult
    status: RecoveryStatus
    diagnostics: dict


def extract_support(p: DualPolynomial, cfg: RecoveryConfig) -> list[float]:
    """Locations where |p| attains a local maximum >= peak_threshold.

    Grid scan (grid_size points) for candidate maxima, then Newton on the
    derivative of |p(t)|^2 (analytic), then modulus-weighted merging of
    refinements closer than merge_radius.  Raises DegenerateDualError if
    |p| >= peak_threshold on the whole grid (no isolated peaks); returns
    an empty list if no grid maximum clears the threshold.
    """
    G = int(cfg.grid_size)
    vals = np.abs(eval_dual_poly_grid(p, G))
    if vals.min() >= cfg.peak_threshold:
        raise DegenerateDualError(
            "dual polynomial modulus is at peak level on the entire grid"
        )
    # a degree-D peak midway between samples can sit (pi*D/G)^2/2 below
    # its grid neighbours (Bernstein), so widen the candidate cut and
    # apply the true threshold after refinement
    sup_est = max(float(vals.max()), 1.0)
    margin = 0.5 * (np.pi * p.degree / G) ** 2 * sup_est
    is_max = (vals >= np.roll(vals, 1)) & (vals >= np.roll(vals, -1))
    cand = np.nonzero(is_max & (vals >= cfg.peak_threshold - margin))[0].astype(float) / G
    if cand.size == 0:
        return []

    t = cand.copy()
    for _ in range(cfg.newton_iters):
        pv, pd, pdd = eval_dual_poly_derivatives(p, t)
        f1 = 2.0 * np.real(np.conj(pv) * pd)
        f2 = 2.0 * (np.abs(pd) ** 2 + np.real(np.conj(pv) * pdd))
        safe = np.abs(f2) > 1e-300
        step = np.zeros_like(f1)
        step[safe] = f1[safe] / f2[safe]
        # half-grid trust region keeps Newton from leaving the basin
        step = np.clip(step, -0.5 / G, 0.5 / G)
        t = np.mod(t - step, 1.0)

    mods = np.abs(eval_dual_poly_derivatives(p, t)[0])
    keep = mods >= cfg.peak_threshold
    t = t[keep]
    mods = mods[keep]
    if t.size == 0:
        return []
    order = np.argsort(t)
    t = t[order]
    mods = mods[order]
    merged_t: list[float] = []
    merged_w: list[float] = []
    for ti, wi in zip(t, mods):
        if merged_t and ti - merged_t[-1] < cfg.merge_radius:
            tot = merged_w[-1] + wi
            merged_t[-1] = (merged_t[-1] * merged_w[-1] + ti * wi) / tot
            merged_w[-1] = tot
        else:
            merged_t.append(float(ti))
            merged_w.append(float(wi))
    # wrap-around pair at the 0/1 seam
    if len(merged_t) >= 2 and merged_t[0] + 1.0 - merged_t[-1] < cfg.merge_radius:
        tot = merged_w[0] + merged_w[-1]
        merged_t[0] = math.fmod(
            (merged_w[0] * (merged_t[0] + 1.0) + merged_w[-1] * merged_t[-1]) / tot, 1.0
        )
        merged_t.pop()
        merged_w.pop()
        merged_t.sort()
    return merged_t


def estimate_amplitudes(support, Y: Measurements, w: WindowSpec,
                        g: NDArray[np.float64] | None = None) -> NDArray[np.complex128]:
    """Least-squares weights for fixed support locations.

    Minimizes the Frobenius residual of the stacked system
    y_{k,n} = sum_l a_l g_n e^{-2i*pi*(n+k)*t_l} over all (k, n).
    Grouping the rows by anti-diagonal m = n + k turns the stack into the
    weighted system sqrt(w_m) * (muhat(m) - z_m) with w_m the
    anti-diagonal weight, which has the same minimizer.
    """
    support = np.asarray(support, dtype=float)
    if support.size == 0:
        raise ValueError("support must be nonempty")
    if np.unique(support).size != support.size:
        raise ValueError("support points must be pairwise distinct")
    if g is None:
        g = window_coeffs(w)
    from .sdpsolve import _antidiagonal_weights, _collapse_measurements

    K = Y.K
    z = _collapse_measurements(Y.Y, g, K)
    wts = _antidiagonal_weights(g, K)
    m = np.arange(-(K + Y.N), K + Y.N + 1)
    A = np.exp(-2j * np.pi * np.outer(m, support))
    sq = np.sqrt(wts)
    sol, _, rank, _ = np.linalg.lstsq(A * sq[:, None], z * sq, rcond=None)
    if rank < support.size:
        raise ValueError(
            f"amplitude system is rank deficient (rank {rank} < {support.size}); "
            "support points may have coalesced"
        )
    return sol


def _finish(Y: Measurements, w: WindowSpec, cfg: RecoveryConfig, sol: SolverResult,
            g: NDArray[np.float64]) -> RecoveryResult:
    p = sol.dual_poly
    diagnostics: dict = {
        "objective": sol.objective,
        "solver_status": sol.status.value,
        "grid_sup": sol.grid_sup,
        "iterations": sol.iterations,
    }
    try:
        support = extract_support(p, cfg)
    except DegenerateDualError as exc:
        diagnostics["failure"] = str(exc)
        return RecoveryResult(SpikeTrain(), p, sol, RecoveryStatus.FAILED, diagnostics)
    if not support:
        diagnostics["failure"] = "no dual-polynomial peaks above threshold"
        return RecoveryResult(SpikeTrain(), p, sol, RecoveryStatus.FAILED, diagnostics)
    try:
        amps = estimate_amplitudes(support, Y, w, g=g)
    except ValueError as exc:
        diagnostics["failure"] = f"amplitude estimation failed: {exc}"
        return RecoveryResult(SpikeTrain(), p, sol, RecoveryStatus.FAILED, diagnostics)
    if np.any(amps == 0):
        keep = amps != 0
        support = list(np.asarray(support)[keep])
        amps = amps[keep]
        if not support:
            diagnostics["failure"] = "all fitted amplitudes were zero"
            return RecoveryResult(SpikeTrain(), p, sol, RecoveryStatus.FAILED, diagnostics)
    estimate = SpikeTrain(np.asarray(support), amps)
    pv = eval_dual_poly_derivatives(p, estimate.points)[0]
    diagnostics["peak_moduli"] = np.abs(pv).tolist()
    diagnostics["duality_gap"] = abs(sol.objective - tv_norm(estimate))
    status = RecoveryStatus.SUCCESS
    if sol.status is not SolverStatus.CONVERGED:
        status = RecoveryStatus.FAILED
        diagnostics["failure"] = "solver did not converge"
    return RecoveryResult(estimate, p, sol, status, diagnostics)


def recover(Y: Measurements, cfg: RecoveryConfig, trace_path=None) -> RecoveryResult:
    """Full STFT recovery pipeline for a measurement matrix."""
    if Y.N != cfg.N:
        raise ValueError(f"measurements have N={Y.N} but config expects N={cfg.N}")
    if Y.K != cfg.K:
        raise ValueError(f"measurements have K={Y.K} but config expects K={cfg.K}")
    w = cfg.window()
    g = window_coeffs(w)
    sol = solve_predual_sdp(Y, w, cfg.solver, g=g, trace_path=trace_path)
    return _finish(Y, w, cfg, sol, g)


def recover_fourier_baseline(y, cfg: RecoveryConfig, trace_path=None) -> RecoveryResult:
    """Pure-Fourier recovery: degenerate window with N = 0 and g_0 = 1.

    ``y`` is the coefficient vector (y_k)_{|k| <= K} (index 0 <-> -K).
    With the unit window the dual polynomial coefficients equal the dual
    variable itself (x_m = c_m, M' = 2K+1), which is the classical
    band-limited total-variation dual program.
    """
    y = np.asarray(y, dtype=complex)
    if y.shape != (2 * cfg.K + 1,):
        raise ValueError(f"expected vector of length {2*cfg.K+1}, got {y.shape}")
    g = np.ones(1)
    Y = Measurements(K=cfg.K, N=0, Y=y[:, None])
    w = WindowSpec(sigma=cfg.sigma, truncation=0)
    sol = solve_predual_sdp(Y, w, cfg.solver, g=g, trace_path=trace_path)
    base = RecoveryConfig(
        K=cfg.K, N=0, sigma=cfg.sigma, grid_size=cfg.grid_size,
        peak_threshold=cfg.peak_threshold, newton_iters=cfg.newton_iters,
        merge_radius=cfg.merge_radius, solver=cfg.solver,
    )
    return _finish(Y, w, base, sol, g)
