"""Dense Hermitian linear algebra and the ADMM solver for the predual SDP.

The predual of truncated-window TV minimization is the semidefinite
program

    maximize    Re tr(Y^H C)
    subject to  x_m = sum_n g_n c_{m-n,n}            (dual polynomial)
                [[Q, x], [x^H, 1]] >= 0              (PSD block)
                sum_k q_{k,k+l} = delta_{0,l},       l = 0..M'-1

with M' = 2(K+N)+1.  The solver is an ADMM / Douglas-Rachford splitting
whose three blocks all have closed forms:

  (i)   C-update: least squares coupling the linear objective with the
        consistency x = G vec(C).  The map G sums anti-diagonals of C
        weighted by g_n, so G G^H is diagonal and the update is O(M').
  (ii)  PSD-block update: projection of [[Q, x], [x^H, 1]] onto the PSD
        cone (computed by subtracting the negative eigenpairs).
  (iii) trace constraints: projection onto the affine subspace of
        prescribed diagonal sums (subtract the per-diagonal mean, add
        delta_{0,l}/(M'-l)); the bottom-right corner is pinned to 1 here.

Exact measurements satisfy y_{k,n} = g_n * muhat(n+k), which makes the
objective a function of x alone: Re tr(Y^H C) = Re <x, z> with
z_m = muhat(m).  The iteration therefore runs on the (M'+1)-square
Hermitian state only, and the reported C is the minimum-norm preimage
g_n x_{k+n} / w_{k+n} (w_m = sum of g_n^2 over the anti-diagonal), which
reproduces x exactly and attains the same objective.

Plain ADMM crawls sublinearly on this cone program, so the fixed-point
iteration is wrapped in safeguarded type-II Anderson acceleration
(restart on residual growth), which reaches 1e-7 residuals in a few
hundred iterations instead of ~1e6.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
import scipy.linalg as sla
from numpy.typing import NDArray

from .gabor import (
    DualPolynomial,
    DualVariable,
    Measurements,
    WindowSpec,
    eval_dual_poly_grid,
    window_coeffs,
)

__all__ = [
    "HermitianMatrix",
    "SolverConfig",
    "SolverResult",
    "SolverStatus",
    "hermitian_eig",
    "jacobi_eig",
    "project_psd",
    "solve_predual_sdp",
]

# Calibration of the ADMM penalty against the unit data normalization
# (measurements are scaled by 1/max|z| internally); chosen empirically so
# that the user-facing default rho = 1.0 is near the speed optimum.
_PENALTY_SCALE = 100.0
_ADAPT_EVERY = 50
_FEAS_GRID = 1 << 16
_FEAS_SLACK = 1e-6


@dataclass(frozen=True)
class HermitianMatrix:
    """Validated Hermitian matrix; construction symmetrizes exactly.

    Raises if the input's Hermitian defect exceeds 1e-10 relative.
    """

    entries: NDArray[np.complex128]

    def __post_init__(self):
        A = np.asarray(self.entries, dtype=complex)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
            raise ValueError(f"expected a square matrix, got shape {A.shape}")
        nrm = np.linalg.norm(A)
        defect = np.linalg.norm(A - A.conj().T)
        if defect > 1e-10 * max(nrm, 1e-300):
            raise ValueError(
                f"matrix is not Hermitian: defect {defect:.3e} vs norm {nrm:.3e}"
            )
        A = 0.5 * (A + A.conj().T)
        A.flags.writeable = False
        object.__setattr__(self, "entries", A)

    @property
    def dimension(self) -> int:
        return self.entries.shape[0]


def jacobi_eig(A: NDArray[np.complex128], tol: float = 1e-14, max_sweeps: int = 60):
    """Cyclic Jacobi eigendecomposition of a Hermitian matrix.

    Slow (Python-level sweeps) but independent of LAPACK; serves as the
    oracle for `hermitian_eig` and `project_psd` in tests.  Returns
    (eigenvalues descending, unitary eigenvector matrix).
    """
    A = np.array(A, dtype=complex)
    n = A.shape[0]
    V = np.eye(n, dtype=complex)
    anorm = np.linalg.norm(A)
    if anorm == 0.0:
        return np.zeros(n), V
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol * anorm:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) <= 1e-300:
                    continue
                # unitary rotation J in the (p, q) plane zeroing A[p, q]:
                # J = [[c, -s*ph], [s*conj(ph), c]] with ph the phase of A[p, q]
                ph = apq / abs(apq)
                theta = 0.5 * math.atan2(2.0 * abs(apq), (A[p, p] - A[q, q]).real)
                c = math.cos(theta)
                s = math.sin(theta)
                rp = A[p, :].copy()
                rq = A[q, :].copy()
                A[p, :] = c * rp + s * ph * rq
                A[q, :] = -s * np.conj(ph) * rp + c * rq
                cp = A[:, p].copy()
                cq = A[:, q].copy()
                A[:, p] = c * cp + s * np.conj(ph) * cq
                A[:, q] = -s * ph * cp + c * cq
                A[p, q] = 0.0
                A[q, p] = 0.0
                A[p, p] = A[p, p].real
                A[q, q] = A[q, q].real
                vp = V[:, p].copy()
                vq = V[:, q].copy()
                V[:, p] = c * vp + s * np.conj(ph) * vq
                V[:, q] = -s * ph * vp + c * vq
    lam = np.real(np.diag(A))
    order = np.argsort(lam)[::-1]
    return lam[order], V[:, order]


def hermitian_eig(A: HermitianMatrix):
    """Eigendecomposition A = U diag(lam) U^H, eigenvalues descending.

    Contract: reconstruction error <= 1e-10 * ||A||_F and
    ||U^H U - I||_F <= 1e-10 * sqrt(dim).
    """
    lam, U = np.linalg.eigh(A.entries)
    return lam[::-1].copy(), U[:, ::-1].copy()


def _psd_part(W: NDArray[np.complex128]) -> NDArray[np.complex128]:
    """Positive part of a Hermitian matrix: subtract the negative eigenpairs."""
    lam, V = sla.eigh(W, subset_by_value=(-np.inf, 0.0), driver="evr",
                      check_finite=False)
    if lam.size == 0:
        return W.copy()
    if lam.size == W.shape[0]:
        return np.zeros_like(W)
    return W - (V * lam) @ V.conj().T


def project_psd(A: HermitianMatrix) -> HermitianMatrix:
    """Nearest (Frobenius) positive semidefinite matrix: clip eigenvalues at 0."""
    P = _psd_part(A.entries)
    return HermitianMatrix(0.5 * (P + P.conj().T))


class SolverStatus(Enum):
    CONVERGED = "Converged"
    MAX_ITERS = "MaxIters"


@dataclass(frozen=True)
class SolverConfig:
    """ADMM parameters: penalty (self-adaptive), tolerances, iteration cap."""

    rho: float = 1.0
    tol_primal: float = 1e-7
    tol_dual: float = 1e-7
    max_iters: int = 50000
    aa_memory: int = 10

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.tol_primal <= 0 or self.tol_dual <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass(frozen=True)
class SolverResult:
    C_opt: DualVariable
    objective: float
    primal_residual: float
    dual_residual: float
    iterations: int
    status: SolverStatus
    dual_poly: DualPolynomial
    grid_sup: float


class _DiagProjector:
    """Projection onto {Hermitian Q : sum over diagonal l = delta_{0,l}}."""

    def __init__(self, Mp: int):
        self.Mp = Mp
        j = np.arange(Mp)
        self.offs = (j[None, :] - j[:, None] + (Mp - 1)).ravel()
        self.counts = np.bincount(self.offs, minlength=2 * Mp - 1).astype(float)
        self.target = np.zeros(2 * Mp - 1, dtype=complex)
        self.target[Mp - 1] = 1.0
        self.offmat = self.offs.reshape(Mp, Mp)

    def __call__(self, Q: NDArray[np.complex128]) -> NDArray[np.complex128]:
        nbins = 2 * self.Mp - 1
        sums = (np.bincount(self.offs, weights=Q.real.ravel(), minlength=nbins)
                + 1j * np.bincount(self.offs, weights=Q.imag.ravel(), minlength=nbins))
        corr = (sums - self.target) / self.counts
        return Q - corr[self.offmat]


def _antidiagonal_weights(g: NDArray[np.float64], K: int) -> NDArray[np.float64]:
    """w_m = sum of g_n^2 over the anti-diagonal k + n = m, |m| <= K+N."""
    N = (len(g) - 1) // 2
    w = np.zeros(2 * (K + N) + 1)
    kk, nn = np.meshgrid(np.arange(2 * K + 1), np.arange(2 * N + 1), indexing="ij")
    np.add.at(w, (kk + nn).ravel(), np.broadcast_to(g[None, :] ** 2, kk.shape).ravel())
    return w


def _collapse_measurements(Y: NDArray[np.complex128], g: NDArray[np.float64],
                           K: int) -> NDArray[np.complex128]:
    """z_m = (sum of g_n y_{k,n} over the anti-diagonal) / w_m.

    For exact data z_m = muhat(m); otherwise this is the least-squares
    collapse onto the consistent subspace, on which the objective
    Re tr(Y^H C) = Re <x, z> is evaluated without error for any C in the
    row space of the anti-diagonal map.
    """
    N = (len(g) - 1) // 2
    Mp = 2 * (K + N) + 1
    z = np.zeros(Mp, dtype=complex)
    kk, nn = np.meshgrid(np.arange(2 * K + 1), np.arange(2 * N + 1), indexing="ij")
    np.add.at(z, (kk + nn).ravel(), (g[None, :] * Y).ravel())
    return z / _antidiagonal_weights(g, K)


def _min_norm_preimage(x: NDArray[np.complex128], g: NDArray[np.float64],
                       K: int) -> NDArray[np.complex128]:
    """C with smallest Frobenius norm satisfying x = G vec(C): c_{k,n} = g_n x_{k+n} / w_{k+n}."""
    N = (len(g) - 1) // 2
    w = _antidiagonal_weights(g, K)
    kk, nn = np.meshgrid(np.arange(2 * K + 1), np.arange(2 * N + 1), indexing="ij")
    return g[None, :] * (x / w)[kk + nn]


def solve_predual_sdp(Y: Measurements, w: WindowSpec, cfg: SolverConfig | None = None,
                      g: NDArray[np.float64] | None = None,
                      trace_path=None) -> SolverResult:
    """Solve the predual SDP for the given measurements and window.

    Returns the optimizing dual variable C, the objective Re tr(Y^H C),
    final scaled residuals, and the dual polynomial together with its
    sup-norm on a 2^16 grid (feasibility check: <= 1 + 1e-6 on
    convergence).
    """
    if cfg is None:
        cfg = SolverConfig()
    if g is None:
        g = window_coeffs(w)
    if len(g) != 2 * Y.N + 1:
        raise ValueError(f"window vector length {len(g)} does not match N={Y.N}")
    K, N = Y.K, Y.N
    Mp = 2 * (K + N) + 1
    d = Mp + 1

    z = _collapse_measurements(Y.Y, g, K)
    scale = float(np.max(np.abs(z)))
    if scale == 0.0:
        scale = 1.0
    zn = z / scale
    rho_user = cfg.rho
    dp = _DiagProjector(Mp)

    # Douglas-Rachford state; S = PSD-projection of y, M = affine step of 2S - y
    y = np.zeros((d, d), dtype=complex)
    y[:Mp, :Mp] = np.eye(Mp) / Mp
    y[Mp, Mp] = 1.0

    memory = cfg.aa_memory
    nstate = d * d
    dY = np.zeros((memory, nstate), dtype=complex)
    dF = np.zeros((memory, nstate), dtype=complex)
    gram = np.zeros((memory, memory), dtype=complex)
    nhist = 0
    prev_y = prev_f = None
    # checkpoint for rolling back a harmful acceleration step
    last_was_aa = False
    res_before_aa = np.inf
    y_fallback = None

    trace_rows = []
    S = np.zeros((d, d), dtype=complex)
    M = np.empty((d, d), dtype=complex)
    primal_rel = dual_rel = np.inf
    status = SolverStatus.MAX_ITERS
    it = 0
    grid_sup = np.inf

    def make_result() -> SolverResult:
        # x is invariant under the data normalization, so no rescaling here
        x_out = S[:Mp, Mp].copy()
        C = _min_norm_preimage(x_out, g, K)
        obj = float(np.real(np.vdot(z, x_out)))
        poly = DualPolynomial(x_out)
        return SolverResult(
            C_opt=DualVariable(C),
            objective=obj,
            primal_residual=float(primal_rel),
            dual_residual=float(dual_rel),
            iterations=it,
            status=status,
            dual_poly=poly,
            grid_sup=float(grid_sup),
        )

    for it in range(1, cfg.max_iters + 1):
        rho = rho_user * _PENALTY_SCALE
        W = 0.5 * (y + y.conj().T)
        S_new = _psd_part(W)
        R = 2.0 * S_new - y
        Q = 0.5 * (R[:Mp, :Mp] + R[:Mp, :Mp].conj().T)
        M[:Mp, :Mp] = dp(Q)
        x = 0.5 * (R[:Mp, Mp] + np.conj(R[Mp, :Mp])) + zn / (2.0 * rho)
        M[:Mp, Mp] = x
        M[Mp, :Mp] = np.conj(x)
        M[Mp, Mp] = 1.0

        D = M - S_new
        res = float(np.linalg.norm(D))

        # safeguard: if the previous accelerated step increased the
        # fixed-point residual, discard it and restart from the stored
        # plain iterate (costs one map evaluation)
        if last_was_aa and res > 2.0 * res_before_aa:
            y = y_fallback
            last_was_aa = False
            nhist = 0
            prev_y = prev_f = None
            continue

        sc = max(float(np.linalg.norm(S_new)), 1.0)
        dS = float(np.linalg.norm(S_new - S))
        Umat_norm = float(np.linalg.norm(y - S_new))
        S = S_new
        primal_rel = res / sc
        dual_rel = rho * dS / max(rho * Umat_norm, 1.0)

        if trace_path is not None and (it % 10 == 0 or it == 1):
            trace_rows.append(
                (it, float(np.real(np.vdot(z, S[:Mp, Mp]))), primal_rel, dual_rel, rho_user)
            )

        if primal_rel < cfg.tol_primal and dual_rel < cfg.tol_dual:
            poly = DualPolynomial(S[:Mp, Mp].copy())
            grid_sup = float(np.abs(eval_dual_poly_grid(poly, _FEAS_GRID)).max())
            if grid_sup <= 1.0 + _FEAS_SLACK:
                status = SolverStatus.CONVERGED
                break
            # residuals passed but the polynomial is not yet feasible:
            # keep iterating toward the cone
        f = D.ravel()
        yv = y.ravel()
        if prev_y is not None:
            k = nhist % memory
            dY[k] = yv
            dY[k] -= prev_y
            dF[k] = f
            dF[k] -= prev_f
            mm = min(nhist + 1, memory)
            row = dF[:mm].conj() @ dF[k]
            gram[k, :mm] = np.conj(row)
            gram[:mm, k] = row
            nhist += 1
        prev_y = yv.copy()
        prev_f = f.copy()

        y_plain = y + D
        took_aa = False
        mm = min(nhist, memory)
        if mm >= 2 and it >= 10:
            Gm = gram[:mm, :mm] + (
                1e-12 * max(float(gram[:mm, :mm].diagonal().real.max()), 1e-300)
            ) * np.eye(mm)
            try:
                gamma = np.linalg.solve(Gm, dF[:mm].conj() @ f)
            except np.linalg.LinAlgError:
                gamma = None
            if gamma is not None and np.all(np.isfinite(gamma)):
                cand = yv + f - gamma @ dY[:mm] - gamma @ dF[:mm]
                # distance guard against wild extrapolations
                if float(np.linalg.norm(cand - y_plain.ravel())) <= 100.0 * res:
                    y = cand.reshape(d, d)
                    y_fallback = y_plain
                    res_before_aa = res
                    last_was_aa = True
                    took_aa = True
        if not took_aa:
            y = y_plain
            last_was_aa = False

        # residual balancing on the penalty (clears acceleration history,
        # rescales the implicit dual variable y - S)
        if it % _ADAPT_EVERY == 0:
            new_rho = rho_user
            if primal_rel > 10.0 * dual_rel:
                new_rho = min(rho_user * 2.0, 1e4)
            elif dual_rel > 10.0 * primal_rel:
                new_rho = max(rho_user / 2.0, 1e-4)
            if new_rho != rho_user:
                c = new_rho / rho_user
                y = S + (y - S) / c
                rho_user = new_rho
                nhist = 0
                prev_y = prev_f = None
                last_was_aa = False

    if status is not SolverStatus.CONVERGED:
        poly = DualPolynomial(S[:Mp, Mp].copy())
        grid_sup = float(np.abs(eval_dual_poly_grid(poly, _FEAS_GRID)).max())

    if trace_path is not None:
        with open(trace_path, "w") as fh:
            fh.write("iter,objective,primal_res,dual_res,rho\n")
            for row in trace_rows:
                fh.write(f"{row[0]},{row[1]:.17g},{row[2]:.17g},{row[3]:.17g},{row[4]:.17g}\n")

    return make_result()
