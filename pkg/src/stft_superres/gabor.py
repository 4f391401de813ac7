"""Periodized-Gaussian STFT analysis of spike trains on the torus.

The window is the 1-periodic Gaussian of width sigma whose Fourier
coefficients are g_n = sqrt(2*sigma) * exp(-2*pi*sigma^2*n^2).  Measuring
a spike train mu = sum_l a_l delta(t_l) through the STFT with frequency
cutoff K and window truncation N yields the coefficient matrix

    Y[k, n] = g_n * sum_l a_l exp(-2i*pi*(n+k)*t_l),   |k| <= K, |n| <= N,

i.e. Y[k, n] = g_n * muhat(n + k) where muhat is the Fourier transform of
mu.  Entries on an anti-diagonal n + k = m therefore agree after dividing
by g_n (the "anti-diagonal consistency" of exact data).

Index convention: matrices and coefficient vectors are stored with array
index 0 corresponding to the most negative index (-K, -N, or -(K+N)).

The adjoint of the measurement operator maps a coefficient matrix C to
the dual trigonometric polynomial with coefficients
x_m = sum_n g_n c_{m-n,n}; evaluation helpers for that polynomial and the
full-measurement inversion formula (Dirichlet-averaged autocorrelation
series) live here as well.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .measure import SpikeTrain

__all__ = [
    "WindowSpec",
    "Measurements",
    "DualVariable",
    "DualPolynomial",
    "default_truncation",
    "window_coeffs",
    "forward_stft",
    "fourier_transform",
    "dual_poly_from_C",
    "eval_dual_poly",
    "eval_dual_poly_grid",
    "eval_dual_poly_derivatives",
    "adjoint_pairing_check",
    "full_inversion_partial_sum",
    "measurements_to_json",
    "measurements_from_json",
    "write_measurements",
    "read_measurements",
]

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class WindowSpec:
    """Periodized Gaussian window: width sigma in (0, 1), truncation N >= 0."""

    sigma: float
    truncation: int

    def __post_init__(self):
        if not (0.0 < self.sigma < 1.0):
            raise ValueError(f"sigma must lie in (0, 1), got {self.sigma}")
        if self.truncation < 0:
            raise ValueError(f"truncation must be >= 0, got {self.truncation}")

    @property
    def N(self) -> int:
        return self.truncation


def default_truncation(sigma: float, ratio: float = 1e-12) -> int:
    """Smallest N with g_N / g_0 <= ratio: N = ceil(sqrt(ln(1/ratio)/(2*pi))/sigma)."""
    return int(math.ceil(math.sqrt(math.log(1.0 / ratio) / TWO_PI) / sigma))


def window_coeffs(w: WindowSpec) -> NDArray[np.float64]:
    """Fourier coefficients g_n = sqrt(2*sigma)*exp(-2*pi*sigma^2*n^2), |n| <= N.

    The returned vector is symmetric in n and strictly decreasing in |n|;
    index 0 corresponds to n = -N.
    """
    n = np.arange(-w.truncation, w.truncation + 1)
    return np.sqrt(2.0 * w.sigma) * np.exp(-TWO_PI * (w.sigma * n) ** 2)


@dataclass(frozen=True)
class Measurements:
    """STFT coefficient matrix Y[k, n], k in [-K, K], n in [-N, N].

    Row index 0 corresponds to k = -K, column index 0 to n = -N.
    """

    K: int
    N: int
    Y: NDArray[np.complex128]

    def __post_init__(self):
        Y = np.asarray(self.Y, dtype=complex)
        if Y.shape != (2 * self.K + 1, 2 * self.N + 1):
            raise ValueError(
                f"Y must be {(2*self.K+1, 2*self.N+1)} for K={self.K}, N={self.N}, "
                f"got {Y.shape}"
            )
        if not np.all(np.isfinite(Y)):
            raise ValueError("measurement matrix contains non-finite entries")
        Y = np.ascontiguousarray(Y)
        Y.flags.writeable = False
        object.__setattr__(self, "Y", Y)

    def antidiagonal_consistency(self, g: NDArray[np.float64], tol: float = 1e-8) -> float:
        """Max relative spread of Y[k,n]/g_n over anti-diagonals n + k = m.

        Exact data satisfies Y[k,n]/g_n = muhat(n+k); the spread is the
        worst deviation from the weighted anti-diagonal mean, relative to
        the largest ratio magnitude.  Entries with g_n <= tol * max(g)
        are skipped.
        """
        K, N, Y = self.K, self.N, self.Y
        kk = np.arange(-K, K + 1)
        nn = np.arange(-N, N + 1)
        keep = g > tol * g.max()
        worst = 0.0
        scale = 0.0
        ratios: dict[int, list[complex]] = {}
        for j, n in enumerate(nn):
            if not keep[j]:
                continue
            for i, k in enumerate(kk):
                ratios.setdefault(int(n + k), []).append(Y[i, j] / g[j])
        for vals in ratios.values():
            arr = np.asarray(vals)
            scale = max(scale, float(np.abs(arr).max()))
            worst = max(worst, float(np.abs(arr - arr.mean()).max()))
        return worst / scale if scale > 0 else 0.0


@dataclass(frozen=True)
class DualVariable:
    """Coefficient matrix C[k, n] of the predual variable, same layout as Y."""

    C: NDArray[np.complex128]

    def __post_init__(self):
        C = np.asarray(self.C, dtype=complex)
        if C.ndim != 2 or C.shape[0] % 2 == 0 or C.shape[1] % 2 == 0:
            raise ValueError(f"C must be (2K+1) x (2N+1), got {C.shape}")
        if not np.all(np.isfinite(C)):
            raise ValueError("dual variable contains non-finite entries")
        C = np.ascontiguousarray(C)
        C.flags.writeable = False
        object.__setattr__(self, "C", C)

    @property
    def K(self) -> int:
        return (self.C.shape[0] - 1) // 2

    @property
    def N(self) -> int:
        return (self.C.shape[1] - 1) // 2


@dataclass(frozen=True)
class DualPolynomial:
    """Trigonometric polynomial sum_m x_m e^{2i*pi*m*t}, |m| <= degree."""

    x: NDArray[np.complex128]

    def __post_init__(self):
        x = np.asarray(self.x, dtype=complex)
        if x.ndim != 1 or x.size % 2 == 0:
            raise ValueError(f"coefficient vector must have odd length, got {x.shape}")
        x = np.ascontiguousarray(x)
        x.flags.writeable = False
        object.__setattr__(self, "x", x)

    @property
    def degree(self) -> int:
        return (self.x.size - 1) // 2


def fourier_transform(m: SpikeTrain, freqs: NDArray[np.int_]) -> NDArray[np.complex128]:
    """muhat(f) = sum_l a_l exp(-2i*pi*f*t_l) at the given integer frequencies."""
    if len(m) == 0:
        return np.zeros(np.asarray(freqs).shape, dtype=complex)
    phase = np.exp(-2j * np.pi * np.outer(np.asarray(freqs, dtype=float), m.points))
    return phase @ m.weights


def forward_stft(m: SpikeTrain, w: WindowSpec, K: int,
                 g: NDArray[np.float64] | None = None) -> Measurements:
    """Measure a spike train: Y[k, n] = g_n * muhat(n + k).

    ``g`` overrides the window coefficient vector (index 0 <-> -N); by
    default it is ``window_coeffs(w)``.
    """
    if K < 0:
        raise ValueError(f"K must be >= 0, got {K}")
    if g is None:
        g = window_coeffs(w)
    N = (len(g) - 1) // 2
    zhat = fourier_transform(m, np.arange(-(K + N), K + N + 1))
    kk = np.arange(2 * K + 1)
    nn = np.arange(2 * N + 1)
    Y = g[None, :] * zhat[kk[:, None] + nn[None, :]]
    return Measurements(K=K, N=N, Y=Y)


def dual_poly_from_C(cvar: DualVariable, w: WindowSpec,
                     g: NDArray[np.float64] | None = None) -> DualPolynomial:
    """Coefficients x_m = sum_{n=n_min}^{n_max} g_n c_{m-n,n} of the dual polynomial.

    n_min = max(-N, m-K) and n_max = min(N, m+K); equivalently, x_m sums
    g_n * c_{k,n} over the anti-diagonal k + n = m.  Linear in C.
    """
    if g is None:
        g = window_coeffs(w)
    K, N = cvar.K, cvar.N
    if len(g) != 2 * N + 1:
        raise ValueError(f"window vector has {len(g)} entries, expected {2*N+1}")
    C = cvar.C
    Mp = 2 * (K + N) + 1
    x = np.zeros(Mp, dtype=complex)
    kk, nn = np.meshgrid(np.arange(2 * K + 1), np.arange(2 * N + 1), indexing="ij")
    np.add.at(x, (kk + nn).ravel(), (g[None, :] * C).ravel())
    return DualPolynomial(x)


def eval_dual_poly(p: DualPolynomial, t) -> np.complex128 | NDArray[np.complex128]:
    """Evaluate sum_m x_m e^{2i*pi*m*t}; scalar or vectorized in t."""
    tv = np.atleast_1d(np.asarray(t, dtype=float))
    mrange = np.arange(-p.degree, p.degree + 1)
    vals = np.exp(2j * np.pi * np.outer(tv, mrange)) @ p.x
    return vals[0] if np.isscalar(t) or np.asarray(t).ndim == 0 else vals


def eval_dual_poly_grid(p: DualPolynomial, grid_size: int) -> NDArray[np.complex128]:
    """Values p(j / grid_size), j = 0..grid_size-1, via a zero-padded inverse FFT."""
    if grid_size < p.x.size:
        raise ValueError("grid must be at least as fine as the coefficient count")
    mrange = np.arange(-p.degree, p.degree + 1)
    coef = np.zeros(grid_size, dtype=complex)
    coef[np.mod(mrange, grid_size)] = p.x
    return np.fft.ifft(coef) * grid_size


def eval_dual_poly_derivatives(p: DualPolynomial, t):
    """(p(t), p'(t), p''(t)) with analytic coefficient differentiation."""
    tv = np.atleast_1d(np.asarray(t, dtype=float))
    mrange = np.arange(-p.degree, p.degree + 1)
    E = np.exp(2j * np.pi * np.outer(tv, mrange))
    d1 = 2j * np.pi * mrange
    return E @ p.x, E @ (d1 * p.x), E @ (d1**2 * p.x)


def adjoint_pairing_check(m: SpikeTrain, cvar: DualVariable, w: WindowSpec, K: int) -> float:
    """Absolute defect of the real adjoint pairing <A m, C> = <m, A* C>.

    The left side is Re sum_{k,n} y_{k,n} conj(c_{k,n}); the right side
    pairs the measure against the dual polynomial, Re sum_l a_l
    conj(p(t_l)).  Exact data makes the two finite sums identical, so the
    returned value is pure floating-point noise (<= 1e-10 relative).
    """
    if cvar.K != K:
        raise ValueError(f"dual variable has K={cvar.K}, expected {K}")
    if cvar.N != w.truncation:
        raise ValueError(f"dual variable has N={cvar.N}, expected {w.truncation}")
    Y = forward_stft(m, w, K).Y
    left = float(np.real(np.sum(Y * np.conj(cvar.C))))
    p = dual_poly_from_C(cvar, w)
    vals = eval_dual_poly(p, m.points) if len(m) else np.zeros(0, complex)
    right = float(np.real(np.sum(m.weights * np.conj(vals))))
    return abs(left - right)


def _dirichlet_ratio(u: NDArray[np.float64], K: int) -> NDArray[np.float64]:
    """D_K(u) / (2K+1) = sin((2K+1)*pi*u) / ((2K+1) * sin(pi*u)), value 1 at u in Z."""
    u = np.asarray(u, dtype=float)
    s = np.sin(np.pi * u)
    near = np.abs(s) < 1e-12
    num = np.sin((2 * K + 1) * np.pi * u)
    out = np.empty_like(u)
    out[~near] = num[~near] / ((2 * K + 1) * s[~near])
    # at integer u both sines vanish and the ratio tends to +-1
    out[near] = np.cos((2 * K + 1) * np.pi * u[near]) / np.cos(np.pi * u[near])
    return out


def periodized_autocorrelation(u, sigma: float, terms: int = 3):
    """R_per(u) = sum_{|n| <= terms} exp(-pi*(u - n)^2/(4*sigma^2)).

    Gaussian decay makes terms beyond |n| = 3 smaller than 1e-30 for
    sigma <= 0.1.
    """
    u = np.asarray(u, dtype=float)
    acc = np.zeros_like(u)
    for n in range(-terms, terms + 1):
        acc += np.exp(-np.pi * (u - n) ** 2 / (4.0 * sigma**2))
    return acc


def full_inversion_partial_sum(m: SpikeTrain, w: WindowSpec, K: int, t,
                               normalize: bool = False):
    """Partial sum of the full-measurement STFT inversion formula at t.

    Closed form of (1/(2K+1)) * sum_{|k|<=K} int_0^1 (V_g mu)(tau, k)
    g(t - tau) e^{2i*pi*k*t} dtau, namely

        sum_l a_l * R_per(t - t_l) * D_K(t - t_l) / (2K+1),

    where R_per is the periodized window autocorrelation and D_K the
    Dirichlet kernel.  As K grows the value tends to a_l at t = t_l and
    to 0 elsewhere.  With ``normalize`` the result is divided by
    ||g||_{L^2}^2 = sum_n g_n^2 (the inversion formula assumes a unit-norm
    window; recovery code never normalizes).
    """
    tv = np.atleast_1d(np.asarray(t, dtype=float))
    if len(m) == 0:
        vals = np.zeros(tv.shape, dtype=complex)
    else:
        diff = tv[:, None] - m.points[None, :]
        vals = (m.weights[None, :]
                * periodized_autocorrelation(diff, w.sigma)
                * _dirichlet_ratio(diff, K)).sum(axis=1)
    if normalize:
        vals = vals / float(np.sum(window_coeffs(w) ** 2))
    return vals[0] if np.isscalar(t) or np.asarray(t).ndim == 0 else vals


# ---------------------------------------------------------------------------
# JSON interchange: {"K": ..., "N": ..., "Y": [[[re, im], ...], ...]} row-major in k

def measurements_to_json(meas: Measurements) -> dict:
    return {
        "K": int(meas.K),
        "N": int(meas.N),
        "Y": [[[float(v.real), float(v.imag)] for v in row] for row in meas.Y],
    }


def measurements_from_json(obj: dict) -> Measurements:
    Y = np.asarray(
        [[complex(re, im) for re, im in row] for row in obj["Y"]], dtype=complex
    )
    return Measurements(K=int(obj["K"]), N=int(obj["N"]), Y=Y)


def write_measurements(meas: Measurements, path) -> None:
    from .serde import dump_canonical_json

    with open(path, "w") as fh:
        fh.write(dump_canonical_json(measurements_to_json(meas)))


def read_measurements(path) -> Measurements:
    with open(path) as fh:
        return measurements_from_json(json.load(fh))
