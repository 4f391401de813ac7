"""Monte-Carlo harness: separation sweeps, method comparison, N-convergence.

A sweep draws random spike trains at each target separation delta,
measures them (STFT coefficients, or pure Fourier coefficients for the
baseline), runs the recovery pipeline, and scores success by the
relative l2 support-error criterion (threshold 1e-3).  Trials are
embarrassingly parallel; per-trial seeds are derived from
(sweep seed, cell index, trial index), so results are bitwise
reproducible for any worker count, and are gathered in index order.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .gabor import forward_stft, fourier_transform
from .measure import InstanceSpec, SpikeTrain, random_instance, support_error, tv_norm
from .recover import RecoveryConfig, RecoveryStatus, recover, recover_fourier_baseline
from .sdpsolve import SolverConfig

__all__ = [
    "SweepSpec",
    "TrialRecord",
    "ConvergenceRow",
    "SUCCESS_THRESHOLD",
    "run_sweep",
    "n_convergence_study",
    "write_results",
    "read_results",
    "render_success_curve",
]

SUCCESS_THRESHOLD = 1e-3


@dataclass(frozen=True)
class SweepSpec:
    """Sweep protocol: cutoff, window grids, separations, trial budget."""

    K: int
    N_values: tuple = ()
    sigma_values: tuple = ()
    delta_grid: tuple = ()
    trials_per_cell: int = 100
    seed: int = 0
    workers: int = 1
    include_fourier: bool = True
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(max_iters=20000))

    def __post_init__(self):
        if self.trials_per_cell < 1:
            raise ValueError("trials_per_cell must be >= 1")
        dg = tuple(float(d) for d in self.delta_grid)
        if list(dg) != sorted(dg):
            raise ValueError("delta_grid must be sorted ascending")
        object.__setattr__(self, "delta_grid", dg)
        object.__setattr__(self, "N_values", tuple(int(n) for n in self.N_values))
        object.__setattr__(self, "sigma_values", tuple(float(s) for s in self.sigma_values))
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def cells(self) -> list[tuple]:
        """Deterministic cell list: (delta, method, sigma, N)."""
        out = []
        for delta in self.delta_grid:
            if self.include_fourier:
                out.append((delta, "Fourier", 0.0, 0))
            for sigma in self.sigma_values:
                for N in self.N_values:
                    out.append((delta, "STFT", sigma, N))
        return out


@dataclass(frozen=True)
class TrialRecord:
    delta: float
    method: str
    sigma: float
    N: int
    success: bool
    support_err: float
    duality_gap: float
    wall_time_s: float
    seed: int


def _trial_seed(sweep_seed: int, cell_index: int, trial_index: int) -> int:
    ss = np.random.SeedSequence(entropy=sweep_seed, spawn_key=(cell_index, trial_index))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _run_trial(args) -> TrialRecord:
    K, cell, seed, solver = args
    delta, method, sigma, N = cell
    truth = random_instance(InstanceSpec(delta=delta, rng_seed=seed))
    tv = tv_norm(truth)
    t0 = time.perf_counter()
    if method == "Fourier":
        cfg = RecoveryConfig(K=K, N=0, solver=solver)
        y = fourier_transform(truth, np.arange(-K, K + 1))
        result = recover_fourier_baseline(y, cfg)
    else:
        cfg = RecoveryConfig(K=K, N=N, sigma=sigma, solver=solver)
        Y = forward_stft(truth, cfg.window(), K)
        result = recover(Y, cfg)
    wall = time.perf_counter() - t0
    if result.status is RecoveryStatus.SUCCESS and len(result.estimate):
        err = support_error(result.estimate, truth)
    else:
        err = float("inf")
    gap = abs(result.solver.objective - tv)
    return TrialRecord(
        delta=delta,
        method=method,
        sigma=sigma,
        N=N,
        success=bool(err <= SUCCESS_THRESHOLD),
        support_err=err,
        duality_gap=gap,
        wall_time_s=wall,
        seed=seed,
    )


def run_sweep(spec: SweepSpec) -> list[TrialRecord]:
    """Run every (delta, method, sigma, N) cell of the sweep.

    Individual trial failures (non-convergence, wrong support) are
    recorded as unsuccessful trials; they never abort the sweep.
    """
    cells = spec.cells()
    tasks = [
        (spec.K, cell, _trial_seed(spec.seed, ci, ti), spec.solver)
        for ci, cell in enumerate(cells)
        for ti in range(spec.trials_per_cell)
    ]
    if spec.workers == 1:
        return [_run_trial(task) for task in tasks]
    with ProcessPoolExecutor(max_workers=spec.workers) as pool:
        return list(pool.map(_run_trial, tasks, chunksize=4))


class ConvergenceRow(NamedTuple):
    N: int
    support_err: float
    tv_estimate: float


def n_convergence_study(m: SpikeTrain, K: int, sigma: float, N_values,
                        solver: SolverConfig | None = None) -> list[ConvergenceRow]:
    """Recovery of one spike train at increasing window truncations.

    Reports, per N, the support error against ``m`` and the recovered
    total-variation value (the SDP objective, which equals the TV norm of
    the truncated-problem solution by strong duality).  The TV values are
    non-decreasing in N up to solver tolerance and bounded by
    tv_norm(m), both up to the solver's accuracy.
    """
    N_values = [int(n) for n in N_values]
    if N_values != sorted(N_values):
        raise ValueError("N_values must be ascending")
    solver = solver or SolverConfig()
    rows = []
    for N in N_values:
        cfg = RecoveryConfig(K=K, N=N, sigma=sigma, solver=solver)
        Y = forward_stft(m, cfg.window(), K)
        result = recover(Y, cfg)
        if result.status is RecoveryStatus.SUCCESS and len(result.estimate):
            err = support_error(result.estimate, m)
        else:
            err = float("inf")
        rows.append(ConvergenceRow(N=N, support_err=err,
                                   tv_estimate=result.solver.objective))
    return rows


# ---------------------------------------------------------------------------
# CSV and SVG emission

_CSV_HEADER = "delta,method,sigma,N,success,support_err,duality_gap,wall_time_s,seed"


def write_results(records, path) -> None:
    """CSV with full-precision floats; round-trips through read_results."""
    from .serde import format_float

    def fmt(x: float) -> str:
        import math as _math

        if _math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return format_float(x)

    with open(path, "w") as fh:
        fh.write(_CSV_HEADER + "\n")
        for r in records:
            fh.write(
                f"{fmt(r.delta)},{r.method},{fmt(r.sigma)},{r.N},"
                f"{int(r.success)},{fmt(r.support_err)},{fmt(r.duality_gap)},"
                f"{fmt(r.wall_time_s)},{r.seed}\n"
            )


def read_results(path) -> list[TrialRecord]:
    records = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != _CSV_HEADER:
            raise ValueError(f"unexpected CSV header: {header!r}")
        for line in fh:
            line = line.strip()
            if not line:
                continue
            (delta, method, sigma, N, success, err, gap, wall, seed) = line.split(",")
            records.append(
                TrialRecord(
                    delta=float(delta),
                    method=method,
                    sigma=float(sigma),
                    N=int(N),
                    success=bool(int(success)),
                    support_err=float(err),
                    duality_gap=float(gap),
                    wall_time_s=float(wall),
                    seed=int(seed),
                )
            )
    return records


def success_rates(records) -> dict:
    """{(method, sigma, N): [(delta, rate), ...]} sorted by delta."""
    acc: dict = {}
    for r in records:
        key = (r.method, r.sigma, r.N)
        acc.setdefault(key, {}).setdefault(r.delta, []).append(r.success)
    return {
        key: [(d, float(np.mean(v))) for d, v in sorted(cells.items())]
        for key, cells in acc.items()
    }


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2")


def render_success_curve(records, path) -> None:
    """Static SVG: success rate vs delta, one polyline per method curve."""
    rates = success_rates(records)
    width, height, margin = 640, 420, 60
    deltas = sorted({r.delta for r in records})
    dmin, dmax = (deltas[0], deltas[-1]) if deltas else (0.0, 1.0)
    span = (dmax - dmin) or 1.0

    def sx(d):
        return margin + (d - dmin) / span * (width - 2 * margin)

    def sy(rate):
        return height - margin - rate * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height-margin}" x2="{width-margin}" '
        f'y2="{height-margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height-margin}" '
        f'stroke="black"/>',
        f'<text x="{width//2}" y="{height-margin//4}" text-anchor="middle" '
        f'font-size="14">minimum separation delta</text>',
        f'<text x="{margin//4}" y="{height//2}" font-size="14" '
        f'transform="rotate(-90 {margin//4} {height//2})" '
        f'text-anchor="middle">success rate</text>',
    ]
    for tick in (0.0, 0.5, 1.0):
        parts.append(
            f'<text x="{margin-8}" y="{sy(tick)+4:.1f}" text-anchor="end" '
            f'font-size="12">{tick:g}</text>'
        )
    for i, (key, curve) in enumerate(sorted(rates.items())):
        method, sigma, N = key
        color = _SVG_COLORS[i % len(_SVG_COLORS)]
        pts = " ".join(f"{sx(d):.1f},{sy(rate):.1f}" for d, rate in curve)
        parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{pts}"/>'
        )
        label = method if method == "Fourier" else f"{method} sigma={sigma:g} N={N}"
        parts.append(
            f'<text x="{width-margin+4}" y="{margin+16*i}" font-size="12" '
            f'fill="{color}" text-anchor="end">{label}</text>'
        )
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
