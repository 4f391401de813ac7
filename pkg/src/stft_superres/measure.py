"""Discrete complex measures on the torus [0, 1).

A spike train is a finite weighted sum of Dirac measures: points t_l in
[0, 1) carrying nonzero complex weights a_l.  This module provides the
canonical container, its metrics (total-variation norm, minimum
wrap-around separation, support error against a reference train), the
randomized instance generator used by the Monte-Carlo experiments, and
the JSON interchange format.

Conventions
-----------
- Points are reduced mod 1 and sorted ascending at construction; weights
  are carried along with their points.
- Wrap-around distance between s and t is min over integers n of
  |s - t + n|; it takes values in [0, 1/2].
- All containers are immutable values (frozen dataclasses over read-only
  arrays) and safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import linear_sum_assignment

__all__ = [
    "SpikeTrain",
    "InstanceSpec",
    "tv_norm",
    "min_wraparound_distance",
    "wraparound_distance",
    "random_instance",
    "support_error",
    "spike_train_to_json",
    "spike_train_from_json",
    "write_spike_train",
    "read_spike_train",
]


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class SpikeTrain:
    """Finite discrete complex measure sum_l a_l * delta(t_l) on [0, 1).

    Parameters
    ----------
    points : array_like of float
        Spike locations; reduced mod 1 and sorted at construction.
    weights : array_like of complex
        Nonzero complex weights, one per point.

    Raises
    ------
    ValueError
        If lengths differ, a weight is zero, or two points coincide
        after reduction mod 1.
    """

    points: NDArray[np.float64] = field(default_factory=lambda: np.empty(0))
    weights: NDArray[np.complex128] = field(default_factory=lambda: np.empty(0, complex))

    def __post_init__(self):
        pts = np.atleast_1d(np.asarray(self.points, dtype=float))
        wts = np.atleast_1d(np.asarray(self.weights, dtype=complex))
        if pts.size != wts.size:
            raise ValueError(
                f"points ({pts.size}) and weights ({wts.size}) must have equal length"
            )
        if pts.size and np.any(wts == 0):
            raise ValueError("spike weights must be nonzero")
        pts = np.mod(pts, 1.0)
        order = np.argsort(pts, kind="stable")
        pts = pts[order]
        wts = wts[order]
        if pts.size >= 2 and np.any(np.diff(pts) == 0.0):
            raise ValueError("spike locations must be pairwise distinct mod 1")
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "weights", _readonly(wts))

    def __len__(self) -> int:
        return int(self.points.size)

    def scaled(self, c: complex) -> "SpikeTrain":
        """Measure with every weight multiplied by the scalar ``c``."""
        if c == 0:
            return SpikeTrain()
        return SpikeTrain(self.points, self.weights * c)


@dataclass(frozen=True)
class InstanceSpec:
    """Parameters of the randomized jittered-lattice instance generator.

    Attributes
    ----------
    delta : float
        Target minimum wrap-around separation, in (0, 1/2).
    amplitude_range : tuple of float
        Real and imaginary weight parts are drawn i.i.d. uniformly from
        this interval.  Default (0, 1000).
    rng_seed : int
        64-bit seed; instances are bitwise reproducible given the seed.
    """

    delta: float
    amplitude_range: tuple[float, float] = (0.0, 1000.0)
    rng_seed: int = 0

    def __post_init__(self):
        if not (0.0 < self.delta < 0.5):
            raise ValueError(f"delta must lie in (0, 1/2), got {self.delta}")
        lo, hi = self.amplitude_range
        if not (hi > lo >= 0.0):
            raise ValueError("amplitude_range must satisfy 0 <= lo < hi")


def tv_norm(m: SpikeTrain) -> float:
    """Total-variation norm of a spike train: sum of weight moduli."""
    return float(np.abs(m.weights).sum())


def wraparound_distance(s, t):
    """Elementwise torus distance min_n |s - t + n|, in [0, 1/2]."""
    d = np.mod(np.asarray(s, dtype=float) - np.asarray(t, dtype=float), 1.0)
    return np.minimum(d, 1.0 - d)


def min_wraparound_distance(m: SpikeTrain) -> float:
    """Minimum pairwise wrap-around distance of the support.

    Requires at least two points.  Since the points are stored sorted,
    the nearest pair is a consecutive pair in circular order.
    """
    if len(m) < 2:
        raise ValueError("minimum separation needs at least 2 points")
    pts = m.points
    gaps = np.diff(pts)
    wrap = pts[0] + 1.0 - pts[-1]
    return float(min(gaps.min(), wrap))


def random_instance(spec: InstanceSpec) -> SpikeTrain:
    """Draw a random spike train with guaranteed separation >= delta.

    Produces S + 1 points, S = floor(1/(2*delta)), on a jittered lattice:
    slot l contributes t_l = l*p + r_l with pitch p = 1/(S+1) and jitter
    r_l uniform on [0, p - delta].  Every circular gap is then at least
    p - (p - delta) = delta, including the wrap-around gap, which a raw
    pitch-2*delta lattice cannot guarantee once the last slot wraps past 1.
    Weights have real and imaginary parts i.i.d. uniform over
    ``amplitude_range``.
    """
    delta = spec.delta
    S = int(math.floor(1.0 / (2.0 * delta)))
    L = S + 1
    pitch = 1.0 / L
    if pitch < delta:
        raise ValueError(f"delta={delta} leaves no room for {L} separated points")
    rng = np.random.default_rng(spec.rng_seed)
    jitter = rng.uniform(0.0, pitch - delta, size=L)
    pts = np.mod(np.arange(L) * pitch + jitter, 1.0)
    lo, hi = spec.amplitude_range
    wts = rng.uniform(lo, hi, size=L) + 1j * rng.uniform(lo, hi, size=L)
    # zero weights occur with probability zero; regenerate defensively
    while np.any(wts == 0):  # pragma: no cover
        wts = rng.uniform(lo, hi, size=L) + 1j * rng.uniform(lo, hi, size=L)
    train = SpikeTrain(pts, wts)
    if len(train) >= 2:
        sep = min_wraparound_distance(train)
        assert sep >= delta - 1e-15, f"generator produced separation {sep} < {delta}"
    return train


def support_error(estimated: SpikeTrain, truth: SpikeTrain) -> float:
    """Relative l2 support error under optimal wrap-around matching.

    Matches estimated points to truth points by a minimum-cost assignment
    on squared wrap-around distances, then returns
    ||matched wrap differences||_2 / ||truth points||_2.
    Cardinality mismatch returns +inf (the trial counts as a failure).
    """
    if len(truth) == 0:
        raise ValueError("support error is undefined for an empty truth train")
    denom = float(np.linalg.norm(truth.points))
    if denom == 0.0:
        raise ValueError("truth support has zero l2 norm; error ratio undefined")
    if len(estimated) != len(truth):
        return math.inf
    est = estimated.points
    tru = truth.points
    dmat = wraparound_distance(est[:, None], tru[None, :])
    rows, cols = linear_sum_assignment(dmat**2)
    return float(np.linalg.norm(dmat[rows, cols]) / denom)


# ---------------------------------------------------------------------------
# JSON interchange: {"points": [...], "weights": [[re, im], ...]}

def spike_train_to_json(m: SpikeTrain) -> dict:
    """Plain-dict form of the spike-train JSON schema."""
    return {
        "points": [float(t) for t in m.points],
        "weights": [[float(w.real), float(w.imag)] for w in m.weights],
    }


def spike_train_from_json(obj: dict) -> SpikeTrain:
    pts = obj["points"]
    wts = [complex(re, im) for re, im in obj["weights"]]
    return SpikeTrain(np.asarray(pts, dtype=float), np.asarray(wts, dtype=complex))


def write_spike_train(m: SpikeTrain, path) -> None:
    from .serde import dump_canonical_json

    with open(path, "w") as fh:
        fh.write(dump_canonical_json(spike_train_to_json(m)))


def read_spike_train(path) -> SpikeTrain:
    with open(path) as fh:
        return spike_train_from_json(json.load(fh))
