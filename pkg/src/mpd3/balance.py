"""
Load metrics and the center-displacement law that drives rebalancing.

A worker's weighting factor ``W`` is the fraction of a step it spends doing
useful work once external load is factored out; in a balanced run every
worker has the same ``W``. Each MP center is pushed along the lines to its
neighbors' centers in proportion to the difference in ``W``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import CoincidentCenters, DegenerateTiming


@dataclass(frozen=True)
class TimingSample:
    t_md: float
    t_emd: float
    t_work: float
    t_elapsed: float

    def violations(self, slack=0.0):
        """Names of the ordering invariants this sample breaks."""
        bad = []
        if not self.t_md > 0:
            bad.append("t_md > 0")
        if not self.t_work > 0:
            bad.append("t_work > 0")
        if self.t_md > self.t_emd + slack:
            bad.append("t_md <= t_emd")
        if self.t_work > self.t_elapsed + slack:
            bad.append("t_work <= t_elapsed")
        if self.t_md > self.t_work + slack:
            bad.append("t_md <= t_work")
        if self.t_emd > self.t_elapsed + slack:
            bad.append("t_emd <= t_elapsed")
        return bad


@dataclass(frozen=True)
class LoadMetrics:
    p: float
    w: float
    clamped: bool = False


@dataclass(frozen=True)
class BalanceConfig:
    a: float = 0.5
    smoothing_alpha: float = 0.3
    imbalance_tolerance: float = 0.10

    def __post_init__(self):
        if not 0.0 <= self.a <= 1.0:
            raise ValueError("gain a must lie in [0, 1]")
        if not 0.0 < self.smoothing_alpha <= 1.0:
            raise ValueError("smoothing_alpha must lie in (0, 1]")


def normalized_md_time(s):
    """P = t_md / t_emd."""
    if s.t_emd <= 0 or s.t_md <= 0:
        raise DegenerateTiming(f"no MD time recorded (t_md={s.t_md}, t_emd={s.t_emd})")
    return s.t_md / s.t_emd


def _raw_weight(s, p):
    if s.t_elapsed <= 0:
        raise DegenerateTiming(f"non-positive elapsed time {s.t_elapsed}")
    return s.t_work / (p * s.t_elapsed)


def load_metrics(s):
    """P and W for one sample; W is clamped into (0, 1] and the clamp flagged."""
    p = normalized_md_time(s)
    w = _raw_weight(s, p)
    clamped = not 0.0 < w <= 1.0
    return LoadMetrics(p, float(min(max(w, np.finfo(float).tiny), 1.0)), clamped)


def weighting_factor(s):
    """W = t_work / (P * t_elapsed), clamped into (0, 1]."""
    return load_metrics(s).w


def _weights(metrics):
    return np.array([m.w if isinstance(m, LoadMetrics) else m for m in metrics], dtype=float)


def displacement(i, decomp, metrics, cfg, sizes):
    """Displacement of MP ``i``'s center for one step.

    ``a * L(i) / N_n(i) * sum_j (W(i) - W(j)) * u_ij`` over the neighbors
    ``j`` of ``i``, with ``u_ij`` the unit vector from center ``j`` to
    center ``i``. An MP without neighbors does not move.
    """
    w = _weights(metrics)
    nbrs = np.asarray(decomp.neighbors[i], dtype=np.int64)
    if nbrs.size == 0:
        return np.zeros(2)
    rij = decomp.centers[i] - decomp.centers[nbrs]
    dist = np.hypot(rij[:, 0], rij[:, 1])
    if np.any(dist == 0):
        j = nbrs[np.argmin(dist)]
        raise CoincidentCenters(f"MP {i} and its neighbor {j} share a center")
    terms = (w[i] - w[nbrs])[:, None] * rij / dist[:, None]
    return cfg.a * sizes[i] / nbrs.size * terms.sum(axis=0)


def displacements(decomp, metrics, cfg, sizes):
    return np.array([displacement(i, decomp, metrics, cfg, sizes) for i in range(decomp.n_mp)]).reshape(-1, 2)


def apply_displacement(decomp, deltas):
    """Move every center by its displacement, clamp into the domain, advance the step."""
    deltas = np.asarray(deltas, dtype=float).reshape(-1, 2)
    if deltas.shape[0] != decomp.n_mp:
        raise ValueError("need exactly one displacement per MP")
    out = decomp.copy()
    moved = out.centers + deltas
    if out.x_only:
        moved[:, 1] = out.centers[:, 1]
    xmin, xmax, ymin, ymax = out.domain_bounds
    moved[:, 0] = np.clip(moved[:, 0], xmin, xmax)
    moved[:, 1] = np.clip(moved[:, 1], ymin, ymax)
    out.centers = moved
    out.step += 1
    return out


def imbalance(metrics):
    w = _weights(metrics)
    return float(w.max() - w.min())


def smooth_weights(previous, current, alpha):
    """Exponential moving average; ``previous=None`` starts from ``current``."""
    current = np.asarray(current, dtype=float)
    if previous is None:
        return current.copy()
    return alpha * current + (1.0 - alpha) * np.asarray(previous, dtype=float)
