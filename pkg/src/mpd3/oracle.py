"""
Brute-force reference computations for cross-checking the fast paths.

Nothing here shares code with the modules it checks.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .traces import read_trace


def nearest_center_oracle(centers, positions):
    """Index of the nearest center for every position; ties go to the lowest index."""
    centers = [(float(c[0]), float(c[1])) for c in np.asarray(centers, dtype=float).reshape(-1, 2)]
    pos = np.asarray(getattr(positions, "pos", positions), dtype=float).reshape(-1, 2)
    best = np.zeros(len(pos), dtype=np.int64)
    best_d2 = np.full(len(pos), np.inf)
    for k, (cx, cy) in enumerate(centers):
        dx = pos[:, 0] - cx
        dy = pos[:, 1] - cy
        d2 = dx * dx + dy * dy
        closer = d2 < best_d2
        best[closer] = k
        best_d2[closer] = d2[closer]
    return best


def allpairs_force_oracle(positions, ff):
    """O(N^2) truncated-shifted Lennard-Jones forces and potential energy."""
    pos = np.asarray(getattr(positions, "pos", positions), dtype=float).reshape(-1, 2)
    n = len(pos)
    if n == 0:
        return np.zeros((0, 2)), 0.0
    eps, sig, rc = ff.epsilon, ff.sigma, ff.cutoff
    delta = pos[:, None, :] - pos[None, :, :]
    r2 = (delta ** 2).sum(axis=2)
    np.fill_diagonal(r2, np.inf)
    mask = r2 < rc * rc
    inv_r2 = np.where(mask, 1.0 / np.where(mask, r2, 1.0), 0.0)
    s6 = (sig * sig * inv_r2) ** 3
    magnitude = np.where(mask, 24.0 * eps * inv_r2 * (2.0 * s6 * s6 - s6), 0.0)
    forces = (magnitude[:, :, None] * delta).sum(axis=1)
    shift = 4.0 * eps * ((sig / rc) ** 12 - (sig / rc) ** 6)
    energy = np.where(mask, 4.0 * eps * (s6 * s6 - s6) - shift, 0.0)
    return forces, 0.5 * float(energy.sum())


def allpairs_neighbor_graph(owner, positions, cutoff):
    """Subdomain adjacency by checking every particle pair."""
    pos = np.asarray(getattr(positions, "pos", positions), dtype=float).reshape(-1, 2)
    owner = np.asarray(owner)
    n_mp = int(owner.max()) + 1 if owner.size else 0
    edges = set()
    for a in range(len(pos)):
        d = pos[a + 1:] - pos[a]
        close = np.flatnonzero((d ** 2).sum(axis=1) < cutoff * cutoff) + a + 1
        for b in close:
            if owner[a] != owner[b]:
                edges.add((int(owner[a]), int(owner[b])))
                edges.add((int(owner[b]), int(owner[a])))
    return [sorted(j for i, j in edges if i == k) for k in range(n_mp)]


@dataclass
class AuditReport:
    checks: int = 0
    failures: list = field(default_factory=list)

    @property
    def passed(self):
        return not self.failures

    def fail(self, step, rule, detail):
        self.failures.append((step, rule, detail))

    def __str__(self):
        head = f"{self.checks} checks, {len(self.failures)} failures"
        return "\n".join([head] + [f"step {s}: {rule}: {detail}" for s, rule, detail in self.failures])


def audit_trace(trace, rel_tol=1e-9, wait_slack=0.0):
    """Check the per-row invariants of a trace (rows or a CSV path).

    Rules: P and W in (0, 1]; t_md <= t_emd <= t_elapsed; waiting >= 0;
    t_emd + t_comm + t_wait == t_elapsed; all values finite; total particle
    count equal to the first row's. ``wait_slack`` admits small negative
    waiting and ordering slips from measured clocks.
    """
    if isinstance(trace, (str, Path)):
        trace = read_trace(trace)
    report = AuditReport()
    total = None
    for row in trace:
        s = row.step
        for k in range(row.n_workers):
            vals = {
                "t_md": row.t_md[k], "t_emd": row.t_emd[k], "t_comm": row.t_comm[k],
                "t_wait": row.t_wait[k], "t_elapsed": row.t_elapsed[k], "P": row.P[k], "W": row.W[k],
            }
            report.checks += 6
            bad = [name for name, v in vals.items() if not math.isfinite(v)]
            if bad:
                report.fail(s, "finite values", f"worker {k}: {', '.join(bad)} not finite")
                continue
            if not 0.0 < vals["P"] <= 1.0:
                report.fail(s, "P in (0, 1]", f"worker {k}: P = {vals['P']}")
            if not 0.0 < vals["W"] <= 1.0:
                report.fail(s, "W in (0, 1]", f"worker {k}: W = {vals['W']}")
            if vals["t_md"] > vals["t_emd"] + wait_slack:
                report.fail(s, "t_md <= t_emd", f"worker {k}: {vals['t_md']} > {vals['t_emd']}")
            if vals["t_emd"] > vals["t_elapsed"] + wait_slack:
                report.fail(s, "t_emd <= t_elapsed", f"worker {k}: {vals['t_emd']} > {vals['t_elapsed']}")
            if vals["t_wait"] < -wait_slack:
                report.fail(s, "waiting >= 0", f"worker {k}: t_wait = {vals['t_wait']}")
            parts = vals["t_emd"] + vals["t_comm"] + vals["t_wait"]
            if abs(parts - vals["t_elapsed"]) > rel_tol * abs(vals["t_elapsed"]) + wait_slack:
                report.fail(s, "elapsed = emd + comm + wait",
                            f"worker {k}: {parts} != {vals['t_elapsed']}")
        report.checks += 1
        count = int(np.sum(row.n_particles))
        if total is None:
            total = count
        elif count != total:
            report.fail(s, "particle conservation", f"{count} particles, expected {total}")
    return report
