"""
Run loop: settle the tessellation, then alternate neighbor exchange with
center update and one MD step, recording per-worker timings every step.
"""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import balance
from .cluster import MeasuredCluster, VirtualCluster, exchange, pairs_per_mp
from .errors import DegenerateTiming, MPD3Error, NoConvergence
from .geometry import (
    linear_sizes, neighbor_graph_from_pairs, rectangle_edges, rectangle_owner,
    rectangular_split, settle_initial_tessellation,
)
from .md import CellMesh, find_pairs, forces_from_pairs, kinetic_energy, renumber_order, verlet_step
from .scenario import MODE_ALIASES, MODES
from .traces import TraceRow

logger = logging.getLogger(__name__)


@dataclass
class RunState:
    particles: object
    decomposition: object
    forces: np.ndarray
    step: int = 0


@dataclass
class RunResult:
    state: RunState
    trace: list
    snapshots: list = field(default_factory=list)
    settle_iterations: int = 0
    settled: bool = True
    clamp_events: int = 0
    owner_history: list = field(default_factory=list)


class _PairCache:
    """Verlet pair list at cutoff + skin, rebuilt once any particle moved skin/2."""

    def __init__(self, scenario):
        self.ff = scenario.forcefield
        self.bounds = scenario.domain_bounds
        self.radius = scenario.list_radius
        self.half_skin = 0.5 * scenario.skin
        self.i = self.j = self.dr = None
        self.anchor = None
        self.rebuilds = 0

    def update(self, particles):
        pos = particles.pos
        if self.anchor is None or self._max_shift(pos) > self.half_skin:
            mesh = CellMesh.build(pos, self.bounds, self.radius)
            self.i, self.j, self.dr = find_pairs(pos, mesh, self.radius)
            self.anchor = pos.copy()
            self.rebuilds += 1
        else:
            self.dr = pos[self.i] - pos[self.j]

    def forces(self, particles):
        self.update(particles)
        return forces_from_pairs(len(particles), self.i, self.j, self.dr, self.ff)

    def _max_shift(self, pos):
        d = pos - self.anchor
        return float(np.sqrt(np.einsum("ij,ij->i", d, d).max())) if len(pos) else 0.0

    def within_cutoff(self):
        close = np.einsum("ij,ij->i", self.dr, self.dr) < self.ff.cutoff ** 2
        return self.i[close], self.j[close]

    def permute(self, order):
        inverse = np.empty_like(order)
        inverse[order] = np.arange(order.size)
        self.i, self.j = inverse[self.i], inverse[self.j]
        self.anchor = self.anchor[order]


def _metrics(samples):
    """P and W per worker; workers without MD work get the mean W of the others."""
    n = len(samples)
    p, w = np.ones(n), np.full(n, np.nan)
    clamps = 0
    for k, s in enumerate(samples):
        try:
            m = balance.load_metrics(s)
        except DegenerateTiming:
            continue
        p[k], w[k] = m.p, m.w
        clamps += m.clamped
    valid = ~np.isnan(w)
    w[~valid] = w[valid].mean() if valid.any() else 1.0
    return p, w, clamps


def _initial_decomposition(scenario, particles, mode):
    decomp = rectangular_split(particles.pos, scenario.grid, scenario.domain_bounds, scenario.x_only)
    if mode == "static_rect":
        return decomp, 0, True
    try:
        decomp, iters = settle_initial_tessellation(decomp, particles, scenario.settle_max_iters)
        return decomp, iters, True
    except NoConvergence as exc:
        logger.warning("%s: %s; starting from the last sweep", scenario.name, exc)
        return exc.decomposition, exc.iterations, False


def _measured_force_fn(cluster, pairs, decomp, ghosts, step, metrics, sink):
    slots = [np.flatnonzero(decomp.owner == k) for k in range(decomp.n_mp)]

    def force_fn(particles):
        pairs.update(particles)
        tasks = [
            (particles.pos[np.concatenate((slots[k], ghosts[k]))], len(slots[k]), decomp.neighbors[k])
            for k in range(decomp.n_mp)
        ]
        parts, energy, timings, _ = cluster.step(step, tasks, metrics)
        forces = np.zeros_like(particles.pos)
        for k, f in enumerate(parts):
            forces[slots[k]] = f
        sink.append(timings)
        return forces, energy

    return force_fn


def run(scenario, mode=None, seed=None, snapshot_every=None, snapshot_callback=None, keep_owner_history=False,
        execution="virtual"):
    """Run a scenario on the virtual cluster.

    Parameters
    ----------
    scenario : Scenario
    mode : str, optional
        Overrides ``scenario.mode`` (``mpd3``, ``static_rect``/``static``,
        ``voronoi_frozen``/``frozen``).
    seed : int, optional
        Overrides ``scenario.seed``.
    snapshot_every : int, optional
        Keep a snapshot every this many steps (0 disables). Snapshots go to
        ``snapshot_callback(state)`` when given, else into the result.
    keep_owner_history : bool
        Record the owner id of every particle (ordered by particle id) after
        each exchange.
    execution : {"virtual", "measured"}
        ``virtual`` derives timings from the cost model and is exactly
        reproducible. ``measured`` computes each subdomain's forces on its
        own worker thread and records real clock readings.

    Returns
    -------
    RunResult
    """
    mode = MODE_ALIASES.get(mode, mode) or scenario.mode
    if mode not in MODES:
        raise MPD3Error(f"unknown mode {mode!r}")
    snapshot_every = scenario.snapshot_every if snapshot_every is None else snapshot_every
    if execution not in ("virtual", "measured"):
        raise MPD3Error(f"unknown execution {execution!r}")
    if execution == "measured":
        cluster = MeasuredCluster(scenario.workers, scenario.forcefield)
        try:
            return _run(scenario, mode, seed, snapshot_every, snapshot_callback, keep_owner_history, cluster)
        finally:
            cluster.close()
    cluster = VirtualCluster(scenario.workers, scenario.cost)
    return _run(scenario, mode, seed, snapshot_every, snapshot_callback, keep_owner_history, cluster)


def _run(scenario, mode, seed, snapshot_every, snapshot_callback, keep_owner_history, cluster):
    ff, cfg = scenario.forcefield, scenario.balance
    measured = isinstance(cluster, MeasuredCluster)

    particles = scenario.build_particles(seed)
    decomp, settle_iters, settled = _initial_decomposition(scenario, particles, mode)
    n_mp = decomp.n_mp
    rect_edges = rectangle_edges(particles.pos, decomp.owner, scenario.grid) if mode == "static_rect" else None
    if rect_edges is not None:
        decomp.owner = rectangle_owner(particles.pos, rect_edges)

    pairs = _PairCache(scenario)
    forces, epot = pairs.forces(particles)
    decomp.neighbors = neighbor_graph_from_pairs(decomp.owner, pairs.i, pairs.j, n_mp)

    result = RunResult(RunState(particles, decomp, forces), [], settle_iterations=settle_iters, settled=settled)
    w_smooth = None
    pending = {}
    for step in range(scenario.n_steps):
        try:
            # exchange centers, metrics and particles; move centers
            if mode == "mpd3" and w_smooth is not None:
                sizes = linear_sizes(decomp, particles.pos)
                decomp = balance.apply_displacement(decomp, balance.displacements(decomp, w_smooth, cfg, sizes))
            else:
                decomp = decomp.copy()
                decomp.step += 1
            target = rectangle_owner(particles.pos, rect_edges) if rect_edges is not None else None
            ex = exchange(decomp, particles, (pairs.i, pairs.j), w_smooth, step, pending, scenario.cost, target)
            migrated = ex.owner != decomp.owner
            decomp.owner, decomp.neighbors, pending = ex.owner, ex.neighbors, ex.pending
            if keep_owner_history:
                result.owner_history.append(decomp.owner[np.argsort(particles.ids)].copy())

            n_particles = np.bincount(decomp.owner, minlength=n_mp)
            ci, cj = pairs.within_cutoff()
            n_pairs = pairs_per_mp(decomp.owner, ci, cj, n_mp)

            # MD step and timing
            if measured:
                sink = []
                force_fn = _measured_force_fn(cluster, pairs, decomp, ex.ghosts, step, w_smooth, sink)
                particles, forces, epot = verlet_step(particles, forces, ff, scenario.domain_bounds, force_fn)
                timings = sink[-1]
            else:
                particles, forces, epot = verlet_step(particles, forces, ff, scenario.domain_bounds, pairs.forces)
                timings = cluster.step_timings(step, n_particles, n_pairs, ex.traffic)
        except MPD3Error as exc:
            raise type(exc)(f"step {step}: {exc}") from exc

        p, w, clamps = _metrics(timings.samples)
        result.clamp_events += clamps
        w_smooth = balance.smooth_weights(w_smooth, w, cfg.smoothing_alpha)
        result.trace.append(TraceRow(
            step=step,
            n_particles=n_particles,
            t_md=np.array([s.t_md for s in timings.samples]),
            t_emd=np.array([s.t_emd for s in timings.samples]),
            t_comm=timings.comm_elapsed,
            t_wait=timings.waiting,
            t_elapsed=np.array([s.t_elapsed for s in timings.samples]),
            P=p,
            W=w,
            imbalance=balance.imbalance(w),
            migrations=int(np.count_nonzero(migrated)),
            energy=epot + kinetic_energy(particles),
        ))

        if scenario.renumber_every and (step + 1) % scenario.renumber_every == 0:
            mesh = CellMesh.build(particles.pos, scenario.domain_bounds, scenario.list_radius)
            order = renumber_order(decomp.owner, mesh)
            particles = particles.take(order)
            forces = forces[order]
            decomp.owner = decomp.owner[order]
            pairs.permute(order)

        state = RunState(particles, decomp, forces, step + 1)
        result.state = state
        if snapshot_every and (step + 1) % snapshot_every == 0:
            snap = RunState(particles.copy(), decomp.copy(), forces.copy(), step + 1)
            if snapshot_callback is not None:
                snapshot_callback(snap)
            else:
                result.snapshots.append(snap)
    return result


def run_baseline_static(scenario, **kwargs):
    """Same pipeline with the settled Voronoi centers frozen for the whole run."""
    return run(scenario, mode="voronoi_frozen", **kwargs)
