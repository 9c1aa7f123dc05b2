"""
Simulated heterogeneous cluster.

Workers differ in speed and may have part of their CPU stolen by external
programs over step windows. A cost model turns each worker's particle and
pair counts plus its message traffic into the four per-step times the
balancer consumes; a global barrier at the end of every step sets the
elapsed time and the waiting time.
"""

import enum
import queue
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .balance import TimingSample
from .errors import MigrationAcrossNonNeighbors
from .geometry import assign_by_midplanes, neighbor_graph_from_pairs
from .md import CellMesh, find_pairs, pair_forces


@dataclass(frozen=True)
class Link:
    latency: float = 1e-4
    bandwidth: float = 12.5e6

    def __post_init__(self):
        if self.latency <= 0 or self.bandwidth <= 0:
            raise ValueError("link latency and bandwidth must be positive")

    def transfer_time(self, nbytes):
        return self.latency + nbytes / self.bandwidth


@dataclass
class WorkerProfile:
    id: int
    speed: float = 1.0
    load_schedule: list = field(default_factory=list)
    links: dict = field(default_factory=dict)
    default_link: Link = field(default_factory=Link)

    def __post_init__(self):
        if self.speed <= 0:
            raise ValueError(f"worker {self.id}: speed must be positive")
        for start, end, lam in self.load_schedule:
            if not 0.0 <= lam < 1.0:
                raise ValueError(f"worker {self.id}: stolen fraction {lam} outside [0, 1)")
            if end < start:
                raise ValueError(f"worker {self.id}: load window ends before it starts")

    def stolen_fraction(self, step):
        """External load active at ``step``; windows are half-open ``[start, end)``."""
        active = [lam for start, end, lam in self.load_schedule if start <= step < end]
        return max(active, default=0.0)

    def link(self, peer):
        return self.links.get(peer, self.default_link)


@dataclass(frozen=True)
class CostModel:
    c_particle: float = 1.0
    c_pair: float = 0.25
    c_msg_cpu: float = 0.002
    time_unit: float = 1e-3
    bytes_per_ghost: int = 40
    bytes_per_migrant: int = 48
    bytes_per_metrics: int = 24
    bytes_per_center: int = 16

    def __post_init__(self):
        if min(self.c_particle, self.c_pair, self.c_msg_cpu, self.time_unit) <= 0:
            raise ValueError("cost coefficients must be positive")


@dataclass(frozen=True)
class WorkerCost:
    """One worker's times before the end-of-step barrier."""

    sample: TimingSample
    comm_cpu: float
    comm_elapsed: float


@dataclass
class StepTimings:
    samples: list
    waiting: np.ndarray
    comm_cpu: np.ndarray
    comm_elapsed: np.ndarray

    @property
    def elapsed(self):
        return self.samples[0].t_elapsed if self.samples else 0.0


class MessageKind(enum.Enum):
    GHOST_PARTICLES = "ghost"
    MIGRATE_PARTICLES = "migrate"
    METRICS = "metrics"
    CENTER_UPDATE = "center"


@dataclass
class NeighborMessage:
    kind: MessageKind
    sender: int
    receiver: int
    size: int
    payload: object = None


def simulate_step_cost(worker, n_particles, n_pairs, step, cost_model, traffic=None):
    """Times of one worker for one step, before synchronisation.

    ``traffic`` maps peer id to bytes moved over that link (both ways).
    The returned sample's ``t_elapsed`` is the worker's own finish time;
    :func:`barrier_elapsed` replaces it with the global one.
    """
    traffic = traffic or {}
    lam = worker.stolen_fraction(step)
    unit = cost_model.time_unit / worker.speed
    t_md = (cost_model.c_particle * n_particles + cost_model.c_pair * n_pairs) * unit
    t_emd = t_md / (1.0 - lam)
    total_bytes = sum(traffic.values())
    comm_cpu = cost_model.c_msg_cpu * total_bytes * unit
    comm_elapsed = comm_cpu / (1.0 - lam) + sum(
        worker.link(peer).transfer_time(nbytes) for peer, nbytes in sorted(traffic.items()) if nbytes > 0
    )
    t_work = t_md + comm_cpu
    sample = TimingSample(t_md, t_emd, t_work, t_emd + comm_elapsed)
    return WorkerCost(sample, comm_cpu, comm_elapsed)


def barrier_elapsed(costs):
    """Apply a global end-of-step barrier to every worker's pre-sync times."""
    finish = np.array([c.sample.t_emd + c.comm_elapsed for c in costs])
    t_elapsed = float(finish.max()) if len(costs) else 0.0
    samples = [TimingSample(c.sample.t_md, c.sample.t_emd, c.sample.t_work, t_elapsed) for c in costs]
    waiting = np.maximum(t_elapsed - finish, 0.0)
    return StepTimings(
        samples,
        waiting,
        np.array([c.comm_cpu for c in costs]),
        np.array([c.comm_elapsed for c in costs]),
    )


@dataclass
class ExchangeResult:
    owner: np.ndarray
    neighbors: list
    ghosts: list
    delivered: list
    messages: list
    traffic: np.ndarray
    migrations: int
    pending: dict


def _adjacency(neighbors, n_mp):
    adj = np.zeros((n_mp, n_mp), dtype=bool)
    for i, nb in enumerate(neighbors):
        adj[i, np.asarray(nb, dtype=np.int64)] = True
    return adj


def _migrate(decomp, pos, ids, step, pending, target=None):
    """New ownership, moving each particle at most one graph edge."""
    owner = decomp.owner
    if target is None:
        target = assign_by_midplanes(decomp.centers, pos)
    adj = _adjacency(decomp.neighbors, decomp.n_mp)
    new_owner = owner.copy()
    moved = target != owner
    direct = moved & adj[owner, np.where(moved, target, owner)]
    new_owner[direct] = target[direct]
    still_pending = {}
    for slot in np.flatnonzero(moved & ~direct):
        here = owner[slot]
        options = np.concatenate(([here], decomp.neighbors[here])).astype(np.int64)
        d = decomp.centers[options] - pos[slot]
        hop = options[np.argmin(np.einsum("ij,ij->i", d, d))]
        new_owner[slot] = hop
        if hop != target[slot]:
            pid = int(ids[slot])
            since = pending.get(pid, step)
            if step - since >= decomp.n_mp:
                raise MigrationAcrossNonNeighbors(
                    f"particle {pid} could not reach MP {target[slot]} from MP {here} "
                    f"within {decomp.n_mp} steps"
                )
            still_pending[pid] = since
    return new_owner, still_pending


def exchange(decomp, particles, pairs, metrics=None, step=0, pending=None, cost_model=None, target=None):
    """Migrate particles, rebuild the neighbor graph and assemble neighbor messages.

    Parameters
    ----------
    decomp : Decomposition
        Centers already moved for this step; ``neighbors`` is the graph
        along which messages travel.
    particles : ParticleSet
    pairs : tuple of arrays
        ``(i, j)`` slot pairs closer than the interaction cutoff plus skin.
    metrics : sequence of float, optional
        Weighting factor of every MP, gossiped to graph neighbors with the
        sender's center.
    pending : dict, optional
        Global particle id -> step it first failed to reach its owner.
    target : ndarray, optional
        Desired owner per slot; defaults to the nearest center.

    Returns
    -------
    ExchangeResult
    """
    cost_model = cost_model or CostModel()
    pending = pending or {}
    n_mp = decomp.n_mp
    pos, ids = particles.pos, particles.ids
    i, j = pairs[0], pairs[1]

    new_owner, still_pending = _migrate(decomp, pos, ids, step, pending, target)
    moved = np.flatnonzero(new_owner != decomp.owner)
    mig = np.zeros((n_mp, n_mp), dtype=np.int64)
    np.add.at(mig, (decomp.owner[moved], new_owner[moved]), 1)

    neighbors = neighbor_graph_from_pairs(new_owner, i, j, n_mp)

    oi, oj = new_owner[i], new_owner[j]
    cross = oi != oj
    receiver = np.concatenate((oi[cross], oj[cross]))
    slot = np.concatenate((j[cross], i[cross]))
    key = np.unique(receiver * len(pos) + slot)
    g_recv, g_slot = key // len(pos), key % len(pos)
    bounds = np.searchsorted(g_recv, np.arange(n_mp + 1))
    ghosts = [g_slot[bounds[k]:bounds[k + 1]] for k in range(n_mp)]
    ghost_counts = np.zeros((n_mp, n_mp), dtype=np.int64)
    np.add.at(ghost_counts, (new_owner[g_slot], g_recv), 1)

    messages = []
    delivered = [dict() for _ in range(n_mp)]
    traffic = np.zeros((n_mp, n_mp))
    for s in range(n_mp):
        for r in (int(x) for x in decomp.neighbors[s]):
            batch = []
            if metrics is not None:
                payload = (float(metrics[s]), decomp.centers[s].copy())
                delivered[r][s] = payload
                batch.append(NeighborMessage(MessageKind.METRICS, s, r, cost_model.bytes_per_metrics, payload))
            batch.append(NeighborMessage(MessageKind.CENTER_UPDATE, s, r, cost_model.bytes_per_center,
                                         decomp.centers[s].copy()))
            if mig[s, r]:
                batch.append(NeighborMessage(MessageKind.MIGRATE_PARTICLES, s, r,
                                             int(mig[s, r]) * cost_model.bytes_per_migrant,
                                             ids[moved[(decomp.owner[moved] == s) & (new_owner[moved] == r)]]))
            if ghost_counts[s, r]:
                batch.append(NeighborMessage(MessageKind.GHOST_PARTICLES, s, r,
                                             int(ghost_counts[s, r]) * cost_model.bytes_per_ghost,
                                             int(ghost_counts[s, r])))
            for m in batch:
                traffic[s, r] += m.size
                traffic[r, s] += m.size
            messages.extend(batch)
    # ghosts to MPs that only just became adjacent travel over the new edge
    for s, r in zip(*np.nonzero(ghost_counts)):
        if r not in decomp.neighbors[s]:
            size = int(ghost_counts[s, r]) * cost_model.bytes_per_ghost
            messages.append(NeighborMessage(MessageKind.GHOST_PARTICLES, int(s), int(r), size, int(ghost_counts[s, r])))
            traffic[s, r] += size
            traffic[r, s] += size
    return ExchangeResult(new_owner, neighbors, ghosts, delivered, messages, traffic, int(moved.size), still_pending)


class VirtualCluster:
    """Deterministic cost-model execution of all workers on one timeline."""

    def __init__(self, workers, cost_model=None):
        self.workers = list(workers)
        self.cost_model = cost_model or CostModel()

    def __len__(self):
        return len(self.workers)

    def step_timings(self, step, n_particles, n_pairs, traffic):
        costs = []
        for k, worker in enumerate(self.workers):
            peers = {int(p): float(traffic[k, p]) for p in np.flatnonzero(traffic[k])}
            costs.append(simulate_step_cost(worker, int(n_particles[k]), int(n_pairs[k]), step,
                                            self.cost_model, peers))
        return barrier_elapsed(costs)


def pairs_per_mp(owner, i, j, n_mp):
    """Pairs each MP evaluates: its interior pairs plus every pair it shares with a ghost."""
    oi, oj = owner[i], owner[j]
    same = oi == oj
    counts = np.bincount(oi[same], minlength=n_mp)
    counts += np.bincount(oi[~same], minlength=n_mp)
    counts += np.bincount(oj[~same], minlength=n_mp)
    return counts


def local_forces(local_pos, n_owned, ff):
    """Forces on the first ``n_owned`` of ``local_pos`` (the rest are ghosts).

    Returns ``(forces (n_owned, 2), energy share, pairs evaluated)``; a pair
    with a ghost contributes half its energy.
    """
    n = len(local_pos)
    if n_owned == 0:
        return np.zeros((0, 2)), 0.0, 0
    lo, hi = local_pos.min(axis=0), local_pos.max(axis=0) + 1e-9
    mesh = CellMesh.build(local_pos, (lo[0], hi[0], lo[1], hi[1]), ff.cutoff)
    i, j, dr = find_pairs(local_pos, mesh, ff.cutoff)
    keep = (i < n_owned) | (j < n_owned)
    i, j, dr = i[keep], j[keep], dr[keep]
    f, e = pair_forces(dr, ff)
    forces = np.empty((n, 2))
    for k in range(2):
        forces[:, k] = np.bincount(i, f[:, k], n) - np.bincount(j, f[:, k], n)
    weight = np.where((i < n_owned) & (j < n_owned), 1.0, 0.5)
    return forces[:n_owned], float((weight * e).sum()), int(i.size)


class MeasuredCluster:
    """One thread per worker timing real force work with monotonic clocks.

    Workers share nothing: each receives its owned and ghost positions as a
    task, computes forces, then swaps metrics messages with its graph
    neighbors through per-worker inboxes before a global barrier. Slower
    workers burn extra CPU in proportion to ``max_speed / speed``; external
    load is emulated by sleeping so that wall time grows by ``1 / (1 - lambda)``.
    """

    def __init__(self, workers, ff, timeout=60.0):
        self.workers = list(workers)
        self.ff = ff
        self.timeout = timeout
        n = len(self.workers)
        self._slowdown = [max(w.speed for w in self.workers) / w.speed for w in self.workers]
        self._tasks = [queue.Queue() for _ in range(n)]
        self._inboxes = [queue.Queue() for _ in range(n)]
        self._results = queue.Queue()
        self._barrier = threading.Barrier(n)
        self._threads = [threading.Thread(target=self._loop, args=(k,), daemon=True) for k in range(n)]
        for t in self._threads:
            t.start()

    def __len__(self):
        return len(self.workers)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def close(self):
        for q in self._tasks:
            q.put(None)
        for t in self._threads:
            t.join(timeout=self.timeout)

    def _loop(self, k):
        worker = self.workers[k]
        while True:
            task = self._tasks[k].get()
            if task is None:
                return
            step, local_pos, n_owned, neighbors, metric = task
            try:
                start, c0 = time.perf_counter(), time.thread_time()
                forces, energy, n_pairs = local_forces(local_pos, n_owned, self.ff)
                extra = (time.thread_time() - c0) * (self._slowdown[k] - 1.0)
                spin_until = time.thread_time() + extra
                while time.thread_time() < spin_until:
                    pass
                t_md = time.thread_time() - c0
                lam = worker.stolen_fraction(step)
                if lam > 0:
                    time.sleep((time.perf_counter() - start) * lam / (1.0 - lam))
                t_emd = time.perf_counter() - start

                p1, c1 = time.perf_counter(), time.thread_time()
                for r in neighbors:
                    self._inboxes[r].put(NeighborMessage(MessageKind.METRICS, k, int(r), 24, metric))
                received = [self._inboxes[k].get(timeout=self.timeout) for _ in neighbors]
                comm_cpu = time.thread_time() - c1
                comm_elapsed = time.perf_counter() - p1
                self._barrier.wait(timeout=self.timeout)
                t_elapsed = time.perf_counter() - start
                self._results.put((k, forces, energy, n_pairs, t_md, t_emd, comm_cpu, comm_elapsed,
                                   t_elapsed, received))
            except Exception as exc:  # reported to the orchestrator, which raises
                self._barrier.abort()
                self._results.put((k, exc))

    def step(self, step, tasks, metrics):
        """Run one step; ``tasks[k] = (local_pos, n_owned, neighbors)``.

        Returns ``(per-worker forces, total energy, StepTimings, delivered)``.
        """
        n = len(self.workers)
        for k, (local_pos, n_owned, neighbors) in enumerate(tasks):
            metric = None if metrics is None else float(metrics[k])
            self._tasks[k].put((step, local_pos, n_owned, [int(r) for r in neighbors], metric))
        out = [None] * n
        for _ in range(n):
            res = self._results.get(timeout=self.timeout)
            if len(res) == 2:
                raise RuntimeError(f"worker {res[0]} failed: {res[1]}") from res[1]
            out[res[0]] = res
        samples, waiting = [], np.empty(n)
        comm_cpu, comm_elapsed = np.empty(n), np.empty(n)
        delivered = []
        for k, (_, _, _, _, t_md, t_emd, c_cpu, c_el, t_el, received) in enumerate(out):
            samples.append(TimingSample(t_md, t_emd, t_md + c_cpu, t_el))
            waiting[k] = t_el - t_emd - c_el
            comm_cpu[k], comm_elapsed[k] = c_cpu, c_el
            delivered.append({m.sender: m.payload for m in received})
        energy = sum(r[2] for r in out)
        return [r[1] for r in out], energy, StepTimings(samples, waiting, comm_cpu, comm_elapsed), delivered
