import numpy as np
import pytest

from mpd3.cluster import (
    CostModel, Link, MeasuredCluster, MessageKind, VirtualCluster, WorkerProfile, barrier_elapsed, exchange,
    local_forces, pairs_per_mp, simulate_step_cost,
)
from mpd3.errors import MigrationAcrossNonNeighbors
from mpd3.geometry import Decomposition, rebuild_neighbor_graph, rectangular_split, settle_initial_tessellation
from mpd3.md import CellMesh, ForceField, ParticleSet, find_pairs, triangular_lattice
from mpd3.oracle import allpairs_force_oracle

COST = CostModel()


def test_dedicated_worker_has_unit_p():
    s = simulate_step_cost(WorkerProfile(0), 1000, 3000, 0, COST).sample
    assert s.t_emd == s.t_md
    assert s.t_md / s.t_emd == 1.0


def test_half_stolen_doubles_emd():
    w = WorkerProfile(0, load_schedule=[(10, 20, 0.5)])
    s = simulate_step_cost(w, 1000, 3000, 15, COST).sample
    assert s.t_emd == pytest.approx(2 * s.t_md, rel=1e-15)
    assert s.t_md / s.t_emd == pytest.approx(0.5)
    # the window is half-open
    assert simulate_step_cost(w, 1000, 3000, 20, COST).sample.t_emd == s.t_md


def test_md_time_linear_in_particles():
    # the pair term is kept negligible so only the per-particle cost matters
    cm = CostModel(c_pair=1e-300)
    t1 = simulate_step_cost(WorkerProfile(0), 500, 7, 0, cm).sample.t_md
    t2 = simulate_step_cost(WorkerProfile(0), 1000, 7, 0, cm).sample.t_md
    assert t2 == pytest.approx(2 * t1, rel=1e-15)


def test_speed_scales_md_time():
    slow = simulate_step_cost(WorkerProfile(0, speed=1.0), 800, 2000, 0, COST).sample.t_md
    fast = simulate_step_cost(WorkerProfile(1, speed=1.5), 800, 2000, 0, COST).sample.t_md
    assert slow == pytest.approx(1.5 * fast)


def test_comm_cost_uses_link():
    w = WorkerProfile(0, links={1: Link(latency=1e-3, bandwidth=1e6)})
    c = simulate_step_cost(w, 10, 10, 0, COST, {1: 2000.0, 2: 0.0})
    assert c.comm_cpu == pytest.approx(COST.c_msg_cpu * 2000 * COST.time_unit)
    assert c.comm_elapsed == pytest.approx(c.comm_cpu + 1e-3 + 2000 / 1e6)
    assert c.sample.t_work == pytest.approx(c.sample.t_md + c.comm_cpu)


def test_barrier_identical_workers_do_not_wait():
    costs = [simulate_step_cost(WorkerProfile(k), 1000, 3000, 0, COST) for k in range(4)]
    t = barrier_elapsed(costs)
    assert np.array_equal(t.waiting, np.zeros(4))
    assert all(s.t_elapsed == costs[0].sample.t_emd for s in t.samples)


def test_barrier_fast_workers_wait_for_slow_one():
    workers = [WorkerProfile(0, speed=0.5), WorkerProfile(1), WorkerProfile(2)]
    costs = [simulate_step_cost(w, 1000, 3000, 0, COST) for w in workers]
    t = barrier_elapsed(costs)
    excess = costs[0].sample.t_emd - costs[1].sample.t_emd
    assert t.waiting[0] == 0.0
    np.testing.assert_allclose(t.waiting[1:], excess, rtol=1e-15)
    assert excess == pytest.approx(costs[1].sample.t_emd)


def test_worker_validation():
    with pytest.raises(ValueError):
        WorkerProfile(0, speed=0.0)
    with pytest.raises(ValueError):
        WorkerProfile(0, load_schedule=[(0, 5, 1.0)])
    with pytest.raises(ValueError):
        Link(latency=0.0)


def _crystal(n_mp=4, columns=60, rows=8):
    pos = triangular_lattice(columns, rows, 2 ** (1 / 6), origin=(1.0, 1.0))
    particles = ParticleSet.from_positions(pos)
    bounds = (0.0, pos[:, 0].max() + 1, 0.0, pos[:, 1].max() + 1)
    decomp, _ = settle_initial_tessellation(rectangular_split(pos, (n_mp, 1), bounds), particles)
    decomp.neighbors = rebuild_neighbor_graph(decomp, particles, 2.8)
    mesh = CellMesh.build(pos, bounds, 2.8)
    i, j, _ = find_pairs(pos, mesh, 2.8)
    return particles, decomp, (i, j)


def test_static_crystal_has_no_migrations():
    particles, decomp, pairs = _crystal()
    ex = exchange(decomp, particles, pairs, np.ones(4))
    assert ex.migrations == 0
    assert np.array_equal(ex.owner, decomp.owner)
    assert [list(n) for n in ex.neighbors] == [list(n) for n in decomp.neighbors]


def test_moved_center_pulls_particle_across():
    particles, decomp, pairs = _crystal(n_mp=2)
    boundary = particles.pos[decomp.owner == 0, 0].max()
    slot = np.flatnonzero((decomp.owner == 0) & (particles.pos[:, 0] == boundary))[0]
    moved = decomp.copy()
    moved.centers[1] = particles.pos[slot] + (0.3, 0.0)
    ex = exchange(moved, particles, pairs)
    assert ex.owner[slot] == 1
    assert ex.migrations == int(np.count_nonzero(ex.owner != decomp.owner))
    mig = [m for m in ex.messages if m.kind is MessageKind.MIGRATE_PARTICLES]
    assert mig and all(m.sender == 0 and m.receiver == 1 for m in mig)
    assert particles.ids[slot] in mig[0].payload


def test_exchange_conserves_particles():
    rng = np.random.default_rng(8)
    particles, decomp, pairs = _crystal(n_mp=6)
    moved = decomp.copy()
    moved.centers += rng.uniform(-1.5, 1.5, moved.centers.shape)
    ex = exchange(moved, particles, pairs)
    assert np.bincount(ex.owner, minlength=6).sum() == len(particles)
    assert ex.owner.shape == decomp.owner.shape


def test_metrics_reach_only_neighbors():
    particles, decomp, pairs = _crystal(n_mp=4)
    w = np.array([0.9, 0.8, 0.7, 0.6])
    ex = exchange(decomp, particles, pairs, w)
    for r in range(4):
        assert sorted(ex.delivered[r]) == sorted(int(s) for s in decomp.neighbors[r])
        for s, (ws, center) in ex.delivered[r].items():
            assert ws == w[s]
            assert np.array_equal(center, decomp.centers[s])
    assert 3 not in ex.delivered[0]


def test_ghosts_are_foreign_particles_near_the_boundary():
    particles, decomp, pairs = _crystal(n_mp=3)
    ex = exchange(decomp, particles, pairs)
    for k, g in enumerate(ex.ghosts):
        assert len(g) > 0
        assert np.all(ex.owner[g] != k)
    # a ghost of MP 0 is within reach of one of its own particles
    own = particles.pos[ex.owner == 0]
    d = np.sqrt(((particles.pos[ex.ghosts[0]][:, None] - own[None]) ** 2).sum(-1)).min(axis=1)
    assert d.max() < 2.8


def test_far_target_hops_through_neighbor():
    pos = np.array([[0.5, 0.5], [1.5, 0.5], [2.5, 0.5]])
    particles = ParticleSet.from_positions(pos)
    # path graph 0 - 1 - 2; the particle in MP 0 now belongs to MP 2
    nb = [np.array([1]), np.array([0, 2]), np.array([1])]
    decomp = Decomposition([(3.0, 0.5), (2.0, 0.5), (0.4, 0.5)], [0, 1, 2], (0, 4, 0, 1), neighbors=nb)
    empty = (np.array([], dtype=np.int64), np.array([], dtype=np.int64))
    ex = exchange(decomp, particles, empty, step=0)
    assert ex.owner[0] == 1
    assert 0 in ex.pending
    with pytest.raises(MigrationAcrossNonNeighbors):
        exchange(decomp, particles, empty, step=3, pending={0: 0})


def test_pairs_per_mp_counts_cross_pairs_on_both_sides():
    owner = np.array([0, 0, 1, 1])
    i, j = np.array([0, 1, 2]), np.array([1, 2, 3])
    assert pairs_per_mp(owner, i, j, 2).tolist() == [2, 2]


def test_virtual_cluster_is_deterministic():
    workers = [WorkerProfile(0), WorkerProfile(1, speed=1.5, load_schedule=[(0, 10, 0.3)])]
    traffic = np.array([[0.0, 800.0], [800.0, 0.0]])
    a = VirtualCluster(workers).step_timings(3, [500, 600], [1400, 1500], traffic)
    b = VirtualCluster(workers).step_timings(3, [500, 600], [1400, 1500], traffic)
    assert a.samples == b.samples and np.array_equal(a.waiting, b.waiting)
    for s, wait, comm in zip(a.samples, a.waiting, a.comm_elapsed):
        assert s.t_md <= s.t_emd <= s.t_elapsed
        assert s.t_emd + comm + wait == pytest.approx(s.t_elapsed, rel=1e-12)
        assert 0 < s.t_work / (s.t_md / s.t_emd * s.t_elapsed) <= 1


def test_local_forces_match_oracle():
    rng = np.random.default_rng(1)
    pos = triangular_lattice(12, 12, 1.12) + rng.uniform(-0.05, 0.05, (144, 2))
    ff = ForceField()
    owned = pos[:, 0] < 7
    ghosts = ~owned & (pos[:, 0] < 7 + ff.cutoff + 0.1)
    local = np.vstack((pos[owned], pos[ghosts]))
    f, _, _ = local_forces(local, int(owned.sum()), ff)
    ref, _ = allpairs_force_oracle(pos, ff)
    np.testing.assert_allclose(f, ref[owned], atol=1e-12)


def test_measured_cluster_step():
    rng = np.random.default_rng(2)
    pos = triangular_lattice(16, 6, 1.12) + rng.uniform(-0.03, 0.03, (96, 2))
    ff = ForceField()
    left = np.flatnonzero(pos[:, 0] < 9)
    right = np.flatnonzero(pos[:, 0] >= 9)
    tasks = [
        (np.vstack((pos[left], pos[right])), len(left), [1]),
        (np.vstack((pos[right], pos[left])), len(right), [0]),
    ]
    workers = [WorkerProfile(0, load_schedule=[(0, 5, 0.5)]), WorkerProfile(1, speed=2.0)]
    with MeasuredCluster(workers, ff) as cluster:
        parts, energy, timings, delivered = cluster.step(0, tasks, [0.4, 0.9])
    ref_f, ref_e = allpairs_force_oracle(pos, ff)
    np.testing.assert_allclose(parts[0], ref_f[left], atol=1e-12)
    np.testing.assert_allclose(parts[1], ref_f[right], atol=1e-12)
    assert energy == pytest.approx(ref_e, rel=1e-12)
    assert delivered == [{1: 0.9}, {0: 0.4}]
    for s in timings.samples:
        assert 0 < s.t_md <= s.t_emd <= s.t_elapsed
