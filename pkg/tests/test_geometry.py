import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mpd3.errors import CoincidentCenters, EmptySubdomain, NoConvergence
from mpd3.geometry import (
    Decomposition, assign_by_midplanes, compute_center, compute_linear_size, rebuild_neighbor_graph,
    rectangle_edges, rectangle_owner, rectangular_split, settle_initial_tessellation,
)
from mpd3.md import ParticleSet, triangular_lattice
from mpd3.oracle import allpairs_neighbor_graph, nearest_center_oracle


def test_center_of_two_points():
    assert np.array_equal(compute_center([(0, 0), (2, 0)]), [1, 0])


def test_center_of_single_point():
    assert np.array_equal(compute_center([(3, 4)]), [3, 4])


def test_center_of_triangle():
    # hand summation: x = (0 + 1 + 0) / 3, y = (0 + 0 + 3) / 3
    np.testing.assert_allclose(compute_center([(0, 0), (1, 0), (0, 3)]), [1 / 3, 1.0], rtol=0, atol=1e-15)


def test_center_of_nothing():
    with pytest.raises(EmptySubdomain):
        compute_center(np.empty((0, 2)))


def test_midplane_strictly_nearer():
    assert assign_by_midplanes([(0, 0), (10, 0)], [(2, 1)]).tolist() == [0]


def test_midplane_tie_goes_to_lower_id():
    assert assign_by_midplanes([(0, 0), (10, 0)], [(5, 3)]).tolist() == [0]
    assert assign_by_midplanes([(10, 0), (0, 0)], [(5, 3)]).tolist() == [0]


def test_midplane_matches_brute_force():
    rng = np.random.default_rng(5)
    centers = rng.uniform(0, 100, (5, 2))
    pos = rng.uniform(0, 100, (200, 2))
    expected = np.argmin(((pos[:, None, :] - centers[None]) ** 2).sum(axis=2), axis=1)
    assert np.array_equal(assign_by_midplanes(centers, pos), expected)


def test_coincident_centers_rejected():
    with pytest.raises(CoincidentCenters):
        assign_by_midplanes([(1, 1), (2, 2), (1, 1)], [(0, 0)])


@settings(max_examples=60, deadline=None)
@given(
    n_mp=st.integers(1, 16),
    n=st.integers(1, 2000),
    seed=st.integers(0, 2**32 - 1),
)
def test_midplane_equals_oracle(n_mp, n, seed):
    rng = np.random.default_rng(seed)
    centers = rng.uniform(-50, 50, (n_mp, 2))
    pos = rng.uniform(-60, 60, (n, 2))
    owner = assign_by_midplanes(centers, pos)
    assert np.array_equal(owner, nearest_center_oracle(centers, pos))
    assert owner.min() >= 0 and owner.max() < n_mp


@settings(max_examples=30, deadline=None)
@given(shift=st.tuples(st.integers(-64, 64), st.integers(-64, 64)), seed=st.integers(0, 1000))
def test_translation_equivariance(shift, seed):
    # integer shifts keep the arithmetic exact, so ownership must not move at all
    rng = np.random.default_rng(seed)
    centers = np.round(rng.uniform(0, 100, (6, 2)), 3)
    pos = np.round(rng.uniform(0, 100, (300, 2)), 3)
    d = np.array(shift, dtype=float)
    owner = assign_by_midplanes(centers, pos)
    assert np.array_equal(owner, assign_by_midplanes(centers + d, pos + d))
    for k in range(6):
        if np.any(owner == k):
            np.testing.assert_allclose(compute_center(pos[owner == k] + d), compute_center(pos[owner == k]) + d,
                                       atol=1e-9)


def test_linear_size_bounding_box():
    pts = [(0, 0), (4, 0), (2, 1), (1, 0.5)]
    assert compute_linear_size(pts, 100.0, 4) == 4.0


def test_linear_size_fallbacks():
    assert compute_linear_size(np.empty((0, 2)), 100.0 * 100.0, 4) == 50.0
    assert compute_linear_size([(7, 7)], 100.0 * 100.0, 4) == 50.0


def _strip(n_mp, columns=80, rows=10):
    pos = triangular_lattice(columns, rows, 2 ** (1 / 6), origin=(1.0, 1.0))
    bounds = (0.0, pos[:, 0].max() + 1.0, 0.0, pos[:, 1].max() + 1.0)
    decomp = rectangular_split(pos, (n_mp, 1), bounds)
    return ParticleSet.from_positions(pos), decomp


def test_strip_neighbor_graph_is_a_path():
    particles, decomp = _strip(8)
    graph = rebuild_neighbor_graph(decomp, particles, 2.8)
    expected = allpairs_neighbor_graph(decomp.owner, particles.pos, 2.8)
    assert [list(g) for g in graph] == expected
    degrees = [len(g) for g in graph]
    assert degrees == [1, 2, 2, 2, 2, 2, 2, 1]
    for k in range(7):
        assert k + 1 in graph[k]


def test_far_clouds_are_not_neighbors():
    pos = np.vstack((np.zeros((3, 2)) + [[0, 0], [1, 0], [0, 1]], np.array([[30, 0], [31, 0], [30, 1]])))
    decomp = Decomposition([(0.3, 0.3), (30.3, 0.3)], [0, 0, 0, 1, 1, 1], (-1, 40, -1, 5))
    graph = rebuild_neighbor_graph(decomp, pos, 3.0)
    assert [len(g) for g in graph] == [0, 0]


def test_dense_interface_gives_edge():
    particles, decomp = _strip(2)
    graph = rebuild_neighbor_graph(decomp, particles, 2.8)
    assert list(graph[0]) == [1] and list(graph[1]) == [0]


@settings(max_examples=25, deadline=None)
@given(n_mp=st.integers(2, 12), seed=st.integers(0, 10_000))
def test_neighbor_graph_symmetric_irreflexive(n_mp, seed):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(0, 30, (300, 2))
    owner = nearest_center_oracle(rng.uniform(0, 30, (n_mp, 2)), pos)
    decomp = Decomposition(np.zeros((n_mp, 2)) + np.arange(n_mp)[:, None], owner, (0, 30, 0, 30))
    graph = rebuild_neighbor_graph(decomp, pos, 2.5)
    for i, nb in enumerate(graph):
        assert i not in nb
        for j in nb:
            assert i in graph[j]


def test_settle_at_fixpoint_takes_one_sweep():
    particles, decomp = _strip(4)
    settled, iters = settle_initial_tessellation(decomp, particles)
    again, iters2 = settle_initial_tessellation(settled, particles)
    assert iters2 == 1
    assert np.array_equal(again.owner, settled.owner)


def test_settled_bar_matches_oracle():
    particles, decomp = _strip(4, columns=120, rows=16)
    settled, _ = settle_initial_tessellation(decomp, particles)
    assert np.array_equal(settled.owner, nearest_center_oracle(settled.centers, particles.pos))


def test_settle_reports_no_convergence():
    rng = np.random.default_rng(3)
    pos = rng.uniform(0, 100, (2000, 2))
    decomp = rectangular_split(pos, (4, 4), (0, 100, 0, 100))
    with pytest.raises(NoConvergence) as info:
        settle_initial_tessellation(decomp, pos, max_iters=1)
    assert info.value.decomposition is not None


def test_x_only_settle_keeps_heights():
    rng = np.random.default_rng(0)
    pos = rng.uniform(0, 10, (400, 2))
    decomp = rectangular_split(pos, (4, 1), (0, 10, 0, 10), x_only=True)
    y0 = decomp.centers[:, 1].copy()
    settled, _ = settle_initial_tessellation(decomp, pos)
    assert np.array_equal(settled.centers[:, 1], y0)


def test_rectangular_split_is_balanced_partition():
    rng = np.random.default_rng(1)
    pos = rng.uniform(0, 10, (1003, 2))
    decomp = rectangular_split(pos, (3, 2), (0, 10, 0, 10))
    counts = decomp.counts()
    assert counts.sum() == 1003
    assert counts.max() - counts.min() <= 1


def test_rectangle_owner_reproduces_split():
    pos = triangular_lattice(30, 12, 1.1)
    decomp = rectangular_split(pos, (3, 2), (0, 40, 0, 20))
    edges = rectangle_edges(pos, decomp.owner, (3, 2))
    owner = rectangle_owner(pos, edges)
    assert np.bincount(owner, minlength=6).sum() == len(pos)
    assert np.mean(owner == decomp.owner) > 0.95


def test_material_particles_partition_ids():
    particles, decomp = _strip(3)
    mps = decomp.material_particles(particles)
    ids = np.concatenate([mp.particle_ids for mp in mps])
    assert np.array_equal(np.sort(ids), np.sort(particles.ids))
    assert all(mp.linear_size > 0 for mp in mps)
