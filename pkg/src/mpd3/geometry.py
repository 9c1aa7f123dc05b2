"""
Voronoi (material-particle) tessellation of a particle system.

Each subdomain is identified by its center; a particle belongs to the
subdomain whose center is nearest, which is what applying the pairwise
midplane rule over every pair of centers yields. Ownership is stored as an
integer array aligned with the storage slots of a :class:`~mpd3.md.ParticleSet`.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import CoincidentCenters, EmptySubdomain, NoConvergence
from .md import CellMesh, find_pairs


@dataclass
class MaterialParticle:
    id: int
    center: np.ndarray
    particle_ids: np.ndarray
    linear_size: float
    owner: int

    @property
    def n_particles(self):
        return int(self.particle_ids.size)


@dataclass
class Decomposition:
    """Centers, ownership and neighbor graph of all material particles."""

    centers: np.ndarray
    owner: np.ndarray
    domain_bounds: tuple
    neighbors: list = field(default_factory=list)
    step: int = 0
    x_only: bool = False
    workers: np.ndarray = None

    def __post_init__(self):
        self.centers = np.array(self.centers, dtype=float).reshape(-1, 2)
        self.owner = np.asarray(self.owner, dtype=np.int64)
        self.domain_bounds = tuple(float(b) for b in self.domain_bounds)
        if not np.all(np.isfinite(self.centers)):
            raise ValueError("centers must be finite")
        if self.workers is None:
            self.workers = np.arange(len(self.centers))
        if not self.neighbors:
            self.neighbors = [np.empty(0, np.int64) for _ in range(len(self.centers))]

    @property
    def n_mp(self):
        return len(self.centers)

    @property
    def domain_area(self):
        xmin, xmax, ymin, ymax = self.domain_bounds
        return (xmax - xmin) * (ymax - ymin)

    def copy(self):
        return Decomposition(
            self.centers.copy(), self.owner.copy(), self.domain_bounds,
            [n.copy() for n in self.neighbors], self.step, self.x_only, self.workers.copy(),
        )

    def counts(self):
        return np.bincount(self.owner, minlength=self.n_mp)

    def degree(self):
        return np.array([len(n) for n in self.neighbors])

    def material_particles(self, particles):
        sizes = linear_sizes(self, particles.pos)
        return [
            MaterialParticle(i, self.centers[i].copy(), particles.ids[self.owner == i],
                             float(sizes[i]), int(self.workers[i]))
            for i in range(self.n_mp)
        ]


def compute_center(points):
    """Arithmetic mean of the positions, shape (2,)."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise EmptySubdomain("cannot place the center of an empty subdomain")
    return pts.mean(axis=0)


def subdomain_centers(pos, owner, previous):
    """Center of mass of every subdomain; empty ones keep ``previous``."""
    previous = np.asarray(previous, dtype=float)
    n_mp = len(previous)
    counts = np.bincount(owner, minlength=n_mp)
    centers = previous.copy()
    filled = counts > 0
    for k in range(2):
        sums = np.bincount(owner, pos[:, k], n_mp)
        centers[filled, k] = sums[filled] / counts[filled]
    return centers


def check_distinct(centers):
    centers = np.asarray(centers, dtype=float)
    if len(centers) < 2:
        return
    d = centers[:, None, :] - centers[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", d, d)
    np.fill_diagonal(d2, np.inf)
    if d2.min() == 0.0:
        i, j = np.argwhere(d2 == 0.0)[0]
        raise CoincidentCenters(f"centers {i} and {j} coincide at {tuple(centers[i])}")


def assign_by_midplanes(centers, pos):
    """Owner of every position under the pairwise-midplane rule.

    For each particle the running winner ``b`` is challenged by every other
    center ``j`` in id order; ``j`` wins only if the particle lies strictly on
    its side of the plane through ``(R_b + R_j)/2`` normal to ``R_j - R_b``.
    Ties therefore go to the lower id.
    """
    if isinstance(centers, Decomposition):
        centers = centers.centers
    centers = np.asarray(centers, dtype=float).reshape(-1, 2)
    pos = getattr(pos, "pos", pos)
    pos = np.asarray(pos, dtype=float).reshape(-1, 2)
    check_distinct(centers)
    px, py = np.ascontiguousarray(pos[:, 0]), np.ascontiguousarray(pos[:, 1])
    cx, cy = centers[:, 0], centers[:, 1]
    best = np.zeros(len(pos), dtype=np.int64)
    bx, by = np.full(len(pos), cx[0]), np.full(len(pos), cy[0])
    for j in range(1, len(centers)):
        side = (px - 0.5 * (bx + cx[j])) * (cx[j] - bx) + (py - 0.5 * (by + cy[j])) * (cy[j] - by)
        wins = side > 0
        best[wins] = j
        bx[wins] = cx[j]
        by[wins] = cy[j]
    return best


def neighbor_graph_from_pairs(owner, i, j, n_mp):
    """Adjacency lists from particle pairs straddling two subdomains."""
    oi, oj = owner[i], owner[j]
    cross = oi != oj
    a = np.concatenate((oi[cross], oj[cross]))
    b = np.concatenate((oj[cross], oi[cross]))
    edge = np.unique(a * n_mp + b)
    src, dst = edge // n_mp, edge % n_mp
    bounds = np.searchsorted(src, np.arange(n_mp + 1))
    return [dst[bounds[k]:bounds[k + 1]] for k in range(n_mp)]


def rebuild_neighbor_graph(decomp, particles, cutoff):
    """MPs i, j are neighbors iff some pair of their particles is closer than ``cutoff``."""
    if cutoff <= 0:
        raise ValueError("cutoff must be positive")
    pos = getattr(particles, "pos", particles)
    mesh = CellMesh.build(pos, decomp.domain_bounds, cutoff)
    i, j, _ = find_pairs(pos, mesh, cutoff)
    return neighbor_graph_from_pairs(decomp.owner, i, j, decomp.n_mp)


def fallback_size(domain_area, n_mp):
    return float(np.sqrt(domain_area / n_mp))


def compute_linear_size(points, domain_area, n_mp):
    """Largest bounding-box extent of a subdomain's particles.

    Fewer than two particles give ``sqrt(domain_area / n_mp)``.
    """
    pts = np.asarray(getattr(points, "pos", points), dtype=float).reshape(-1, 2)
    if len(pts) < 2:
        return fallback_size(domain_area, n_mp)
    extent = pts.max(axis=0) - pts.min(axis=0)
    size = float(extent.max())
    return size if size > 0 else fallback_size(domain_area, n_mp)


def linear_sizes(decomp, pos):
    return np.array([
        compute_linear_size(pos[decomp.owner == i], decomp.domain_area, decomp.n_mp)
        for i in range(decomp.n_mp)
    ])


def rectangular_split(pos, grid, bounds, x_only=False):
    """Initial ownership: ``grid = (nx, ny)`` rectangles of equal particle count.

    Particles are cut into ``nx`` vertical slabs by x rank, then each slab into
    ``ny`` pieces by y rank. MP ids run row-major from the lower-left corner.
    """
    pos = np.asarray(getattr(pos, "pos", pos), dtype=float)
    nx, ny = grid
    n = len(pos)
    if n < nx * ny:
        raise EmptySubdomain("fewer particles than subdomains")
    owner = np.empty(n, dtype=np.int64)
    by_x = np.lexsort((pos[:, 1], pos[:, 0]))
    for cx, slab in enumerate(np.array_split(by_x, nx)):
        by_y = slab[np.lexsort((pos[slab, 0], pos[slab, 1]))]
        for cy, piece in enumerate(np.array_split(by_y, ny)):
            owner[piece] = cy * nx + cx
    centers = subdomain_centers(pos, owner, np.zeros((nx * ny, 2)))
    return Decomposition(centers, owner, bounds, x_only=x_only)


def settle_initial_tessellation(decomp, particles, max_iters=200):
    """Alternate center-of-mass placement and midplane assignment to a fixpoint.

    Returns ``(decomposition, iterations)``; the last iteration is the one
    that changed no owner. With ``x_only`` the centers keep their y
    coordinate. Raises :class:`NoConvergence` (carrying the last state) if
    ``max_iters`` sweeps all changed ownership.
    """
    pos = getattr(particles, "pos", particles)
    out = decomp.copy()
    for it in range(1, max_iters + 1):
        centers = subdomain_centers(pos, out.owner, out.centers)
        if out.x_only:
            centers[:, 1] = out.centers[:, 1]
        owner = assign_by_midplanes(centers, pos)
        changes = int(np.count_nonzero(owner != out.owner))
        out.centers, out.owner = centers, owner
        if changes == 0:
            return out, it
    raise NoConvergence(f"ownership still changing after {max_iters} sweeps", out, max_iters)


def rectangle_edges(pos, owner, grid):
    """Fixed box boundaries implied by a :func:`rectangular_split` ownership.

    Returns ``(x_edges, y_edges)``: ``nx - 1`` interior x cuts and, per slab,
    ``ny - 1`` interior y cuts, each halfway between neighboring boxes.
    """
    pos = np.asarray(getattr(pos, "pos", pos), dtype=float)
    nx, ny = grid
    col, row = owner % nx, owner // nx
    x_edges = np.array([
        0.5 * (pos[col == k, 0].max() + pos[col == k + 1, 0].min()) for k in range(nx - 1)
    ])
    y_edges = []
    for k in range(nx):
        in_slab = col == k
        y_edges.append(np.array([
            0.5 * (pos[in_slab & (row == r), 1].max() + pos[in_slab & (row == r + 1), 1].min())
            for r in range(ny - 1)
        ]))
    return x_edges, y_edges


def rectangle_owner(pos, edges):
    """Owner of each position under fixed boxes from :func:`rectangle_edges`."""
    pos = np.asarray(getattr(pos, "pos", pos), dtype=float)
    x_edges, y_edges = edges
    nx = len(x_edges) + 1
    col = np.searchsorted(x_edges, pos[:, 0], side="right")
    row = np.zeros(len(pos), dtype=np.int64)
    for k in range(nx):
        in_slab = col == k
        row[in_slab] = np.searchsorted(y_edges[k], pos[in_slab, 1], side="right")
    return row * nx + col
