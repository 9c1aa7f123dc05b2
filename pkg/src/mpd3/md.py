"""
Minimal 2D short-range molecular dynamics in Lennard-Jones reduced units.

Particles live in a structure-of-arrays container (``ParticleSet``). Forces
come from a truncated-and-shifted LJ potential evaluated over a cell list,
and the integrator is velocity Verlet with reflective walls.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import SingularPair

# forward half-shell of neighbor cells: every unordered cell pair visited once
_HALF_SHELL = ((0, 0), (1, 0), (-1, 1), (0, 1), (1, 1))


@dataclass
class Particle:
    id: int
    pos: np.ndarray
    vel: np.ndarray
    species: int = 0


@dataclass
class ParticleSet:
    """Particles stored as parallel arrays, indexed by storage slot.

    ``ids`` carries the global id of the particle in each slot; slots may be
    permuted (see :func:`renumber_particles`) while ids stay attached to
    their particle.
    """

    ids: np.ndarray
    pos: np.ndarray
    vel: np.ndarray
    species: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.pos = np.asarray(self.pos, dtype=float).reshape(-1, 2)
        self.vel = np.asarray(self.vel, dtype=float).reshape(-1, 2)
        self.species = np.asarray(self.species, dtype=np.int64)
        n = len(self.ids)
        if not (len(self.pos) == len(self.vel) == len(self.species) == n):
            raise ValueError("particle arrays have mismatched lengths")

    @classmethod
    def from_positions(cls, pos, vel=None, species=None):
        pos = np.asarray(pos, dtype=float).reshape(-1, 2)
        n = len(pos)
        vel = np.zeros((n, 2)) if vel is None else vel
        species = np.zeros(n, dtype=np.int64) if species is None else species
        return cls(np.arange(n), pos, vel, species)

    @classmethod
    def from_particles(cls, particles):
        particles = list(particles)
        return cls(
            [p.id for p in particles],
            [p.pos for p in particles],
            [p.vel for p in particles],
            [p.species for p in particles],
        )

    def __len__(self):
        return len(self.ids)

    def __getitem__(self, k):
        return Particle(int(self.ids[k]), self.pos[k].copy(), self.vel[k].copy(), int(self.species[k]))

    def copy(self):
        return ParticleSet(self.ids.copy(), self.pos.copy(), self.vel.copy(), self.species.copy())

    def take(self, order):
        """Return a new set with slots permuted by ``order``."""
        order = np.asarray(order)
        return ParticleSet(self.ids[order], self.pos[order], self.vel[order], self.species[order])


@dataclass(frozen=True)
class ForceField:
    epsilon: float = 1.0
    sigma: float = 1.0
    cutoff: float = 2.5
    dt: float = 0.005

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.cutoff <= 0 or self.sigma <= 0:
            raise ValueError("cutoff and sigma must be positive")

    @property
    def shift(self):
        sr6 = (self.sigma / self.cutoff) ** 6
        return 4.0 * self.epsilon * (sr6 * sr6 - sr6)

    @property
    def r_min(self):
        return 2.0 ** (1.0 / 6.0) * self.sigma


@dataclass
class CellMesh:
    """Rectangular bucket grid over an axis-aligned box.

    Cells are at least ``cell_size`` wide in both directions, so any pair
    closer than ``cell_size`` lies in the same or an adjacent cell.
    Positions outside the box are clipped into the border cells.
    """

    cell_size: float
    origin: np.ndarray
    dims: tuple
    lengths: np.ndarray
    cell_of: np.ndarray = field(repr=False)
    order: np.ndarray = field(repr=False)
    start: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, pos, bounds, cell_size):
        if cell_size <= 0:
            raise ValueError("cell_size must be positive")
        pos = np.asarray(pos, dtype=float).reshape(-1, 2)
        xmin, xmax, ymin, ymax = bounds
        width, height = xmax - xmin, ymax - ymin
        nx = max(1, int(width // cell_size))
        ny = max(1, int(height // cell_size))
        lengths = np.array([width / nx, height / ny])
        origin = np.array([xmin, ymin], dtype=float)
        cxy = np.floor((pos - origin) / lengths).astype(np.int64)
        cx = np.clip(cxy[:, 0], 0, nx - 1)
        cy = np.clip(cxy[:, 1], 0, ny - 1)
        cell_of = cy * nx + cx
        order = np.argsort(cell_of, kind="stable")
        counts = np.bincount(cell_of, minlength=nx * ny)
        start = np.concatenate(([0], np.cumsum(counts)))
        return cls(float(cell_size), origin, (nx, ny), lengths, cell_of, order, start)

    @property
    def n_cells(self):
        return self.dims[0] * self.dims[1]

    def cell_coords(self):
        """Per-particle (column, row) cell coordinates."""
        nx = self.dims[0]
        return self.cell_of % nx, self.cell_of // nx

    def bucket(self, c):
        return self.order[self.start[c]:self.start[c + 1]]


def find_pairs(pos, mesh, radius):
    """All index pairs (i, j) with |r_i - r_j| < radius, each pair once.

    Requires ``radius <= mesh.cell_size``. Returns ``(i, j, dr)`` where
    ``dr = pos[i] - pos[j]``.
    """
    if radius > mesh.cell_size * (1 + 1e-12):
        raise ValueError("pair radius exceeds mesh cell size")
    pos = np.asarray(pos, dtype=float)
    nx, ny = mesh.dims
    counts = np.diff(mesh.start)
    cx, cy = mesh.cell_coords()
    r2 = radius * radius
    out_i, out_j, out_d = [], [], []
    for dx, dy in _HALF_SHELL:
        tx, ty = cx + dx, cy + dy
        p = np.flatnonzero((tx >= 0) & (tx < nx) & (ty >= 0) & (ty < ny))
        if p.size == 0:
            continue
        target = ty[p] * nx + tx[p]
        cnt = counts[target]
        total = int(cnt.sum())
        if total == 0:
            continue
        i = np.repeat(p, cnt)
        group_end = np.cumsum(cnt)
        slot = np.arange(total) - np.repeat(group_end - cnt, cnt) + np.repeat(mesh.start[target], cnt)
        j = mesh.order[slot]
        if dx == 0 and dy == 0:
            keep = j > i
            i, j = i[keep], j[keep]
        d = pos[i] - pos[j]
        close = np.einsum("ij,ij->i", d, d) < r2
        out_i.append(i[close])
        out_j.append(j[close])
        out_d.append(d[close])
    if not out_i:
        return np.empty(0, np.int64), np.empty(0, np.int64), np.empty((0, 2))
    return np.concatenate(out_i), np.concatenate(out_j), np.concatenate(out_d)


def pair_forces(dr, ff):
    """Force on the first particle of each pair, and each pair's energy.

    The force on the second particle is exactly the negation.
    """
    dr = np.asarray(dr, dtype=float).reshape(-1, 2)
    r2 = np.einsum("ij,ij->i", dr, dr)
    if r2.size and r2.min() < (1e-6 * ff.sigma) ** 2:
        raise SingularPair(f"particles closer than 1e-6 sigma (r^2 = {r2.min():.3e})")
    inside = r2 < ff.cutoff * ff.cutoff
    sr2 = np.where(inside, ff.sigma * ff.sigma / np.where(inside, r2, 1.0), 0.0)
    sr6 = sr2 * sr2 * sr2
    sr12 = sr6 * sr6
    coef = np.where(inside, 24.0 * ff.epsilon * (2.0 * sr12 - sr6) / np.where(inside, r2, 1.0), 0.0)
    energy = np.where(inside, 4.0 * ff.epsilon * (sr12 - sr6) - ff.shift, 0.0)
    return coef[:, None] * dr, energy


def forces_from_pairs(n, i, j, dr, ff):
    """Accumulate pair forces on ``n`` particles; returns (forces, potential energy)."""
    f, e = pair_forces(dr, ff)
    forces = np.empty((n, 2))
    for k in range(2):
        forces[:, k] = np.bincount(i, f[:, k], n) - np.bincount(j, f[:, k], n)
    return forces, float(e.sum())


def compute_forces(particles, ff, mesh):
    """Cell-list LJ forces; returns (forces (N, 2), potential energy)."""
    if mesh.cell_size < ff.cutoff:
        raise ValueError("mesh cell size smaller than the force cutoff")
    pos = particles.pos
    i, j, dr = find_pairs(pos, mesh, ff.cutoff)
    return forces_from_pairs(len(pos), i, j, dr, ff)


def _default_force_fn(ff, bounds):
    def fn(particles):
        if bounds is None:
            lo, hi = particles.pos.min(axis=0), particles.pos.max(axis=0)
            box = (lo[0], hi[0] + 1e-9, lo[1], hi[1] + 1e-9)
        else:
            box = bounds
        mesh = CellMesh.build(particles.pos, box, ff.cutoff)
        return compute_forces(particles, ff, mesh)
    return fn


def reflect(particles, bounds):
    """Mirror positions that crossed a wall and flip that velocity component."""
    xmin, xmax, ymin, ymax = bounds
    pos, vel = particles.pos, particles.vel
    for k, (lo, hi) in enumerate(((xmin, xmax), (ymin, ymax))):
        low = pos[:, k] < lo
        pos[low, k] = 2 * lo - pos[low, k]
        vel[low, k] = -vel[low, k]
        high = pos[:, k] > hi
        pos[high, k] = 2 * hi - pos[high, k]
        vel[high, k] = -vel[high, k]
    return particles


def verlet_step(particles, forces, ff, bounds=None, force_fn=None):
    """One velocity-Verlet step (unit mass).

    Parameters
    ----------
    particles : ParticleSet
        Current state; not modified.
    forces : ndarray (N, 2)
        Forces at the current positions.
    ff : ForceField
    bounds : tuple, optional
        ``(xmin, xmax, ymin, ymax)`` reflective walls. ``None`` means free space.
    force_fn : callable, optional
        ``force_fn(particles) -> (forces, epot)``. Defaults to a cell-list
        evaluation at the force cutoff.

    Returns
    -------
    (ParticleSet, ndarray, float)
        New state, forces at the new positions, potential energy.
    """
    if force_fn is None:
        force_fn = _default_force_fn(ff, bounds)
    dt = ff.dt
    out = particles.copy()
    out.vel += 0.5 * dt * forces
    out.pos += dt * out.vel
    if bounds is not None:
        reflect(out, bounds)
    new_forces, epot = force_fn(out)
    out.vel += 0.5 * dt * new_forces
    return out, new_forces, epot


def kinetic_energy(particles):
    vel = particles.vel if isinstance(particles, ParticleSet) else np.asarray(particles, dtype=float)
    return 0.5 * float(np.sum(vel * vel))


def renumber_particles(particle_ids, particles, mesh):
    """Reorder one subdomain's particles by (cell row, cell column, current order).

    ``particle_ids`` are storage slots of the MP's particles in their current
    order (a :class:`MaterialParticle` is accepted too). Returns the slots in
    the new order; ``result[k]`` is the slot that moves to position ``k``.
    """
    slots = np.asarray(getattr(particle_ids, "particle_ids", particle_ids), dtype=np.int64)
    cx, cy = mesh.cell_coords()
    perm = np.lexsort((np.arange(slots.size), cx[slots], cy[slots]))
    return slots[perm]


def renumber_order(owner, mesh):
    """Global storage order grouping particles by owner, then cell row/column."""
    owner = np.asarray(owner)
    cx, cy = mesh.cell_coords()
    return np.lexsort((np.arange(owner.size), cx, cy, owner))


def triangular_lattice(nx, ny, spacing, origin=(0.0, 0.0)):
    """Points of a triangular lattice with ``nx`` columns and ``ny`` rows."""
    row_h = spacing * np.sqrt(3.0) / 2.0
    ix, iy = np.meshgrid(np.arange(nx), np.arange(ny))
    x = origin[0] + spacing * (ix + 0.5 * (iy % 2))
    y = origin[1] + row_h * iy
    return np.column_stack((x.ravel(), y.ravel()))


def disk_lattice(center, radius, spacing):
    """Triangular-lattice points inside a disk."""
    n = int(np.ceil(2 * radius / spacing)) + 2
    m = int(np.ceil(2 * radius / (spacing * np.sqrt(3.0) / 2.0))) + 2
    pts = triangular_lattice(n, m, spacing)
    pts -= pts.mean(axis=0)
    inside = np.einsum("ij,ij->i", pts, pts) <= radius * radius
    return pts[inside] + np.asarray(center, dtype=float)
