"""
Scenario files.

A scenario is an INI file with the sections below; every key is optional
unless marked required.

``[scenario]``
    ``name`` (required), ``n_steps``, ``mode`` (``mpd3``, ``static_rect``,
    ``voronoi_frozen``), ``dimensionality`` (``free_2d`` or
    ``centers_move_x_only``), ``seed``, ``snapshot_every``,
    ``renumber_every``, ``settle_max_iters``
``[domain]``
    ``bounds`` = ``xmin xmax ymin ymax`` (required)
``[particles]``
    ``init`` = ``crystal_bar`` | ``two_cylinders`` | ``file`` (required);
    crystal bar: ``columns``, ``rows``, ``origin``; two cylinders:
    ``left_center``, ``left_radius``, ``right_center``, ``right_radius``,
    ``speed``; file: ``path`` (CSV with ``x,y`` and optional ``vx,vy``
    columns, relative to the scenario file); all: ``spacing``,
    ``temperature``
``[workers]``
    ``count`` (required), ``grid`` = ``nx ny`` initial rectangles,
    ``speeds`` (one per worker, or a single value), ``latency``,
    ``bandwidth``, ``load`` = ``worker:start:end:fraction`` entries
    separated by ``;``
``[forcefield]``
    ``epsilon``, ``sigma``, ``cutoff``, ``dt``, ``skin``
``[balance]``
    ``a``, ``smoothing_alpha``, ``imbalance_tolerance``
``[cost]``
    ``c_particle``, ``c_pair``, ``c_msg_cpu``, ``time_unit``
"""

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .balance import BalanceConfig
from .cluster import CostModel, Link, WorkerProfile
from .errors import ScenarioError
from .md import ForceField, ParticleSet, disk_lattice, triangular_lattice

MODES = ("mpd3", "static_rect", "voronoi_frozen")
MODE_ALIASES = {"static": "static_rect", "frozen": "voronoi_frozen"}
DIMENSIONALITY = ("free_2d", "centers_move_x_only")
LJ_SPACING = 2.0 ** (1.0 / 6.0)


@dataclass
class Scenario:
    name: str
    domain_bounds: tuple
    particle_init: str
    init_params: dict = field(default_factory=dict)
    n_workers: int = 1
    grid: tuple = (1, 1)
    workers: list = field(default_factory=list)
    forcefield: ForceField = field(default_factory=ForceField)
    skin: float = 0.3
    balance: BalanceConfig = field(default_factory=BalanceConfig)
    cost: CostModel = field(default_factory=CostModel)
    n_steps: int = 100
    mode: str = "mpd3"
    dimensionality: str = "free_2d"
    seed: int = 0
    snapshot_every: int = 0
    renumber_every: int = 25
    settle_max_iters: int = 200
    base_dir: Path = None

    def __post_init__(self):
        self.mode = MODE_ALIASES.get(self.mode, self.mode)
        self.validate()

    def validate(self):
        if self.n_workers < 1:
            raise ScenarioError("n_workers must be at least 1")
        if self.n_steps < 1:
            raise ScenarioError("n_steps must be at least 1")
        if self.mode not in MODES:
            raise ScenarioError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.dimensionality not in DIMENSIONALITY:
            raise ScenarioError(f"unknown dimensionality {self.dimensionality!r}")
        if self.grid[0] * self.grid[1] != self.n_workers:
            raise ScenarioError(f"grid {self.grid} does not give {self.n_workers} subdomains")
        if len(self.workers) != self.n_workers:
            raise ScenarioError("need one worker profile per worker")
        xmin, xmax, ymin, ymax = self.domain_bounds
        if not (xmax > xmin and ymax > ymin):
            raise ScenarioError(f"empty domain {self.domain_bounds}")
        if self.particle_init not in ("crystal_bar", "two_cylinders", "file"):
            raise ScenarioError(f"unknown particle init {self.particle_init!r}")

    @property
    def x_only(self):
        return self.dimensionality == "centers_move_x_only"

    @property
    def list_radius(self):
        return self.forcefield.cutoff + self.skin

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_load(self, worker, start, end, fraction):
        """Copy with an extra external-load window on one worker."""
        workers = [dataclasses.replace(w, load_schedule=list(w.load_schedule)) for w in self.workers]
        workers[worker].load_schedule.append((start, end, fraction))
        return self.replace(workers=workers)

    def with_speeds(self, speeds):
        workers = [dataclasses.replace(w, speed=float(s)) for w, s in zip(self.workers, speeds)]
        return self.replace(workers=workers)

    def build_particles(self, seed=None):
        """Initial particle state; velocities get a seeded thermal part."""
        seed = self.seed if seed is None else seed
        p = self.init_params
        spacing = float(p.get("spacing", LJ_SPACING))
        vel = None
        if self.particle_init == "crystal_bar":
            origin = p.get("origin", (self.domain_bounds[0] + 2.0, self.domain_bounds[2] + 2.0))
            pos = triangular_lattice(int(p.get("columns", 40)), int(p.get("rows", 10)), spacing, origin)
            species = np.zeros(len(pos), dtype=np.int64)
        elif self.particle_init == "two_cylinders":
            left = disk_lattice(p["left_center"], float(p["left_radius"]), spacing)
            right = disk_lattice(p["right_center"], float(p["right_radius"]), spacing)
            pos = np.vstack((left, right))
            speed = float(p.get("speed", 0.0))
            vel = np.vstack((np.tile([speed, 0.0], (len(left), 1)), np.tile([-speed, 0.0], (len(right), 1))))
            species = np.concatenate((np.zeros(len(left), np.int64), np.ones(len(right), np.int64)))
        else:
            path = Path(p["path"])
            if not path.is_absolute() and self.base_dir is not None:
                path = self.base_dir / path
            data = np.genfromtxt(path, delimiter=",", names=True)
            pos = np.column_stack((data["x"], data["y"]))
            if "vx" in data.dtype.names:
                vel = np.column_stack((data["vx"], data["vy"]))
            species = np.zeros(len(pos), dtype=np.int64)
        if vel is None:
            vel = np.zeros_like(pos)
        temperature = float(p.get("temperature", 0.0))
        if temperature > 0:
            rng = np.random.default_rng(seed)
            vel = vel + rng.normal(0.0, np.sqrt(temperature), size=pos.shape)
        xmin, xmax, ymin, ymax = self.domain_bounds
        if pos[:, 0].min() < xmin or pos[:, 0].max() > xmax or pos[:, 1].min() < ymin or pos[:, 1].max() > ymax:
            raise ScenarioError("initial particles fall outside the domain")
        return ParticleSet(np.arange(len(pos)), pos, vel, species)


def _floats(text, n=None, key="value"):
    try:
        vals = [float(v) for v in text.replace(",", " ").split()]
    except ValueError as exc:
        raise ScenarioError(f"{key}: expected numbers, got {text!r}") from exc
    if n is not None and len(vals) != n:
        raise ScenarioError(f"{key}: expected {n} numbers, got {len(vals)}")
    return vals


def _load_schedule(text, n_workers):
    schedules = [[] for _ in range(n_workers)]
    for entry in filter(None, (e.strip() for e in text.split(";"))):
        try:
            w, start, end, lam = entry.split(":")
            w, start, end, lam = int(w), int(start), int(end), float(lam)
        except ValueError as exc:
            raise ScenarioError(f"load entry {entry!r} is not worker:start:end:fraction") from exc
        if not 0 <= w < n_workers:
            raise ScenarioError(f"load entry {entry!r} names unknown worker {w}")
        schedules[w].append((start, end, lam))
    return schedules


def parse_scenario(text, base_dir=None):
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ScenarioError(f"malformed scenario file: {exc}") from exc

    def get(section, key, default=None, conv=str):
        if not cp.has_option(section, key):
            if default is None:
                raise ScenarioError(f"missing required key [{section}] {key}")
            return default
        raw = cp.get(section, key)
        try:
            return conv(raw)
        except ValueError as exc:
            raise ScenarioError(f"[{section}] {key}: cannot parse {raw!r}") from exc

    for section in ("scenario", "domain", "particles", "workers"):
        if not cp.has_section(section):
            raise ScenarioError(f"missing section [{section}]")

    n_workers = get("workers", "count", conv=int)
    speeds = _floats(get("workers", "speeds", "1.0"), key="speeds")
    if len(speeds) == 1:
        speeds = speeds * n_workers
    if len(speeds) != n_workers:
        raise ScenarioError(f"speeds: expected {n_workers} values, got {len(speeds)}")
    link = Link(get("workers", "latency", 1e-4, float), get("workers", "bandwidth", 12.5e6, float))
    schedules = _load_schedule(get("workers", "load", ""), n_workers) if cp.has_option("workers", "load") \
        else [[] for _ in range(n_workers)]
    try:
        workers = [WorkerProfile(k, speeds[k], schedules[k], default_link=link) for k in range(n_workers)]
    except ValueError as exc:
        raise ScenarioError(str(exc)) from exc
    grid = tuple(int(v) for v in _floats(get("workers", "grid", f"{n_workers} 1"), 2, "grid"))

    init = get("particles", "init")
    params = {}
    for key, value in cp.items("particles"):
        if key == "init":
            continue
        if key == "path":
            params[key] = value
        else:
            nums = _floats(value, key=key)
            params[key] = nums[0] if len(nums) == 1 else tuple(nums)

    def section_floats(name, cls):
        if not cp.has_section(name):
            return cls()
        try:
            kwargs = {k: float(v) for k, v in cp.items(name) if k != "skin"}
            return cls(**kwargs)
        except (TypeError, ValueError) as exc:
            raise ScenarioError(f"[{name}]: {exc}") from exc

    return Scenario(
        name=get("scenario", "name"),
        domain_bounds=tuple(_floats(get("domain", "bounds"), 4, "bounds")),
        particle_init=init,
        init_params=params,
        n_workers=n_workers,
        grid=grid,
        workers=workers,
        forcefield=section_floats("forcefield", ForceField),
        skin=get("forcefield", "skin", 0.3, float) if cp.has_section("forcefield") else 0.3,
        balance=section_floats("balance", BalanceConfig),
        cost=section_floats("cost", CostModel),
        n_steps=get("scenario", "n_steps", 100, int),
        mode=get("scenario", "mode", "mpd3"),
        dimensionality=get("scenario", "dimensionality", "free_2d"),
        seed=get("scenario", "seed", 0, int),
        snapshot_every=get("scenario", "snapshot_every", 0, int),
        renumber_every=get("scenario", "renumber_every", 25, int),
        settle_max_iters=get("scenario", "settle_max_iters", 200, int),
        base_dir=base_dir,
    )


def load_scenario(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc}") from exc
    return parse_scenario(text, base_dir=path.parent)


def shipped_scenarios():
    """Paths of the scenario files bundled with the package."""
    return sorted((Path(__file__).parent / "scenarios").glob("*.ini"))


def shipped(name):
    path = Path(__file__).parent / "scenarios" / f"{name}.ini"
    if not path.exists():
        raise ScenarioError(f"no shipped scenario named {name!r}")
    return load_scenario(path)
