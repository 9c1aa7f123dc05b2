"""Dynamic Voronoi domain decomposition for short-range MD on heterogeneous clusters."""

from .balance import BalanceConfig, LoadMetrics, TimingSample, imbalance, normalized_md_time, weighting_factor
from .cluster import CostModel, Link, VirtualCluster, WorkerProfile
from .errors import (
    CoincidentCenters, DegenerateTiming, EmptySubdomain, MigrationAcrossNonNeighbors, MPD3Error,
    NoConvergence, ParseError, ScenarioError, SingularPair,
)
from .geometry import Decomposition, MaterialParticle, assign_by_midplanes, settle_initial_tessellation
from .harness import RunResult, run, run_baseline_static
from .md import ForceField, Particle, ParticleSet
from .scenario import Scenario, load_scenario, shipped

__version__ = "0.1.0"
