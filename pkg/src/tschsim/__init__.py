"""Slot-level simulator of a 6TiSCH network with alternate-parent label
tunnels, packet replication strategies and deadline-driven scheduling."""

from tschsim.config import ConfigError, RunConfig
from tschsim.engine import Simulation, run
from tschsim.metrics import RunReport
from tschsim.topology import LinkQuality, Topology, build_paper_topology

__all__ = [
    "ConfigError",
    "LinkQuality",
    "RunConfig",
    "RunReport",
    "Simulation",
    "Topology",
    "build_paper_topology",
    "run",
]

__version__ = "0.1.0"
