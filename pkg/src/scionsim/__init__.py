"""Discrete-event simulator of a path-aware inter-domain architecture.

ASes are grouped into isolation domains; signed beacons discover path
segments, path servers hand them out, end hosts combine them and routers
forward on the packet-carried opaque fields alone.
"""
from .topology import AsId, LinkType, Topology, TopologyError, builtin_topology, load_topology, parse_topology

__version__ = "0.1.0"

__all__ = ["AsId", "LinkType", "Topology", "TopologyError", "builtin_topology", "load_topology",
           "parse_topology", "__version__"]
