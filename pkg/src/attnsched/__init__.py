"""Scheduling exploration for transformer attention heads on modeled accelerators.

The package builds typed layer graphs for attention workloads, splits them
into row/column-band computation nodes, generates inter-node dependencies,
and schedules the nodes onto multi-core hardware models, tracking latency
and the active-feature-memory trace over time.
"""

__version__ = "0.1.0"
