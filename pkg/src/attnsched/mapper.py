"""Intra-core mapping: spatial unrolling, temporal ordering and node costing.

Matmul loops are named R (output rows), S (the shared contraction dim) and
T (output columns).  A mapping pins one loop to each PE-array axis; leftover
iterations of a spatially unrolled loop run temporally and are written with a
prime (``S'``).  Compute cycles for a node are the product of the temporal
trip counts, which makes a fully unrolled band cost mac_count / peak MACs
exactly when the dimensions divide the array.

Transfers are assumed perfectly pipelined and double-buffered: a node stalls
only when an operand's streaming demand exceeds the feed bandwidth for its
whole duration.  Transposes are data reindexing and cost nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil

from .depgraph import ComputationNode
from .hwmodel import Core, HardwareSpec, SimdUnit
from .workload import MATMUL_KINDS, Layer, LayerGraph, LayerKind

MATMUL_DIMS = ("R", "S", "T")


class MappingError(ValueError):
    pass


@dataclass(frozen=True)
class Mapping:
    """Spatial assignment of loops to array axes plus the temporal order."""

    row_dim: str | None
    col_dim: str | None
    temporal: tuple[str, ...]  # outermost first; primed names are leftovers
    row_unroll: int | None = None  # None: min(extent, array axis)
    col_unroll: int | None = None
    tiles: dict[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self) -> None:
        if self.row_dim is not None and self.row_dim == self.col_dim:
            raise MappingError("spatial dims must be disjoint")
        spatial = {d for d in (self.row_dim, self.col_dim) if d is not None}
        plain = [d for d in self.temporal if not d.endswith("'")]
        if set(plain) & spatial or len(set(plain)) != len(plain):
            raise MappingError("temporal order must cover non-spatial dims exactly once")

    @property
    def spatial(self) -> dict[str, str]:
        out = {}
        if self.row_dim is not None:
            out["rows"] = self.row_dim
        if self.col_dim is not None:
            out["cols"] = self.col_dim
        return out


@dataclass(frozen=True)
class NodeCost:
    compute_cycles: int
    stall_cycles: int
    energy: float

    def __post_init__(self) -> None:
        if self.compute_cycles < 0 or self.stall_cycles < 0 or self.energy < 0:
            raise ValueError("costs must be nonnegative")

    @property
    def total_cycles(self) -> int:
        return self.compute_cycles + self.stall_cycles


def node_dims(node: ComputationNode, layer: Layer) -> dict[str, int]:
    """Loop extents of one band node of a matmul layer."""
    return {
        "R": node.region.row_hi - node.region.row_lo,
        "S": layer.input_shapes[0].cols,
        "T": node.region.col_hi - node.region.col_lo,
    }


def _unrolls(m: Mapping, dims: dict[str, int], core: Core) -> dict[str, int]:
    unroll = {d: 1 for d in MATMUL_DIMS}
    for dim, axis_size, forced in (
        (m.row_dim, core.array_rows, m.row_unroll),
        (m.col_dim, core.array_cols, m.col_unroll),
    ):
        if dim is None:
            continue
        u = min(dims[dim], axis_size) if forced is None else forced
        if forced is not None and forced > axis_size:
            raise MappingError(f"unroll {forced} exceeds array axis {axis_size}")
        unroll[dim] = max(1, u)
    return unroll


def _softmax_cycles(rows: int, width: int, lanes: int) -> int:
    # Two pipelined passes over each row (max/exp-accumulate, normalize).
    return rows * ceil(2 * width / lanes)


def matmul_compute_cycles(m: Mapping, dims: dict[str, int], core: Core) -> int:
    unroll = _unrolls(m, dims, core)
    cycles = 1
    for d in MATMUL_DIMS:
        cycles *= ceil(dims[d] / unroll[d])
    return cycles


def node_latency(
    node: ComputationNode,
    resource: Core | SimdUnit,
    m: Mapping | None,
    feeds: dict[str, float] | float = float("inf"),
    hw: HardwareSpec | None = None,
    layer: Layer | None = None,
    graph: LayerGraph | None = None,
) -> NodeCost:
    """Cycles and energy for one computation node on one resource.

    ``feeds`` gives the effective input bandwidth in words/cycle, either one
    number for all operands or a per-operand mapping.  The energy term charges
    every feature word once at the register level and once at its staging
    level (see :func:`node_energy` for bypass-aware accounting).
    """
    if layer is None:
        if graph is None:
            raise ValueError("need the layer or the graph to cost a node")
        layer = graph[node.layer_id]

    def feed(op: str) -> float:
        if isinstance(feeds, dict):
            return feeds.get(op, float("inf"))
        return feeds

    kind = layer.kind
    if kind is LayerKind.TRANSPOSE:
        return NodeCost(0, 0, 0.0)

    if kind is LayerKind.SOFTMAX:
        rows = node.region.row_hi - node.region.row_lo
        width = node.region.col_hi - node.region.col_lo
        if isinstance(resource, SimdUnit):
            lanes = resource.lanes
        else:
            if kind not in resource.supports:
                raise MappingError(f"{resource.id} does not support softmax")
            lanes = resource.peak_macs
        compute = _softmax_cycles(rows, width, lanes)
        energy = node_energy(node, layer, hw) if hw else 0.0
        return NodeCost(compute, 0, energy)

    if kind not in MATMUL_KINDS:
        raise MappingError(f"no cost rule for {kind}")
    if isinstance(resource, SimdUnit):
        raise MappingError("matmuls do not run on SIMD units")
    if kind not in resource.supports:
        raise MappingError(f"{resource.id} does not support {kind.value}")

    if m is None:
        m = optimize_mapping(layer, resource)
    dims = node_dims(node, layer)
    compute = matmul_compute_cycles(m, dims, resource)

    stall = 0
    i1_words = dims["R"] * dims["S"]
    stall = max(stall, ceil(i1_words / feed("I1")) - compute)
    if kind is LayerKind.MATMUL_FEATURES:
        i2_words = dims["S"] * dims["T"]
        stall = max(stall, ceil(i2_words / feed("I2")) - compute)
    stall = max(0, stall)

    energy = node_energy(node, layer, hw) if hw else 0.0
    return NodeCost(compute, stall, energy)


def node_energy(
    node: ComputationNode,
    layer: Layer,
    hw: HardwareSpec | None,
    staged_inputs: tuple[bool, ...] | None = None,
    staged_output: bool = True,
) -> float:
    """Feature-word access energy of one node.

    Every word moves through the register level; words of materialized
    tensors additionally hit their staging level.  ``staged_inputs`` flags
    each feature operand (False when the producer output is consumed over
    the register path of a fused pair).
    """
    if hw is None:
        return 0.0
    kind = layer.kind
    if kind is LayerKind.TRANSPOSE:
        return 0.0

    if kind in MATMUL_KINDS:
        dims = node_dims(node, layer)
        ops: list[tuple[str, int]] = [("I1", dims["R"] * dims["S"])]
        if kind is LayerKind.MATMUL_FEATURES:
            ops.append(("I2", dims["S"] * dims["T"]))
    else:  # softmax
        ops = [("I1", node.region.area)]
    out_words = node.region.area

    if staged_inputs is None:
        staged_inputs = tuple(True for _ in ops)
    reg = hw.level_cost("register")
    energy = out_words * reg
    for (op, words), staged in zip(ops, staged_inputs):
        energy += words * reg
        if staged:
            energy += words * hw.level_cost("staging", op)
    if staged_output:
        energy += out_words * hw.level_cost("staging", "O")
    return energy


def _candidate_mappings(dims: dict[str, int]) -> list[Mapping]:
    """Deterministic enumeration: the row-streaming mapping comes first."""
    cands: list[Mapping] = []

    def leftover(spatial: tuple[str, ...], outer: list[str]) -> tuple[str, ...]:
        return tuple(outer + [d + "'" for d in MATMUL_DIMS if d in spatial])

    # Preferred: unroll S and T, keep R as the outer temporal loop so one
    # I1 row can be discarded per produced output row.
    cands.append(Mapping("S", "T", leftover(("S", "T"), ["R"])))
    for a in MATMUL_DIMS:
        for b in MATMUL_DIMS:
            if a == b or (a, b) == ("S", "T"):
                continue
            rem = [d for d in MATMUL_DIMS if d not in (a, b)]
            cands.append(Mapping(a, b, leftover((a, b), rem)))
    for a in MATMUL_DIMS:
        rem = [d for d in MATMUL_DIMS if d != a]
        cands.append(Mapping(a, None, leftover((a,), rem)))
    return cands


def optimize_mapping(layer: Layer, resource: Core | SimdUnit) -> Mapping:
    """Pick the latency-optimal mapping for a layer on a resource.

    The search is exhaustive over the enumerated spatial choices; ties keep
    the earliest candidate, which is the S/T unrolling with R outermost.
    """
    kind = layer.kind
    if isinstance(resource, SimdUnit):
        if kind not in resource.supports:
            raise MappingError(f"{resource.id} does not support {kind.value}")
        return Mapping("T", None, ("R",))  # row-major, columns vectorized
    if kind not in resource.supports:
        raise MappingError(f"{resource.id} does not support {kind.value}")
    if kind is LayerKind.TRANSPOSE:
        return Mapping(None, None, ("R", "T"))
    if kind is LayerKind.SOFTMAX:
        return Mapping("T", None, ("R",))

    dims = {
        "R": layer.output_shape.rows,
        "S": layer.input_shapes[0].cols,
        "T": layer.output_shape.cols,
    }
    best: Mapping | None = None
    best_cycles = None
    for cand in _candidate_mappings(dims):
        cycles = matmul_compute_cycles(cand, dims, resource)
        if best_cycles is None or cycles < best_cycles:
            best, best_cycles = cand, cycles
    assert best is not None
    return best


def load_mapping_overrides(text: str) -> dict[str, Mapping]:
    """Parse a per-layer mapping override file.

    Schema: ``{layer_id: {row_dim, col_dim, temporal: [..], row_unroll?,
    col_unroll?}}``.
    """
    import yaml

    raw = yaml.safe_load(text) or {}
    overrides = {}
    for layer_id, m in raw.items():
        overrides[str(layer_id)] = Mapping(
            row_dim=m.get("row_dim"),
            col_dim=m.get("col_dim"),
            temporal=tuple(m.get("temporal", ())),
            row_unroll=m.get("row_unroll"),
            col_unroll=m.get("col_unroll"),
        )
    return overrides
