"""Splitting layers into computation nodes and deriving inter-node dependencies.

Layers are split along the top temporal loop into contiguous bands of output
rows (or columns, for matmuls), one schedulable node per band.  Dependencies
between nodes follow the per-kind rules: a matmul output band needs the
matching I1 rows and I2 columns, a transpose band maps to the swapped input
region, and a softmax row band needs *all* columns of those input rows
because of the normalizing sum.

``brute_force_dependencies`` recomputes the edges from element-level
producer/consumer sets and is the test oracle for ``generate_dependencies``.
"""

from __future__ import annotations

import io
from bisect import bisect_right
from dataclasses import dataclass

from .workload import (
    INPUT_ID,
    MATMUL_KINDS,
    Layer,
    LayerGraph,
    LayerKind,
)

#: Element-count guard for the brute-force oracle.
BRUTE_FORCE_ELEMENT_LIMIT = 10**6


@dataclass(frozen=True, slots=True)
class Region:
    """Axis-aligned rectangle of a tensor, half-open in both axes."""

    tensor: str
    row_lo: int
    row_hi: int
    col_lo: int
    col_hi: int

    def __post_init__(self) -> None:
        if self.row_lo >= self.row_hi or self.col_lo >= self.col_hi:
            raise ValueError(f"empty region {self}")

    @property
    def area(self) -> int:
        return (self.row_hi - self.row_lo) * (self.col_hi - self.col_lo)

    def overlap_area(self, other: "Region") -> int:
        rows = min(self.row_hi, other.row_hi) - max(self.row_lo, other.row_lo)
        cols = min(self.col_hi, other.col_hi) - max(self.col_lo, other.col_lo)
        if rows <= 0 or cols <= 0:
            return 0
        return rows * cols

    def contains_point(self, i: int, j: int) -> bool:
        return self.row_lo <= i < self.row_hi and self.col_lo <= j < self.col_hi


@dataclass(slots=True)
class ComputationNode:
    """A schedulable tile of a layer, defined by its output region."""

    id: int
    layer_id: str
    kind: LayerKind
    region: Region
    mac_count: int
    band_index: int  # position of the band within its layer's split


@dataclass(frozen=True, slots=True)
class DependencyEdge:
    producer: int
    consumer: int
    words: int


def split_layer(
    layer: Layer, axis: str, tile: int | None, first_node_id: int = 0
) -> list[ComputationNode]:
    """Split a layer into band nodes along its top temporal loop.

    ``axis`` is ``"R"`` (output rows) or, for matmuls only, ``"T"`` (output
    columns).  ``tile=None`` means the whole extent (one node).  When the tile
    does not divide the extent, the last band takes the remainder.
    """
    if axis == "rows":
        axis = "R"
    if axis not in ("R", "T"):
        raise ValueError(f"unknown split axis {axis!r}")
    if axis == "T" and layer.kind not in MATMUL_KINDS:
        raise ValueError(f"{layer.id}: column split only applies to matmuls")

    out = layer.output_shape
    extent = out.rows if axis == "R" else out.cols
    if tile is None:
        tile = extent
    if tile <= 0:
        raise ValueError(f"{layer.id}: tile must be positive")
    tile = min(tile, extent)

    s_extent = layer.input_shapes[0].cols if layer.kind in MATMUL_KINDS else 0
    nodes = []
    lo = 0
    while lo < extent:
        hi = min(lo + tile, extent)
        if axis == "R":
            region = Region(layer.id, lo, hi, 0, out.cols)
        else:
            region = Region(layer.id, 0, out.rows, lo, hi)
        macs = region.area * s_extent if layer.kind in MATMUL_KINDS else 0
        nodes.append(
            ComputationNode(
                id=first_node_id + len(nodes),
                layer_id=layer.id,
                kind=layer.kind,
                region=region,
                mac_count=macs,
                band_index=len(nodes),
            )
        )
        lo = hi
    return nodes


def input_regions(node: ComputationNode, g: LayerGraph) -> list[tuple[int, Region]]:
    """Input regions a node reads, as ``(input slot, region)`` pairs.

    Weight operands of weight matmuls are resident constants and are not
    reported.  Regions on the graph input tensor are included (their tensor id
    is :data:`INPUT_ID`).
    """
    layer = g[node.layer_id]
    r = node.region
    regions: list[tuple[int, Region]] = []
    if layer.kind in MATMUL_KINDS:
        i1_src = layer.predecessors[0][0]
        s = layer.input_shapes[0].cols
        regions.append((0, Region(i1_src, r.row_lo, r.row_hi, 0, s)))
        if layer.kind is LayerKind.MATMUL_FEATURES:
            i2_src = layer.predecessors[1][0]
            regions.append((1, Region(i2_src, 0, s, r.col_lo, r.col_hi)))
    elif layer.kind is LayerKind.TRANSPOSE:
        src = layer.predecessors[0][0]
        regions.append((0, Region(src, r.col_lo, r.col_hi, r.row_lo, r.row_hi)))
    elif layer.kind is LayerKind.SOFTMAX:
        src = layer.predecessors[0][0]
        cols = layer.input_shapes[0].cols
        regions.append((0, Region(src, r.row_lo, r.row_hi, 0, cols)))
    else:
        raise ValueError(f"{layer.id}: no input-region rule for {layer.kind}")
    return regions


class RegionIndex:
    """Overlap index over the band regions of one tensor.

    Bands of a layer tile the tensor along one axis, so a sorted interval
    array along that axis answers rectangle-overlap queries in
    O(log n + hits).
    """

    def __init__(self, nodes: list[ComputationNode]):
        self._nodes = nodes
        by_rows = sorted(nodes, key=lambda n: (n.region.row_lo, n.region.col_lo))
        row_split = all(
            a.region.row_hi <= b.region.row_lo for a, b in zip(by_rows, by_rows[1:])
        )
        if row_split:
            self._axis = "rows"
            self._sorted = by_rows
            self._starts = [n.region.row_lo for n in by_rows]
        else:
            by_cols = sorted(nodes, key=lambda n: (n.region.col_lo, n.region.row_lo))
            self._axis = "cols"
            self._sorted = by_cols
            self._starts = [n.region.col_lo for n in by_cols]

    def query(self, region: Region) -> list[ComputationNode]:
        if self._axis == "rows":
            lo, hi = region.row_lo, region.row_hi
            c_lo, c_hi = region.col_lo, region.col_hi
        else:
            lo, hi = region.col_lo, region.col_hi
            c_lo, c_hi = region.row_lo, region.row_hi
        # First band whose start is >= hi bounds the scan; walk left while
        # bands still overlap [lo, hi).
        idx = bisect_right(self._starts, hi - 1)
        hits = []
        for k in range(idx - 1, -1, -1):
            n = self._sorted[k]
            r = n.region
            if self._axis == "rows":
                if r.row_hi <= lo:
                    break
                if r.col_lo < c_hi and c_lo < r.col_hi:
                    hits.append(n)
            else:
                if r.col_hi <= lo:
                    break
                if r.row_lo < c_hi and c_lo < r.row_hi:
                    hits.append(n)
        hits.reverse()
        return hits


def build_region_indexes(nodes: list[ComputationNode]) -> dict[str, RegionIndex]:
    per_tensor: dict[str, list[ComputationNode]] = {}
    for node in nodes:
        per_tensor.setdefault(node.layer_id, []).append(node)
    return {tensor: RegionIndex(ns) for tensor, ns in per_tensor.items()}


def _edges_and_styles(
    nodes: list[ComputationNode],
    g: LayerGraph,
    indexes: dict[str, RegionIndex],
) -> tuple[list[DependencyEdge], dict[tuple[int, int], bool]]:
    """Edges plus a per-edge flag marking whole-tensor ('held') consumption."""
    words: dict[tuple[int, int], int] = {}
    held: dict[tuple[int, int], bool] = {}
    for consumer in nodes:
        cid = consumer.id
        for _, region in input_regions(consumer, g):
            index = indexes.get(region.tensor)
            if index is None:  # graph input or unsplit tensor
                continue
            shape = g.tensor_shape(region.tensor)
            covers_all = (
                region.row_lo == 0
                and region.col_lo == 0
                and region.row_hi == shape.rows
                and region.col_hi == shape.cols
            )
            rl, rh = region.row_lo, region.row_hi
            cl, ch = region.col_lo, region.col_hi
            for producer in index.query(region):
                pr = producer.region
                ov = (min(rh, pr.row_hi) - max(rl, pr.row_lo)) * (
                    min(ch, pr.col_hi) - max(cl, pr.col_lo)
                )
                key = (producer.id, cid)
                words[key] = words.get(key, 0) + ov
                if covers_all:
                    held[key] = True
    edges = [DependencyEdge(p, c, w) for (p, c), w in sorted(words.items())]
    return edges, {k: held.get(k, False) for k in words}


def generate_dependencies(
    nodes: list[ComputationNode],
    g: LayerGraph,
    indexes: dict[str, RegionIndex] | None = None,
) -> list[DependencyEdge]:
    """Derive node-to-node edges from region overlap.

    An edge (p -> c) exists iff p's output region overlaps one of c's input
    regions; ``words`` sums the overlap areas over all of c's input regions,
    deduplicated per (p, c) pair.
    """
    if indexes is None:
        indexes = build_region_indexes(nodes)
    return _edges_and_styles(nodes, g, indexes)[0]


def _element_inputs(layer: Layer, i: int, j: int) -> list[tuple[str, int, int]]:
    """Input elements that output element (i, j) of a layer depends on."""
    deps: list[tuple[str, int, int]] = []
    if layer.kind in MATMUL_KINDS:
        i1_src = layer.predecessors[0][0]
        s = layer.input_shapes[0].cols
        deps.extend((i1_src, i, k) for k in range(s))
        if layer.kind is LayerKind.MATMUL_FEATURES:
            i2_src = layer.predecessors[1][0]
            deps.extend((i2_src, k, j) for k in range(s))
    elif layer.kind is LayerKind.TRANSPOSE:
        deps.append((layer.predecessors[0][0], j, i))
    elif layer.kind is LayerKind.SOFTMAX:
        src = layer.predecessors[0][0]
        deps.extend((src, i, k) for k in range(layer.input_shapes[0].cols))
    return deps


def brute_force_dependencies(
    nodes: list[ComputationNode], g: LayerGraph
) -> list[DependencyEdge]:
    """Element-level dependency oracle.

    Enumerates every output element's input elements per layer semantics,
    attributes each input element to its producing node, and lifts the
    result to node edges with words = number of distinct elements consumed.
    Refuses graphs with more than ``BRUTE_FORCE_ELEMENT_LIMIT`` elements.
    """
    total_elements = sum(n.region.area for n in nodes)
    if total_elements > BRUTE_FORCE_ELEMENT_LIMIT:
        raise ValueError(
            f"brute-force oracle limited to {BRUTE_FORCE_ELEMENT_LIMIT} elements, "
            f"graph has {total_elements}"
        )

    owner: dict[tuple[str, int, int], int] = {}
    for node in nodes:
        r = node.region
        for i in range(r.row_lo, r.row_hi):
            for j in range(r.col_lo, r.col_hi):
                owner[(node.layer_id, i, j)] = node.id

    consumed: dict[tuple[int, int], set[tuple[str, int, int]]] = {}
    for node in nodes:
        layer = g[node.layer_id]
        r = node.region
        for i in range(r.row_lo, r.row_hi):
            for j in range(r.col_lo, r.col_hi):
                for element in _element_inputs(layer, i, j):
                    producer = owner.get(element)
                    if producer is not None:
                        consumed.setdefault((producer, node.id), set()).add(element)
    return [
        DependencyEdge(p, c, len(elements))
        for (p, c), elements in sorted(consumed.items())
    ]


@dataclass
class NodeGraph:
    """Computation nodes plus dependency edges for one workload graph."""

    graph: LayerGraph
    nodes: list[ComputationNode]
    edges: list[DependencyEdge]
    indexes: dict[str, RegionIndex]
    #: per-edge whole-tensor-consumption flags, filled by fine_grained_graph
    edge_held: dict[tuple[int, int], bool] | None = None

    def __post_init__(self) -> None:
        self.by_id = {n.id: n for n in self.nodes}
        self.nodes_by_layer: dict[str, list[ComputationNode]] = {}
        for n in self.nodes:
            self.nodes_by_layer.setdefault(n.layer_id, []).append(n)
        self.out_edges: dict[int, list[DependencyEdge]] = {n.id: [] for n in self.nodes}
        self.in_edges: dict[int, list[DependencyEdge]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            self.out_edges[e.producer].append(e)
            self.in_edges[e.consumer].append(e)

    def check_acyclic(self) -> bool:
        indeg = {n.id: len(self.in_edges[n.id]) for n in self.nodes}
        frontier = [nid for nid, d in indeg.items() if d == 0]
        seen = 0
        while frontier:
            nid = frontier.pop()
            seen += 1
            for e in self.out_edges[nid]:
                indeg[e.consumer] -= 1
                if indeg[e.consumer] == 0:
                    frontier.append(e.consumer)
        return seen == len(self.nodes)

    def export_text(self) -> str:
        """Deterministic text dump for golden-file comparisons."""
        buf = io.StringIO()
        for n in self.nodes:
            r = n.region
            buf.write(
                f"node {n.id} layer={n.layer_id} rows=[{r.row_lo},{r.row_hi})"
                f" cols=[{r.col_lo},{r.col_hi}) macs={n.mac_count}\n"
            )
        for e in self.edges:
            buf.write(f"edge {e.producer} -> {e.consumer} words={e.words}\n")
        return buf.getvalue()


SplitPlan = dict[str, tuple[str, int | None]]


def uniform_split_plan(g: LayerGraph, axis: str = "R", tile: int | None = 1) -> SplitPlan:
    """Same (axis, tile) for every layer; transposes are kept whole.

    Transpose nodes are zero-cost views, so their granularity affects neither
    latency nor memory; a single node keeps edge counts low.
    """
    plan: SplitPlan = {}
    for layer in g.layers:
        if layer.kind is LayerKind.TRANSPOSE:
            plan[layer.id] = ("R", None)
        elif layer.kind in MATMUL_KINDS:
            plan[layer.id] = (axis, tile)
        else:
            plan[layer.id] = ("R", tile)
    return plan


def fine_grained_graph(g: LayerGraph, split_plan: SplitPlan) -> NodeGraph:
    """Split all layers per the plan and generate dependencies."""
    if not split_plan:
        raise ValueError("empty split plan")
    missing = [layer.id for layer in g.layers if layer.id not in split_plan]
    if missing:
        raise ValueError(f"split plan missing layers: {missing}")

    nodes: list[ComputationNode] = []
    for layer in g.layers:
        axis, tile = split_plan[layer.id]
        nodes.extend(split_layer(layer, axis, tile, first_node_id=len(nodes)))
    indexes = build_region_indexes(nodes)
    edges, edge_held = _edges_and_styles(nodes, g, indexes)
    ng = NodeGraph(graph=g, nodes=nodes, edges=edges, indexes=indexes, edge_held=edge_held)
    if not ng.check_acyclic():
        raise ValueError("node graph contains a cycle")
    return ng
