"""List scheduling of computation nodes and active-feature-memory tracing.

Scheduling is event driven: a node becomes ready once its predecessors have
finished (plus any inter-core forwarding time) and, in layer-by-layer or
template mode, once the barrier for its layer has opened.  Among the ready
nodes of a free resource the configured priority picks the next one.

Softmax layers placed on a SIMD unit are exempt from barriers: the unit runs
in parallel with the MAC core and processes rows as they appear, so consumers
only observe the per-row data dependency.

Operand movement inside a core (and to its attached SIMD units) is pipelined
and free; a cross-core operand is pulled synchronously over the link and its
transfer time extends the consuming node, so scattering a head over several
cores costs real cycles.

Memory accounting follows produce-allocate / last-consumer-free semantics at
the node-band granularity:

* a node's output words become active at its end time, batched atomically
  with the release of input bands for which it is the last consumer (the
  row-substitution of the memory-optimal schedules);
* an operand consumed as a whole tensor (e.g. K^T or V under a row split) is
  held until its last consumer ends and its release is recorded as a second
  trace sample at that timestamp, so layer-end footprints are observable;
* transpose outputs alias their input storage and are never counted;
* outputs of fused (bypassed) layers never enter counted memory, and any
  release they would trigger is deferred to the end of the fused chain.
"""

from __future__ import annotations

import heapq
import io
import json
import logging
from dataclasses import dataclass, field

from .depgraph import ComputationNode, NodeGraph, SplitPlan, input_regions
from .hwmodel import HardwareSpec
from .mapper import Mapping, node_latency, node_energy, optimize_mapping
from .workload import INPUT_ID, LayerGraph, LayerKind, head_of

logger = logging.getLogger(__name__)

Allocation = dict[str, str]  # layer id -> resource id

TEMPLATE_NAMES = (
    "lbl_memory_optimal",
    "lbl_memory_optimal_swapped",
    "fuse_q_qkt",
    "fuse_qkt_qktv",
    "fuse_q_qkt_qktv",
)

# Per-head phase orders (layer id suffixes) and fused layer sets.
_TEMPLATE_DEFS: dict[str, tuple[list[list[str]], set[str]]] = {
    "lbl_memory_optimal": ([["q"], ["k"], ["kt"], ["v"], ["s"], ["p"], ["o"]], set()),
    "lbl_memory_optimal_swapped": (
        [["q"], ["k"], ["kt"], ["s"], ["v"], ["p"], ["o"]],
        set(),
    ),
    "fuse_q_qkt": ([["k"], ["kt"], ["q", "s"], ["v"], ["p"], ["o"]], {"q"}),
    "fuse_qkt_qktv": ([["k"], ["kt"], ["v"], ["q"], ["s", "p", "o"]], {"s", "p"}),
    "fuse_q_qkt_qktv": ([["k"], ["kt"], ["v"], ["q", "s", "p", "o"]], {"q", "s", "p"}),
}


@dataclass
class TemplatePlan:
    name: str
    split_plan: SplitPlan
    phase_of: dict[str, int]      # layer id -> phase index
    chain_pos: dict[str, int]     # layer id -> position within its phase
    fused: set[str]               # layer ids whose outputs bypass memory


def apply_template(name: str, m: int, n: int, heads: int = 1) -> TemplatePlan:
    """Materialize a schedule template for an ``heads``-head M x N workload.

    Returns the split plan (row bands of one row, transposes whole), the
    phase order and the set of fused layers.
    """
    if name not in _TEMPLATE_DEFS:
        raise KeyError(f"unknown template {name!r}; known: {', '.join(TEMPLATE_NAMES)}")
    phases, fused_suffixes = _TEMPLATE_DEFS[name]
    split_plan: SplitPlan = {}
    phase_of: dict[str, int] = {}
    chain_pos: dict[str, int] = {}
    fused: set[str] = set()
    for h in range(heads):
        for idx, group in enumerate(phases):
            for pos, suffix in enumerate(group):
                lid = f"h{h}.{suffix}"
                phase_of[lid] = idx
                chain_pos[lid] = pos
                split_plan[lid] = ("R", None) if suffix == "kt" else ("R", 1)
        fused.update(f"h{h}.{suffix}" for suffix in fused_suffixes)
    return TemplatePlan(name, split_plan, phase_of, chain_pos, fused)


@dataclass
class SchedulePolicy:
    mode: str = "layer_by_layer"  # layer_by_layer | layer_fused_auto | template
    priority: str = "latency"     # latency | memory | weighted
    lam: float = 0.5
    template: TemplatePlan | None = None

    def __post_init__(self) -> None:
        if self.mode not in ("layer_by_layer", "layer_fused_auto", "template"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.priority not in ("latency", "memory", "weighted"):
            raise ValueError(f"unknown priority {self.priority!r}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("weighted lambda must be in [0, 1]")
        if self.mode == "template" and self.template is None:
            raise ValueError("template mode needs a template plan")


@dataclass(frozen=True, slots=True)
class ScheduledNode:
    node_id: int
    resource: str
    start: float
    end: float


@dataclass
class MemoryTrace:
    """Piecewise-constant active-feature-word count over time.

    ``points`` may contain two samples at one timestamp: the value after the
    atomic produce/substitute batch, then the value after held-tensor
    releases.  Peaks consider both.
    """

    points: list[tuple[float, int]]
    peak: int
    per_core: dict[str, list[tuple[float, int]]]
    per_core_peak: dict[str, int]

    @property
    def final(self) -> int:
        return self.points[-1][1] if self.points else 0

    def value_at(self, t: float) -> int:
        v = 0
        for time, value in self.points:
            if time > t:
                break
            v = value
        return v


@dataclass
class ScheduleResult:
    scheduled: list[ScheduledNode]
    trace: MemoryTrace
    makespan: float
    energy: float
    ng: NodeGraph
    alloc: Allocation
    bypassed: set[str]
    notes: list[str] = field(default_factory=list)

    @property
    def by_node(self) -> dict[int, ScheduledNode]:
        return {s.node_id: s for s in self.scheduled}


def makespan(scheduled: list[ScheduledNode] | ScheduleResult) -> float:
    if isinstance(scheduled, ScheduleResult):
        scheduled = scheduled.scheduled
    return max((s.end for s in scheduled), default=0.0)


def peak_memory(trace: MemoryTrace) -> int:
    return trace.peak


def default_allocation(g: LayerGraph, hw: HardwareSpec) -> Allocation:
    """Round-robin heads over cores; softmax prefers the core's SIMD unit."""
    cores = [c.id for c in hw.cores]
    simd_of = {}
    for s in hw.simd_units:
        simd_of.setdefault(s.attached_to, s.id)
    heads = sorted({head_of(l.id) for l in g.layers})
    core_of_head = {h: cores[i % len(cores)] for i, h in enumerate(heads)}
    alloc: Allocation = {}
    for layer in g.layers:
        core = core_of_head[head_of(layer.id)]
        if layer.kind is LayerKind.SOFTMAX and core in simd_of:
            alloc[layer.id] = simd_of[core]
        elif not hw.supports(core, layer.kind):
            supporters = [r for r in hw.supporters(layer.kind) if hw.home_core(r) == core]
            if not supporters:
                supporters = hw.supporters(layer.kind)
            if not supporters:
                raise ValueError(f"no resource supports {layer.kind.value}")
            alloc[layer.id] = supporters[0]
        else:
            alloc[layer.id] = core
    return alloc


def _node_durations(
    ng: NodeGraph,
    alloc: Allocation,
    hw: HardwareSpec,
    mapping_overrides: dict[str, Mapping] | None = None,
) -> dict[int, int]:
    g = ng.graph
    durations: dict[int, int] = {}
    mapping_cache: dict[tuple[str, str], Mapping | None] = {}
    feeds = {op: hw.feeds(op) for op in ("I1", "I2")}
    for node in ng.nodes:
        layer = g[node.layer_id]
        rid = alloc[node.layer_id]
        resource = hw.core(rid) if hw.is_core(rid) else hw.simd(rid)
        if layer.kind is LayerKind.TRANSPOSE:
            durations[node.id] = 0
            continue
        key = (node.layer_id, rid)
        if key not in mapping_cache:
            if mapping_overrides and node.layer_id in mapping_overrides:
                mapping_cache[key] = mapping_overrides[node.layer_id]
            else:
                mapping_cache[key] = optimize_mapping(layer, resource)
        cost = node_latency(node, resource, mapping_cache[key], feeds, layer=layer)
        durations[node.id] = cost.total_cycles
    return durations


class _ZeroTransfers:
    """Transfer table for allocations confined to one core: always 0 cycles."""

    def __getitem__(self, key) -> float:
        return 0.0

    def values(self):
        return (0.0,)


def _transfer(hw: HardwareSpec, alloc: Allocation, ng: NodeGraph, edge) -> float:
    src = alloc[ng.by_id[edge.producer].layer_id]
    dst = alloc[ng.by_id[edge.consumer].layer_id]
    return hw.transfer_cycles(src, dst, edge.words)


def _critical_path(ng: NodeGraph, durations: dict[int, int], transfers: dict[tuple[int, int], float]) -> dict[int, float]:
    cp: dict[int, float] = {}
    order: list[int] = []
    indeg = {n.id: len(ng.in_edges[n.id]) for n in ng.nodes}
    frontier = [nid for nid, d in indeg.items() if d == 0]
    while frontier:
        nid = frontier.pop()
        order.append(nid)
        for e in ng.out_edges[nid]:
            indeg[e.consumer] -= 1
            if indeg[e.consumer] == 0:
                frontier.append(e.consumer)
    for nid in reversed(order):
        best = 0.0
        for e in ng.out_edges[nid]:
            best = max(best, transfers[(e.producer, e.consumer)] + cp[e.consumer])
        cp[nid] = durations[nid] + best
    return cp


def _static_memory_delta(ng: NodeGraph, countable: dict[str, bool]) -> dict[int, int]:
    """Net active-words change if this node's frees all fire (sole consumers)."""
    consumer_count: dict[int, int] = {n.id: 0 for n in ng.nodes}
    for e in ng.edges:
        consumer_count[e.producer] += 1
    delta: dict[int, int] = {}
    for n in ng.nodes:
        out_words = n.region.area if countable.get(n.layer_id, True) else 0
        freed = 0
        for e in ng.in_edges[n.id]:
            p = ng.by_id[e.producer]
            if consumer_count[p.id] == 1 and countable.get(p.layer_id, True):
                freed += p.region.area
        delta[n.id] = out_words - freed
    return delta


def _barrier_preds(
    g: LayerGraph, alloc: Allocation, hw: HardwareSpec, policy: SchedulePolicy
) -> dict[str, set[str]]:
    """Layers whose nodes must all finish before a layer may start."""

    def exempt(lid: str) -> bool:
        return not hw.is_core(alloc[lid])

    preds: dict[str, set[str]] = {}
    if policy.mode == "layer_fused_auto":
        return {layer.id: set() for layer in g.layers}

    if policy.mode == "template":
        plan = policy.template
        assert plan is not None
        by_head: dict[str, list[str]] = {}
        for layer in g.layers:
            by_head.setdefault(head_of(layer.id), []).append(layer.id)
        for layer in g.layers:
            lid = layer.id
            if exempt(lid):
                preds[lid] = set()
                continue
            phase = plan.phase_of[lid]
            preds[lid] = {
                other
                for other in by_head[head_of(lid)]
                if not exempt(other) and plan.phase_of[other] < phase
            }
        return preds

    # layer_by_layer: direct predecessor layers, looking through exempt ones.
    def closure(lid: str, out: set[str]) -> None:
        for src, _ in g[lid].predecessors:
            if src == INPUT_ID:
                continue
            if exempt(src):
                closure(src, out)
            else:
                out.add(src)

    for layer in g.layers:
        if exempt(layer.id):
            preds[layer.id] = set()
        else:
            acc: set[str] = set()
            closure(layer.id, acc)
            preds[layer.id] = acc
    return preds


def schedule(
    ng: NodeGraph,
    alloc: Allocation,
    hw: HardwareSpec,
    policy: SchedulePolicy,
    mapping_overrides: dict[str, Mapping] | None = None,
) -> ScheduleResult:
    """Order all computation nodes on their allocated resources.

    Returns the timed node list together with the memory trace and the total
    feature-access energy.  Deterministic for fixed inputs.
    """
    g = ng.graph
    missing = [layer.id for layer in g.layers if layer.id not in alloc]
    if missing:
        raise ValueError(f"allocation missing layers: {missing}")
    for layer in g.layers:
        if not hw.supports(alloc[layer.id], layer.kind):
            raise ValueError(
                f"{alloc[layer.id]} does not support {layer.kind.value} ({layer.id})"
            )
    if not ng.check_acyclic():
        raise ValueError("cannot schedule a cyclic node graph")

    durations = _node_durations(ng, alloc, hw, mapping_overrides)
    homes = {hw.home_core(rid) for rid in alloc.values()}
    if len(homes) > 1:
        # cross-core operands are pulled synchronously by the consumer
        for e in ng.edges:
            pull = _transfer(hw, alloc, ng, e)
            if pull:
                durations[e.consumer] += pull
    transfers: _ZeroTransfers = _ZeroTransfers()

    fused = set(policy.template.fused) if policy.template else set()
    countable = {
        layer.id: layer.kind is not LayerKind.TRANSPOSE and layer.id not in fused
        for layer in g.layers
    }

    # Priority keys: smaller sorts first.
    if policy.mode == "template":
        plan = policy.template
        assert plan is not None

        def key_of(n: ComputationNode) -> tuple:
            return (
                plan.phase_of[n.layer_id],
                n.band_index,
                plan.chain_pos[n.layer_id],
                g[n.layer_id].index,
                n.id,
            )

    elif policy.priority == "latency":
        cp = _critical_path(ng, durations, transfers)

        def key_of(n: ComputationNode) -> tuple:
            return (-cp[n.id], g[n.layer_id].index, n.id)

    elif policy.priority == "memory":
        delta = _static_memory_delta(ng, countable)

        def key_of(n: ComputationNode) -> tuple:
            return (delta[n.id], g[n.layer_id].index, n.id)

    else:  # weighted
        cp = _critical_path(ng, durations, transfers)
        delta = _static_memory_delta(ng, countable)
        cp_scale = max(cp.values()) or 1.0
        d_scale = max((abs(d) for d in delta.values()), default=1) or 1

        def key_of(n: ComputationNode) -> tuple:
            score = policy.lam * (-cp[n.id] / cp_scale) + (1 - policy.lam) * (
                delta[n.id] / d_scale
            )
            return (score, g[n.layer_id].index, n.id)

    barrier_preds = _barrier_preds(g, alloc, hw, policy)
    nodes_left = {lid: len(ng.nodes_by_layer.get(lid, [])) for lid in g.layer_ids()}
    barrier_left = {
        lid: sum(1 for p in barrier_preds[lid] if nodes_left.get(p, 0) > 0)
        for lid in g.layer_ids()
    }
    layer_succs: dict[str, list[str]] = {lid: [] for lid in g.layer_ids()}
    for lid, preds in barrier_preds.items():
        for p in preds:
            layer_succs[p].append(lid)

    deps_left = {n.id: len(ng.in_edges[n.id]) for n in ng.nodes}
    ready_time = {n.id: 0.0 for n in ng.nodes}

    resources = hw.resource_ids()
    free_at = {rid: 0.0 for rid in resources}
    queues: dict[str, list[tuple]] = {rid: [] for rid in resources}
    resource_of = {n.id: alloc[n.layer_id] for n in ng.nodes}

    def enqueue_if_ready(n: ComputationNode) -> None:
        if deps_left[n.id] == 0 and barrier_left[n.layer_id] == 0:
            heapq.heappush(queues[resource_of[n.id]], (key_of(n), n.id))

    for n in ng.nodes:
        enqueue_if_ready(n)

    scheduled: list[ScheduledNode] = []
    end_time: dict[int, float] = {}
    events: list[tuple[float, int, int]] = []  # (time, seq, node id or -1)
    seq = 0
    done = 0
    total = len(ng.nodes)
    now = 0.0

    def dispatch(rid: str) -> None:
        nonlocal seq
        q = queues[rid]
        while q and free_at[rid] <= now:
            stash = []
            chosen = None
            while q:
                key, nid = heapq.heappop(q)
                if ready_time[nid] <= now:
                    chosen = nid
                    break
                stash.append((key, nid))
            for item in stash:
                heapq.heappush(q, item)
            if chosen is None:
                if q:
                    wake = min(ready_time[nid] for _, nid in q)
                    heapq.heappush(events, (wake, seq, -1))
                    seq += 1
                return
            start = max(now, free_at[rid])
            end = start + durations[chosen]
            scheduled.append(ScheduledNode(chosen, rid, start, end))
            end_time[chosen] = end
            free_at[rid] = end
            heapq.heappush(events, (end, seq, chosen))
            seq += 1

    def complete(nid: int) -> None:
        node = ng.by_id[nid]
        for e in ng.out_edges[nid]:
            deps_left[e.consumer] -= 1
            t = end_time[nid] + transfers[(e.producer, e.consumer)]
            if t > ready_time[e.consumer]:
                ready_time[e.consumer] = t
            if deps_left[e.consumer] == 0:
                enqueue_if_ready(ng.by_id[e.consumer])
        nodes_left[node.layer_id] -= 1
        if nodes_left[node.layer_id] == 0:
            for succ in layer_succs[node.layer_id]:
                barrier_left[succ] -= 1
                if barrier_left[succ] == 0:
                    for cand in ng.nodes_by_layer.get(succ, []):
                        if deps_left[cand.id] == 0:
                            enqueue_if_ready(cand)

    for rid in resources:
        dispatch(rid)

    while done < total:
        if not events:
            raise RuntimeError("scheduler stalled with unfinished nodes")
        now, _, nid = heapq.heappop(events)
        if nid >= 0:
            done += 1
            complete(nid)
        # drain all events at this instant before dispatching
        while events and events[0][0] == now:
            _, _, nid = heapq.heappop(events)
            if nid >= 0:
                done += 1
                complete(nid)
        for rid in resources:
            dispatch(rid)

    scheduled.sort(key=lambda s: (s.start, s.end, s.node_id))
    trace, effective_bypass, notes = memory_trace(scheduled, ng, hw, alloc, fused)
    energy = _total_energy(ng, hw, effective_bypass)
    for e in ng.edges:
        energy += hw.transfer_energy(
            alloc[ng.by_id[e.producer].layer_id],
            alloc[ng.by_id[e.consumer].layer_id],
            e.words,
        )
    return ScheduleResult(
        scheduled=scheduled,
        trace=trace,
        makespan=makespan(scheduled),
        energy=energy,
        ng=ng,
        alloc=alloc,
        bypassed=effective_bypass,
        notes=notes,
    )


def _total_energy(ng: NodeGraph, hw: HardwareSpec, bypassed: set[str]) -> float:
    g = ng.graph
    total = 0.0
    for node in ng.nodes:
        layer = g[node.layer_id]
        if layer.kind is LayerKind.TRANSPOSE:
            continue
        sources = [src for src, _ in layer.predecessors]
        staged_inputs = tuple(_resolve_alias_id(g, src) not in bypassed for src in sources)
        if layer.kind is LayerKind.MATMUL_WEIGHTS:
            staged_inputs = staged_inputs[:1]
        total += node_energy(
            node,
            layer,
            hw,
            staged_inputs=staged_inputs,
            staged_output=node.layer_id not in bypassed,
        )
    return total


def _resolve_alias_id(g: LayerGraph, tensor_id: str) -> str:
    """Follow transpose views down to the underlying stored tensor."""
    while tensor_id != INPUT_ID and g[tensor_id].kind is LayerKind.TRANSPOSE:
        tensor_id = g[tensor_id].predecessors[0][0]
    return tensor_id


# --------------------------------------------------------------------------
# memory trace
# --------------------------------------------------------------------------


def _edge_styles(ng: NodeGraph) -> dict[tuple[int, int], bool]:
    """Per-edge flag: True when the consumer reads the whole producer tensor."""
    if ng.edge_held is not None:
        return ng.edge_held
    g = ng.graph
    held: dict[tuple[int, int], bool] = {}
    for consumer in ng.nodes:
        for _, region in input_regions(consumer, g):
            index = ng.indexes.get(region.tensor)
            if index is None:
                continue
            shape = g.tensor_shape(region.tensor)
            covers_all = (
                region.row_lo == 0
                and region.col_lo == 0
                and region.row_hi == shape.rows
                and region.col_hi == shape.cols
            )
            for producer in index.query(region):
                key = (producer.id, consumer.id)
                held[key] = held.get(key, False) or covers_all
    return held


def _validate_bypass(
    scheduled: list[ScheduledNode],
    ng: NodeGraph,
    hw: HardwareSpec,
    alloc: Allocation,
    requested: set[str],
) -> tuple[set[str], list[str]]:
    """Drop fusion for layers whose in-flight words exceed the register budget
    or whose consumers sit on an unconnected core."""
    if not requested:
        return set(), []
    end_of = {s.node_id: s.end for s in scheduled}
    notes: list[str] = []
    effective = set(requested)

    for lid in sorted(requested):
        nodes = ng.nodes_by_layer.get(lid, [])
        core = hw.home_core(alloc[lid])
        budget = hw.core(core).register_budget if hw.is_core(core) else 0
        events: list[tuple[float, int]] = []
        ok = True
        for n in nodes:
            consumers = ng.out_edges[n.id]
            if not consumers:
                ok = False  # a fused sink has nowhere to stream to
                break
            t_done = max(end_of[e.consumer] for e in consumers)
            for e in consumers:
                dst = hw.home_core(alloc[ng.by_id[e.consumer].layer_id])
                if dst != core and hw.transfer_cycles(core, dst, 1) == float("inf"):
                    ok = False
            events.append((end_of[n.id], n.region.area))
            events.append((t_done, -n.region.area))
        if ok:
            events.sort()
            level = peak = 0
            for _, delta in events:
                level += delta
                peak = max(peak, level)
            ok = peak <= budget
        if not ok:
            effective.discard(lid)
            notes.append(f"fusion fallback: {lid} outputs counted in memory")
    return effective, notes


def memory_trace(
    scheduled: list[ScheduledNode],
    ng: NodeGraph,
    hw: HardwareSpec,
    alloc: Allocation,
    fused: set[str] | None = None,
) -> tuple[MemoryTrace, set[str], list[str]]:
    """Compute the active-feature-memory trace of a schedule.

    Returns the trace, the effective (validated) set of fused layers and any
    fallback notes.  The graph input is active from time 0, replicated per
    consuming core; graph outputs are never freed.
    """
    g = ng.graph
    fused = fused or set()
    bypassed, notes = _validate_bypass(scheduled, ng, hw, alloc, fused)

    end_of = {s.node_id: s.end for s in scheduled}

    def residence(lid: str) -> str:
        # Softmax substitutes its input rows in place, so its output lives
        # where that tensor lives, whichever unit ran the arithmetic.
        seen = set()
        while lid not in seen:
            seen.add(lid)
            layer = g[lid]
            if layer.kind in (LayerKind.SOFTMAX, LayerKind.TRANSPOSE):
                src = layer.predecessors[0][0]
                if src != INPUT_ID:
                    lid = src
                    continue
            break
        return hw.home_core(alloc[lid])

    residence_of_layer = {layer.id: residence(layer.id) for layer in g.layers}
    core_of_node = {n.id: residence_of_layer[n.layer_id] for n in ng.nodes}
    held_edge = _edge_styles(ng)

    alias_layer = {
        layer.id for layer in g.layers if layer.kind is LayerKind.TRANSPOSE
    }

    #: expansion of one consumer node through alias and fused layers; style
    #: None means "inherit the upstream edge's style".  Alias consumers adopt
    #: the downstream style (the real read of the stored tensor); fused
    #: consumers keep the upstream style but defer the release to the end of
    #: the fused chain.
    expand_cache: dict[int, list[tuple[int, bool | None]]] = {}

    def expand_node(cid: int) -> list[tuple[int, bool | None]]:
        cached = expand_cache.get(cid)
        if cached is not None:
            return cached
        node = ng.by_id[cid]
        nexts = ng.out_edges[cid]
        if node.layer_id in alias_layer:
            result = [
                (nid, st if st is not None else held_edge[(e.producer, e.consumer)])
                for e in nexts
                for nid, st in expand_node(e.consumer)
            ]
        elif node.layer_id in bypassed and nexts:
            result = [
                pair for e in nexts for pair in expand_node(e.consumer)
            ]
        else:
            result = [(cid, None)]
        expand_cache[cid] = result
        return result

    def expand_edge(producer: int, consumer: int) -> list[tuple[int, bool]]:
        s0 = held_edge[(producer, consumer)]
        return [(nid, s0 if st is None else st) for nid, st in expand_node(consumer)]

    # (core, alloc_time, area, consumers) records
    records: list[tuple[str, float, int, list[tuple[int, bool]]]] = []

    for n in ng.nodes:
        if n.layer_id in alias_layer or n.layer_id in bypassed:
            continue
        consumers: list[tuple[int, bool]] = []
        for e in ng.out_edges[n.id]:
            consumers.extend(expand_edge(e.producer, e.consumer))
        records.append((core_of_node[n.id], end_of[n.id], n.region.area, consumers))

    # Graph input: one copy per consuming core, tracked row by row.
    in_shape = g.input_shape
    if in_shape is not None:
        row_consumers: dict[tuple[str, int], list[tuple[int, bool]]] = {}
        for n in ng.nodes:
            layer = g[n.layer_id]
            if all(src != INPUT_ID for src, _ in layer.predecessors):
                continue
            for _, region in input_regions(n, g):
                if region.tensor != INPUT_ID:
                    continue
                covers_all = region.area == in_shape.words
                expanded = [
                    (nid, covers_all if st is None else st)
                    for nid, st in expand_node(n.id)
                ]
                core = core_of_node[n.id]
                for row in range(region.row_lo, region.row_hi):
                    row_consumers.setdefault((core, row), []).extend(expanded)
        for (core, _), consumers in sorted(row_consumers.items()):
            records.append((core, 0.0, in_shape.cols, consumers))

    # Assemble events: (atomic delta, held delta) per time and core.
    atomic: dict[tuple[str, float], int] = {}
    heldrel: dict[tuple[str, float], int] = {}
    times: set[float] = {0.0}
    for core, t_alloc, area, consumers in records:
        atomic[(core, t_alloc)] = atomic.get((core, t_alloc), 0) + area
        times.add(t_alloc)
        if not consumers:
            continue  # graph output, never freed
        t_free = max(end_of[cid] for cid, _ in consumers)
        held = any(style for cid, style in consumers if end_of[cid] == t_free)
        key = (core, t_free)
        if held:
            heldrel[key] = heldrel.get(key, 0) - area
        else:
            atomic[key] = atomic.get(key, 0) - area
        times.add(t_free)

    cores = sorted({core for core, _ in list(atomic) + list(heldrel)} | {hw.home_core(r) for r in alloc.values()})
    ordered = sorted(times)
    per_core: dict[str, list[tuple[float, int]]] = {c: [] for c in cores}
    per_core_peak: dict[str, int] = {c: 0 for c in cores}
    global_points: list[tuple[float, int]] = []
    level = {c: 0 for c in cores}
    total = 0
    for t in ordered:
        changed_atomic = False
        for c in cores:
            d = atomic.get((c, t), 0)
            if d or t == 0.0:
                level[c] += d
                total += d
                per_core[c].append((t, level[c]))
                changed_atomic = True
        if changed_atomic or t == 0.0:
            global_points.append((t, total))
        changed_held = False
        for c in cores:
            d = heldrel.get((c, t), 0)
            if d:
                level[c] += d
                total += d
                per_core[c].append((t, level[c]))
                changed_held = True
        if changed_held:
            global_points.append((t, total))
    for c in cores:
        per_core_peak[c] = max((v for _, v in per_core[c]), default=0)
    peak = max((v for _, v in global_points), default=0)
    trace = MemoryTrace(
        points=global_points,
        peak=peak,
        per_core=per_core,
        per_core_peak=per_core_peak,
    )
    return trace, bypassed, notes


# --------------------------------------------------------------------------
# orchestration helper
# --------------------------------------------------------------------------


def schedule_template(
    g: LayerGraph,
    hw: HardwareSpec,
    template_name: str,
    alloc: Allocation | None = None,
    mapping_overrides: dict[str, Mapping] | None = None,
) -> ScheduleResult:
    """Build the node graph for a template and schedule it."""
    from .depgraph import fine_grained_graph

    if g.input_shape is None:
        raise ValueError("graph has no input shape")
    plan = apply_template(
        template_name, g.input_shape.rows, g.input_shape.cols, g.head_count
    )
    ng = fine_grained_graph(g, plan.split_plan)
    if alloc is None:
        alloc = default_allocation(g, hw)
    policy = SchedulePolicy(mode="template", template=plan)
    return schedule(ng, alloc, hw, policy, mapping_overrides=mapping_overrides)


# --------------------------------------------------------------------------
# exports
# --------------------------------------------------------------------------


def export_schedule_json(result: ScheduleResult) -> str:
    g = result.ng.graph
    rows = [
        {
            "node": s.node_id,
            "layer": result.ng.by_id[s.node_id].layer_id,
            "core": s.resource,
            "start": s.start,
            "end": s.end,
        }
        for s in result.scheduled
    ]
    payload = {
        "makespan": result.makespan,
        "peak_memory_words": result.trace.peak,
        "energy": result.energy,
        "heads": g.head_count,
        "nodes": rows,
    }
    return json.dumps(payload, indent=1, sort_keys=True)


def export_trace_csv(trace: MemoryTrace) -> str:
    buf = io.StringIO()
    buf.write("time,active_words\n")
    for t, v in trace.points:
        buf.write(f"{_fmt_time(t)},{v}\n")
    return buf.getvalue()


def _fmt_time(t: float) -> str:
    return str(int(t)) if float(t).is_integer() else repr(t)


def gantt_ascii(result: ScheduleResult, width: int = 72) -> str:
    """Fixed-width text Gantt chart, one row per resource."""
    span = result.makespan or 1.0
    by_resource: dict[str, list[ScheduledNode]] = {}
    for s in result.scheduled:
        by_resource.setdefault(s.resource, []).append(s)
    lines = []
    for rid in sorted(by_resource):
        row = ["."] * width
        for s in by_resource[rid]:
            a = int(s.start / span * (width - 1))
            b = max(a + 1, int(s.end / span * (width - 1)) + (s.end > s.start))
            label = result.ng.by_id[s.node_id].layer_id.split(".")[-1][:1]
            for i in range(a, min(b, width)):
                row[i] = label
        lines.append(f"{rid:>8} |{''.join(row)}|")
    lines.append(f"{'':>8}  0{' ' * (width - 12)}{result.makespan:>10.0f}")
    return "\n".join(lines) + "\n"


_GANTT_COLORS = (
    "#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3",
    "#937860", "#da8bc3", "#8c8c8c", "#ccb974", "#64b5cd",
)


def gantt_svg(result: ScheduleResult) -> str:
    """Self-contained SVG Gantt chart of the schedule."""
    resources = sorted({s.resource for s in result.scheduled})
    row_h, left, top = 28, 90, 30
    width, height = 960, top + row_h * len(resources) + 50
    span = result.makespan or 1.0
    scale = (width - left - 20) / span

    layer_ids = result.ng.graph.layer_ids()
    color_of = {lid: _GANTT_COLORS[i % len(_GANTT_COLORS)] for i, lid in enumerate(layer_ids)}

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        '<style>text{font-family:monospace;font-size:11px}</style>',
        f'<text x="{left}" y="16">schedule: makespan {result.makespan:g} cycles, '
        f'peak {result.trace.peak} words</text>',
    ]
    for i, rid in enumerate(resources):
        y = top + i * row_h
        parts.append(f'<text x="4" y="{y + row_h * 0.65:.1f}">{rid}</text>')
        parts.append(
            f'<line x1="{left}" y1="{y + row_h - 2}" x2="{width - 10}" '
            f'y2="{y + row_h - 2}" stroke="#ddd"/>'
        )
    for s in result.scheduled:
        if s.end == s.start:
            continue
        i = resources.index(s.resource)
        x = left + s.start * scale
        w = max(0.8, (s.end - s.start) * scale)
        y = top + i * row_h + 3
        lid = result.ng.by_id[s.node_id].layer_id
        parts.append(
            f'<rect x="{x:.2f}" y="{y}" width="{w:.2f}" height="{row_h - 8}" '
            f'fill="{color_of[lid]}"><title>{lid} [{s.start:g},{s.end:g})</title></rect>'
        )
    axis_y = top + row_h * len(resources) + 14
    parts.append(f'<text x="{left}" y="{axis_y}">0</text>')
    parts.append(f'<text x="{width - 80}" y="{axis_y}">{result.makespan:g}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def memtrace_svg(trace: MemoryTrace, title: str = "active feature memory") -> str:
    """SVG step plot of the memory trace."""
    width, height, left, top, bottom = 960, 300, 70, 26, 30
    points = trace.points or [(0.0, 0)]
    t_max = max(t for t, _ in points) or 1.0
    v_max = max(trace.peak, 1)
    sx = (width - left - 20) / t_max
    sy = (height - top - bottom) / v_max

    def xy(t: float, v: int) -> str:
        return f"{left + t * sx:.2f},{height - bottom - v * sy:.2f}"

    coords = []
    prev_v = 0
    for t, v in points:
        coords.append(xy(t, prev_v))
        coords.append(xy(t, v))
        prev_v = v
    coords.append(xy(t_max, prev_v))
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">'
        '<style>text{font-family:monospace;font-size:11px}</style>'
        f'<text x="{left}" y="14">{title}: peak {trace.peak} words</text>'
        f'<line x1="{left}" y1="{height - bottom}" x2="{width - 10}" '
        f'y2="{height - bottom}" stroke="#999"/>'
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{height - bottom}" stroke="#999"/>'
        f'<text x="4" y="{top + 8}">{v_max}</text>'
        f'<text x="4" y="{height - bottom}">0</text>'
        f'<polyline fill="none" stroke="#c44e52" stroke-width="1.5" '
        f'points="{" ".join(coords)}"/>'
        "</svg>\n"
    )
