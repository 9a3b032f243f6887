"""Typed layer graphs for attention-head workloads.

An attention head maps an M x N input through three weight matmuls (Q, K, V),
a transpose of K, a features-by-features matmul Q.K^T, a row-wise softmax and
a final features-by-features matmul with V.  Weight matrices are modeled as
resident constants: only feature tensors participate in the active-memory
accounting downstream, and the 1/sqrt(d_k) scale is folded into the Q weights
and never materialized.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import yaml

#: Identifier of the shared graph input tensor (it has no producing layer).
INPUT_ID = "in"


class LayerKind(enum.Enum):
    MATMUL_WEIGHTS = "matmul_weights"    # I2 is a resident weight matrix
    MATMUL_FEATURES = "matmul_features"  # both inputs are feature tensors
    TRANSPOSE = "transpose"
    SOFTMAX = "softmax"                  # row-wise
    ELEMENTWISE_SCALE = "elementwise_scale"  # always-folded no-op marker


MATMUL_KINDS = frozenset({LayerKind.MATMUL_WEIGHTS, LayerKind.MATMUL_FEATURES})

#: Kinds that can actually appear in a built workload graph. The elementwise
#: scale is folded into the Q weights at construction time, so hardware specs
#: are not required to support it.
SCHEDULABLE_KINDS = frozenset(
    {
        LayerKind.MATMUL_WEIGHTS,
        LayerKind.MATMUL_FEATURES,
        LayerKind.TRANSPOSE,
        LayerKind.SOFTMAX,
    }
)


@dataclass(frozen=True, slots=True)
class TensorShape:
    rows: int
    cols: int

    def __post_init__(self) -> None:
        if self.rows < 1 or self.cols < 1:
            raise ValueError(f"tensor extents must be >= 1, got {self.rows}x{self.cols}")

    @property
    def words(self) -> int:
        return self.rows * self.cols

    def swapped(self) -> "TensorShape":
        return TensorShape(self.cols, self.rows)


@dataclass(slots=True)
class Layer:
    """One operator of the workload graph.

    ``predecessors`` lists ``(source id, input slot)`` pairs, where the source
    is either another layer id or :data:`INPUT_ID`.  Slot 0 is the left matmul
    operand (I1), slot 1 the right one (I2).
    """

    id: str
    kind: LayerKind
    input_shapes: list[TensorShape]
    output_shape: TensorShape
    predecessors: list[tuple[str, int]]
    index: int = 0

    @property
    def mac_count(self) -> int:
        if self.kind in MATMUL_KINDS:
            r, s = self.input_shapes[0].rows, self.input_shapes[0].cols
            t = self.output_shape.cols
            return r * s * t
        return 0

    @property
    def weight_shape(self) -> TensorShape | None:
        """Shape of the resident weight operand, if any."""
        if self.kind is LayerKind.MATMUL_WEIGHTS:
            return self.input_shapes[1]
        return None


@dataclass
class LayerGraph:
    layers: list[Layer]
    head_count: int = 1
    input_shape: TensorShape | None = None

    def __post_init__(self) -> None:
        self._by_id = {layer.id: layer for layer in self.layers}
        if len(self._by_id) != len(self.layers):
            raise ValueError("duplicate layer ids")
        for i, layer in enumerate(self.layers):
            layer.index = i

    def __getitem__(self, layer_id: str) -> Layer:
        return self._by_id[layer_id]

    def __contains__(self, layer_id: str) -> bool:
        return layer_id in self._by_id

    def layer_ids(self) -> list[str]:
        return [layer.id for layer in self.layers]

    def successors(self, layer_id: str) -> list[Layer]:
        return [l for l in self.layers if any(src == layer_id for src, _ in l.predecessors)]

    def tensor_shape(self, tensor_id: str) -> TensorShape:
        """Output shape of a layer, or the graph input shape for INPUT_ID."""
        if tensor_id == INPUT_ID:
            if self.input_shape is None:
                raise KeyError("graph has no input tensor")
            return self.input_shape
        return self._by_id[tensor_id].output_shape

    @property
    def mac_count(self) -> int:
        return sum(layer.mac_count for layer in self.layers)

    def feature_words_produced(self) -> int:
        """Total feature words produced by all layers, excluding the input.

        Transpose outputs are views of their input tensor and contribute 0.
        """
        return sum(
            layer.output_shape.words
            for layer in self.layers
            if layer.kind is not LayerKind.TRANSPOSE
        )


def _head_layers(m: int, n: int, head: int) -> list[Layer]:
    p = f"h{head}."
    mn = TensorShape(m, n)
    nn = TensorShape(n, n)
    mm = TensorShape(m, m)
    return [
        Layer(p + "q", LayerKind.MATMUL_WEIGHTS, [mn, nn], mn, [(INPUT_ID, 0)]),
        Layer(p + "k", LayerKind.MATMUL_WEIGHTS, [mn, nn], mn, [(INPUT_ID, 0)]),
        Layer(p + "v", LayerKind.MATMUL_WEIGHTS, [mn, nn], mn, [(INPUT_ID, 0)]),
        Layer(p + "kt", LayerKind.TRANSPOSE, [mn], mn.swapped(), [(p + "k", 0)]),
        Layer(
            p + "s",
            LayerKind.MATMUL_FEATURES,
            [mn, mn.swapped()],
            mm,
            [(p + "q", 0), (p + "kt", 1)],
        ),
        Layer(p + "p", LayerKind.SOFTMAX, [mm], mm, [(p + "s", 0)]),
        Layer(
            p + "o",
            LayerKind.MATMUL_FEATURES,
            [mm, mn],
            mn,
            [(p + "p", 0), (p + "v", 1)],
        ),
    ]


def build_attention_head(m: int, n: int) -> LayerGraph:
    """Build the canonical 7-layer attention head for an M x N input.

    Layers: Q, K, V (weight matmuls sharing the input), K^T, S = Q.K^T,
    P = softmax(S) and O = P.V.  The 1/sqrt(d_k) factor is folded into the
    Q weights, so no explicit scale layer appears.
    """
    if m < 1 or n < 1:
        raise ValueError("M and N must be >= 1")
    return LayerGraph(_head_layers(m, n, 0), head_count=1, input_shape=TensorShape(m, n))


def build_mhsa(m: int, n: int, heads: int) -> LayerGraph:
    """Build ``heads`` independent attention heads sharing one input tensor.

    Heads never exchange data: there are no cross-head edges.
    """
    if heads < 1:
        raise ValueError("heads must be >= 1")
    layers: list[Layer] = []
    for h in range(heads):
        layers.extend(_head_layers(m, n, h))
    return LayerGraph(layers, head_count=heads, input_shape=TensorShape(m, n))


def head_of(layer_id: str) -> str:
    """Head prefix of a layer id (``'h2.s' -> 'h2'``)."""
    return layer_id.split(".", 1)[0]


@dataclass
class ValidationReport:
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_graph(g: LayerGraph) -> ValidationReport:
    """Check acyclicity and per-kind shape invariants.

    Returns a report listing each violated edge or layer; never raises.
    """
    report = ValidationReport()
    known = {layer.id for layer in g.layers} | {INPUT_ID}

    for layer in g.layers:
        for src, slot in layer.predecessors:
            if src not in known:
                report.violations.append(f"{layer.id}: unknown predecessor {src!r}")
                continue
            if slot >= len(layer.input_shapes):
                report.violations.append(f"{layer.id}: slot {slot} out of range")
                continue
            try:
                src_shape = g.tensor_shape(src)
            except KeyError:
                report.violations.append(f"{layer.id}: predecessor {src!r} has no shape")
                continue
            if src_shape != layer.input_shapes[slot]:
                report.violations.append(
                    f"{layer.id}: input slot {slot} expects "
                    f"{layer.input_shapes[slot].rows}x{layer.input_shapes[slot].cols}, "
                    f"{src} produces {src_shape.rows}x{src_shape.cols}"
                )

        if layer.kind in MATMUL_KINDS:
            if len(layer.input_shapes) != 2:
                report.violations.append(f"{layer.id}: matmul needs 2 inputs")
            else:
                i1, i2 = layer.input_shapes
                out = layer.output_shape
                if i1.cols != i2.rows:
                    report.violations.append(
                        f"{layer.id}: inner dims mismatch ({i1.cols} vs {i2.rows})"
                    )
                if (out.rows, out.cols) != (i1.rows, i2.cols):
                    report.violations.append(
                        f"{layer.id}: output {out.rows}x{out.cols} != {i1.rows}x{i2.cols}"
                    )
        elif layer.kind is LayerKind.TRANSPOSE:
            if layer.output_shape != layer.input_shapes[0].swapped():
                report.violations.append(f"{layer.id}: transpose output not swapped")
        elif layer.kind is LayerKind.SOFTMAX:
            if layer.output_shape != layer.input_shapes[0]:
                report.violations.append(f"{layer.id}: softmax must preserve shape")

    # Cycle check over layer-to-layer edges (input tensor is a source).
    indeg = {layer.id: 0 for layer in g.layers}
    succs: dict[str, list[str]] = {layer.id: [] for layer in g.layers}
    for layer in g.layers:
        for src, _ in layer.predecessors:
            if src != INPUT_ID and src in succs:
                succs[src].append(layer.id)
                indeg[layer.id] += 1
    frontier = [lid for lid, d in indeg.items() if d == 0]
    seen = 0
    while frontier:
        lid = frontier.pop()
        seen += 1
        for nxt in succs[lid]:
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                frontier.append(nxt)
    if seen != len(g.layers):
        report.violations.append("graph contains a cycle")
    return report


@dataclass
class WorkloadSpec:
    """Parsed workload configuration."""

    m: int
    n: int
    heads: int = 1
    word_bytes: int = 1

    def graph(self) -> LayerGraph:
        return build_mhsa(self.m, self.n, self.heads)


def load_workload(text: str) -> WorkloadSpec:
    """Parse a workload config with fields {M, N, heads, word_bytes}."""
    raw = yaml.safe_load(text)
    if not isinstance(raw, dict):
        raise ValueError("workload config must be a mapping")
    try:
        m = int(raw["M"])
        n = int(raw["N"])
    except KeyError as exc:
        raise ValueError(f"workload config missing field {exc}") from exc
    heads = int(raw.get("heads", 1))
    word_bytes = int(raw.get("word_bytes", 1))
    if m < 1 or n < 1 or heads < 1 or word_bytes < 1:
        raise ValueError("workload fields must be positive")
    return WorkloadSpec(m, n, heads, word_bytes)


def dump_workload(spec: WorkloadSpec) -> str:
    return yaml.safe_dump(
        {"M": spec.m, "N": spec.n, "heads": spec.heads, "word_bytes": spec.word_bytes},
        sort_keys=True,
    )
