import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attnsched.workload import (
    INPUT_ID,
    Layer,
    LayerGraph,
    LayerKind,
    TensorShape,
    build_attention_head,
    build_mhsa,
    dump_workload,
    load_workload,
    validate_graph,
)


def head_macs(m: int, n: int) -> int:
    """Independent enumeration of matmul MACs: sum R*S*T over the 5 matmuls."""
    total = 0
    for r, s, t in [(m, n, n)] * 3 + [(m, n, m), (m, m, n)]:
        total += r * s * t
    return total


def test_tensor_shape_rejects_nonpositive():
    with pytest.raises(ValueError):
        TensorShape(0, 4)
    with pytest.raises(ValueError):
        TensorShape(4, -1)


def test_head_structure_128x1024():
    g = build_attention_head(128, 1024)
    shapes = {l.id.split(".")[1]: l.output_shape for l in g.layers}
    assert shapes["q"] == shapes["k"] == shapes["v"] == TensorShape(128, 1024)
    assert shapes["kt"] == TensorShape(1024, 128)
    assert shapes["s"] == shapes["p"] == TensorShape(128, 128)
    assert shapes["o"] == TensorShape(128, 1024)
    assert len(g.layers) == 7


def test_head_degenerate_unit():
    g = build_attention_head(1, 1)
    assert len(g.layers) == 7
    assert all(l.output_shape == TensorShape(1, 1) for l in g.layers)


def test_head_mac_count_8x32():
    g = build_attention_head(8, 32)
    assert g.mac_count == head_macs(8, 32) == 28672


def test_head_layer_census():
    g = build_attention_head(16, 16)
    matmuls = [l for l in g.layers if l.mac_count > 0]
    features = [l for l in matmuls if l.kind is LayerKind.MATMUL_FEATURES]
    assert len(g.layers) == 7
    assert len(matmuls) == 5
    assert len(features) == 2
    weight_sharers = [l for l in g.layers if (INPUT_ID, 0) in l.predecessors]
    assert len(weight_sharers) == 3


def test_feature_words_account_for_transpose_view():
    m, n = 8, 32
    g = build_attention_head(m, n)
    # Q, K, V and O rows plus the two M x M tensors; K^T is a view.
    assert g.feature_words_produced() == 4 * m * n + 2 * m * m


def test_mhsa_structure():
    g = build_mhsa(8, 32, 4)
    assert len(g.layers) == 28
    heads = {l.id.split(".")[0] for l in g.layers}
    assert heads == {"h0", "h1", "h2", "h3"}
    # no cross-head edges
    for layer in g.layers:
        for src, _ in layer.predecessors:
            if src != INPUT_ID:
                assert src.split(".")[0] == layer.id.split(".")[0]


def test_mhsa_single_head_matches_head_builder():
    assert build_mhsa(81, 32, 1).layers == build_attention_head(81, 32).layers


def test_mhsa_macs_scale_with_heads():
    assert build_mhsa(128, 32, 2).mac_count == 2 * head_macs(128, 32)


@given(
    m=st.integers(min_value=1, max_value=64),
    n=st.integers(min_value=1, max_value=64),
    h=st.integers(min_value=1, max_value=5),
)
@settings(max_examples=40, deadline=None)
def test_mhsa_mac_scaling_property(m, n, h):
    assert build_mhsa(m, n, h).mac_count == h * build_attention_head(m, n).mac_count


@given(m=st.integers(min_value=1, max_value=128), n=st.integers(min_value=1, max_value=128))
@settings(max_examples=40, deadline=None)
def test_every_head_validates(m, n):
    assert validate_graph(build_attention_head(m, n)).ok


def test_validate_flags_unswapped_transpose():
    g = build_attention_head(16, 8)
    bad = g["h0.kt"]
    bad.output_shape = TensorShape(16, 8)  # should be 8x16
    report = validate_graph(g)
    assert not report.ok
    assert any("h0.kt" in v and "swapped" in v for v in report.violations)


def test_validate_flags_inner_dim_mismatch():
    layers = [
        Layer("a", LayerKind.MATMUL_WEIGHTS, [TensorShape(4, 8), TensorShape(8, 8)],
              TensorShape(4, 8), [(INPUT_ID, 0)]),
        Layer("b", LayerKind.MATMUL_FEATURES,
              [TensorShape(4, 8), TensorShape(7, 4)], TensorShape(4, 4),
              [("a", 0), ("a", 1)]),
    ]
    report = validate_graph(LayerGraph(layers, input_shape=TensorShape(4, 8)))
    assert not report.ok
    assert any("inner dims" in v for v in report.violations)


def test_validate_flags_cycle():
    layers = [
        Layer("a", LayerKind.SOFTMAX, [TensorShape(4, 4)], TensorShape(4, 4), [("b", 0)]),
        Layer("b", LayerKind.SOFTMAX, [TensorShape(4, 4)], TensorShape(4, 4), [("a", 0)]),
    ]
    report = validate_graph(LayerGraph(layers, input_shape=TensorShape(4, 4)))
    assert any("cycle" in v for v in report.violations)


def test_workload_config_round_trip():
    spec = load_workload("M: 128\nN: 1024\nheads: 2\nword_bytes: 1\n")
    assert (spec.m, spec.n, spec.heads, spec.word_bytes) == (128, 1024, 2, 1)
    again = load_workload(dump_workload(spec))
    assert again == spec
    g = spec.graph()
    assert len(g.layers) == 14


def test_workload_config_rejects_garbage():
    with pytest.raises(ValueError):
        load_workload("M: 0\nN: 4\n")
    with pytest.raises(ValueError):
        load_workload("N: 4\n")
    with pytest.raises(ValueError):
        load_workload("- just\n- a list\n")
