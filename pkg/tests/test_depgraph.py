import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from attnsched.depgraph import (
    BRUTE_FORCE_ELEMENT_LIMIT,
    Region,
    brute_force_dependencies,
    fine_grained_graph,
    generate_dependencies,
    input_regions,
    split_layer,
    uniform_split_plan,
)
from attnsched.workload import INPUT_ID, LayerKind, build_attention_head


def test_split_matmul_by_rows_tile_1():
    g = build_attention_head(8, 16)
    nodes = split_layer(g["h0.q"], "R", 1)
    assert len(nodes) == 8
    for i, n in enumerate(nodes):
        assert (n.region.row_lo, n.region.row_hi) == (i, i + 1)
        assert (n.region.col_lo, n.region.col_hi) == (0, 16)
        assert n.mac_count == 1 * 16 * 16


def test_split_softmax_whole_layer():
    g = build_attention_head(4, 4)
    nodes = split_layer(g["h0.p"], "R", 4)
    assert len(nodes) == 1
    assert nodes[0].region == Region("h0.p", 0, 4, 0, 4)
    assert nodes[0].mac_count == 0


def test_split_matmul_by_cols_remainder():
    g = build_attention_head(6, 6)
    nodes = split_layer(g["h0.s"], "T", 4)
    assert [(n.region.col_lo, n.region.col_hi) for n in nodes] == [(0, 4), (4, 6)]
    assert all((n.region.row_lo, n.region.row_hi) == (0, 6) for n in nodes)


def test_split_rejects_zero_tile():
    g = build_attention_head(4, 4)
    with pytest.raises(ValueError):
        split_layer(g["h0.q"], "R", 0)


def test_split_rejects_col_split_of_softmax():
    g = build_attention_head(4, 4)
    with pytest.raises(ValueError):
        split_layer(g["h0.p"], "T", 1)


def test_input_regions_matmul_features():
    g = build_attention_head(8, 16)  # S = Q.K^T is 8x8 with contraction 16
    node = split_layer(g["h0.s"], "R", 1)[0]
    regions = dict(input_regions(node, g))
    assert regions[0] == Region("h0.q", 0, 1, 0, 16)
    assert regions[1] == Region("h0.kt", 0, 16, 0, 8)


def test_input_regions_weight_matmul_hides_weights():
    g = build_attention_head(8, 16)
    node = split_layer(g["h0.q"], "R", 2)[1]
    regions = input_regions(node, g)
    assert len(regions) == 1
    assert regions[0][1] == Region(INPUT_ID, 2, 4, 0, 16)


def test_input_regions_transpose_swaps():
    g = build_attention_head(8, 16)  # kt is 16x8
    nodes = split_layer(g["h0.kt"], "R", 1)
    assert input_regions(nodes[2], g)[0][1] == Region("h0.k", 0, 8, 2, 3)


def test_input_regions_softmax_full_rows():
    g = build_attention_head(4, 4)
    node = split_layer(g["h0.p"], "R", 1)[1]
    assert input_regions(node, g)[0][1] == Region("h0.s", 1, 2, 0, 4)


def _edge_set(edges):
    return {(e.producer, e.consumer, e.words) for e in edges}


def test_full_extent_head_node_and_edge_census():
    g = build_attention_head(8, 8)
    ng = fine_grained_graph(g, uniform_split_plan(g, tile=None))
    assert len(ng.nodes) == 7
    # K->K^T, K^T->S, Q->S, S->P, P->O, V->O; input and weights are sources
    assert len(ng.edges) == 6
    by_layer = {n.layer_id: n.id for n in ng.nodes}
    expected = {
        (by_layer["h0.k"], by_layer["h0.kt"], 64),
        (by_layer["h0.kt"], by_layer["h0.s"], 64),
        (by_layer["h0.q"], by_layer["h0.s"], 64),
        (by_layer["h0.s"], by_layer["h0.p"], 64),
        (by_layer["h0.p"], by_layer["h0.o"], 64),
        (by_layer["h0.v"], by_layer["h0.o"], 64),
    }
    assert _edge_set(ng.edges) == expected


def test_row_split_head_node_counts():
    g = build_attention_head(8, 8)
    plan = {lid: ("R", 1) for lid in g.layer_ids()}
    ng = fine_grained_graph(g, plan)
    counts = {lid: len(ng.nodes_by_layer[lid]) for lid in g.layer_ids()}
    assert counts == {
        "h0.q": 8, "h0.k": 8, "h0.v": 8, "h0.kt": 8,
        "h0.s": 8, "h0.p": 8, "h0.o": 8,
    }


def test_empty_split_plan_rejected():
    g = build_attention_head(8, 8)
    with pytest.raises(ValueError):
        fine_grained_graph(g, {})


def test_q_nodes_feed_qkt_rows_one_to_one():
    g = build_attention_head(8, 8)
    plan = uniform_split_plan(g, tile=1)
    plan["h0.q"] = ("R", 4)
    ng = fine_grained_graph(g, plan)
    q_nodes = {n.id for n in ng.nodes_by_layer["h0.q"]}
    for s_node in ng.nodes_by_layer["h0.s"]:
        q_preds = [e for e in ng.in_edges[s_node.id] if e.producer in q_nodes]
        assert len(q_preds) == 1
        assert q_preds[0].words == 8


def test_softmax_row_split_single_edges():
    g = build_attention_head(4, 4)
    ng = fine_grained_graph(g, uniform_split_plan(g, tile=1))
    s_nodes = {n.id for n in ng.nodes_by_layer["h0.s"]}
    for p_node in ng.nodes_by_layer["h0.p"]:
        incoming = [e for e in ng.in_edges[p_node.id] if e.producer in s_nodes]
        assert len(incoming) == 1
        assert incoming[0].words == 4


def test_no_edges_between_heads():
    from attnsched.workload import build_mhsa

    g = build_mhsa(4, 4, 2)
    ng = fine_grained_graph(g, uniform_split_plan(g, tile=1))
    for e in ng.edges:
        p = ng.by_id[e.producer].layer_id.split(".")[0]
        c = ng.by_id[e.consumer].layer_id.split(".")[0]
        assert p == c


def test_oracle_equivalence_acceptance_grid():
    for m in (4, 8, 16):
        for n in (4, 8, 16):
            g = build_attention_head(m, n)
            for tile in (1, 2, None):
                ng = fine_grained_graph(g, uniform_split_plan(g, tile=tile))
                assert _edge_set(generate_dependencies(ng.nodes, g)) == _edge_set(
                    brute_force_dependencies(ng.nodes, g)
                ), f"oracle mismatch at M={m} N={n} tile={tile}"


@given(
    m=st.integers(min_value=1, max_value=16),
    n=st.integers(min_value=1, max_value=16),
    tile=st.sampled_from([1, 2, 3, None]),
    axis=st.sampled_from(["R", "T"]),
)
@settings(max_examples=25, deadline=None)
def test_oracle_equivalence_property(m, n, tile, axis):
    g = build_attention_head(m, n)
    ng = fine_grained_graph(g, uniform_split_plan(g, axis=axis, tile=tile))
    assert _edge_set(generate_dependencies(ng.nodes, g)) == _edge_set(
        brute_force_dependencies(ng.nodes, g)
    )


@given(
    m=st.integers(min_value=2, max_value=12),
    n=st.integers(min_value=2, max_value=12),
    coarse=st.integers(min_value=2, max_value=4),
    producer=st.sampled_from(["h0.q", "h0.k", "h0.v", "h0.s", "h0.p"]),
)
@settings(max_examples=25, deadline=None)
def test_tiling_refinement_word_additivity(m, n, coarse, producer):
    """Merging adjacent producer bands sums their per-consumer words.

    Producer bands are disjoint, so the words each consumer pulls from the
    merged band equal the sum over the fine bands.
    """
    g = build_attention_head(m, n)
    base = uniform_split_plan(g, tile=1)
    fine = fine_grained_graph(g, base)
    merged_plan = dict(base)
    merged_plan[producer] = ("R", coarse)
    merged = fine_grained_graph(g, merged_plan)

    def words_from(ng, lid):
        """consumer layer/band -> words received from layer ``lid``."""
        acc: dict[tuple[str, int], int] = {}
        src = {n.id: n for n in ng.nodes_by_layer[lid]}
        for e in ng.edges:
            if e.producer in src:
                c = ng.by_id[e.consumer]
                key = (c.layer_id, c.band_index)
                acc[key] = acc.get(key, 0) + e.words
        return acc

    assert words_from(fine, producer) == words_from(merged, producer)


@given(m=st.integers(min_value=2, max_value=16), n=st.integers(min_value=2, max_value=16))
@settings(max_examples=20, deadline=None)
def test_softmax_totality(m, n):
    g = build_attention_head(m, n)
    ng = fine_grained_graph(g, uniform_split_plan(g, tile=1))
    s_nodes = {x.id for x in ng.nodes_by_layer["h0.s"]}
    for p_node in ng.nodes_by_layer["h0.p"]:
        rows = p_node.region.row_hi - p_node.region.row_lo
        words = sum(e.words for e in ng.in_edges[p_node.id] if e.producer in s_nodes)
        assert words == rows * m


@given(
    m=st.integers(min_value=1, max_value=12),
    n=st.integers(min_value=1, max_value=12),
    tile=st.sampled_from([1, 2, None]),
)
@settings(max_examples=25, deadline=None)
def test_acyclic_for_every_split(m, n, tile):
    g = build_attention_head(m, n)
    ng = fine_grained_graph(g, uniform_split_plan(g, tile=tile))
    assert ng.check_acyclic()


def test_brute_force_guard():
    g = build_attention_head(512, 512)
    ng = fine_grained_graph(g, uniform_split_plan(g, tile=None))
    with pytest.raises(ValueError, match=str(BRUTE_FORCE_ELEMENT_LIMIT)):
        brute_force_dependencies(ng.nodes, g)


def test_export_text_is_deterministic_and_complete():
    g = build_attention_head(4, 4)
    ng = fine_grained_graph(g, uniform_split_plan(g, tile=2))
    text = ng.export_text()
    assert text == ng.export_text()
    assert text.count("node ") == len(ng.nodes)
    assert text.count("edge ") == len(ng.edges)
    assert "rows=[0,2)" in text


def test_export_text_matches_golden():
    from pathlib import Path

    g = build_attention_head(4, 4)
    ng = fine_grained_graph(g, uniform_split_plan(g, tile=2))
    golden = Path(__file__).parent / "data" / "head_4x4_tile2.golden"
    assert ng.export_text() == golden.read_text()
