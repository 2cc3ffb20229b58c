"""Graph construction, matching, mining, and persistence tests.

Matching is checked against a permutation brute force and mining against
a direct enumeration of every connected sub-pattern, so the two
implementations share no code paths with the module under test beyond
the canonical encoder (which gets its own invariance tests).
"""

import io
import itertools
import random

import pytest

from annokit.documents import Document
from annokit.errors import (
    DanglingReferenceError,
    ImportFormatError,
    ValidationError,
)
from annokit.graphs import (
    LabeledGraph,
    SubgraphMapping,
    build_dependency_graph,
    build_sentence_graphs,
    canonical_code,
    find_subgraph_occurrences,
    load_graph,
    mine_frequent_subgraphs,
    persist_graph,
    persist_mining_results,
    read_graph_file,
    write_graph_file,
)
from annokit.intervals import Interval
from annokit.store import CdmStore


def dep_attrs(head, dependent):
    return {
        "head_start": str(head[0]), "head_end": str(head[1]),
        "dependent_start": str(dependent[0]),
        "dependent_end": str(dependent[1]),
    }


def example_doc():
    """'cells express CD30' with tokens, two deps, two concepts."""
    doc = Document("note", "cells express CD30")
    sent = doc.annotate(Interval(0, 18), "sentence")
    for a, b in ((0, 5), (6, 13), (14, 18)):
        doc.annotate(Interval(a, b), "token",
                     value=doc.content[a:b])
    deps = [
        doc.annotate(Interval(6, 13), "dependency", value="nsubj",
                     attributes=dep_attrs((6, 13), (0, 5))),
        doc.annotate(Interval(6, 13), "dependency", value="dobj",
                     attributes=dep_attrs((6, 13), (14, 18))),
    ]
    concepts = [
        doc.annotate(Interval(0, 5), "CUI", value="C_a"),
        doc.annotate(Interval(14, 18), "CUI", value="C_b"),
    ]
    return doc, sent, deps, concepts


class TestBuild:
    def test_worked_example(self):
        doc, sent, deps, concepts = example_doc()
        g = build_dependency_graph(doc, sent, deps, concepts)
        assert g.nodes == ["C_a", "express", "C_b"]
        assert sorted(g.edges) == [(1, 0, "nsubj"), (1, 2, "dobj")]
        assert g.graph_type == "dependency"
        assert g.name == "note:0-18"
        assert g.skipped_dependencies == 0

    def test_merge_collapses_internal_edge(self):
        doc = Document("d", "large cell lymphoma")
        sent = doc.annotate(Interval(0, 19), "sentence")
        spans = [(0, 5), (6, 10), (11, 19)]
        for a, b in spans:
            doc.annotate(Interval(a, b), "token")
        deps = [
            doc.annotate(Interval(6, 10), "dependency", value="amod",
                         attributes=dep_attrs((6, 10), (0, 5))),
            doc.annotate(Interval(11, 19), "dependency", value="compound",
                         attributes=dep_attrs((11, 19), (6, 10))),
        ]
        concepts = [doc.annotate(Interval(0, 10), "CUI", value="C1")]
        g = build_dependency_graph(doc, sent, deps, concepts)
        assert g.nodes == ["C1", "lymphoma"]
        # amod sits inside the concept span and collapses away
        assert g.edges == [(1, 0, "compound")]
        assert g.skipped_dependencies == 0

    def test_duplicate_edges_dropped(self):
        doc = Document("d", "a b")
        sent = doc.annotate(Interval(0, 3), "sentence")
        doc.annotate(Interval(0, 1), "token")
        doc.annotate(Interval(2, 3), "token")
        dep = {"type_name": "dependency", "value": "dep"}
        deps = [
            doc.annotate(Interval(0, 1), "dependency", value="dep",
                         attributes=dep_attrs((0, 1), (2, 3))),
            doc.annotate(Interval(0, 1), "dependency", value="dep",
                         attributes=dep_attrs((0, 1), (2, 3))),
        ]
        del dep
        g = build_dependency_graph(doc, sent, deps, [])
        assert g.edges == [(0, 1, "dep")]

    def test_out_of_sentence_reference_is_counted(self):
        doc = Document("d", "a b. c d")
        s1 = doc.annotate(Interval(0, 4), "sentence")
        for a, b in ((0, 1), (2, 3), (3, 4), (5, 6), (7, 8)):
            doc.annotate(Interval(a, b), "token")
        deps = [
            doc.annotate(Interval(0, 1), "dependency", value="x",
                         attributes=dep_attrs((0, 1), (7, 8))),
            doc.annotate(Interval(0, 1), "dependency", value="y",
                         attributes=dep_attrs((0, 1), (2, 3))),
        ]
        g = build_dependency_graph(doc, s1, deps, [])
        assert g.skipped_dependencies == 1
        assert (0, 1, "y") in g.edges

    def test_malformed_dep_attrs_are_counted(self):
        doc = Document("d", "a b")
        sent = doc.annotate(Interval(0, 3), "sentence")
        doc.annotate(Interval(0, 1), "token")
        doc.annotate(Interval(2, 3), "token")
        deps = [doc.annotate(Interval(0, 1), "dependency", value="z",
                             attributes={"head_start": "zero"})]
        g = build_dependency_graph(doc, sent, deps, [])
        assert g.edges == []
        assert g.skipped_dependencies == 1

    def test_concept_without_tokens_gets_no_node(self):
        doc, sent, deps, concepts = example_doc()
        concepts.append(doc.annotate(Interval(5, 6), "CUI", value="C_gap"))
        g = build_dependency_graph(doc, sent, deps, concepts)
        assert "C_gap" not in g.nodes

    def test_token_in_two_concepts_joins_first_by_span(self):
        doc = Document("d", "aa bb cc")
        sent = doc.annotate(Interval(0, 8), "sentence")
        for a, b in ((0, 2), (3, 5), (6, 8)):
            doc.annotate(Interval(a, b), "token")
        concepts = [
            doc.annotate(Interval(3, 8), "CUI", value="LATE"),
            doc.annotate(Interval(0, 5), "CUI", value="EARLY"),
        ]
        deps = [doc.annotate(Interval(0, 2), "dependency", value="r",
                             attributes=dep_attrs((0, 2), (3, 5)))]
        g = build_dependency_graph(doc, sent, deps, concepts)
        # bb is inside both; EARLY starts first so it claims the token
        assert g.nodes == ["EARLY", "LATE"]
        assert g.edges == [(0, 1, "r")] or g.edges == []
        assert g.edges == []  # aa and bb share the EARLY node

    def test_lowercased_token_labels(self):
        doc = Document("d", "CD30 Positive")
        sent = doc.annotate(Interval(0, 13), "sentence")
        doc.annotate(Interval(0, 4), "token")
        doc.annotate(Interval(5, 13), "token")
        g = build_dependency_graph(doc, sent, [], [])
        assert g.nodes == ["cd30", "positive"]

    def test_build_sentence_graphs(self):
        doc = Document("d", "a b. c d.")
        doc.annotate(Interval(0, 4), "sentence")
        doc.annotate(Interval(5, 9), "sentence")
        for a, b in ((0, 1), (2, 3), (5, 6), (7, 8)):
            doc.annotate(Interval(a, b), "token")
        graphs = build_sentence_graphs(doc)
        assert len(graphs) == 2
        assert [g.name for g in graphs] == ["d:0-4", "d:5-9"]

    def test_graph_validation(self):
        with pytest.raises(ValidationError):
            LabeledGraph(nodes=["a", "b"], edges=[(0, 0, "loop")])
        with pytest.raises(ValidationError):
            LabeledGraph(nodes=["a"], edges=[(0, 1, "oob")])


def brute_force_embeddings(host, pattern):
    """Oracle: try every injective node tuple directly."""
    k = len(pattern.nodes)
    host_edges = set(host.edges)
    found = []
    for assign in itertools.permutations(range(len(host.nodes)), k):
        if any(host.nodes[assign[i]] != pattern.nodes[i]
               for i in range(k)):
            continue
        if all((assign[s], assign[d], l) in host_edges
               for s, d, l in pattern.edges):
            found.append(dict(enumerate(assign)))
    return found


def random_graph(rng, max_n=6, labels="abc", edge_labels="xy"):
    n = rng.randint(1, max_n)
    nodes = [rng.choice(labels) for _ in range(n)]
    possible = [(s, d) for s in range(n) for d in range(n) if s != d]
    edges = []
    for s, d in possible:
        for l in edge_labels:
            if rng.random() < 0.25:
                edges.append((s, d, l))
    return LabeledGraph(nodes=nodes, edges=edges)


class TestMatching:
    def test_worked_single_edge(self):
        doc, sent, deps, concepts = example_doc()
        g = build_dependency_graph(doc, sent, deps, concepts)
        pattern = LabeledGraph(nodes=["express", "C_a"],
                               edges=[(0, 1, "nsubj")])
        found = find_subgraph_occurrences(g, pattern)
        assert len(found) == 1
        assert found[0].node_map == {0: 1, 1: 0}

    def test_matches_equal_brute_force(self):
        rng = random.Random(4401)
        for _ in range(60):
            host = random_graph(rng, max_n=6)
            pattern = random_graph(rng, max_n=3)
            got = sorted(tuple(sorted(m.node_map.items()))
                         for m in find_subgraph_occurrences(host, pattern))
            want = sorted(tuple(sorted(m.items()))
                          for m in brute_force_embeddings(host, pattern))
            assert got == want

    def test_mappings_are_injective_and_label_preserving(self):
        rng = random.Random(911)
        for _ in range(30):
            host = random_graph(rng, max_n=5)
            pattern = random_graph(rng, max_n=3)
            for m in find_subgraph_occurrences(host, pattern):
                values = list(m.node_map.values())
                assert len(set(values)) == len(values)
                for p_node, h_node in m.node_map.items():
                    assert pattern.nodes[p_node] == host.nodes[h_node]

    def test_pattern_larger_than_host(self):
        host = LabeledGraph(nodes=["a"])
        pattern = LabeledGraph(nodes=["a", "a"])
        assert find_subgraph_occurrences(host, pattern) == []

    def test_extra_host_edges_allowed(self):
        host = LabeledGraph(nodes=["a", "b"],
                            edges=[(0, 1, "x"), (1, 0, "y")])
        pattern = LabeledGraph(nodes=["a", "b"], edges=[(0, 1, "x")])
        assert len(find_subgraph_occurrences(host, pattern)) == 1


class TestCanonicalCode:
    def test_invariant_under_relabeling(self):
        rng = random.Random(77)
        for _ in range(40):
            g = random_graph(rng, max_n=5)
            code = canonical_code(g)
            perm = list(range(len(g.nodes)))
            rng.shuffle(perm)
            position = {old: new for new, old in enumerate(perm)}
            h = LabeledGraph(
                nodes=[g.nodes[old] for old in perm],
                edges=[(position[s], position[d], l)
                       for s, d, l in g.edges])
            assert canonical_code(h) == code

    def test_direction_matters(self):
        fwd = LabeledGraph(nodes=["a", "b"], edges=[(0, 1, "x")])
        rev = LabeledGraph(nodes=["a", "b"], edges=[(1, 0, "x")])
        assert canonical_code(fwd) != canonical_code(rev)

    def test_labels_matter(self):
        g1 = LabeledGraph(nodes=["a", "b"], edges=[(0, 1, "x")])
        g2 = LabeledGraph(nodes=["a", "c"], edges=[(0, 1, "x")])
        assert canonical_code(g1) != canonical_code(g2)

    def test_node_limit(self):
        g = LabeledGraph(nodes=list("abcdefghi"))
        with pytest.raises(ValidationError):
            canonical_code(g)


def weakly_connected(node_ids, edges):
    if len(node_ids) == 1:
        return True
    neighbors = {n: set() for n in node_ids}
    for s, d, _ in edges:
        neighbors[s].add(d)
        neighbors[d].add(s)
    seen = set()
    stack = [next(iter(node_ids))]
    while stack:
        n = stack.pop()
        if n in seen:
            continue
        seen.add(n)
        stack.extend(neighbors[n] - seen)
    return len(seen) == len(node_ids)


def enumerate_sub_patterns(g, max_nodes):
    """Oracle: every connected (subset, edge subset) pattern, as codes."""
    codes = {}
    for size in range(1, min(max_nodes, len(g.nodes)) + 1):
        for subset in itertools.combinations(range(len(g.nodes)), size):
            inner = sorted({e for e in g.edges
                            if e[0] in subset and e[1] in subset})
            for k in range(len(inner) + 1):
                for chosen in itertools.combinations(inner, k):
                    if not weakly_connected(set(subset), chosen):
                        continue
                    remap = {v: i for i, v in enumerate(subset)}
                    pat = LabeledGraph(
                        nodes=[g.nodes[v] for v in subset],
                        edges=[(remap[s], remap[d], l)
                               for s, d, l in chosen])
                    codes.setdefault(canonical_code(pat), pat)
    return codes


def oracle_mine(graphs, min_support, max_nodes):
    per_graph = [enumerate_sub_patterns(g, max_nodes) for g in graphs]
    union = {}
    for codes in per_graph:
        union.update(codes)
    out = {}
    for code in union:
        members = [n for n, codes in enumerate(per_graph) if code in codes]
        if len(members) >= min_support:
            out[code] = (len(members), members)
    return out


class TestMining:
    def test_shared_edge_worked_example(self):
        g1 = LabeledGraph(nodes=["cells", "express", "cd30"],
                          edges=[(1, 0, "nsubj"), (1, 2, "dobj")])
        g2 = LabeledGraph(nodes=["cells", "express", "antigen"],
                          edges=[(1, 0, "nsubj"), (1, 2, "dobj")])
        results = mine_frequent_subgraphs([g1, g2], min_support=2,
                                          max_nodes=2)
        by_code = {canonical_code(r.pattern): r for r in results}
        shared = LabeledGraph(nodes=["express", "cells"],
                              edges=[(0, 1, "nsubj")])
        hit = by_code[canonical_code(shared)]
        assert hit.support == 2
        assert hit.graph_ids == [0, 1]
        singles = [r for r in results if len(r.pattern.nodes) == 1]
        assert {r.pattern.nodes[0] for r in singles} == {"cells", "express"}

    def test_matches_exhaustive_oracle(self):
        rng = random.Random(880)
        for round_no in range(8):
            graphs = [random_graph(rng, max_n=5) for _ in range(4)]
            for min_support in (1, 2):
                got = mine_frequent_subgraphs(graphs, min_support,
                                              max_nodes=3)
                got_map = {canonical_code(r.pattern):
                           (r.support, r.graph_ids) for r in got}
                assert got_map == oracle_mine(graphs, min_support, 3), \
                    f"round {round_no} support {min_support}"

    def test_output_order_and_uniqueness(self):
        rng = random.Random(12)
        graphs = [random_graph(rng, max_n=5) for _ in range(3)]
        results = mine_frequent_subgraphs(graphs, 1, max_nodes=3)
        keys = [(len(r.pattern.nodes), canonical_code(r.pattern))
                for r in results]
        assert keys == sorted(keys)
        assert len(set(k[1] for k in keys)) == len(keys)

    def test_isolated_nodes_are_patterns(self):
        g1 = LabeledGraph(nodes=["a", "b"])
        g2 = LabeledGraph(nodes=["a"])
        results = mine_frequent_subgraphs([g1, g2], 2, max_nodes=3)
        assert len(results) == 1
        assert results[0].pattern.nodes == ["a"]
        assert results[0].support == 2

    def test_anti_monotone_against_single_labels(self):
        rng = random.Random(5150)
        graphs = [random_graph(rng, max_n=5) for _ in range(4)]
        results = mine_frequent_subgraphs(graphs, 1, max_nodes=3)
        label_support = {r.pattern.nodes[0]: r.support
                         for r in results if len(r.pattern.nodes) == 1}
        for r in results:
            for label in r.pattern.nodes:
                assert r.support <= label_support[label]

    def test_parameter_validation(self):
        with pytest.raises(ValidationError):
            mine_frequent_subgraphs([], 0)
        with pytest.raises(ValidationError):
            mine_frequent_subgraphs([], 1, max_nodes=0)
        with pytest.raises(ValidationError):
            mine_frequent_subgraphs([], 1, max_nodes=99)
        assert mine_frequent_subgraphs([], 1) == []

    def test_member_ids_use_graph_ids_when_set(self):
        g1 = LabeledGraph(nodes=["a"], id=41)
        g2 = LabeledGraph(nodes=["a"], id=17)
        results = mine_frequent_subgraphs([g1, g2], 2, max_nodes=1)
        assert results[0].graph_ids == [41, 17]


class TestPersistence:
    def make_store(self):
        store = CdmStore(":memory:")
        store.init_schema()
        return store

    def test_round_trip_with_isolated_node(self):
        store = self.make_store()
        g = LabeledGraph(nodes=["a", "b", "c"], edges=[(0, 1, "x")],
                         name="g1", graph_type="dependency")
        gid = persist_graph(store, g)
        assert g.id == gid
        back = load_graph(store, gid)
        assert back.name == "g1"
        assert back.graph_type == "dependency"
        assert len(back.nodes) == 3
        assert canonical_code(back) == canonical_code(g)

    def test_two_edges_two_rows(self):
        store = self.make_store()
        g = LabeledGraph(nodes=["a", "b", "c"],
                         edges=[(0, 1, "x"), (1, 2, "y")], name="g")
        gid = persist_graph(store, g)
        rows = store.connection.execute(
            "SELECT COUNT(*) FROM linkage_graph WHERE graph_id = ?",
            (gid,)).fetchone()
        assert rows[0] == 2

    def test_load_unknown_graph(self):
        store = self.make_store()
        with pytest.raises(DanglingReferenceError):
            load_graph(store, 404)

    def test_mining_results_round_trip(self):
        store = self.make_store()
        g1 = LabeledGraph(nodes=["a", "b"], edges=[(0, 1, "x")], name="g1")
        g2 = LabeledGraph(nodes=["a", "b"], edges=[(0, 1, "x")], name="g2")
        persist_graph(store, g1)
        persist_graph(store, g2)
        results = mine_frequent_subgraphs([g1, g2], 2, max_nodes=2)
        mappings = []
        for n, r in enumerate(results):
            for host in (g1, g2):
                for m in find_subgraph_occurrences(host, r.pattern):
                    mappings.append(SubgraphMapping(
                        graph_id=host.id, subgraph_id=n,
                        node_map=m.node_map))
        sig_ids = persist_mining_results(store, results, mappings)
        assert len(sig_ids) == len(results)
        stored = store.connection.execute(
            "SELECT subgraph_graph_id, support FROM sig_subgraph"
            " ORDER BY id").fetchall()
        assert [s for _, s in stored] == [r.support for r in results]
        for sub_id, _ in stored:
            back = load_graph(store, sub_id)
            assert back.graph_type == "sig_subgraph"
        n_rows = store.connection.execute(
            "SELECT COUNT(*) FROM lg_sigsub").fetchone()[0]
        assert n_rows == len(mappings)

    def test_mapping_with_dangling_graph_id(self):
        store = self.make_store()
        results = mine_frequent_subgraphs(
            [LabeledGraph(nodes=["a"])], 1, max_nodes=1)
        bad = [SubgraphMapping(graph_id=999, subgraph_id=0, node_map={0: 0})]
        with pytest.raises(DanglingReferenceError):
            persist_mining_results(store, results, bad)


class TestInterchange:
    def test_round_trip(self):
        graphs = [
            LabeledGraph(nodes=["a", "b"], edges=[(0, 1, "x")],
                         name="first", graph_type="dependency", id=7),
            LabeledGraph(nodes=["c"], name="second", graph_type="pattern"),
        ]
        buf = io.StringIO()
        assert write_graph_file(graphs, buf) == 2
        back = read_graph_file(io.StringIO(buf.getvalue()))
        assert len(back) == 2
        assert back[0].id == 7 and back[1].id is None
        assert back[0].nodes == ["a", "b"]
        assert back[0].edges == [(0, 1, "x")]
        assert back[1].nodes == ["c"]
        assert [g.name for g in back] == ["first", "second"]

    def test_file_paths(self, tmp_path):
        path = tmp_path / "graphs.tsv"
        graphs = [LabeledGraph(nodes=["a"], name="solo")]
        write_graph_file(graphs, str(path))
        back = read_graph_file(str(path))
        assert back[0].nodes == ["a"]

    def test_malformed_line(self):
        text = "graph\t\tg\tdep\nn\t0\ta\nq\tbogus\n"
        with pytest.raises(ImportFormatError) as err:
            read_graph_file(io.StringIO(text))
        assert err.value.line_numbers == (3,)

    def test_non_dense_ids_rejected(self):
        text = "graph\t\tg\tdep\nn\t0\ta\nn\t2\tb\n"
        with pytest.raises(ImportFormatError):
            read_graph_file(io.StringIO(text))
