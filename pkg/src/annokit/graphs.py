"""Labeled directed graphs over sentence concepts, plus subgraph matching,
naive frequent-subgraph mining, node-edge-list persistence, and a flat
interchange format.

Dependency parses become graphs by merging each token into the concept
annotation covering it; leftover tokens stand alone. Mining grows
connected patterns breadth-first and deduplicates them by a canonical
code (the lexicographically minimal encoding over all node orderings),
which is exact at the small pattern sizes this targets.
"""

import io
import itertools
import logging
from collections import namedtuple
from dataclasses import dataclass, field

from .documents import Annotation, Document
from .errors import (
    DanglingReferenceError,
    ImportFormatError,
    StoreError,
    ValidationError,
)
from .store import CdmStore, canonical_json

log = logging.getLogger(__name__)

MAX_CANONICAL_NODES = 8


@dataclass
class LabeledGraph:
    """Directed labeled graph with dense node ids 0..N-1.

    ``nodes[i]`` is node i's label; edges are (src, dst, label) triples.
    """

    nodes: list[str]
    edges: list[tuple[int, int, str]] = field(default_factory=list)
    name: str = ""
    graph_type: str = ""
    id: int | None = None
    directed: bool = True
    skipped_dependencies: int = 0

    def __post_init__(self):
        n = len(self.nodes)
        for src, dst, label in self.edges:
            if not (0 <= src < n and 0 <= dst < n):
                raise ValidationError(
                    f"edge ({src},{dst},{label!r}) endpoint out of range"
                )
            if src == dst:
                raise ValidationError(f"self-loop on node {src}")

    def node_count(self) -> int:
        return len(self.nodes)


@dataclass(frozen=True)
class SubgraphMapping:
    """An injective, label- and direction-preserving embedding of a
    subgraph pattern into a full graph."""

    graph_id: int | None
    subgraph_id: int | None
    node_map: dict

    def __hash__(self):
        return hash((self.graph_id, self.subgraph_id,
                     tuple(sorted(self.node_map.items()))))


MinedPattern = namedtuple("MinedPattern", "pattern support graph_ids")


# construction from annotations

def _int_attr(ann: Annotation, key: str):
    raw = ann.attributes.get(key)
    if raw is None:
        return None
    try:
        return int(raw)
    except ValueError:
        return None


def build_dependency_graph(doc: Document, sentence: Annotation,
                           dependencies: list[Annotation],
                           concepts: list[Annotation]) -> LabeledGraph:
    """One graph for one sentence.

    Nodes: every concept annotation covering at least one token, labeled
    by its value, then every uncovered token, labeled by its lowercased
    text; ordered by span. Edges: dependency annotations whose attributes
    name head and dependent token spans; direction is head to dependent.
    Merging may collapse an edge into a self-loop, which is dropped, as
    are duplicate triples. Dependencies whose token spans are unknown in
    this sentence are skipped and counted on ``skipped_dependencies``.
    """
    tokens = doc.annotations_within(sentence.span, "token")
    ordered_concepts = sorted(concepts,
                              key=lambda c: (c.span.start, c.span.end))

    covered: dict[int, int] = {}  # token index -> concept seed index
    seeds = []
    for concept in ordered_concepts:
        token_indexes = [
            n for n, t in enumerate(tokens)
            if t.span.start >= concept.span.start
            and t.span.end <= concept.span.end
        ]
        if not token_indexes:
            continue
        seed_index = len(seeds)
        seeds.append((concept.span, concept.value))
        for n in token_indexes:
            covered.setdefault(n, seed_index)

    token_seed: dict[tuple[int, int], int] = {}
    for n, token in enumerate(tokens):
        key = (token.span.start, token.span.end)
        if n in covered:
            token_seed[key] = covered[n]
        else:
            token_seed[key] = len(seeds)
            surface = doc.content[token.span.start:token.span.end]
            seeds.append((token.span, surface.lower()))

    order = sorted(range(len(seeds)),
                   key=lambda k: (seeds[k][0].start, seeds[k][0].end, k))
    renumber = {old: new for new, old in enumerate(order)}
    nodes = [seeds[old][1] for old in order]
    node_of = {span: renumber[seed] for span, seed in token_seed.items()}

    edges = []
    seen = set()
    skipped = 0
    for dep in dependencies:
        head = (_int_attr(dep, "head_start"), _int_attr(dep, "head_end"))
        dependent = (_int_attr(dep, "dependent_start"),
                     _int_attr(dep, "dependent_end"))
        if None in head or None in dependent \
                or head not in node_of or dependent not in node_of:
            skipped += 1
            log.warning("dependency %r references tokens outside the "
                        "sentence; skipped", dep.value)
            continue
        src, dst = node_of[head], node_of[dependent]
        if src == dst:
            continue  # collapsed by concept merging
        triple = (src, dst, dep.value)
        if triple not in seen:
            seen.add(triple)
            edges.append(triple)

    name = f"{doc.name}:{sentence.span.start}-{sentence.span.end}"
    return LabeledGraph(nodes=nodes, edges=edges, name=name,
                        graph_type="dependency",
                        skipped_dependencies=skipped)


def build_sentence_graphs(doc: Document) -> list[LabeledGraph]:
    """A dependency graph per sentence, for sentences that have tokens."""
    out = []
    for sentence in doc.annotations("sentence"):
        if not doc.annotations_within(sentence.span, "token"):
            continue
        deps = doc.annotations_within(sentence.span, "dependency")
        cuis = doc.annotations_within(sentence.span, "CUI")
        graph = build_dependency_graph(doc, sentence, deps, cuis)
        if graph.nodes:
            out.append(graph)
    return out


# matching

def _assignments(host: LabeledGraph, pattern: LabeledGraph):
    """Yield every injective label/direction-preserving embedding as a
    tuple indexed by pattern node."""
    n = len(pattern.nodes)
    host_edges = set(host.edges)
    pending = [[] for _ in range(n)]
    for src, dst, label in pattern.edges:
        pending[max(src, dst)].append((src, dst, label))

    assignment = [None] * n
    used = [False] * len(host.nodes)

    def extend(i):
        if i == n:
            yield tuple(assignment)
            return
        want = pattern.nodes[i]
        for h, have in enumerate(host.nodes):
            if used[h] or have != want:
                continue
            ok = True
            for src, dst, label in pending[i]:
                hs = h if src == i else assignment[src]
                hd = h if dst == i else assignment[dst]
                if (hs, hd, label) not in host_edges:
                    ok = False
                    break
            if not ok:
                continue
            assignment[i] = h
            used[h] = True
            yield from extend(i + 1)
            used[h] = False
        assignment[i] = None

    yield from extend(0)


def find_subgraph_occurrences(host: LabeledGraph, pattern: LabeledGraph
                              ) -> list[SubgraphMapping]:
    """All embeddings of the pattern in the host. Non-induced: the host
    may have extra edges among the mapped nodes."""
    out = []
    for assignment in _assignments(host, pattern):
        out.append(SubgraphMapping(
            graph_id=host.id, subgraph_id=pattern.id,
            node_map=dict(enumerate(assignment))))
    return out


def _occurs_in(host: LabeledGraph, pattern: LabeledGraph) -> bool:
    if len(pattern.nodes) > len(host.nodes):
        return False
    for _ in _assignments(host, pattern):
        return True
    return False


# canonical form and mining

def canonical_code(graph: LabeledGraph) -> str:
    """Label-ordering-invariant encoding: the lexicographically smallest
    rendering over all node permutations. Exact but factorial; guarded
    to small graphs."""
    n = len(graph.nodes)
    if n > MAX_CANONICAL_NODES:
        raise ValidationError(
            f"canonical code limited to {MAX_CANONICAL_NODES} nodes, "
            f"got {n}"
        )
    best = None
    for perm in itertools.permutations(range(n)):
        position = {old: new for new, old in enumerate(perm)}
        labels = ",".join(graph.nodes[old] for old in perm)
        edges = sorted((position[s], position[d], l)
                       for s, d, l in graph.edges)
        code = labels + "#" + ";".join(f"{s}>{d}:{l}" for s, d, l in edges)
        if best is None or code < best:
            best = code
    return best if best is not None else "#"


def mine_frequent_subgraphs(graphs: list[LabeledGraph], min_support: int,
                            max_nodes: int = 4) -> list[MinedPattern]:
    """Every connected pattern with <= max_nodes nodes occurring in at
    least min_support distinct graphs.

    Support counts graphs, not embeddings. Growth is breadth-first from
    frequent single nodes, extending by one edge at a time (to a new
    node or between existing nodes), so anti-monotonicity guarantees
    completeness. Output order: node count, then canonical code.
    """
    if min_support < 1:
        raise ValidationError(f"min_support must be >= 1, got {min_support}")
    if max_nodes < 1:
        raise ValidationError(f"max_nodes must be >= 1, got {max_nodes}")
    if max_nodes > MAX_CANONICAL_NODES:
        raise ValidationError(
            f"max_nodes above {MAX_CANONICAL_NODES} is not supported"
        )
    if not graphs:
        return []

    ids = [g.id if g.id is not None else n for n, g in enumerate(graphs)]
    labels = sorted({label for g in graphs for label in g.nodes})
    triples = sorted({(g.nodes[s], l, g.nodes[d])
                      for g in graphs for s, d, l in g.edges})

    def support_of(pattern):
        members = [gid for g, gid in zip(graphs, ids)
                   if _occurs_in(g, pattern)]
        return len(members), members

    mined = {}
    frontier = []
    for label in labels:
        pattern = LabeledGraph(nodes=[label], graph_type="pattern")
        support, members = support_of(pattern)
        if support >= min_support:
            code = canonical_code(pattern)
            mined[code] = MinedPattern(pattern, support, members)
            frontier.append((pattern, code))

    while frontier:
        next_frontier = []
        for pattern, _ in frontier:
            for candidate in _extensions(pattern, triples, max_nodes):
                code = canonical_code(candidate)
                if code in mined:
                    continue
                support, members = support_of(candidate)
                mined[code] = None  # infrequent candidates stay blocked
                if support >= min_support:
                    mined[code] = MinedPattern(candidate, support, members)
                    next_frontier.append((candidate, code))
        frontier = next_frontier

    results = [entry for entry in mined.values() if entry is not None]
    results.sort(key=lambda r: (len(r.pattern.nodes),
                                canonical_code(r.pattern)))
    return results


def _extensions(pattern: LabeledGraph, triples, max_nodes):
    """Grow by one edge: attach a new node, or connect existing nodes."""
    n = len(pattern.nodes)
    present = set(pattern.edges)
    if n + 1 <= max_nodes:
        for i in range(n):
            for src_label, edge_label, dst_label in triples:
                if pattern.nodes[i] == src_label:
                    yield LabeledGraph(
                        nodes=pattern.nodes + [dst_label],
                        edges=pattern.edges + [(i, n, edge_label)],
                        graph_type="pattern")
                if pattern.nodes[i] == dst_label:
                    yield LabeledGraph(
                        nodes=pattern.nodes + [src_label],
                        edges=pattern.edges + [(n, i, edge_label)],
                        graph_type="pattern")
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for src_label, edge_label, dst_label in triples:
                if (pattern.nodes[i] == src_label
                        and pattern.nodes[j] == dst_label
                        and (i, j, edge_label) not in present):
                    yield LabeledGraph(
                        nodes=list(pattern.nodes),
                        edges=pattern.edges + [(i, j, edge_label)],
                        graph_type="pattern")


# persistence

def persist_graph(store: CdmStore, graph: LabeledGraph) -> int:
    """graphs row plus one linkage_graph row per edge. Nodes without any
    incident edge are kept as rows with a null far end, so a reload
    reproduces every node."""
    conn = store.connection
    touched = {s for s, _, _ in graph.edges} | {d for _, d, _ in graph.edges}
    with conn:
        cur = conn.execute(
            "INSERT INTO graphs (name, type, data) VALUES (?, ?, ?)",
            (graph.name, graph.graph_type, canonical_json(None)))
        graph_id = cur.lastrowid
        rows = [(graph_id, s, d, l, graph.nodes[s], graph.nodes[d])
                for s, d, l in graph.edges]
        rows += [(graph_id, n, None, None, graph.nodes[n], None)
                 for n in range(len(graph.nodes)) if n not in touched]
        conn.executemany(
            "INSERT INTO linkage_graph (graph_id, node1, node2, edge_label,"
            " node1_label, node2_label) VALUES (?, ?, ?, ?, ?, ?)", rows)
    graph.id = graph_id
    return graph_id


def list_graphs(store: CdmStore, name_prefix: str | None = None,
                graph_type: str | None = None) -> list[tuple[int, str, str]]:
    """(id, name, type) rows, optionally filtered, ordered by id."""
    clauses, params = [], []
    if name_prefix is not None:
        clauses.append(r"name LIKE ? ESCAPE '\'")
        escaped = (name_prefix.replace("\\", "\\\\")
                   .replace("%", r"\%").replace("_", r"\_"))
        params.append(escaped + "%")
    if graph_type is not None:
        clauses.append("type = ?")
        params.append(graph_type)
    where = (" WHERE " + " AND ".join(clauses)) if clauses else ""
    sql = f"SELECT id, name, type FROM graphs{where} ORDER BY id"
    return [(r[0], r[1], r[2])
            for r in store.connection.execute(sql, params)]


def load_graph(store: CdmStore, graph_id: int) -> LabeledGraph:
    conn = store.connection
    head = conn.execute("SELECT name, type FROM graphs WHERE id = ?",
                        (graph_id,)).fetchone()
    if head is None:
        raise DanglingReferenceError(f"no graph with id {graph_id}")
    rows = conn.execute(
        "SELECT node1, node2, edge_label, node1_label, node2_label"
        " FROM linkage_graph WHERE graph_id = ? ORDER BY rowid",
        (graph_id,)).fetchall()
    labels = {}
    for node1, node2, _, label1, label2 in rows:
        labels[node1] = label1
        if node2 is not None:
            labels[node2] = label2
    renumber = {old: new for new, old in enumerate(sorted(labels))}
    nodes = [labels[old] for old in sorted(labels)]
    edges = [(renumber[n1], renumber[n2], el)
             for n1, n2, el, _, _ in rows if n2 is not None]
    return LabeledGraph(nodes=nodes, edges=edges, name=head[0],
                        graph_type=head[1], id=graph_id)


def persist_mining_results(store: CdmStore, results: list[MinedPattern],
                           mappings: list[SubgraphMapping] = ()
                           ) -> list[int]:
    """Store each mined pattern (a graphs row of type "sig_subgraph" plus
    its sig_subgraph row) and optional embeddings into lg_sigsub.

    Mapping.subgraph_id indexes into ``results``; mapping.graph_id must
    be a persisted graph id.
    """
    conn = store.connection
    for mapping in mappings:
        if not (0 <= (mapping.subgraph_id or 0) < len(results)):
            raise ValidationError(
                f"mapping references pattern {mapping.subgraph_id}, "
                f"but only {len(results)} were mined"
            )
        row = conn.execute("SELECT 1 FROM graphs WHERE id = ?",
                           (mapping.graph_id,)).fetchone()
        if row is None:
            raise DanglingReferenceError(
                f"mapping references unknown graph id {mapping.graph_id}"
            )
    sig_ids = []
    try:
        for n, result in enumerate(results):
            pattern = result.pattern
            if not pattern.name:
                pattern.name = f"pattern-{canonical_code(pattern)}"
            pattern.graph_type = "sig_subgraph"
            persist_graph(store, pattern)
            with conn:
                cur = conn.execute(
                    "INSERT INTO sig_subgraph (subgraph_graph_id, support,"
                    " data) VALUES (?, ?, ?)",
                    (pattern.id, result.support,
                     canonical_json({"graph_ids": ",".join(
                         str(g) for g in result.graph_ids)})))
                sig_ids.append(cur.lastrowid)
        with conn:
            conn.executemany(
                "INSERT INTO lg_sigsub (graph_id, sig_subgraph_id,"
                " node_mapping) VALUES (?, ?, ?)",
                [(m.graph_id, sig_ids[m.subgraph_id],
                  canonical_json({str(k): str(v)
                                  for k, v in m.node_map.items()}))
                 for m in mappings])
    except StoreError:
        raise
    return sig_ids


# interchange format

def write_graph_file(graphs: list[LabeledGraph], dest) -> int:
    """Flat node-edge-list format: a ``graph`` header line, then ``n``
    and ``e`` lines. Returns the number of graphs written."""
    own = not hasattr(dest, "write")
    handle = io.open(dest, "w", encoding="utf-8") if own else dest
    try:
        for g in graphs:
            gid = "" if g.id is None else str(g.id)
            handle.write(f"graph\t{gid}\t{g.name}\t{g.graph_type}\n")
            for n, label in enumerate(g.nodes):
                handle.write(f"n\t{n}\t{label}\n")
            for s, d, l in g.edges:
                handle.write(f"e\t{s}\t{d}\t{l}\n")
        return len(graphs)
    finally:
        if own:
            handle.close()


def read_graph_file(src) -> list[LabeledGraph]:
    own = not hasattr(src, "read")
    handle = io.open(src, "r", encoding="utf-8") if own else src
    try:
        lines = handle.readlines()
    finally:
        if own:
            handle.close()

    graphs = []
    current = None  # (id, name, type, labels dict, edges)

    def finish():
        if current is None:
            return
        gid, name, gtype, labels, edges = current
        nodes = [labels[k] for k in sorted(labels)]
        if sorted(labels) != list(range(len(nodes))):
            raise ImportFormatError(
                f"graph {name!r} has non-dense node ids")
        graphs.append(LabeledGraph(nodes=nodes, edges=edges, name=name,
                                   graph_type=gtype, id=gid))

    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        kind = fields[0]
        try:
            if kind == "graph" and len(fields) == 4:
                finish()
                gid = int(fields[1]) if fields[1] else None
                current = (gid, fields[2], fields[3], {}, [])
            elif kind == "n" and len(fields) == 3 and current is not None:
                current[3][int(fields[1])] = fields[2]
            elif kind == "e" and len(fields) == 4 and current is not None:
                current[4].append((int(fields[1]), int(fields[2]),
                                   fields[3]))
            else:
                raise ValueError(f"unrecognized line kind {kind!r}")
        except (ValueError, ValidationError) as exc:
            raise ImportFormatError(
                f"graph file line {lineno}: {exc}",
                line_numbers=(lineno,)) from exc
    try:
        finish()
    except ValidationError as exc:
        raise ImportFormatError(str(exc)) from exc
    return graphs
