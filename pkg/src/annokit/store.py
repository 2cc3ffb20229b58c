"""Relational persistence for corpora, documents, annotations, instances,
ground truth, and graphs.

The schema is fourteen tables. Every table carries a catch-all ``data``
column holding a canonical key-sorted JSON map, so serializing the same
attributes twice yields identical bytes and dirty detection reduces to a
string comparison. SQLite is the bundled engine; anything exposing the
same DB-API connection surface would do, since the SQL sticks to plain
DDL/DML plus unique indexes.

Documents flush through a dirty set: marshal writes the document row and
dirty annotations, checkpoint writes dirty annotations only. Annotations
enter memory with provisional negative ids and get their durable ids from
the store on first flush.
"""

import json
import sqlite3
import threading
from collections import namedtuple

from .documents import Annotation, Document
from .errors import (
    ConflictError,
    DanglingReferenceError,
    MigrationRequiredError,
    NotFoundError,
    StoreError,
    ValidationError,
)
from .intervals import Interval

_PROVENANCE_KEY = "_provenance"

# Order matters only for readable DDL dumps; creation is dependency-free
# because foreign keys are by convention (ids), not enforced constraints.
_TABLES = {
    "corpora": """
        CREATE TABLE IF NOT EXISTS corpora (
            id INTEGER PRIMARY KEY,
            name TEXT NOT NULL,
            description TEXT NOT NULL DEFAULT '',
            data TEXT NOT NULL DEFAULT '{}'
        )""",
    "corpora_documents": """
        CREATE TABLE IF NOT EXISTS corpora_documents (
            corpus_id INTEGER NOT NULL,
            document_id INTEGER NOT NULL
        )""",
    "documents": """
        CREATE TABLE IF NOT EXISTS documents (
            id INTEGER PRIMARY KEY,
            name TEXT NOT NULL,
            source TEXT NOT NULL DEFAULT '',
            size INTEGER NOT NULL,
            data TEXT NOT NULL DEFAULT '{}',
            content TEXT NOT NULL
        )""",
    "annotations": """
        CREATE TABLE IF NOT EXISTS annotations (
            id INTEGER PRIMARY KEY,
            document_id INTEGER NOT NULL,
            start INTEGER NOT NULL,
            "end" INTEGER NOT NULL,
            type_id INTEGER NOT NULL,
            value TEXT NOT NULL DEFAULT '',
            data TEXT NOT NULL DEFAULT '{}'
        )""",
    "annotation_types": """
        CREATE TABLE IF NOT EXISTS annotation_types (
            id INTEGER PRIMARY KEY,
            name TEXT NOT NULL,
            description TEXT NOT NULL DEFAULT ''
        )""",
    "instances": """
        CREATE TABLE IF NOT EXISTS instances (
            id INTEGER PRIMARY KEY,
            corpus_id INTEGER NOT NULL,
            kind TEXT NOT NULL,
            data TEXT NOT NULL DEFAULT '{}'
        )""",
    "instances_content": """
        CREATE TABLE IF NOT EXISTS instances_content (
            instance_id INTEGER NOT NULL,
            content_kind TEXT NOT NULL,
            content_id INTEGER NOT NULL
        )""",
    "instance_sets": """
        CREATE TABLE IF NOT EXISTS instance_sets (
            id INTEGER PRIMARY KEY,
            corpus_id INTEGER NOT NULL,
            name TEXT NOT NULL,
            purpose TEXT NOT NULL DEFAULT '',
            data TEXT NOT NULL DEFAULT '{}'
        )""",
    "instance_set_members": """
        CREATE TABLE IF NOT EXISTS instance_set_members (
            instance_set_id INTEGER NOT NULL,
            instance_id INTEGER NOT NULL
        )""",
    "groundtruth": """
        CREATE TABLE IF NOT EXISTS groundtruth (
            instance_id INTEGER NOT NULL,
            task TEXT NOT NULL,
            label TEXT NOT NULL,
            data TEXT NOT NULL DEFAULT '{}'
        )""",
    "graphs": """
        CREATE TABLE IF NOT EXISTS graphs (
            id INTEGER PRIMARY KEY,
            name TEXT NOT NULL,
            type TEXT NOT NULL DEFAULT '',
            data TEXT NOT NULL DEFAULT '{}'
        )""",
    "linkage_graph": """
        CREATE TABLE IF NOT EXISTS linkage_graph (
            graph_id INTEGER NOT NULL,
            node1 INTEGER NOT NULL,
            node2 INTEGER,
            edge_label TEXT,
            node1_label TEXT NOT NULL DEFAULT '',
            node2_label TEXT
        )""",
    "sig_subgraph": """
        CREATE TABLE IF NOT EXISTS sig_subgraph (
            id INTEGER PRIMARY KEY,
            subgraph_graph_id INTEGER NOT NULL,
            support INTEGER NOT NULL,
            data TEXT NOT NULL DEFAULT '{}'
        )""",
    "lg_sigsub": """
        CREATE TABLE IF NOT EXISTS lg_sigsub (
            graph_id INTEGER NOT NULL,
            sig_subgraph_id INTEGER NOT NULL,
            node_mapping TEXT NOT NULL DEFAULT '{}'
        )""",
}

_EXPECTED_COLUMNS = {
    "corpora": ("id", "name", "description", "data"),
    "corpora_documents": ("corpus_id", "document_id"),
    "documents": ("id", "name", "source", "size", "data", "content"),
    "annotations": ("id", "document_id", "start", "end", "type_id",
                    "value", "data"),
    "annotation_types": ("id", "name", "description"),
    "instances": ("id", "corpus_id", "kind", "data"),
    "instances_content": ("instance_id", "content_kind", "content_id"),
    "instance_sets": ("id", "corpus_id", "name", "purpose", "data"),
    "instance_set_members": ("instance_set_id", "instance_id"),
    "groundtruth": ("instance_id", "task", "label", "data"),
    "graphs": ("id", "name", "type", "data"),
    "linkage_graph": ("graph_id", "node1", "node2", "edge_label",
                      "node1_label", "node2_label"),
    "sig_subgraph": ("id", "subgraph_graph_id", "support", "data"),
    "lg_sigsub": ("graph_id", "sig_subgraph_id", "node_mapping"),
}

_INDEXES = (
    "CREATE INDEX IF NOT EXISTS idx_annotations_document"
    " ON annotations (document_id)",
    'CREATE INDEX IF NOT EXISTS idx_annotations_type_value'
    ' ON annotations (type_id, value)',
    'CREATE INDEX IF NOT EXISTS idx_annotations_doc_span'
    ' ON annotations (document_id, start, "end")',
    "CREATE UNIQUE INDEX IF NOT EXISTS idx_annotation_types_name"
    " ON annotation_types (name)",
    "CREATE UNIQUE INDEX IF NOT EXISTS idx_corpora_name ON corpora (name)",
    "CREATE UNIQUE INDEX IF NOT EXISTS idx_documents_name"
    " ON documents (name)",
    "CREATE UNIQUE INDEX IF NOT EXISTS idx_corpora_documents_pair"
    " ON corpora_documents (corpus_id, document_id)",
    "CREATE UNIQUE INDEX IF NOT EXISTS idx_groundtruth_instance_task"
    " ON groundtruth (instance_id, task)",
    "CREATE UNIQUE INDEX IF NOT EXISTS idx_instance_set_members_pair"
    " ON instance_set_members (instance_set_id, instance_id)",
)

_INSTANCE_KINDS = {
    # kind -> (content_kind, min members, max members or None)
    "document": ("document", 1, 1),
    "annotation_pair": ("annotation", 2, 2),
    "document_set": ("document", 1, None),
}

AnnotationRef = namedtuple(
    "AnnotationRef",
    "annotation_id document_id start end type_name value",
)


def canonical_json(mapping) -> str:
    """Byte-stable serialization of a key->text map."""
    return json.dumps(mapping or {}, sort_keys=True,
                      separators=(",", ":"), ensure_ascii=False)


def schema_ddl() -> str:
    """The full DDL, for inspection or external tooling."""
    statements = [stmt.strip() + ";" for stmt in _TABLES.values()]
    statements += [stmt + ";" for stmt in _INDEXES]
    return "\n".join(statements) + "\n"


class CdmStore:
    """Single-connection store over the fourteen-table schema.

    ``target`` is a filesystem path (":memory:" allowed) or an existing
    DB-API connection. All public operations are transactional and
    serialized by an internal lock, so one store object may be shared by
    worker threads.
    """

    def __init__(self, target):
        self._lock = threading.RLock()
        self._type_ids: dict[str, int] = {}
        if hasattr(target, "cursor"):
            self._conn = target
        else:
            try:
                self._conn = sqlite3.connect(str(target),
                                             check_same_thread=False)
            except sqlite3.Error as exc:
                raise StoreError(f"cannot open store at {target}: {exc}") \
                    from exc

    @property
    def connection(self):
        return self._conn

    def close(self):
        self._conn.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc_info):
        self.close()
        return False

    # schema

    def _table_names(self) -> set[str]:
        rows = self._conn.execute(
            "SELECT name FROM sqlite_master WHERE type = 'table'"
        ).fetchall()
        return {r[0] for r in rows}

    def _verify_columns(self, existing: set[str]) -> None:
        for table in sorted(existing & set(_EXPECTED_COLUMNS)):
            cur = self._conn.execute(f'SELECT * FROM "{table}" LIMIT 0')
            found = tuple(col[0] for col in cur.description)
            if found != _EXPECTED_COLUMNS[table]:
                raise MigrationRequiredError(
                    f"table {table!r} has columns {found}, "
                    f"expected {_EXPECTED_COLUMNS[table]}"
                )

    def init_schema(self) -> list[str]:
        """Create any missing tables and indexes. Returns the names of
        tables created by this call; a repeat run returns an empty list.
        A same-named table with foreign columns aborts with
        MigrationRequiredError before anything is touched."""
        with self._lock:
            try:
                before = self._table_names()
                self._verify_columns(before)
                with self._conn:
                    for ddl in _TABLES.values():
                        self._conn.execute(ddl)
                    for ddl in _INDEXES:
                        self._conn.execute(ddl)
                return sorted(self._table_names() - before)
            except sqlite3.Error as exc:
                raise StoreError(f"schema initialization failed: {exc}") \
                    from exc

    # documents and annotations

    def _type_id(self, name: str) -> int:
        cached = self._type_ids.get(name)
        if cached is not None:
            return cached
        row = self._conn.execute(
            "SELECT id FROM annotation_types WHERE name = ?", (name,)
        ).fetchone()
        if row is None:
            cur = self._conn.execute(
                "INSERT INTO annotation_types (name) VALUES (?)", (name,)
            )
            type_id = cur.lastrowid
        else:
            type_id = row[0]
        self._type_ids[name] = type_id
        return type_id

    def _type_name(self, type_id: int) -> str:
        for name, known in self._type_ids.items():
            if known == type_id:
                return name
        row = self._conn.execute(
            "SELECT name FROM annotation_types WHERE id = ?", (type_id,)
        ).fetchone()
        if row is None:
            raise NotFoundError(f"unknown annotation type id {type_id}")
        self._type_ids[row[0]] = type_id
        return row[0]

    @staticmethod
    def _annotation_data(ann: Annotation) -> str:
        if ann.provenance:
            payload = dict(ann.attributes)
            payload[_PROVENANCE_KEY] = ann.provenance
        else:
            payload = ann.attributes
        return canonical_json(payload)

    def _flush_annotations(self, doc: Document) -> tuple[int, list]:
        """Write dirty annotations inside the caller's transaction.

        Returns (rows written, deferred id remaps). Remaps are applied by
        the caller only after commit so a rollback leaves the in-memory
        document consistent with the store.
        """
        written = 0
        remaps = []
        pending = [ann for ann in doc.annotations() if ann.id in doc.dirty]
        for ann in pending:
            data = self._annotation_data(ann)
            type_id = self._type_id(ann.type_name)
            if ann.id < 0:
                cur = self._conn.execute(
                    'INSERT INTO annotations '
                    '(document_id, start, "end", type_id, value, data) '
                    'VALUES (?, ?, ?, ?, ?, ?)',
                    (doc.id, ann.span.start, ann.span.end, type_id,
                     ann.value, data),
                )
                remaps.append((ann.id, cur.lastrowid))
            else:
                cur = self._conn.execute(
                    'UPDATE annotations SET document_id = ?, start = ?, '
                    '"end" = ?, type_id = ?, value = ?, data = ? '
                    'WHERE id = ?',
                    (doc.id, ann.span.start, ann.span.end, type_id,
                     ann.value, data, ann.id),
                )
                if cur.rowcount == 0:
                    raise ConflictError(
                        f"annotation {ann.id} vanished from the store; "
                        f"refusing a blind rewrite"
                    )
            written += 1
        return written, remaps

    def marshal_document(self, doc: Document) -> dict:
        """Persist the document row (when new or changed) and every dirty
        annotation. Returns row counts per table. Atomic: on any failure
        nothing is persisted and the dirty set is retained."""
        with self._lock:
            doc_rows = 0
            source = doc.metadata.get("source", "")
            data = canonical_json(doc.metadata)
            try:
                with self._conn:
                    if doc.id is None:
                        cur = self._conn.execute(
                            "INSERT INTO documents "
                            "(name, source, size, data, content) "
                            "VALUES (?, ?, ?, ?, ?)",
                            (doc.name, source, len(doc.content), data,
                             doc.content),
                        )
                        doc.id = cur.lastrowid
                        doc_rows = 1
                    else:
                        row = self._conn.execute(
                            "SELECT name, source, size, data, content "
                            "FROM documents WHERE id = ?", (doc.id,)
                        ).fetchone()
                        if row is None:
                            raise NotFoundError(
                                f"document id {doc.id} not in store"
                            )
                        current = (doc.name, source, len(doc.content),
                                   data, doc.content)
                        if tuple(row) != current:
                            self._conn.execute(
                                "UPDATE documents SET name = ?, source = ?,"
                                " size = ?, data = ?, content = ?"
                                " WHERE id = ?", current + (doc.id,),
                            )
                            doc_rows = 1
                    ann_rows, remaps = self._flush_annotations(doc)
            except sqlite3.Error as exc:
                raise StoreError(f"marshal failed: {exc}") from exc
            for old_id, new_id in remaps:
                doc.index.replace_id(old_id, new_id)
                doc.index.by_id[new_id].doc_id = doc.id
            doc.dirty.clear()
            return {"documents": doc_rows, "annotations": ann_rows}

    def checkpoint(self, doc: Document) -> int:
        """Write exactly the dirty annotations; returns how many. The
        document row is marshal's business, not checkpoint's."""
        if doc.id is None:
            raise StoreError("checkpoint before first marshal")
        with self._lock:
            try:
                with self._conn:
                    written, remaps = self._flush_annotations(doc)
            except sqlite3.Error as exc:
                raise StoreError(f"checkpoint failed: {exc}") from exc
            for old_id, new_id in remaps:
                doc.index.replace_id(old_id, new_id)
                doc.index.by_id[new_id].doc_id = doc.id
            doc.dirty.clear()
            return written

    def unmarshal_document(self, doc_id: int) -> Document:
        """Rebuild a document and its full annotation index from rows.
        The result starts clean: nothing is marked dirty."""
        with self._lock:
            row = self._conn.execute(
                "SELECT name, source, size, data, content FROM documents"
                " WHERE id = ?", (doc_id,)
            ).fetchone()
            if row is None:
                raise NotFoundError(f"no document with id {doc_id}")
            name, _, _, data, content = row
            doc = Document(name=name, content=content, doc_id=doc_id,
                           metadata=json.loads(data))
            rows = self._conn.execute(
                'SELECT id, start, "end", type_id, value, data'
                ' FROM annotations WHERE document_id = ?'
                ' ORDER BY start, "end", id', (doc_id,)
            ).fetchall()
            for ann_id, start, end, type_id, value, ann_data in rows:
                attributes = json.loads(ann_data)
                provenance = attributes.pop(_PROVENANCE_KEY, "")
                doc.index.add(Annotation(
                    span=Interval(start, end),
                    type_name=self._type_name(type_id), value=value,
                    attributes=attributes, provenance=provenance,
                    id=ann_id, doc_id=doc_id,
                ))
            return doc

    def find_document(self, name: str) -> int | None:
        row = self._conn.execute(
            "SELECT id FROM documents WHERE name = ?", (name,)
        ).fetchone()
        return None if row is None else row[0]

    def list_documents(self) -> list[tuple[int, str]]:
        return list(self._conn.execute(
            "SELECT id, name FROM documents ORDER BY id"
        ))

    def query_by_value(self, type_name: str, value: str
                       ) -> list[AnnotationRef]:
        """Exact-match retrieval across documents via the (type, value)
        index. Unknown types yield an empty list, not an error."""
        with self._lock:
            row = self._conn.execute(
                "SELECT id FROM annotation_types WHERE name = ?",
                (type_name,),
            ).fetchone()
            if row is None:
                return []
            rows = self._conn.execute(
                'SELECT id, document_id, start, "end", value'
                ' FROM annotations WHERE type_id = ? AND value = ?'
                ' ORDER BY document_id, start, "end", id',
                (row[0], value),
            ).fetchall()
            return [AnnotationRef(r[0], r[1], r[2], r[3], type_name, r[4])
                    for r in rows]

    # corpora

    def create_corpus(self, name: str, description: str = "",
                      metadata: dict | None = None) -> int:
        with self._lock:
            try:
                with self._conn:
                    cur = self._conn.execute(
                        "INSERT INTO corpora (name, description, data)"
                        " VALUES (?, ?, ?)",
                        (name, description, canonical_json(metadata)),
                    )
                    return cur.lastrowid
            except sqlite3.IntegrityError as exc:
                raise ValidationError(
                    f"corpus name {name!r} already exists"
                ) from exc

    def add_to_corpus(self, corpus_id: int, document_id: int) -> None:
        with self._lock:
            self._require_row("corpora", corpus_id)
            self._require_row("documents", document_id)
            with self._conn:
                self._conn.execute(
                    "INSERT OR IGNORE INTO corpora_documents"
                    " (corpus_id, document_id) VALUES (?, ?)",
                    (corpus_id, document_id),
                )

    def find_corpus(self, name: str) -> int | None:
        row = self._conn.execute(
            "SELECT id FROM corpora WHERE name = ?", (name,)
        ).fetchone()
        return row[0] if row else None

    def corpus_document_ids(self, corpus_id: int) -> list[int]:
        return [r[0] for r in self._conn.execute(
            "SELECT document_id FROM corpora_documents WHERE corpus_id = ?"
            " ORDER BY document_id", (corpus_id,)
        )]

    def corpus_instances(self, corpus_id: int) -> list[tuple[int, str]]:
        return [(r[0], r[1]) for r in self._conn.execute(
            "SELECT id, kind FROM instances WHERE corpus_id = ?"
            " ORDER BY id", (corpus_id,)
        )]

    def _require_row(self, table: str, row_id: int) -> None:
        row = self._conn.execute(
            f'SELECT 1 FROM "{table}" WHERE id = ?', (row_id,)
        ).fetchone()
        if row is None:
            raise DanglingReferenceError(
                f"no row {row_id} in {table}"
            )

    # instances, instance sets, ground truth

    def create_instance(self, corpus_id: int, kind: str,
                        content_ids) -> int:
        """An instance points at its content rows; the kind dictates how
        many and of what sort (one document, a pair of annotations, or a
        set of documents)."""
        content_ids = list(content_ids)
        if kind not in _INSTANCE_KINDS:
            raise ValidationError(
                f"unknown instance kind {kind!r}; expected one of "
                + ", ".join(sorted(_INSTANCE_KINDS))
            )
        content_kind, lo, hi = _INSTANCE_KINDS[kind]
        if len(content_ids) < lo or (hi is not None and len(content_ids) > hi):
            wanted = str(lo) if hi == lo else (f">= {lo}" if hi is None
                                               else f"{lo}..{hi}")
            raise ValidationError(
                f"kind {kind!r} takes {wanted} content ids, "
                f"got {len(content_ids)}"
            )
        table = "documents" if content_kind == "document" else "annotations"
        with self._lock:
            self._require_row("corpora", corpus_id)
            for cid in content_ids:
                self._require_row(table, cid)
            with self._conn:
                cur = self._conn.execute(
                    "INSERT INTO instances (corpus_id, kind, data)"
                    " VALUES (?, ?, '{}')", (corpus_id, kind),
                )
                instance_id = cur.lastrowid
                self._conn.executemany(
                    "INSERT INTO instances_content"
                    " (instance_id, content_kind, content_id)"
                    " VALUES (?, ?, ?)",
                    [(instance_id, content_kind, cid)
                     for cid in content_ids],
                )
                return instance_id

    def create_instance_set(self, corpus_id: int, name: str, purpose: str,
                            instance_ids) -> int:
        instance_ids = list(instance_ids)
        with self._lock:
            self._require_row("corpora", corpus_id)
            for iid in instance_ids:
                self._require_row("instances", iid)
            with self._conn:
                cur = self._conn.execute(
                    "INSERT INTO instance_sets (corpus_id, name, purpose,"
                    " data) VALUES (?, ?, ?, '{}')",
                    (corpus_id, name, purpose),
                )
                set_id = cur.lastrowid
                self._conn.executemany(
                    "INSERT INTO instance_set_members"
                    " (instance_set_id, instance_id) VALUES (?, ?)",
                    [(set_id, iid) for iid in instance_ids],
                )
                return set_id

    def instance_set_members(self, set_id: int) -> list[int]:
        return [r[0] for r in self._conn.execute(
            "SELECT instance_id FROM instance_set_members"
            " WHERE instance_set_id = ? ORDER BY instance_id", (set_id,)
        )]

    def set_groundtruth(self, instance_id: int, task: str, label: str,
                        data: dict | None = None) -> None:
        """Upsert on (instance_id, task): the latest label wins."""
        with self._lock:
            self._require_row("instances", instance_id)
            with self._conn:
                cur = self._conn.execute(
                    "UPDATE groundtruth SET label = ?, data = ?"
                    " WHERE instance_id = ? AND task = ?",
                    (label, canonical_json(data), instance_id, task),
                )
                if cur.rowcount == 0:
                    self._conn.execute(
                        "INSERT INTO groundtruth"
                        " (instance_id, task, label, data)"
                        " VALUES (?, ?, ?, ?)",
                        (instance_id, task, label, canonical_json(data)),
                    )

    def groundtruth_for(self, instance_id: int) -> list[tuple[str, str]]:
        return [(r[0], r[1]) for r in self._conn.execute(
            "SELECT task, label FROM groundtruth WHERE instance_id = ?"
            " ORDER BY task", (instance_id,)
        )]
