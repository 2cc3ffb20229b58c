"""Documents, corpora, and stand-off annotations.

A document's text is immutable; all analysis attaches as annotations that
point into the text by character span. Every document carries an index
(interval tree + id map + per-type map) kept consistent by the operations
here. Also home to the deliberately simple built-in tokenizer and sentence
splitter, the external tab-separated annotation exchange format, and the
five-way sentence segmentation used for concept-pair context.
"""

import io
import re
from dataclasses import dataclass, field

from .errors import (
    BoundsError,
    DuplicateEntryError,
    ImportFormatError,
    NotFoundError,
    OrderError,
    OverlapError,
    ValidationError,
)
from .intervals import AllenRelation, Interval
from .tree import IntervalTree

# Maximal letter/digit runs, single punctuation marks, or a lone underscore.
TOKEN_PATTERN = re.compile(r"[^\W_]+|[^\w\s]|_")

# Trailing-period words that do not end a sentence (casefolded).
DEFAULT_ABBREVIATIONS = frozenset(
    {"dr.", "mr.", "mrs.", "ms.", "vs.", "e.g.", "i.e."}
)

# Reserved attribute key used to carry provenance through the line format.
_PROVENANCE_KEY = "_provenance"


@dataclass(eq=True)
class Annotation:
    """One stand-off annotation. ``value`` is the principal indexed datum
    (a CUI, POS tag, section name, ...); everything else rides in
    ``attributes``. Negative ids are provisional and get replaced by the
    store on first persist."""

    span: Interval
    type_name: str
    value: str = ""
    attributes: dict = field(default_factory=dict)
    provenance: str = ""
    id: int | None = None
    doc_id: int | None = None


@dataclass
class Corpus:
    name: str
    id: int | None = None
    metadata: dict = field(default_factory=dict)
    document_ids: set = field(default_factory=set)


class AnnotationIndex:
    """Interval tree plus id and type maps, mutated only together."""

    def __init__(self):
        self.tree = IntervalTree()
        self.by_id: dict[int, Annotation] = {}
        self.by_type: dict[str, set[int]] = {}

    def __len__(self):
        return len(self.by_id)

    def add(self, ann: Annotation) -> None:
        if ann.id in self.by_id:
            raise DuplicateEntryError(f"annotation id {ann.id} already used")
        self.tree.insert(ann.span, ann.id)
        self.by_id[ann.id] = ann
        self.by_type.setdefault(ann.type_name, set()).add(ann.id)

    def reindex_span(self, ann: Annotation, new_span: Interval) -> None:
        self.tree.remove(ann.span, ann.id)
        self.tree.insert(new_span, ann.id)
        ann.span = new_span

    def reindex_type(self, ann: Annotation, new_type: str) -> None:
        ids = self.by_type[ann.type_name]
        ids.discard(ann.id)
        if not ids:
            del self.by_type[ann.type_name]
        ann.type_name = new_type
        self.by_type.setdefault(new_type, set()).add(ann.id)

    def replace_id(self, old_id: int, new_id: int) -> Annotation:
        """Rebind an annotation to a new id, e.g. when the store assigns a
        durable id for a provisional one. Keeps canonical tie order."""
        ann = self.by_id.pop(old_id)
        self.tree.replace_payload(ann.span, old_id, new_id)
        ids = self.by_type[ann.type_name]
        ids.discard(old_id)
        ids.add(new_id)
        ann.id = new_id
        self.by_id[new_id] = ann
        return ann


class Document:
    """A named text plus its annotation index and dirty-tracking."""

    def __init__(self, name: str, content: str, doc_id: int | None = None,
                 metadata: dict | None = None):
        self.id = doc_id
        self.name = name
        self._content = content
        self.metadata = dict(metadata or {})
        self.index = AnnotationIndex()
        self.dirty: set[int] = set()
        self._next_provisional = -1

    @property
    def content(self) -> str:
        """The document text. There is deliberately no setter."""
        return self._content

    def __repr__(self):
        return (f"Document(name={self.name!r}, id={self.id}, "
                f"chars={len(self._content)}, "
                f"annotations={len(self.index)})")

    def add_annotation(self, ann: Annotation) -> int:
        """Attach an annotation, assigning a provisional id when it has
        none, and mark it dirty."""
        if not ann.type_name:
            raise ValidationError("annotation type_name must be non-empty")
        if ann.span.end > len(self._content):
            raise BoundsError(
                f"span {ann.span} exceeds document length "
                f"{len(self._content)}"
            )
        if ann.id is None:
            ann.id = self._next_provisional
            self._next_provisional -= 1
        ann.doc_id = self.id
        self.index.add(ann)
        self.dirty.add(ann.id)
        return ann.id

    def annotate(self, span: Interval, type_name: str, value: str = "",
                 attributes: dict | None = None,
                 provenance: str = "") -> Annotation:
        """Build and attach an annotation in one step."""
        ann = Annotation(span=span, type_name=type_name, value=value,
                         attributes=dict(attributes or {}),
                         provenance=provenance)
        self.add_annotation(ann)
        return ann

    def annotation(self, ann_id: int) -> Annotation:
        try:
            return self.index.by_id[ann_id]
        except KeyError:
            raise NotFoundError(
                f"no annotation {ann_id} in document {self.name!r}"
            ) from None

    def annotations(self, type_filter: str | None = None) -> list[Annotation]:
        """All annotations in canonical order (start, end, insertion)."""
        out = []
        for _, ann_id in self.index.tree:
            ann = self.index.by_id[ann_id]
            if type_filter is None or ann.type_name == type_filter:
                out.append(ann)
        return out

    def annotations_satisfying(self, rel: AllenRelation, b: Interval,
                               type_filter: str | None = None
                               ) -> list[Annotation]:
        """Annotations whose span bears ``rel`` to b, canonical order."""
        out = []
        for _, ann_id in self.index.tree.query(rel, b):
            ann = self.index.by_id[ann_id]
            if type_filter is None or ann.type_name == type_filter:
                out.append(ann)
        return out

    def next_annotations(self, anchor: Annotation, k: int,
                         type_filter: str | None = None) -> list[Annotation]:
        """The first k annotations starting at or after anchor's end.

        Adjacent spans count: under half-open offsets a token beginning
        exactly at anchor.end is the immediate successor.
        """
        if k < 1:
            raise ValidationError(f"k must be >= 1, got {k}")
        if self.index.by_id.get(anchor.id) is not anchor:
            raise NotFoundError("anchor does not belong to this document")
        tree = self.index.tree
        hits = tree.query(AllenRelation.MET_BY, anchor.span)
        hits += tree.query(AllenRelation.AFTER, anchor.span)
        out = []
        for _, ann_id in hits:
            if ann_id == anchor.id:
                continue
            ann = self.index.by_id[ann_id]
            if type_filter is not None and ann.type_name != type_filter:
                continue
            out.append(ann)
            if len(out) == k:
                break
        return out

    def annotations_within(self, b: Interval,
                           type_filter: str | None = None
                           ) -> list[Annotation]:
        """Annotations fully inside b (boundaries included), canonical.

        Containment decomposes into four relations; null spans can match
        more than one of them, hence the dedup.
        """
        seen = set()
        hits = []
        for rel in (AllenRelation.EQ, AllenRelation.STARTS,
                    AllenRelation.FINISHES, AllenRelation.DURING):
            for _, ann_id in self.index.tree.query(rel, b):
                if ann_id in seen:
                    continue
                seen.add(ann_id)
                ann = self.index.by_id[ann_id]
                if type_filter is None or ann.type_name == type_filter:
                    hits.append(ann)
        hits.sort(key=lambda a: (a.span.start, a.span.end))
        return hits

    def update_annotation(self, ann_id: int, span: Interval | None = None,
                          type_name: str | None = None,
                          value: str | None = None,
                          attributes: dict | None = None,
                          provenance: str | None = None) -> Annotation:
        """Modify fields of an existing annotation, keeping the index
        consistent, and mark it dirty."""
        ann = self.annotation(ann_id)
        if span is not None and span != ann.span:
            if span.end > len(self._content):
                raise BoundsError(
                    f"span {span} exceeds document length "
                    f"{len(self._content)}"
                )
            self.index.reindex_span(ann, span)
        if type_name is not None and type_name != ann.type_name:
            if not type_name:
                raise ValidationError("annotation type_name must be non-empty")
            self.index.reindex_type(ann, type_name)
        if value is not None:
            ann.value = value
        if attributes is not None:
            ann.attributes = dict(attributes)
        if provenance is not None:
            ann.provenance = provenance
        self.dirty.add(ann_id)
        return ann


@dataclass(frozen=True)
class SegmentContext:
    """The five-way partition of a sentence around an ordered concept pair."""

    preceding: Interval
    concept1: Interval
    between: Interval
    concept2: Interval
    succeeding: Interval

    def spans(self) -> tuple[Interval, ...]:
        return (self.preceding, self.concept1, self.between,
                self.concept2, self.succeeding)


def _span_of(x) -> Interval:
    return x.span if isinstance(x, Annotation) else x


def segment_context(doc: Document, c1, c2, sentence) -> SegmentContext:
    """Partition a sentence into preceding / c1 / between / c2 / succeeding.

    c1 must end at or before c2's start. Concepts lying partly outside the
    sentence are a bounds error; a swapped pair is an order error (callers
    sort, this function does not guess); anything else touching is an
    overlap error.
    """
    s = _span_of(sentence)
    a = _span_of(c1)
    b = _span_of(c2)
    if s.end > len(doc.content):
        raise BoundsError(f"sentence span {s} exceeds document length")
    for label, c in (("c1", a), ("c2", b)):
        if c.start < s.start or c.end > s.end:
            raise BoundsError(f"{label} span {c} lies outside sentence {s}")
    if a.end > b.start:
        if b.end <= a.start:
            raise OrderError(
                f"c2 {b} precedes c1 {a}; pass the concepts in text order"
            )
        raise OverlapError(f"concept spans {a} and {b} overlap")
    return SegmentContext(
        preceding=Interval(s.start, a.start),
        concept1=a,
        between=Interval(a.end, b.start),
        concept2=b,
        succeeding=Interval(b.end, s.end),
    )


def tokenize_text(text: str) -> list[tuple[str, Interval]]:
    """(surface, span) pairs for every token in the text."""
    return [(m.group(), Interval(m.start(), m.end()))
            for m in TOKEN_PATTERN.finditer(text)]


def tokenize(doc: Document) -> list[Annotation]:
    """Token annotations for the document text, ready to add.

    Tokens are maximal letter/digit runs or single punctuation marks. Each
    records its ordinal so word-counted measures can be derived later.
    """
    out = []
    for ordinal, (surface, span) in enumerate(tokenize_text(doc.content)):
        out.append(Annotation(
            span=span, type_name="token", value=surface,
            attributes={"ordinal": str(ordinal)},
            provenance="builtin-tokenizer", doc_id=doc.id,
        ))
    return out


def _breaks_sentence(text: str, i: int, abbreviations) -> bool:
    # A closing [.?!] ends the sentence when whitespace and then an
    # uppercase letter follow, unless the word it closes is a known
    # abbreviation ("Dr." etc).
    j = i + 1
    while j < len(text) and text[j] in " \t":
        j += 1
    if j == i + 1 or j >= len(text) or not text[j].isupper():
        return False
    k = i
    while k > 0 and not text[k - 1].isspace():
        k -= 1
    return text[k:i + 1].casefold() not in abbreviations


def split_sentences(doc: Document,
                    abbreviations=DEFAULT_ABBREVIATIONS) -> list[Annotation]:
    """Sentence annotations for the document text, ready to add.

    Rule-based on purpose: break after sentence punctuation followed by
    whitespace and an uppercase letter (abbreviation-guarded), and at
    newlines. Spans are trimmed of surrounding whitespace. Serious
    splitting belongs to external tools whose output is imported.
    """
    text = doc.content
    abbreviations = frozenset(a.casefold() for a in abbreviations)
    pieces = []
    seg_start = 0
    for i, ch in enumerate(text):
        if ch == "\n":
            pieces.append((seg_start, i))
            seg_start = i + 1
        elif ch in ".?!" and _breaks_sentence(text, i, abbreviations):
            pieces.append((seg_start, i + 1))
            seg_start = i + 1
    pieces.append((seg_start, len(text)))

    out = []
    for start, end in pieces:
        while start < end and text[start].isspace():
            start += 1
        while end > start and text[end - 1].isspace():
            end -= 1
        if start < end:
            out.append(Annotation(
                span=Interval(start, end), type_name="sentence",
                attributes={"ordinal": str(len(out))},
                provenance="builtin-sentence-splitter", doc_id=doc.id,
            ))
    return out


# external tab-separated exchange format

_HEADER = "# doc\tstart\tend\ttype\tvalue\tattributes"


def _open_for(dest, mode):
    if hasattr(dest, "read") or hasattr(dest, "write"):
        return dest, False
    return io.open(dest, mode, encoding="utf-8"), True


def _format_attributes(ann: Annotation) -> str:
    parts = [f"{k}={v}" for k, v in ann.attributes.items()]
    if ann.provenance:
        parts.append(f"{_PROVENANCE_KEY}={ann.provenance}")
    return ";".join(parts)


def export_annotations(doc: Document, dest,
                       type_filter: str | None = None) -> int:
    """Write annotations as tab-separated lines (0-based half-open spans).

    Provenance travels as a reserved attribute so a round trip through
    import_external_annotations loses nothing.
    """
    handle, owned = _open_for(dest, "w")
    try:
        handle.write(_HEADER + "\n")
        count = 0
        for ann in doc.annotations(type_filter):
            handle.write("\t".join((
                doc.name, str(ann.span.start), str(ann.span.end),
                ann.type_name, ann.value, _format_attributes(ann),
            )) + "\n")
            count += 1
        return count
    finally:
        if owned:
            handle.close()


def import_external_annotations(doc: Document, src) -> int:
    """Attach annotations from the tab-separated line format.

    Every line is validated before anything is applied; any bad line
    aborts the whole import with the offending 1-based line numbers.
    """
    handle, owned = _open_for(src, "r")
    try:
        lines = handle.readlines()
    finally:
        if owned:
            handle.close()

    parsed = []
    bad = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 6:
            bad.append(lineno)
            continue
        name, raw_start, raw_end, type_name, value, raw_attrs = fields
        try:
            start, end = int(raw_start), int(raw_end)
        except ValueError:
            bad.append(lineno)
            continue
        if (name != doc.name or not type_name or start < 0 or end < start
                or end > len(doc.content)):
            bad.append(lineno)
            continue
        attributes = {}
        ok = True
        for chunk in raw_attrs.split(";"):
            if not chunk:
                continue
            if "=" not in chunk:
                ok = False
                break
            key, _, val = chunk.partition("=")
            attributes[key] = val
        if not ok:
            bad.append(lineno)
            continue
        provenance = attributes.pop(_PROVENANCE_KEY, "")
        parsed.append((Interval(start, end), type_name, value,
                       attributes, provenance))

    if bad:
        raise ImportFormatError(
            "rejected %d line(s): %s" % (len(bad),
                                         ", ".join(map(str, bad))),
            line_numbers=tuple(bad),
        )
    for span, type_name, value, attributes, provenance in parsed:
        doc.annotate(span, type_name, value, attributes, provenance)
    return len(parsed)
