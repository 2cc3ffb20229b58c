import io
import random

import pytest

from annokit.documents import (
    Annotation,
    Document,
    export_annotations,
    import_external_annotations,
    segment_context,
    split_sentences,
    tokenize,
    tokenize_text,
)
from annokit.errors import (
    BoundsError,
    DuplicateEntryError,
    ImportFormatError,
    NotFoundError,
    OrderError,
    OverlapError,
    ValidationError,
)
from annokit.intervals import AllenRelation, Interval, holds


def make_doc(content="0123456789", name="note"):
    return Document(name=name, content=content)


def test_content_is_immutable():
    doc = make_doc()
    with pytest.raises(AttributeError):
        doc.content = "changed"
    assert doc.content == "0123456789"


def test_add_and_fetch():
    doc = make_doc()
    ann = doc.annotate(Interval(0, 3), "token", "012")
    assert ann.id is not None
    assert doc.annotation(ann.id) is ann
    assert doc.annotations() == [ann]
    got = doc.annotations_satisfying(AllenRelation.EQ, Interval(0, 3))
    assert got == [ann]


def test_out_of_bounds_span_rejected():
    doc = make_doc()
    with pytest.raises(BoundsError):
        doc.annotate(Interval(5, 20), "token", "x")
    assert doc.annotations() == []


def test_duplicate_id_rejected():
    doc = make_doc()
    doc.add_annotation(Annotation(span=Interval(0, 2), type_name="t", id=7))
    with pytest.raises(DuplicateEntryError):
        doc.add_annotation(Annotation(span=Interval(3, 5), type_name="t", id=7))


def test_empty_type_rejected():
    doc = make_doc()
    with pytest.raises(ValidationError):
        doc.annotate(Interval(0, 2), "")


def test_provisional_ids_are_negative_and_distinct():
    doc = make_doc()
    a = doc.annotate(Interval(0, 1), "t")
    b = doc.annotate(Interval(1, 2), "t")
    assert a.id < 0 and b.id < 0 and a.id != b.id
    assert doc.dirty == {a.id, b.id}


def test_index_consistent_with_rebuild_oracle():
    rng = random.Random(314)
    doc = make_doc("x" * 200)
    added = []
    for _ in range(1000):
        s = rng.randrange(0, 200)
        e = rng.randrange(s, 201)
        added.append(doc.annotate(Interval(s, e), rng.choice("abc")))
    assert len(doc.index.by_id) == 1000
    want = sorted(added, key=lambda a: (a.span.start, a.span.end, added.index(a)))
    assert doc.annotations() == want
    by_type = {}
    for ann in added:
        by_type.setdefault(ann.type_name, set()).add(ann.id)
    assert doc.index.by_type == by_type


def test_satisfying_matches_linear_scan():
    rng = random.Random(2718)
    doc = make_doc("y" * 80)
    anns = []
    for n in range(150):
        s = rng.randrange(0, 80)
        e = rng.randrange(s, 81)
        anns.append(doc.annotate(Interval(s, e), rng.choice(("token", "CUI"))))
    ranked = sorted(anns, key=lambda a: (a.span.start, a.span.end,
                                         anns.index(a)))
    for _ in range(20):
        s = rng.randrange(0, 80)
        e = rng.randrange(s, 81)
        b = Interval(s, e)
        for rel in AllenRelation:
            for type_filter in (None, "CUI"):
                want = [a for a in ranked if holds(rel, a.span, b)
                        and (type_filter is None
                             or a.type_name == type_filter)]
                got = doc.annotations_satisfying(rel, b, type_filter)
                assert got == want


def test_type_filter_with_no_matches_is_empty():
    doc = make_doc()
    doc.annotate(Interval(0, 3), "token", "012")
    assert doc.annotations_satisfying(
        AllenRelation.DURING, Interval(0, 10), "CUI") == []


def test_next_annotations_walks_the_token_stream():
    doc = make_doc("aaa bbb ccc")
    t1 = doc.annotate(Interval(0, 3), "token", "aaa")
    t2 = doc.annotate(Interval(4, 7), "token", "bbb")
    t3 = doc.annotate(Interval(8, 11), "token", "ccc")
    assert doc.next_annotations(t1, 2) == [t2, t3]
    assert doc.next_annotations(t3, 2) == []
    assert doc.next_annotations(t1, 1) == [t2]


def test_next_annotations_includes_adjacent_span():
    doc = make_doc("abcdefg")
    t1 = doc.annotate(Interval(0, 3), "token")
    t2 = doc.annotate(Interval(3, 7), "token")
    assert doc.next_annotations(t1, 2) == [t2]


def test_next_annotations_prefix_property():
    rng = random.Random(11)
    doc = make_doc("z" * 60)
    anns = [doc.annotate(Interval(s, min(60, s + rng.randrange(0, 9))), "t")
            for s in rng.sample(range(55), 30)]
    anchor = anns[0]
    for k in range(1, 8):
        shorter = doc.next_annotations(anchor, k)
        longer = doc.next_annotations(anchor, k + 1)
        assert longer[:k] == shorter


def test_next_annotations_validates_arguments():
    doc = make_doc()
    t1 = doc.annotate(Interval(0, 3), "token")
    with pytest.raises(ValidationError):
        doc.next_annotations(t1, 0)
    stray = Annotation(span=Interval(0, 3), type_name="token", id=999)
    with pytest.raises(NotFoundError):
        doc.next_annotations(stray, 1)


def test_annotations_within_matches_scan():
    rng = random.Random(47)
    doc = make_doc("w" * 50)
    anns = []
    for _ in range(120):
        s = rng.randrange(0, 50)
        e = rng.randrange(s, 51)
        anns.append(doc.annotate(Interval(s, e), "t"))
    ranked = sorted(anns, key=lambda a: (a.span.start, a.span.end,
                                         anns.index(a)))
    for _ in range(25):
        s = rng.randrange(0, 50)
        e = rng.randrange(s, 51)
        b = Interval(s, e)
        want = [a for a in ranked
                if a.span.start >= b.start and a.span.end <= b.end]
        assert doc.annotations_within(b) == want


def test_update_annotation_reindexes():
    doc = make_doc("q" * 30)
    ann = doc.annotate(Interval(2, 6), "token", "old")
    doc.dirty.clear()
    doc.update_annotation(ann.id, span=Interval(10, 14), value="new",
                          type_name="CUI")
    assert ann.span == Interval(10, 14)
    assert doc.annotations_satisfying(AllenRelation.EQ, Interval(2, 6)) == []
    assert doc.annotations_satisfying(AllenRelation.EQ, Interval(10, 14)) == [ann]
    assert doc.index.by_type == {"CUI": {ann.id}}
    assert doc.dirty == {ann.id}
    with pytest.raises(BoundsError):
        doc.update_annotation(ann.id, span=Interval(25, 40))


def test_segment_context_worked_example():
    doc = make_doc("aspirin reduces pain now", name="s")
    ctx = segment_context(doc, Interval(0, 7), Interval(16, 20),
                          Interval(0, 24))
    assert ctx.preceding == Interval(0, 0)
    assert ctx.concept1 == Interval(0, 7)
    assert ctx.between == Interval(7, 16)
    assert ctx.concept2 == Interval(16, 20)
    assert ctx.succeeding == Interval(20, 24)


def test_segment_context_accepts_annotations():
    doc = make_doc("aspirin reduces pain now", name="s")
    sent = doc.annotate(Interval(0, 24), "sentence")
    c1 = doc.annotate(Interval(0, 7), "CUI", "C1")
    c2 = doc.annotate(Interval(16, 20), "CUI", "C2")
    ctx = segment_context(doc, c1, c2, sent)
    assert ctx.between == Interval(7, 16)


def test_segment_context_errors():
    doc = make_doc("x" * 30)
    sent = Interval(5, 25)
    with pytest.raises(OverlapError):
        segment_context(doc, Interval(6, 13), Interval(11, 15), sent)
    with pytest.raises(OrderError):
        segment_context(doc, Interval(16, 20), Interval(6, 10), sent)
    with pytest.raises(BoundsError):
        segment_context(doc, Interval(2, 8), Interval(10, 14), sent)
    with pytest.raises(BoundsError):
        segment_context(doc, Interval(6, 10), Interval(20, 28), sent)
    with pytest.raises(BoundsError):
        segment_context(doc, Interval(6, 10), Interval(12, 14),
                        Interval(5, 40))


def test_segment_context_partitions_random_configs():
    rng = random.Random(606)
    doc = make_doc("p" * 120)
    for _ in range(200):
        ss = rng.randrange(0, 40)
        se = rng.randrange(ss + 4, 121)
        cuts = sorted(rng.sample(range(ss, se + 1), 4))
        c1 = Interval(cuts[0], cuts[1])
        c2 = Interval(cuts[2], cuts[3])
        ctx = segment_context(doc, c1, c2, Interval(ss, se))
        spans = ctx.spans()
        # contiguous, non-overlapping, covering the sentence exactly
        assert spans[0].start == ss
        assert spans[-1].end == se
        for left, right in zip(spans, spans[1:]):
            assert left.end == right.start


def test_tokenize_worked_example():
    doc = make_doc("A b.")
    toks = tokenize(doc)
    assert [(t.span.start, t.span.end) for t in toks] == [(0, 1), (2, 3), (3, 4)]
    assert [t.value for t in toks] == ["A", "b", "."]
    assert [t.attributes["ordinal"] for t in toks] == ["0", "1", "2"]
    assert all(t.type_name == "token" for t in toks)


def test_tokenize_empty_document():
    assert tokenize(make_doc("")) == []


def test_tokenize_text_handles_punctuation_runs():
    got = tokenize_text("re-do it_now!!")
    assert [t for t, _ in got] == ["re", "-", "do", "it", "_", "now", "!", "!"]


def test_sentences_worked_example():
    doc = make_doc("A b.")
    sents = split_sentences(doc)
    assert [(s.span.start, s.span.end) for s in sents] == [(0, 4)]


def test_sentences_abbreviation_guard():
    doc = make_doc("Dr. Smith came. He left.")
    sents = split_sentences(doc)
    texts = [doc.content[s.span.start:s.span.end] for s in sents]
    assert texts == ["Dr. Smith came.", "He left."]
    # without the guard the abbreviation splits too
    bare = split_sentences(doc, abbreviations=())
    assert len(bare) == 3


def test_sentences_split_at_newlines_and_trim():
    doc = make_doc("first line\n\n  second line  \nthird")
    sents = split_sentences(doc)
    texts = [doc.content[s.span.start:s.span.end] for s in sents]
    assert texts == ["first line", "second line", "third"]


def test_sentences_require_uppercase_after_break():
    doc = make_doc("took 2.5 mg daily. no change")
    assert len(split_sentences(doc)) == 1


def test_tokens_never_cross_sentence_bounds():
    doc = make_doc("One two. Three four! Five?\nSix.")
    toks = tokenize(doc)
    sents = split_sentences(doc)
    for t in toks:
        crossing = [s for s in sents
                    if t.span.start < s.span.end < t.span.end]
        assert not crossing


def test_export_import_round_trip():
    doc = make_doc("the cat sat on the mat", name="mat")
    doc.annotate(Interval(0, 3), "token", "the", {"ordinal": "0"}, "tk")
    doc.annotate(Interval(4, 7), "CUI", "C0007450", {"tui": "T029"}, "lex")
    doc.annotate(Interval(4, 7), "token", "cat", {"ordinal": "1"}, "tk")
    buf = io.StringIO()
    assert export_annotations(doc, buf) == 3
    twin = make_doc("the cat sat on the mat", name="mat")
    buf.seek(0)
    assert import_external_annotations(twin, buf) == 3
    orig = doc.annotations()
    copy = twin.annotations()
    assert len(copy) == len(orig)
    for a, b in zip(orig, copy):
        assert (a.span, a.type_name, a.value, a.attributes, a.provenance) == \
               (b.span, b.type_name, b.value, b.attributes, b.provenance)


def test_import_rejects_bad_lines_wholesale():
    doc = make_doc("short text", name="d")
    data = "\n".join([
        "# header",
        "d\t0\t4\ttoken\tshor\t",
        "d\t6\t3\ttoken\tbad\t",          # end < start
        "d\t0\txx\ttoken\tbad\t",          # non-integer
        "other\t0\t4\ttoken\tbad\t",       # wrong document
        "d\t0\t999\ttoken\tbad\t",         # out of bounds
        "d\t5\t10\ttoken\ttext\tk=v",
    ])
    with pytest.raises(ImportFormatError) as err:
        import_external_annotations(doc, io.StringIO(data))
    assert err.value.line_numbers == (3, 4, 5, 6)
    # nothing applied
    assert doc.annotations() == []


def test_import_accepts_comments_and_blanks():
    doc = make_doc("short text", name="d")
    data = "# c\n\nd\t0\t5\ttoken\tshort\tk=v;_provenance=ext\n"
    assert import_external_annotations(doc, io.StringIO(data)) == 1
    ann = doc.annotations()[0]
    assert ann.attributes == {"k": "v"}
    assert ann.provenance == "ext"
