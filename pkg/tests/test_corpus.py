import json
from datetime import date

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from topicflow.corpus import (
    EncodedDocument,
    EpochSpec,
    IngestReport,
    build_vocabulary,
    default_stopwords,
    encode_documents,
    export_vocabulary_csv,
    ingest,
    load_lemma_map,
    load_stopwords,
    normalize,
    slice_epochs,
)
from topicflow.errors import InputError, ValidationError


def write_jsonl(path, rows):
    path.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")


class TestIngest:
    def test_all_valid(self, tmp_path):
        f = tmp_path / "c.jsonl"
        write_jsonl(f, [
            {"id": "a", "date": "2001-05-02", "text": "hello world"},
            {"id": "b", "date": "2003-01-31", "text": "more text"},
            {"id": "c", "date": "1999-12-01", "text": "third document"},
        ])
        docs, report = ingest(f)
        assert len(docs) == 3
        assert report == IngestReport(parsed=3, malformed=0)
        assert docs[0].timestamp == date(2001, 5, 2)

    def test_bad_date_counted_not_fatal(self, tmp_path):
        f = tmp_path / "c.jsonl"
        write_jsonl(f, [
            {"id": "a", "date": "2001-05-02", "text": "x"},
            {"id": "b", "date": "not-a-date", "text": "y"},
            {"id": "c", "date": "2002-02-02", "text": "z"},
        ])
        docs, report = ingest(f)
        assert [d.id for d in docs] == ["a", "c"]
        assert report.malformed == 1

    def test_duplicate_id_is_malformed(self, tmp_path):
        f = tmp_path / "c.jsonl"
        write_jsonl(f, [
            {"id": "a", "date": "2001-05-02", "text": "x"},
            {"id": "a", "date": "2001-06-02", "text": "y"},
        ])
        docs, report = ingest(f)
        assert len(docs) == 1 and report.malformed == 1

    def test_empty_file_fatal(self, tmp_path):
        f = tmp_path / "c.jsonl"
        f.write_text("", encoding="utf-8")
        with pytest.raises(ValidationError):
            ingest(f)

    def test_missing_file_is_io_error(self, tmp_path):
        with pytest.raises(InputError):
            ingest(tmp_path / "nope.jsonl")


class TestNormalize:
    def test_default_stopwords(self):
        assert normalize("The children's genes.") == ["children", "genes"]

    def test_lemma_map(self):
        lm = {"children": "child", "genes": "gene"}
        assert normalize("The children's genes.", lemma_map=lm) == ["child", "gene"]

    def test_empty(self):
        assert normalize("") == []

    def test_digits_and_short_tokens_dropped(self):
        # digits split tokens; single-letter fragments are dropped
        assert normalize("x2 go9ne ab 7") == ["go", "ne", "ab"]

    @settings(max_examples=60, deadline=None)
    @given(st.text(max_size=200))
    def test_idempotence(self, text):
        once = normalize(text)
        again = normalize(" ".join(once))
        assert once == again

    def test_idempotence_with_lemma_map(self):
        lm = {"aa": "bb", "bb": "cc"}
        # chains are resolved by the loader; raw dicts are applied as-is,
        # so use a loader-produced map for the idempotence guarantee
        resolved = {"aa": "cc", "bb": "cc"}
        once = normalize("aa bb cc dd", lemma_map=resolved)
        assert normalize(" ".join(once), lemma_map=resolved) == once


class TestLemmaAndStopwordFiles:
    def test_load_stopwords(self, tmp_path):
        f = tmp_path / "sw.txt"
        f.write_text("Foo\nbar\n\n", encoding="utf-8")
        assert load_stopwords(f) == frozenset({"foo", "bar"})

    def test_load_lemma_map_resolves_chains(self, tmp_path):
        f = tmp_path / "lm.txt"
        f.write_text("aa\tbb\nbb\tcc\n", encoding="utf-8")
        assert load_lemma_map(f) == {"aa": "cc", "bb": "cc"}

    def test_lemma_cycle_rejected(self, tmp_path):
        f = tmp_path / "lm.txt"
        f.write_text("aa\tbb\nbb\taa\n", encoding="utf-8")
        with pytest.raises(ValidationError):
            load_lemma_map(f)

    def test_lemma_bad_format(self, tmp_path):
        f = tmp_path / "lm.txt"
        f.write_text("aa bb cc\n", encoding="utf-8")
        with pytest.raises(ValidationError):
            load_lemma_map(f)

    def test_default_stopwords_nonempty(self):
        sw = default_stopwords()
        assert "the" in sw and len(sw) > 50


class TestVocabulary:
    def test_energy_cut(self):
        docs = [["a"] * 6 + ["b"] * 3 + ["c"]]
        v = build_vocabulary(docs, 0.9)
        assert set(v.terms) == {"a", "b"}
        assert v.terms == ("a", "b")  # descending frequency

    def test_full_energy_keeps_all(self):
        docs = [["a", "b", "c", "a"]]
        v = build_vocabulary(docs, 1.0)
        assert set(v.terms) == {"a", "b", "c"}

    def test_tie_at_cut_includes_all(self):
        docs = [["a"] * 5 + ["b"] * 5]
        v = build_vocabulary(docs, 0.5)
        assert set(v.terms) == {"a", "b"}

    def test_determinism_under_input_order(self):
        docs1 = [["b", "a"], ["c", "a", "b"], ["a"]]
        docs2 = [["a"], ["a", "b", "c"], ["a", "b"]]
        v1 = build_vocabulary(docs1, 1.0)
        v2 = build_vocabulary(docs2, 1.0)
        assert v1.terms == v2.terms and v1.counts == v2.counts

    def test_minimality_without_ties(self):
        # distinct frequencies: dropping the last retained term must dip
        # below the energy target
        docs = [["a"] * 8 + ["b"] * 4 + ["c"] * 2 + ["d"]]
        fraction = 0.8
        v = build_vocabulary(docs, fraction)
        total = 15
        kept_mass = sum(v.counts)
        assert kept_mass >= fraction * total
        assert kept_mass - v.counts[-1] < fraction * total

    def test_invalid_fraction(self):
        with pytest.raises(ValidationError):
            build_vocabulary([["a"]], 0.0)

    def test_empty_stream_fatal(self):
        with pytest.raises(ValidationError):
            build_vocabulary([[]], 0.9)

    def test_id_lookup_and_error(self):
        v = build_vocabulary([["a", "b"]], 1.0)
        assert v.id_of(v.terms[0]) == 0
        with pytest.raises(ValidationError, match="zzz"):
            v.id_of("zzz")

    def test_csv_export(self):
        v = build_vocabulary([["b", "b", "a"]], 1.0)
        csv = export_vocabulary_csv(v)
        lines = csv.strip().splitlines()
        assert lines[0] == "id,term,count"
        assert lines[1] == "0,b,2"


class TestEncode:
    def test_oov_dropped_and_empty_docs_recorded(self, tmp_path):
        f = tmp_path / "c.jsonl"
        write_jsonl(f, [
            {"id": "a", "date": "2001-01-01", "text": "apple apple banana"},
            {"id": "b", "date": "2001-01-02", "text": "cherry"},
        ])
        docs, _ = ingest(f)
        vocab = build_vocabulary([["apple", "apple", "banana"]], 1.0)
        encoded, dropped = encode_documents(docs, vocab)
        assert [d.id for d in encoded] == ["a"]
        assert dropped == ["b"]
        assert all(t < len(vocab) for d in encoded for t in d.tokens)


def doc(id_, y, m=6, d=15):
    return EncodedDocument(id=id_, timestamp=date(y, m, d), tokens=(0,))


class TestEpochs:
    def test_ten_year_windows_with_five_year_overlap(self):
        docs = [doc("a", 1946), doc("b", 2015)]
        spec = EpochSpec(epoch_length=10, overlap=5, origin=date(1946, 1, 1))
        epochs = slice_epochs(docs, spec)
        starts = [e.start.year for e in epochs]
        assert starts[:4] == [1946, 1951, 1956, 1961]
        assert starts[-1] <= 2015 and starts[-1] + 10 > 2015

    def test_disjoint_windows(self):
        docs = [doc("a", 2000), doc("b", 2009)]
        spec = EpochSpec(epoch_length=5, overlap=0, origin=date(2000, 1, 1))
        epochs = slice_epochs(docs, spec)
        assert [e.start.year for e in epochs] == [2000, 2005]
        for a, b in zip(epochs, epochs[1:]):
            assert a.end == b.start

    def test_single_document(self):
        docs = [doc("a", 2001)]
        spec = EpochSpec(epoch_length=3, overlap=0, origin=date(2001, 1, 1))
        epochs = slice_epochs(docs, spec)
        assert len(epochs) == 1 and epochs[0].doc_ids == ("a",)

    def test_overlap_membership_count(self):
        # 10-year windows stepping by 5: inner documents land in 2 epochs
        docs = [doc(f"d{y}", y) for y in range(1950, 1980)]
        spec = EpochSpec(epoch_length=10, overlap=5, origin=date(1950, 1, 1))
        epochs = slice_epochs(docs, spec)
        membership = {d.id: 0 for d in docs}
        for e in epochs:
            for i in e.doc_ids:
                membership[i] += 1
        limit = -(-spec.epoch_length // spec.step)  # ceil
        assert all(1 <= c <= limit for c in membership.values())
        assert any(c == 2 for c in membership.values())

    def test_document_before_origin_fatal(self):
        docs = [doc("a", 1999), doc("b", 2005)]
        spec = EpochSpec(epoch_length=5, overlap=0, origin=date(2000, 1, 1))
        with pytest.raises(ValidationError):
            slice_epochs(docs, spec)

    def test_spec_validation(self):
        with pytest.raises(ValidationError):
            EpochSpec(epoch_length=5, overlap=5, origin=date(2000, 1, 1))
        with pytest.raises(ValidationError):
            EpochSpec(epoch_length=0, overlap=0, origin=date(2000, 1, 1))

    def test_empty_corpus_fatal(self):
        spec = EpochSpec(epoch_length=5, overlap=0, origin=date(2000, 1, 1))
        with pytest.raises(ValidationError):
            slice_epochs([], spec)
