"""Corpus ingestion, text normalization, vocabulary construction, and epoch slicing.

Raw documents arrive as JSON Lines ({"id", "date", "text"}), are normalized
into token streams, encoded against a frequency-ranked vocabulary truncated
at an energy fraction, and finally grouped into (possibly overlapping) time
epochs of whole-year length.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import date
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .errors import InputError, ValidationError

# Tokens are maximal runs of ASCII letters after lowercasing; anything
# shorter than 2 characters is discarded.
_TOKEN_RE = re.compile(r"[a-z]+")
_MIN_TOKEN_LEN = 2


@dataclass(frozen=True)
class RawDocument:
    """A timestamped input document, prior to any processing."""

    id: str
    timestamp: date
    text: str


@dataclass(frozen=True)
class IngestReport:
    parsed: int
    malformed: int
    dropped_empty: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "parsed": self.parsed,
            "malformed": self.malformed,
            "dropped_empty": list(self.dropped_empty),
        }


@dataclass(frozen=True)
class Vocabulary:
    """Frequency-ranked term list truncated at an energy fraction.

    Terms are sorted by descending corpus frequency (ties alphabetical), ids
    are dense 0..n-1 in that order, and the retained prefix is the smallest
    one whose cumulative token count reaches ``energy_fraction`` of the total,
    extended to include every term tied with the frequency at the cut.
    """

    terms: tuple[str, ...]
    counts: tuple[int, ...]
    energy_fraction: float
    index: Mapping[str, int] = field(repr=False, default_factory=dict)

    def __post_init__(self):
        if not self.index:
            object.__setattr__(
                self, "index", {t: i for i, t in enumerate(self.terms)}
            )

    def __len__(self) -> int:
        return len(self.terms)

    def id_of(self, term: str) -> int:
        try:
            return self.index[term]
        except KeyError:
            raise ValidationError(f"term not in vocabulary: {term!r}") from None


@dataclass(frozen=True)
class EncodedDocument:
    """A document as a sequence of vocabulary ids, original order preserved."""

    id: str
    timestamp: date
    tokens: tuple[int, ...]


@dataclass(frozen=True)
class EncodedCorpus:
    documents: tuple[EncodedDocument, ...]
    vocabulary: Vocabulary


@dataclass(frozen=True)
class EpochSpec:
    """Epoch window geometry: whole-year length, overlap, and anchor date."""

    epoch_length: int
    overlap: int
    origin: date

    def __post_init__(self):
        if self.epoch_length < 1:
            raise ValidationError("epoch_length must be >= 1 year")
        if not 0 <= self.overlap < self.epoch_length:
            raise ValidationError("require 0 <= overlap < epoch_length")

    @property
    def step(self) -> int:
        return self.epoch_length - self.overlap


@dataclass(frozen=True)
class Epoch:
    index: int
    start: date
    end: date  # exclusive
    doc_ids: tuple[str, ...] = ()

    def contains(self, when: date) -> bool:
        return self.start <= when < self.end


def default_stopwords() -> frozenset[str]:
    """The stopword list shipped with the package."""
    text = resources.files("topicflow.data").joinpath("stopwords.txt").read_text("utf-8")
    return frozenset(line.strip() for line in text.splitlines() if line.strip())


def load_stopwords(path: str | Path) -> frozenset[str]:
    """Load a stopword file: one lowercase term per line."""
    try:
        lines = Path(path).read_text("utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read stopword file {path}: {exc}") from exc
    return frozenset(line.strip().lower() for line in lines if line.strip())


def load_lemma_map(path: str | Path) -> dict[str, str]:
    """Load a term->lemma map: lines of "term<TAB>lemma".

    Chains (a->b, b->c) are resolved to their fixpoint at load time so that
    applying the map is idempotent. Cycles and non-alphabetic lemmas are
    rejected.
    """
    try:
        lines = Path(path).read_text("utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read lemma map {path}: {exc}") from exc
    raw: dict[str, str] = {}
    for n, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ValidationError(f"lemma map line {n}: expected 'term<TAB>lemma'")
        term, lemma = parts[0].strip().lower(), parts[1].strip().lower()
        if not _TOKEN_RE.fullmatch(lemma):
            raise ValidationError(f"lemma map line {n}: lemma {lemma!r} is not alphabetic")
        raw[term] = lemma
    return _resolve_chains(raw)


def _resolve_chains(mapping: dict[str, str]) -> dict[str, str]:
    resolved = {}
    for term in mapping:
        seen = {term}
        target = mapping[term]
        while target in mapping:
            if target in seen:
                raise ValidationError(f"lemma map contains a cycle through {target!r}")
            seen.add(target)
            target = mapping[target]
        resolved[term] = target
    return resolved


def normalize(
    text: str,
    stopwords: Optional[frozenset[str]] = None,
    lemma_map: Optional[Mapping[str, str]] = None,
) -> list[str]:
    """Normalize raw text into a token sequence.

    Lowercases, splits on non-alphabetic characters, applies the lemma map
    when given, then drops short tokens and stopwords. No stemming. The
    output is stable under re-normalization.
    """
    if stopwords is None:
        stopwords = default_stopwords()
    tokens = _TOKEN_RE.findall(text.lower())
    if lemma_map:
        tokens = [lemma_map.get(t, t) for t in tokens]
    return [t for t in tokens if len(t) >= _MIN_TOKEN_LEN and t not in stopwords]


def ingest(path: str | Path) -> tuple[list[RawDocument], IngestReport]:
    """Read a JSONL corpus file into RawDocuments.

    Malformed lines (bad JSON, missing fields, unparseable dates, duplicate
    ids) are counted in the report rather than aborting the run. An
    unreadable file or a file with zero parseable records is fatal.
    """
    try:
        raw = Path(path).read_text("utf-8")
    except OSError as exc:
        raise InputError(f"cannot read corpus file {path}: {exc}") from exc

    docs: list[RawDocument] = []
    seen: set[str] = set()
    malformed = 0
    for line in raw.splitlines():
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            doc_id = str(obj["id"])
            when = date.fromisoformat(obj["date"])
            text = obj["text"]
            if not isinstance(text, str) or doc_id in seen:
                raise ValueError
        except (ValueError, KeyError, TypeError):
            malformed += 1
            continue
        seen.add(doc_id)
        docs.append(RawDocument(id=doc_id, timestamp=when, text=text))

    if not docs:
        raise ValidationError(f"no parseable documents in {path}")
    return docs, IngestReport(parsed=len(docs), malformed=malformed)


def build_vocabulary(
    token_sequences: Iterable[Sequence[str]], energy_fraction: float
) -> Vocabulary:
    """Build the vocabulary retaining the most frequent terms whose
    cumulative count reaches ``energy_fraction`` of all tokens.

    Terms tied with the frequency at the cut are all retained, which keeps
    the result independent of tie ordering.
    """
    if not 0.0 < energy_fraction <= 1.0:
        raise ValidationError("energy_fraction must be in (0, 1]")
    freq: dict[str, int] = {}
    total = 0
    for seq in token_sequences:
        for tok in seq:
            freq[tok] = freq.get(tok, 0) + 1
            total += 1
    if total == 0:
        raise ValidationError("empty token stream: nothing to build a vocabulary from")

    ranked = sorted(freq.items(), key=lambda kv: (-kv[1], kv[0]))
    target = energy_fraction * total
    cum = 0
    cut = len(ranked)
    for i, (_, count) in enumerate(ranked):
        cum += count
        if cum >= target:
            cut = i + 1
            break
    # extend through ties at the cut frequency
    cut_freq = ranked[cut - 1][1]
    while cut < len(ranked) and ranked[cut][1] == cut_freq:
        cut += 1

    kept = ranked[:cut]
    return Vocabulary(
        terms=tuple(t for t, _ in kept),
        counts=tuple(c for _, c in kept),
        energy_fraction=energy_fraction,
    )


def encode_documents(
    docs: Sequence[RawDocument],
    vocabulary: Vocabulary,
    stopwords: Optional[frozenset[str]] = None,
    lemma_map: Optional[Mapping[str, str]] = None,
) -> tuple[list[EncodedDocument], list[str]]:
    """Encode raw documents as vocabulary-id sequences.

    Tokens outside the vocabulary are dropped; documents left empty are
    dropped entirely and their ids returned for the ingest report.
    """
    index = vocabulary.index
    encoded: list[EncodedDocument] = []
    dropped: list[str] = []
    for doc in docs:
        ids = tuple(
            index[t] for t in normalize(doc.text, stopwords, lemma_map) if t in index
        )
        if ids:
            encoded.append(EncodedDocument(id=doc.id, timestamp=doc.timestamp, tokens=ids))
        else:
            dropped.append(doc.id)
    return encoded, dropped


def _add_years(when: date, years: int) -> date:
    try:
        return when.replace(year=when.year + years)
    except ValueError:  # Feb 29 on a non-leap target year
        return when.replace(year=when.year + years, day=28)


def slice_epochs(docs: Sequence[EncodedDocument], spec: EpochSpec) -> list[Epoch]:
    """Assign documents to every epoch window containing their timestamp.

    Windows start at the configured origin and advance by ``step = length -
    overlap`` years until the latest document is covered; with 50% overlap a
    document typically lands in two consecutive windows.
    """
    if not docs:
        raise ValidationError("cannot slice an empty corpus into epochs")
    last = max(d.timestamp for d in docs)
    first = min(d.timestamp for d in docs)
    if first < spec.origin:
        raise ValidationError(
            f"document dated {first} precedes the epoch origin {spec.origin}"
        )

    epochs: list[Epoch] = []
    start = spec.origin
    index = 0
    while start <= last:
        end = _add_years(start, spec.epoch_length)
        ids = tuple(d.id for d in docs if start <= d.timestamp < end)
        epochs.append(Epoch(index=index, start=start, end=end, doc_ids=ids))
        start = _add_years(start, spec.step)
        index += 1
    return epochs


def epoch_documents(
    epoch: Epoch, corpus: EncodedCorpus | Sequence[EncodedDocument]
) -> list[EncodedDocument]:
    """The encoded documents belonging to one epoch, in corpus order."""
    docs = corpus.documents if isinstance(corpus, EncodedCorpus) else corpus
    wanted = set(epoch.doc_ids)
    return [d for d in docs if d.id in wanted]


def export_vocabulary_csv(vocabulary: Vocabulary) -> str:
    """Render the vocabulary as CSV with header ``id,term,count``."""
    lines = ["id,term,count"]
    for i, (term, count) in enumerate(zip(vocabulary.terms, vocabulary.counts)):
        lines.append(f"{i},{term},{count}")
    return "\n".join(lines) + "\n"
