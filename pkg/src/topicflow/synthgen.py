"""Synthetic longitudinal corpora with scripted ground-truth topic dynamics.

A scenario starts from a set of well-separated random topics and applies
timed directives (birth, kill, split, merge, drift) as the epochs advance;
documents are then drawn mixture-style from the live topics of each epoch.
Every document is dated mid-year so the standard epoch slicer (one-year
windows anchored at BASE_YEAR) reassigns it to the epoch it came from.
Because the true event list is known, detector output can be scored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date
from typing import Mapping, Sequence

import numpy as np

from .corpus import RawDocument, Vocabulary
from .errors import ValidationError
from .graph import EventKind, TopicEvent
from .hdp import EpochModel
from .similarity import MeasureKind, similarity

BASE_YEAR = 2000

_ACTIONS = ("birth", "kill", "split", "merge", "drift")


@dataclass(frozen=True)
class Directive:
    """One scripted change to the live topic set, applied entering ``epoch``."""

    epoch: int
    action: str
    topic: str = ""
    topics: tuple[str, ...] = ()  # merge sources
    children: tuple[str, ...] = ()  # split products
    result: str = ""  # merge product
    magnitude: float = 0.9

    def __post_init__(self):
        if self.action not in _ACTIONS:
            raise ValidationError(f"unknown directive action {self.action!r}")


@dataclass(frozen=True)
class Scenario:
    n_epochs: int
    vocab_size: int
    docs_per_epoch: int
    tokens_per_doc: int
    seed: int
    n_initial_topics: int = 5
    script: tuple[Directive, ...] = ()
    topic_concentration: float = 0.1
    mixture_concentration: float = 0.5

    def __post_init__(self):
        if min(self.n_epochs, self.vocab_size, self.docs_per_epoch,
               self.tokens_per_doc) < 1 or self.n_initial_topics < 0:
            raise ValidationError("scenario dimensions must be positive")


@dataclass(frozen=True)
class TrueEvent:
    kind: EventKind
    epoch: int
    topic: str


@dataclass
class GroundTruth:
    vocab: tuple[str, ...]
    topics_by_epoch: list[dict[str, np.ndarray]]
    events: list[TrueEvent]
    doc_mixtures: dict[str, dict[str, float]] = field(default_factory=dict)


@dataclass(frozen=True)
class EventScore:
    kind: EventKind
    n_true: int
    n_detected: int
    recovered: int
    precision: float
    recall: float
    zero_detections: bool


def term_name(term_id: int) -> str:
    """Purely alphabetic synthetic term, stable under text normalization."""
    letters = []
    v = term_id
    for _ in range(4):
        letters.append(chr(ord("a") + v % 26))
        v //= 26
    if v:
        raise ValidationError("vocab too large for 4-letter synthetic terms")
    return "".join(reversed(letters))


def _perturb(dist: np.ndarray, magnitude: float, rng: np.random.Generator) -> np.ndarray:
    noisy = dist * np.exp(magnitude * rng.standard_normal(dist.size))
    return noisy / noisy.sum()


def _apply_directive(
    d: Directive,
    live: dict[str, np.ndarray],
    popularity: Mapping[str, float],
    rng: np.random.Generator,
    scenario: Scenario,
    events: list[TrueEvent],
) -> None:
    def need_live(name: str) -> np.ndarray:
        if name not in live:
            raise ValidationError(
                f"directive at epoch {d.epoch} references dead or unknown topic {name!r}"
            )
        return live[name]

    def need_fresh(name: str) -> None:
        if not name:
            raise ValidationError(f"directive at epoch {d.epoch} is missing a topic name")
        if name in live:
            raise ValidationError(f"topic name {name!r} already live at epoch {d.epoch}")

    if d.action == "birth":
        need_fresh(d.topic)
        live[d.topic] = rng.dirichlet(
            np.full(scenario.vocab_size, scenario.topic_concentration)
        )
        if d.epoch > 0:
            events.append(TrueEvent(EventKind.BIRTH, d.epoch, d.topic))
    elif d.action == "kill":
        need_live(d.topic)
        del live[d.topic]
        events.append(TrueEvent(EventKind.DEATH, d.epoch, d.topic))
    elif d.action == "split":
        if len(d.children) != 2:
            raise ValidationError("split directive needs exactly two child names")
        parent = need_live(d.topic)
        del live[d.topic]
        # Children take disjoint halves of the parent's support, balanced by
        # mass so each carries ~half of it (keeping both parent-child
        # similarities equal), then roughened by multiplicative noise.
        order = np.argsort(-parent + 1e-12 * rng.random(parent.size))
        mask = np.zeros(parent.size, dtype=bool)
        mass = [0.0, 0.0]
        for w in order:
            side = int(mass[1] < mass[0])
            mask[w] = side == 0
            mass[side] += parent[w]
        for child, m in zip(d.children, (mask, ~mask)):
            need_fresh(child)
            branch = np.where(m, parent, 0.0)
            if branch.sum() <= 0.0:
                branch = parent.copy()
            live[child] = _perturb(branch / branch.sum(), d.magnitude, rng)
        events.append(TrueEvent(EventKind.SPLIT, d.epoch, d.topic))
    elif d.action == "merge":
        if len(d.topics) != 2 or d.topics[0] == d.topics[1]:
            raise ValidationError("merge directive needs two distinct source topics")
        a, b = (need_live(t) for t in d.topics)
        wa = popularity.get(d.topics[0], 1.0)
        wb = popularity.get(d.topics[1], 1.0)
        for t in d.topics:
            del live[t]
        need_fresh(d.result)
        mixed = wa * a + wb * b
        live[d.result] = mixed / mixed.sum()
        events.append(TrueEvent(EventKind.MERGE, d.epoch, d.result))
    elif d.action == "drift":
        live[d.topic] = _perturb(need_live(d.topic), d.magnitude, rng)


def generate(scenario: Scenario) -> tuple[list[RawDocument], GroundTruth]:
    """Draw the scripted corpus. Deterministic under the scenario seed."""
    for d in scenario.script:
        if not 0 <= d.epoch < scenario.n_epochs:
            raise ValidationError(f"directive epoch {d.epoch} outside 0..{scenario.n_epochs - 1}")

    rng = np.random.default_rng(scenario.seed)
    vocab = tuple(term_name(i) for i in range(scenario.vocab_size))
    live: dict[str, np.ndarray] = {}
    for i in range(scenario.n_initial_topics):
        live[f"t{i:02d}"] = rng.dirichlet(
            np.full(scenario.vocab_size, scenario.topic_concentration)
        )

    events: list[TrueEvent] = []
    topics_by_epoch: list[dict[str, np.ndarray]] = []
    docs: list[RawDocument] = []
    mixtures: dict[str, dict[str, float]] = {}
    popularity: dict[str, float] = {}

    for e in range(scenario.n_epochs):
        for d in scenario.script:
            if d.epoch == e:
                _apply_directive(d, live, popularity, rng, scenario, events)
        if not live:
            raise ValidationError(f"script leaves epoch {e} with no live topics")

        names = sorted(live)
        phis = np.stack([live[n] for n in names])
        topics_by_epoch.append({n: live[n].copy() for n in names})

        token_tally = np.zeros(len(names))
        when = date(BASE_YEAR + e, 7, 1)
        for i in range(scenario.docs_per_epoch):
            pi = rng.dirichlet(np.full(len(names), scenario.mixture_concentration))
            ks = rng.choice(len(names), size=scenario.tokens_per_doc, p=pi)
            words = np.empty(scenario.tokens_per_doc, dtype=np.int64)
            for k in np.unique(ks):
                sel = ks == k
                words[sel] = rng.choice(scenario.vocab_size, size=int(sel.sum()), p=phis[k])
                token_tally[k] += int(sel.sum())
            doc_id = f"e{e:02d}d{i:04d}"
            docs.append(RawDocument(
                id=doc_id,
                timestamp=when,
                text=" ".join(vocab[w] for w in words),
            ))
            mixtures[doc_id] = {n: float(p) for n, p in zip(names, pi)}
        total = token_tally.sum()
        popularity = {n: float(c) / total for n, c in zip(names, token_tally)}

    return docs, GroundTruth(
        vocab=vocab,
        topics_by_epoch=topics_by_epoch,
        events=events,
        doc_mixtures=mixtures,
    )


# ---------------------------------------------------------------------------
# scoring detections against the ground truth
# ---------------------------------------------------------------------------

def match_topics(
    models: Sequence[EpochModel], vocabulary: Vocabulary, truth: GroundTruth
) -> dict[tuple[int, int], str]:
    """Map each fitted (epoch, topic) node to its closest true topic by
    Bhattacharyya coefficient, after aligning both onto the truth vocab."""
    truth_id = {name: i for i, name in enumerate(truth.vocab)}
    mapping: dict[tuple[int, int], str] = {}
    for m in models:
        epoch_topics = truth.topics_by_epoch[m.epoch.index]
        names = sorted(epoch_topics)
        for t in m.topics:
            projected = np.zeros(len(truth.vocab))
            for w, p in enumerate(t.phi):
                tid = truth_id.get(vocabulary.terms[w])
                if tid is not None:
                    projected[tid] = p
            s = projected.sum()
            if s <= 0:
                continue
            projected /= s
            best = max(
                names,
                key=lambda n: similarity(MeasureKind.BHATTACHARYYA, projected, epoch_topics[n]),
            )
            mapping[t.id] = best
    return mapping


def score_events(
    detected: Sequence[TopicEvent],
    models: Sequence[EpochModel],
    vocabulary: Vocabulary,
    truth: GroundTruth,
    epoch_tolerance: int = 0,
) -> list[EventScore]:
    """Per-kind precision and recall of detected structural events.

    A true event is recovered when a detected event of the same kind sits
    within ``epoch_tolerance`` epochs on a node matched to that topic. Truth
    events carry the epoch of the scripted change (when the new topic set
    first exists); detected splits and deaths attach to the last node of the
    old topic, one epoch earlier, so those detections are shifted by one
    before comparing. With zero detections precision is reported as 1.0 and
    flagged.
    """
    mapping = match_topics(models, vocabulary, truth)
    scores = []
    for kind in (EventKind.BIRTH, EventKind.DEATH, EventKind.SPLIT, EventKind.MERGE):
        shift = 1 if kind in (EventKind.SPLIT, EventKind.DEATH) else 0
        true_set = [(ev.epoch, ev.topic) for ev in truth.events if ev.kind == kind]
        det_set = [
            (ev.node[0] + shift, mapping.get(ev.node))
            for ev in detected
            if ev.kind == kind and ev.node in mapping
        ]
        recovered = sum(
            1
            for (te, tt) in true_set
            if any(dt == tt and abs(de - te) <= epoch_tolerance for de, dt in det_set)
        )
        correct_det = sum(
            1
            for (de, dt) in det_set
            if any(dt == tt and abs(de - te) <= epoch_tolerance for te, tt in true_set)
        )
        n_true, n_det = len(true_set), len(det_set)
        scores.append(EventScore(
            kind=kind,
            n_true=n_true,
            n_detected=n_det,
            recovered=recovered,
            precision=correct_det / n_det if n_det else 1.0,
            recall=recovered / n_true if n_true else 1.0,
            zero_detections=n_det == 0,
        ))
    return scores


# ---------------------------------------------------------------------------
# (de)serialization for the CLI
# ---------------------------------------------------------------------------

def scenario_from_dict(obj: dict) -> Scenario:
    directives = []
    for d in obj.get("script", []):
        directives.append(Directive(
            epoch=int(d["epoch"]),
            action=str(d["action"]),
            topic=str(d.get("topic", "")),
            topics=tuple(d.get("topics", ())),
            children=tuple(d.get("children", ())),
            result=str(d.get("result", "")),
            magnitude=float(d.get("magnitude", 0.9)),
        ))
    return Scenario(
        n_epochs=int(obj["n_epochs"]),
        vocab_size=int(obj["vocab_size"]),
        docs_per_epoch=int(obj["docs_per_epoch"]),
        tokens_per_doc=int(obj["tokens_per_doc"]),
        seed=int(obj["seed"]),
        n_initial_topics=int(obj.get("n_initial_topics", 5)),
        script=tuple(directives),
        topic_concentration=float(obj.get("topic_concentration", 0.1)),
        mixture_concentration=float(obj.get("mixture_concentration", 0.5)),
    )


def truth_to_dict(truth: GroundTruth) -> dict:
    return {
        "vocab": list(truth.vocab),
        "events": [
            {"epoch": ev.epoch, "kind": ev.kind.value, "topic": ev.topic}
            for ev in truth.events
        ],
        "topics_by_epoch": [
            {name: [float(p) for p in dist] for name, dist in sorted(epoch.items())}
            for epoch in truth.topics_by_epoch
        ],
        "doc_mixtures": truth.doc_mixtures,
    }


def truth_from_dict(obj: dict) -> GroundTruth:
    return GroundTruth(
        vocab=tuple(obj["vocab"]),
        topics_by_epoch=[
            {name: np.asarray(dist, dtype=np.float64) for name, dist in epoch.items()}
            for epoch in obj["topics_by_epoch"]
        ],
        events=[
            TrueEvent(EventKind(ev["kind"]), int(ev["epoch"]), str(ev["topic"]))
            for ev in obj["events"]
        ],
        doc_mixtures={k: dict(v) for k, v in obj.get("doc_mixtures", {}).items()},
    )


def scores_to_dict(scores: Sequence[EventScore]) -> dict:
    return {
        s.kind.value: {
            "n_true": s.n_true,
            "n_detected": s.n_detected,
            "recovered": s.recovered,
            "precision": s.precision,
            "recall": s.recall,
            "zero_detections": s.zero_detections,
        }
        for s in scores
    }
