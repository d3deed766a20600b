"""Temporal similarity graph: construction, pruning, and event analysis.

Nodes are (epoch index, topic id) pairs; directed edges link every topic in
one epoch to every topic in the next, weighted by canonical similarity. The
graph is pruned at a CDF operating point, after which structural events
(birth, death, evolution, split, merge) are read off node degrees, and topic
lifespans are tracked along descendant chains.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np

from .corpus import Vocabulary
from .errors import ValidationError
from .hdp import EpochModel
from .similarity import EmpiricalCDF, MeasureKind, similarity, threshold_at

Node = tuple[int, int]  # (epoch index, topic id)


class GraphEdge(NamedTuple):
    src: Node
    dst: Node
    weight: float


class CdfScope(enum.Enum):
    GLOBAL = "global"
    PER_PAIR = "per-pair"

    @classmethod
    def parse(cls, name: str) -> "CdfScope":
        try:
            return cls(name.strip().lower())
        except ValueError:
            raise ValidationError(f"unknown cdf scope {name!r}; expected 'global' or 'per-pair'") from None


@dataclass(frozen=True)
class TemporalGraph:
    nodes: tuple[Node, ...]
    popularity: dict[Node, float]
    edges: tuple[GraphEdge, ...]
    measure: MeasureKind
    zeta: Optional[float] = None
    pruned: bool = False
    _out: dict[Node, list[GraphEdge]] = field(default_factory=dict, repr=False)
    _in: dict[Node, list[GraphEdge]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        out: dict[Node, list[GraphEdge]] = {v: [] for v in self.nodes}
        inc: dict[Node, list[GraphEdge]] = {v: [] for v in self.nodes}
        for e in self.edges:
            out[e.src].append(e)
            inc[e.dst].append(e)
        object.__setattr__(self, "_out", out)
        object.__setattr__(self, "_in", inc)

    def out_edges(self, v: Node) -> list[GraphEdge]:
        return self._out[v]

    def in_edges(self, v: Node) -> list[GraphEdge]:
        return self._in[v]

    @property
    def epochs(self) -> list[int]:
        return sorted({t for t, _ in self.nodes})

    @property
    def first_epoch(self) -> int:
        return self.epochs[0]

    @property
    def last_epoch(self) -> int:
        return self.epochs[-1]


class EventKind(enum.Enum):
    BIRTH = "birth"
    DEATH = "death"
    EVOLUTION = "evolution"
    SPLIT = "split"
    MERGE = "merge"


@dataclass(frozen=True)
class TopicEvent:
    node: Node
    kind: EventKind
    partners: tuple[Node, ...] = ()


@dataclass(frozen=True)
class EventRates:
    epoch: int
    k: int
    births: float
    deaths: float
    merges: float
    splits: float


class TrackingRule(enum.Enum):
    # follow the strongest child each step; extant while any child exists
    MAX_CHILD = "max-child"
    # persist only through children whose sole parent is the tracked topic
    SOLE_PARENT = "sole-parent"


class TerminalCause(enum.Enum):
    NO_DESCENDANTS = "no_descendants"
    SPLIT_WITHOUT_SOLE_HEIR = "split_without_sole_heir"
    MERGE_WITHOUT_SOLE_HEIR = "merge_without_sole_heir"
    CORPUS_END = "corpus_end"


@dataclass(frozen=True)
class LifespanRecord:
    creation: int
    chain: tuple[Node, ...]
    death: int
    lifespan: int
    terminal_cause: TerminalCause
    censored: bool


# ---------------------------------------------------------------------------
# construction and pruning
# ---------------------------------------------------------------------------

def build_full_graph(models: Sequence[EpochModel], measure: MeasureKind) -> TemporalGraph:
    """Connect every topic pair in successive epochs, weighted by similarity."""
    if len(models) < 2:
        raise ValidationError("need at least 2 fitted epochs to build a temporal graph")
    models = sorted(models, key=lambda m: m.epoch.index)
    nodes: list[Node] = []
    popularity: dict[Node, float] = {}
    for m in models:
        for t in m.topics:
            nodes.append(t.id)
            popularity[t.id] = t.popularity

    edges: list[GraphEdge] = []
    for a, b in zip(models, models[1:]):
        if b.epoch.index != a.epoch.index + 1:
            continue  # a gap in the fitted epochs: no edges across it
        for ta in a.topics:
            for tb in b.topics:
                w = similarity(measure, ta.phi, tb.phi)
                edges.append(GraphEdge(src=ta.id, dst=tb.id, weight=w))
    return TemporalGraph(
        nodes=tuple(nodes),
        popularity=popularity,
        edges=tuple(edges),
        measure=measure,
    )


def edge_weight_cdf(graph: TemporalGraph) -> EmpiricalCDF:
    """Empirical CDF over every candidate edge weight in the full graph."""
    return EmpiricalCDF.from_values([e.weight for e in graph.edges])


def prune(graph: TemporalGraph, zeta: float, scope: CdfScope = CdfScope.GLOBAL) -> TemporalGraph:
    """Keep only edges whose weight reaches the operating-point quantile.

    The threshold comes from the empirical CDF over all candidate edges
    (GLOBAL) or from each consecutive-epoch pair's own edges (PER_PAIR);
    nodes are never removed.
    """
    if not graph.edges:
        raise ValidationError("cannot prune a graph with no edges")
    if scope is CdfScope.GLOBAL:
        thr = threshold_at(edge_weight_cdf(graph), zeta)
        kept = tuple(e for e in graph.edges if e.weight >= thr)
    else:
        by_pair: dict[int, list[GraphEdge]] = {}
        for e in graph.edges:
            by_pair.setdefault(e.src[0], []).append(e)
        kept_list: list[GraphEdge] = []
        for t in sorted(by_pair):
            pair_edges = by_pair[t]
            thr = threshold_at(EmpiricalCDF.from_values([e.weight for e in pair_edges]), zeta)
            kept_list.extend(e for e in pair_edges if e.weight >= thr)
        kept = tuple(kept_list)
    return replace(graph, edges=kept, zeta=zeta, pruned=True)


# ---------------------------------------------------------------------------
# events
# ---------------------------------------------------------------------------

def classify_events(graph: TemporalGraph) -> list[TopicEvent]:
    """Degree-based event classification on a pruned graph.

    Birth: no incoming edge (except in the first epoch). Death: no outgoing
    edge (except in the last). Split: out-degree >= 2. Merge: in-degree >= 2.
    Evolution: the node's single outgoing edge is also its target's single
    incoming edge. A node may carry several kinds at once.
    """
    if not graph.pruned:
        raise ValidationError("events are classified on the pruned graph")
    first, last = graph.first_epoch, graph.last_epoch
    events: list[TopicEvent] = []
    for v in graph.nodes:
        epoch = v[0]
        inc = graph.in_edges(v)
        out = graph.out_edges(v)
        if epoch != first and len(inc) == 0:
            events.append(TopicEvent(node=v, kind=EventKind.BIRTH))
        if epoch != last and len(out) == 0:
            events.append(TopicEvent(node=v, kind=EventKind.DEATH))
        if len(out) >= 2:
            events.append(TopicEvent(
                node=v, kind=EventKind.SPLIT,
                partners=tuple(sorted(e.dst for e in out)),
            ))
        if len(inc) >= 2:
            events.append(TopicEvent(
                node=v, kind=EventKind.MERGE,
                partners=tuple(sorted(e.src for e in inc)),
            ))
        if len(out) == 1 and len(graph.in_edges(out[0].dst)) == 1:
            events.append(TopicEvent(node=v, kind=EventKind.EVOLUTION, partners=(out[0].dst,)))
    return events


def event_rates(events: Iterable[TopicEvent], models: Sequence[EpochModel]) -> list[EventRates]:
    """Per-epoch event counts normalized by that epoch's topic count."""
    counts: dict[int, dict[EventKind, int]] = {}
    for ev in events:
        counts.setdefault(ev.node[0], {}).setdefault(ev.kind, 0)
        counts[ev.node[0]][ev.kind] += 1
    out = []
    for m in sorted(models, key=lambda m: m.epoch.index):
        t = m.epoch.index
        k_t = m.k
        c = counts.get(t, {})
        out.append(EventRates(
            epoch=t,
            k=k_t,
            births=c.get(EventKind.BIRTH, 0) / k_t,
            deaths=c.get(EventKind.DEATH, 0) / k_t,
            merges=c.get(EventKind.MERGE, 0) / k_t,
            splits=c.get(EventKind.SPLIT, 0) / k_t,
        ))
    return out


def find_topic_by_terms(
    models: Sequence[EpochModel], terms: Sequence[str], vocabulary: Vocabulary
) -> Node:
    """The (epoch, topic) whose distribution gives the terms the most mass.

    Ties go to the earlier epoch, then the lower topic id.
    """
    ids = [vocabulary.id_of(t) for t in terms]
    best: Optional[Node] = None
    best_score = -1.0
    for m in sorted(models, key=lambda m: m.epoch.index):
        for t in sorted(m.topics, key=lambda t: t.id[1]):
            score = float(sum(t.phi[w] for w in ids))
            if score > best_score:
                best, best_score = t.id, score
    assert best is not None
    return best


def trace(graph: TemporalGraph, node: Node, direction: str = "backward") -> TemporalGraph:
    """Subgraph reachable from ``node`` along surviving edges.

    direction "backward" walks ancestors, "forward" walks descendants; the
    result keeps every edge between reached nodes (all lie on some path
    through ``node``) and is suitable for DOT export.
    """
    if node not in graph.popularity:
        raise ValidationError(f"node {node} not present in the graph")
    if direction not in ("forward", "backward"):
        raise ValidationError("direction must be 'forward' or 'backward'")
    reached = {node}
    frontier = [node]
    while frontier:
        v = frontier.pop()
        step = graph.out_edges(v) if direction == "forward" else graph.in_edges(v)
        for e in step:
            u = e.dst if direction == "forward" else e.src
            if u not in reached:
                reached.add(u)
                frontier.append(u)
    nodes = tuple(sorted(reached))
    edges = tuple(e for e in graph.edges if e.src in reached and e.dst in reached)
    return TemporalGraph(
        nodes=nodes,
        popularity={v: graph.popularity[v] for v in nodes},
        edges=edges,
        measure=graph.measure,
        zeta=graph.zeta,
        pruned=graph.pruned,
    )


# ---------------------------------------------------------------------------
# lifespans
# ---------------------------------------------------------------------------

def _creation_nodes(graph: TemporalGraph) -> list[Node]:
    """Birth nodes plus nodes formed by a split or a merge.

    A node continues an old topic (and so starts no record) only when it has
    exactly one parent and that parent has no other children. First-epoch
    nodes predate the observable window and are skipped.
    """
    first = graph.first_epoch
    created = []
    for v in graph.nodes:
        if v[0] == first:
            continue
        inc = graph.in_edges(v)
        if len(inc) == 0 or len(inc) >= 2:
            created.append(v)  # birth or merge product
        else:
            parent = inc[0].src
            if len(graph.out_edges(parent)) >= 2:
                created.append(v)  # split offshoot
    return sorted(created)


def _best_child(edges: list[GraphEdge]) -> Node:
    # strongest edge wins; ties broken toward the lower topic id
    return max(edges, key=lambda e: (e.weight, -e.dst[1])).dst


def _terminal_cause(graph: TemporalGraph, end: Node) -> tuple[TerminalCause, bool]:
    if end[0] == graph.last_epoch:
        return TerminalCause.CORPUS_END, True
    out = graph.out_edges(end)
    if not out:
        return TerminalCause.NO_DESCENDANTS, False
    if len(out) >= 2:
        return TerminalCause.SPLIT_WITHOUT_SOLE_HEIR, False
    return TerminalCause.MERGE_WITHOUT_SOLE_HEIR, False


def lifespans(graph: TemporalGraph, rule: TrackingRule = TrackingRule.MAX_CHILD) -> list[LifespanRecord]:
    """One record per created topic, tracked to its death.

    MAX_CHILD follows the most-similar child while any child exists and dies
    only on a childless node. SOLE_PARENT persists only through children
    having the tracked node as their sole parent, taking the longest such
    path, and ends when the topic dies or splits/merges leaving no sole
    heir. Records reaching the final epoch are censored.
    """
    if not graph.pruned:
        raise ValidationError("lifespans are computed on the pruned graph")

    if rule is TrackingRule.MAX_CHILD:
        def chain_from(v: Node) -> tuple[Node, ...]:
            path = [v]
            while True:
                out = graph.out_edges(path[-1])
                if not out:
                    return tuple(path)
                path.append(_best_child(out))
    else:
        memo: dict[Node, tuple[Node, ...]] = {}

        def chain_from(v: Node) -> tuple[Node, ...]:
            if v in memo:
                return memo[v]
            heirs = [e.dst for e in graph.out_edges(v) if len(graph.in_edges(e.dst)) == 1]
            if not heirs:
                memo[v] = (v,)
            else:
                tails = [chain_from(h) for h in sorted(heirs)]
                best = max(tails, key=lambda t: (len(t), [-n[1] for n in t]))
                memo[v] = (v,) + best
            return memo[v]

    records = []
    for v in _creation_nodes(graph):
        chain = chain_from(v)
        end = chain[-1]
        cause, censored = _terminal_cause(graph, end)
        records.append(LifespanRecord(
            creation=v[0],
            chain=chain,
            death=end[0],
            lifespan=end[0] - v[0] + 1,
            terminal_cause=cause,
            censored=censored,
        ))
    return records


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def graph_to_dict(graph: TemporalGraph) -> dict:
    return {
        "measure": graph.measure.value,
        "zeta": graph.zeta,
        "pruned": graph.pruned,
        "nodes": [
            {"epoch": t, "k": k, "popularity": graph.popularity[(t, k)]}
            for t, k in graph.nodes
        ],
        "edges": [
            {"from": list(e.src), "to": list(e.dst), "w": e.weight}
            for e in graph.edges
        ],
    }


def graph_to_dot(
    graph: TemporalGraph,
    models: Optional[Sequence[EpochModel]] = None,
    vocabulary: Optional[Vocabulary] = None,
    top_terms: int = 3,
) -> str:
    """Graphviz rendering with one column (rank) per epoch.

    Node size scales with popularity; when models and the vocabulary are
    given, nodes are labelled with their strongest terms.
    """
    labels: dict[Node, str] = {}
    if models is not None and vocabulary is not None:
        for m in models:
            for t in m.topics:
                order = np.argsort(-t.phi)[:top_terms]
                labels[t.id] = "\\n".join(vocabulary.terms[w] for w in order)

    def name(v: Node) -> str:
        return f"e{v[0]}_t{v[1]}"

    lines = ["digraph topics {", "  rankdir=LR;", "  node [shape=circle, fixedsize=true];"]
    for t in graph.epochs:
        members = " ".join(f'"{name(v)}";' for v in graph.nodes if v[0] == t)
        lines.append(f"  {{ rank=same; {members} }}")
    for v in graph.nodes:
        size = 0.3 + 2.0 * graph.popularity[v]
        label = labels.get(v, f"{v[0]},{v[1]}")
        lines.append(f'  "{name(v)}" [label="{label}", width={size:.3f}, height={size:.3f}];')
    for e in graph.edges:
        lines.append(f'  "{name(e.src)}" -> "{name(e.dst)}" [penwidth={0.5 + 2.5 * e.weight:.3f}];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def _fmt_node(v: Node) -> str:
    return f"{v[0]}:{v[1]}"


def events_to_csv(events: Iterable[TopicEvent]) -> str:
    lines = ["epoch,kind,topic,partners"]
    ordered = sorted(events, key=lambda e: (e.node[0], e.node[1], e.kind.value))
    for ev in ordered:
        partners = ";".join(_fmt_node(p) for p in ev.partners)
        lines.append(f"{ev.node[0]},{ev.kind.value},{ev.node[1]},{partners}")
    return "\n".join(lines) + "\n"


def rates_to_csv(rates: Sequence[EventRates]) -> str:
    lines = ["epoch,K,births,deaths,merges,splits"]
    for r in rates:
        lines.append(f"{r.epoch},{r.k},{r.births!r},{r.deaths!r},{r.merges!r},{r.splits!r}")
    return "\n".join(lines) + "\n"


def lifespans_to_csv(records_by_rule: dict[TrackingRule, Sequence[LifespanRecord]]) -> str:
    lines = ["rule,creation,death,lifespan,terminal_cause,censored,chain"]
    for rule in sorted(records_by_rule, key=lambda r: r.value):
        for rec in records_by_rule[rule]:
            chain = ";".join(_fmt_node(v) for v in rec.chain)
            lines.append(
                f"{rule.value},{rec.creation},{rec.death},{rec.lifespan},"
                f"{rec.terminal_cause.value},{int(rec.censored)},{chain}"
            )
    return "\n".join(lines) + "\n"
