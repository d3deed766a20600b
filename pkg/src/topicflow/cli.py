"""Command-line pipeline: ingest -> fit -> graph, plus tracing, synthetic
corpus generation, and event scoring.

Every stage reads and writes files under a single output directory and
embeds the resolved run configuration in each artifact it produces, so any
stage can be reproduced byte-for-byte from its own output. Exit codes:
0 success, 1 validation failure, 2 I/O failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass, fields
from datetime import date
from pathlib import Path
from typing import Optional

from . import corpus as corpus_mod
from . import graph as graph_mod
from . import hdp, synthgen
from .errors import InputError, PipelineError, ValidationError
from .similarity import MeasureKind

logger = logging.getLogger(__name__)


@dataclass
class RunConfig:
    corpus: str = ""
    stopwords: str = ""
    lemma_map: str = ""
    out_dir: str = "out"
    energy_fraction: float = 0.9
    epoch_length: int = 10
    epoch_overlap: int = 5
    origin: str = ""  # ISO date; empty = January 1 of the earliest document's year
    gamma: float = 1.0
    alpha0: float = 1.0
    eta: float = 0.01
    sweeps: int = 500
    burn_in: int = 300
    measure: str = "hellinger"
    zeta: float = 0.95
    seed: int = 0
    cdf_scope: str = "global"
    jobs: int = 1

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    def hyperparameters(self, stage: str) -> hdp.Hyperparameters:
        return hdp.Hyperparameters(
            gamma=self.gamma,
            alpha0=self.alpha0,
            eta=self.eta,
            seed=hdp.derive_seed(self.seed, stage),
        )


def _load_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, overridden by --config file values, overridden by flags."""
    values: dict = {}
    if getattr(args, "config", None):
        try:
            values.update(json.loads(Path(args.config).read_text("utf-8")))
        except OSError as exc:
            raise InputError(f"cannot read config file {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValidationError(f"config file {args.config} is not valid JSON: {exc}") from exc
    known = {f.name for f in fields(RunConfig)}
    unknown = set(values) - known
    if unknown:
        raise ValidationError(f"unknown config keys: {sorted(unknown)}")
    for f in fields(RunConfig):
        flag = getattr(args, f.name, None)
        if flag is not None:
            values[f.name] = flag
    return RunConfig(**values)


def _write_text(path: Path, content: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content, encoding="utf-8")


def _write_json(path: Path, payload: dict) -> None:
    _write_text(path, json.dumps(payload, sort_keys=True, indent=1) + "\n")


def _csv_with_provenance(config: RunConfig, body: str) -> str:
    return f"# config {config.to_json()}\n{body}"


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------

def cmd_ingest(config: RunConfig) -> None:
    if not config.corpus:
        raise ValidationError("no corpus file given (set 'corpus' in the config or pass --corpus)")
    out = Path(config.out_dir)
    stopwords = (
        corpus_mod.load_stopwords(config.stopwords)
        if config.stopwords
        else corpus_mod.default_stopwords()
    )
    lemma_map = corpus_mod.load_lemma_map(config.lemma_map) if config.lemma_map else None

    raw_docs, report = corpus_mod.ingest(config.corpus)
    token_streams = [corpus_mod.normalize(d.text, stopwords, lemma_map) for d in raw_docs]
    vocabulary = corpus_mod.build_vocabulary(token_streams, config.energy_fraction)
    encoded, dropped = corpus_mod.encode_documents(raw_docs, vocabulary, stopwords, lemma_map)
    if not encoded:
        raise ValidationError("every document became empty after normalization and encoding")

    _write_json(out / "corpus.bin", {
        "config": asdict(config),
        "vocabulary": {
            "terms": list(vocabulary.terms),
            "counts": list(vocabulary.counts),
            "energy_fraction": vocabulary.energy_fraction,
        },
        "documents": [
            {"id": d.id, "date": d.timestamp.isoformat(), "tokens": list(d.tokens)}
            for d in encoded
        ],
    })
    _write_text(out / "vocab.csv",
                _csv_with_provenance(config, corpus_mod.export_vocabulary_csv(vocabulary)))
    _write_json(out / "report.json", {
        "config": asdict(config),
        "parsed": report.parsed,
        "malformed": report.malformed,
        "encoded": len(encoded),
        "dropped_empty": dropped,
        "vocab_size": len(vocabulary),
    })
    logger.info("ingested %d documents (%d malformed lines), vocabulary %d terms",
                report.parsed, report.malformed, len(vocabulary))


def _load_encoded(config: RunConfig) -> corpus_mod.EncodedCorpus:
    path = Path(config.out_dir) / "corpus.bin"
    try:
        obj = json.loads(path.read_text("utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read encoded corpus {path}: {exc}") from exc
    vocabulary = corpus_mod.Vocabulary(
        terms=tuple(obj["vocabulary"]["terms"]),
        counts=tuple(obj["vocabulary"]["counts"]),
        energy_fraction=float(obj["vocabulary"]["energy_fraction"]),
    )
    documents = tuple(
        corpus_mod.EncodedDocument(
            id=d["id"],
            timestamp=date.fromisoformat(d["date"]),
            tokens=tuple(d["tokens"]),
        )
        for d in obj["documents"]
    )
    return corpus_mod.EncodedCorpus(documents=documents, vocabulary=vocabulary)


def _epoch_spec(config: RunConfig, documents) -> corpus_mod.EpochSpec:
    if config.origin:
        origin = date.fromisoformat(config.origin)
    else:
        origin = date(min(d.timestamp for d in documents).year, 1, 1)
    return corpus_mod.EpochSpec(
        epoch_length=config.epoch_length, overlap=config.epoch_overlap, origin=origin
    )


def cmd_fit(config: RunConfig) -> None:
    encoded = _load_encoded(config)
    spec = _epoch_spec(config, encoded.documents)
    epochs = corpus_mod.slice_epochs(list(encoded.documents), spec)
    models = hdp.fit_all_epochs(
        encoded, epochs, config.hyperparameters("fit"),
        sweeps=config.sweeps, burn_in=config.burn_in, jobs=config.jobs,
    )
    if not models:
        raise ValidationError("no epoch contained any documents")
    out = Path(config.out_dir) / "models"
    for m in models:
        payload = hdp.model_to_dict(m, len(encoded.vocabulary))
        payload["config"] = asdict(config)
        _write_json(out / f"epoch_{m.epoch.index:04d}.json", payload)
    logger.info("fitted %d epochs (K: %s)", len(models), [m.k for m in models])


def _load_models(config: RunConfig) -> list[hdp.EpochModel]:
    model_dir = Path(config.out_dir) / "models"
    paths = sorted(model_dir.glob("epoch_*.json"))
    if not paths:
        raise InputError(f"no model files found under {model_dir}")
    models = []
    for p in paths:
        try:
            models.append(hdp.model_from_dict(json.loads(p.read_text("utf-8"))))
        except OSError as exc:
            raise InputError(f"cannot read model file {p}: {exc}") from exc
    return models


def _pruned_graph(config: RunConfig, models) -> tuple[graph_mod.TemporalGraph, graph_mod.TemporalGraph]:
    full = graph_mod.build_full_graph(models, MeasureKind.parse(config.measure))
    pruned = graph_mod.prune(full, config.zeta, graph_mod.CdfScope.parse(config.cdf_scope))
    return full, pruned


def cmd_graph(config: RunConfig) -> None:
    models = _load_models(config)
    encoded = _load_encoded(config)
    full, pruned = _pruned_graph(config, models)
    events = graph_mod.classify_events(pruned)
    rates = graph_mod.event_rates(events, models)
    spans = {
        rule: graph_mod.lifespans(pruned, rule)
        for rule in graph_mod.TrackingRule
    }

    out = Path(config.out_dir)
    payload = graph_mod.graph_to_dict(pruned)
    payload["config"] = asdict(config)
    _write_json(out / "graph.json", payload)
    _write_text(out / "events.csv",
                _csv_with_provenance(config, graph_mod.events_to_csv(events)))
    _write_text(out / "rates.csv",
                _csv_with_provenance(config, graph_mod.rates_to_csv(rates)))
    _write_text(out / "cdf.csv",
                _csv_with_provenance(config, graph_mod.edge_weight_cdf(full).to_csv()))
    _write_text(out / "lifespans.csv",
                _csv_with_provenance(config, graph_mod.lifespans_to_csv(spans)))
    dot = graph_mod.graph_to_dot(pruned, models, encoded.vocabulary)
    _write_text(out / "graph.dot", f"// config {config.to_json()}\n{dot}")
    logger.info("graph: %d nodes, %d/%d edges kept at zeta=%s",
                len(pruned.nodes), len(pruned.edges), len(full.edges), config.zeta)


def cmd_trace(config: RunConfig, terms: list[str], direction: str) -> None:
    models = _load_models(config)
    encoded = _load_encoded(config)
    _, pruned = _pruned_graph(config, models)
    root = graph_mod.find_topic_by_terms(models, terms, encoded.vocabulary)
    sub = graph_mod.trace(pruned, root, direction=direction)
    out = Path(config.out_dir)
    payload = graph_mod.graph_to_dict(sub)
    payload["config"] = asdict(config)
    payload["root"] = list(root)
    payload["direction"] = direction
    payload["terms"] = list(terms)
    _write_json(out / "trace.json", payload)
    dot = graph_mod.graph_to_dot(sub, models, encoded.vocabulary)
    _write_text(out / "trace.dot", f"// config {config.to_json()}\n{dot}")
    logger.info("trace from %s (%s): %d nodes", root, direction, len(sub.nodes))


def cmd_synth(config: RunConfig, scenario_path: str) -> None:
    try:
        obj = json.loads(Path(scenario_path).read_text("utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read scenario file {scenario_path}: {exc}") from exc
    scenario = synthgen.scenario_from_dict(obj)
    docs, truth = synthgen.generate(scenario)
    out = Path(config.out_dir)
    lines = [
        json.dumps({"id": d.id, "date": d.timestamp.isoformat(), "text": d.text},
                   sort_keys=True)
        for d in docs
    ]
    _write_text(out / "corpus.jsonl", "\n".join(lines) + "\n")
    payload = synthgen.truth_to_dict(truth)
    payload["scenario"] = obj
    payload["config"] = asdict(config)
    _write_json(out / "truth.json", payload)
    logger.info("generated %d synthetic documents over %d epochs", len(docs), scenario.n_epochs)


def _read_events_csv(path: Path) -> list[graph_mod.TopicEvent]:
    try:
        lines = path.read_text("utf-8").splitlines()
    except OSError as exc:
        raise InputError(f"cannot read events file {path}: {exc}") from exc
    events = []
    for line in lines:
        if not line or line.startswith("#") or line.startswith("epoch,"):
            continue
        epoch, kind, topic, partners = line.split(",", 3)
        partner_nodes = tuple(
            (int(p.split(":")[0]), int(p.split(":")[1]))
            for p in partners.split(";") if p
        )
        events.append(graph_mod.TopicEvent(
            node=(int(epoch), int(topic)),
            kind=graph_mod.EventKind(kind),
            partners=partner_nodes,
        ))
    return events


def cmd_score(config: RunConfig, truth_path: str) -> None:
    try:
        truth_obj = json.loads(Path(truth_path).read_text("utf-8"))
    except OSError as exc:
        raise InputError(f"cannot read truth file {truth_path}: {exc}") from exc
    truth = synthgen.truth_from_dict(truth_obj)
    models = _load_models(config)
    encoded = _load_encoded(config)
    events = _read_events_csv(Path(config.out_dir) / "events.csv")
    scores = synthgen.score_events(events, models, encoded.vocabulary, truth)
    payload = {"config": asdict(config), "scores": synthgen.scores_to_dict(scores)}
    _write_json(Path(config.out_dir) / "metrics.json", payload)
    for s in scores:
        logger.info("%s: precision %.3f recall %.3f (%d true, %d detected)",
                    s.kind.value, s.precision, s.recall, s.n_true, s.n_detected)


def cmd_run_all(config: RunConfig) -> None:
    cmd_ingest(config)
    cmd_fit(config)
    cmd_graph(config)


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file; flags override its values")
    p.add_argument("--corpus", help="input JSONL corpus")
    p.add_argument("--stopwords", help="stopword file, one term per line")
    p.add_argument("--lemma-map", dest="lemma_map", help="lemma map file, term<TAB>lemma lines")
    p.add_argument("--out-dir", dest="out_dir", help="output directory")
    p.add_argument("--energy-fraction", dest="energy_fraction", type=float)
    p.add_argument("--epoch-length", dest="epoch_length", type=int)
    p.add_argument("--epoch-overlap", dest="epoch_overlap", type=int)
    p.add_argument("--origin", help="epoch origin date (YYYY-MM-DD)")
    p.add_argument("--gamma", type=float)
    p.add_argument("--alpha0", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--sweeps", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--measure", choices=[m.value for m in MeasureKind])
    p.add_argument("--zeta", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--cdf-scope", dest="cdf_scope", choices=["global", "per-pair"])
    p.add_argument("--jobs", type=int)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="topicflow",
        description="Discover and track the topic structure of a timestamped corpus.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("ingest", "fit", "graph", "run-all", "synth", "score", "trace"):
        p = sub.add_parser(name)
        _add_config_flags(p)
        if name == "trace":
            p.add_argument("--terms", required=True,
                           help="comma-separated query terms, e.g. gene,genetic")
            p.add_argument("--direction", choices=["forward", "backward"], default="backward")
        if name == "synth":
            p.add_argument("--scenario", required=True, help="scenario JSON file")
        if name == "score":
            p.add_argument("--truth", required=True, help="ground-truth JSON file")
    return parser


def run(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = _load_config(args)
        if args.command == "ingest":
            cmd_ingest(config)
        elif args.command == "fit":
            cmd_fit(config)
        elif args.command == "graph":
            cmd_graph(config)
        elif args.command == "run-all":
            cmd_run_all(config)
        elif args.command == "synth":
            cmd_synth(config, args.scenario)
        elif args.command == "score":
            cmd_score(config, args.truth)
        elif args.command == "trace":
            terms = [t.strip() for t in args.terms.split(",") if t.strip()]
            cmd_trace(config, terms, args.direction)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run())


if __name__ == "__main__":
    main()
