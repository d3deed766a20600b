"""Hierarchical Dirichlet process mixture fitted by collapsed Gibbs sampling.

One model is fitted per epoch; all epochs share the same hyperparameters and
the same symmetric Dirichlet base measure over the common vocabulary. The
sampler uses the direct-assignment scheme: per-token topic labels are
resampled against the global stick-breaking weights, and the weights are
refreshed after every sweep from auxiliary table counts.

State is kept in flat numpy arrays and the hot loops are numba-compiled; a
deterministic splitmix64 generator drives all randomness inside the kernels
so a fixed seed reproduces a fit bit for bit.
"""

from __future__ import annotations

import hashlib
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from datetime import date
from typing import Optional, Sequence

import numpy as np
from numba import njit
from scipy.special import gammaln

from .corpus import EncodedCorpus, EncodedDocument, Epoch, epoch_documents
from .errors import ValidationError

logger = logging.getLogger(__name__)

# Topic-term probabilities below this are elided from serialized models;
# loaders spread the missing mass uniformly over the elided ids.
PHI_ELISION_THRESHOLD = 1e-6

_U64 = np.uint64
_MASK64 = (1 << 64) - 1


def derive_seed(root_seed: int, *parts) -> int:
    """Stable 64-bit seed derived from a root seed and context labels."""
    material = ":".join([str(int(root_seed))] + [str(p) for p in parts])
    digest = hashlib.sha256(material.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


@dataclass(frozen=True)
class Hyperparameters:
    """Fixed concentrations of the two-level DP and the base measure."""

    gamma: float = 1.0
    alpha0: float = 1.0
    eta: float = 0.01
    seed: int = 0

    def __post_init__(self):
        if self.gamma <= 0 or self.alpha0 <= 0 or self.eta <= 0:
            raise ValidationError("gamma, alpha0 and eta must all be positive")


@dataclass(frozen=True)
class Topic:
    """A topic as a term distribution, tagged with (epoch index, topic id)."""

    id: tuple[int, int]
    phi: np.ndarray
    popularity: float


@dataclass
class EpochModel:
    """Posterior summary of one epoch's fit."""

    epoch: Epoch
    topics: list[Topic]
    doc_mixtures: np.ndarray  # (n_docs, K), rows sum to 1
    loglik_trace: list[float]
    k_trace: list[int] = field(default_factory=list)
    retained_sweeps: int = 0

    @property
    def k(self) -> int:
        return len(self.topics)


@dataclass
class SamplerState:
    """Mutable direct-assignment sampler state.

    z holds one topic label per token; n_kw / n_k / n_jk are its count
    marginals (topic x term, topic totals, document x topic); m_k holds the
    last sampled table counts; beta[:K] plus beta_rem form the global
    stick-breaking weights. Arrays are sized to ``capacity`` >= K.
    """

    tokens: np.ndarray  # int32 (N,)
    doc_of: np.ndarray  # int32 (N,)
    doc_ids: tuple[str, ...]
    n_vocab: int
    K: int
    z: np.ndarray  # int32 (N,)
    n_kw: np.ndarray  # int32 (capacity, n_vocab)
    n_k: np.ndarray  # int32 (capacity,)
    n_jk: np.ndarray  # int32 (n_docs, capacity)
    m_k: np.ndarray  # int64 (capacity,)
    beta: np.ndarray  # float64 (capacity,)
    beta_rem: np.ndarray  # float64 (1,)
    rng: np.ndarray  # uint64 (1,)

    @property
    def n_tokens(self) -> int:
        return int(self.tokens.size)

    @property
    def n_docs(self) -> int:
        return len(self.doc_ids)

    @property
    def capacity(self) -> int:
        return int(self.n_k.size)

    @property
    def global_weights(self) -> np.ndarray:
        """Live-topic weights followed by the remainder mass; sums to 1."""
        return np.append(self.beta[: self.K], self.beta_rem[0])

    def check_counts(self) -> None:
        """Assert the count arrays are consistent marginals of z."""
        K, V = self.K, self.n_vocab
        n_kw = np.zeros((K, V), dtype=np.int32)
        n_jk = np.zeros((self.n_docs, K), dtype=np.int32)
        for i in range(self.n_tokens):
            n_kw[self.z[i], self.tokens[i]] += 1
            n_jk[self.doc_of[i], self.z[i]] += 1
        if not np.array_equal(n_kw, self.n_kw[:K]):
            raise AssertionError("topic-term counts inconsistent with assignments")
        if not np.array_equal(n_jk, self.n_jk[:, :K]):
            raise AssertionError("document-topic counts inconsistent with assignments")
        if not np.array_equal(n_kw.sum(axis=1), self.n_k[:K]):
            raise AssertionError("topic totals inconsistent with assignments")


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------

@njit(cache=True, nogil=True, inline="always")
def _next_u64(rng):
    # splitmix64
    rng[0] = rng[0] + _U64(0x9E3779B97F4A7C15)
    s = rng[0]
    s = (s ^ (s >> _U64(30))) * _U64(0xBF58476D1CE4E5B9)
    s = (s ^ (s >> _U64(27))) * _U64(0x94D049BB133111EB)
    return s ^ (s >> _U64(31))


@njit(cache=True, nogil=True, inline="always")
def _u01(rng):
    # 53-bit mantissa uniform in [0, 1)
    return (_next_u64(rng) >> _U64(11)) * (1.0 / 9007199254740992.0)


@njit(cache=True, nogil=True)
def _normal(rng):
    u1 = _u01(rng)
    while u1 <= 1e-300:
        u1 = _u01(rng)
    u2 = _u01(rng)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(6.283185307179586 * u2)


@njit(cache=True, nogil=True)
def _gamma_sample(rng, shape):
    # Marsaglia-Tsang; shapes < 1 boosted through Gamma(shape + 1) * U^(1/shape)
    boost = 1.0
    a = shape
    if a < 1.0:
        u = _u01(rng)
        if u < 1e-300:
            u = 1e-300
        boost = u ** (1.0 / a)
        a += 1.0
    d = a - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    while True:
        x = _normal(rng)
        v = 1.0 + c * x
        if v <= 0.0:
            continue
        v = v * v * v
        u = _u01(rng)
        if u < 1e-300:
            u = 1e-300
        if u < 1.0 - 0.0331 * x * x * x * x:
            return boost * d * v
        if math.log(u) < 0.5 * x * x + d * (1.0 - v + math.log(v)):
            return boost * d * v


@njit(cache=True, nogil=True)
def _token_pass(tokens, doc_of, z, n_kw, n_k, n_jk, beta, beta_rem, work,
                K, alpha0, eta, gamma, n_vocab, rng, start, decrement):
    """Resample token labels from ``start`` onward.

    Returns (K, i): i == len(tokens) when the pass finished, otherwise the
    capacity was exhausted at token i and the caller must grow the arrays
    and resume from there. With decrement == 0 the pass seats previously
    unassigned tokens (sequential initialization).
    """
    n = tokens.size
    cap = n_k.size
    veta = n_vocab * eta
    inv_v = 1.0 / n_vocab
    for i in range(start, n):
        w = tokens[i]
        j = doc_of[i]
        kold = -1
        if decrement == 1:
            kold = z[i]
            n_jk[j, kold] -= 1
            n_kw[kold, w] -= 1
            n_k[kold] -= 1
        tot = 0.0
        for k in range(K):
            p = (n_jk[j, k] + alpha0 * beta[k]) * (n_kw[k, w] + eta) / (n_k[k] + veta)
            work[k] = p
            tot += p
        p_new = alpha0 * beta_rem[0] * inv_v
        tot += p_new
        r = _u01(rng) * tot
        knew = K
        acc = 0.0
        for k in range(K):
            acc += work[k]
            if r < acc:
                knew = k
                break
        if knew == K:
            if K == cap:
                # out of room: undo the decrement and hand control back
                if decrement == 1:
                    n_jk[j, kold] += 1
                    n_kw[kold, w] += 1
                    n_k[kold] += 1
                return K, i
            b = 1.0 - (1.0 - _u01(rng)) ** (1.0 / gamma)
            beta[K] = b * beta_rem[0]
            beta_rem[0] = (1.0 - b) * beta_rem[0]
            K += 1
        z[i] = knew
        n_jk[j, knew] += 1
        n_kw[knew, w] += 1
        n_k[knew] += 1
    return K, n


@njit(cache=True, nogil=True)
def _resample_tables_weights(n_jk, n_docs, K, alpha0, gamma, m_k, beta, beta_rem, rng):
    """Draw table counts per topic, then fresh stick weights from them."""
    for k in range(K):
        a = alpha0 * beta[k]
        m = 0
        for j in range(n_docs):
            njk = n_jk[j, k]
            if njk > 0:
                m += 1  # first token always opens a table
                for i in range(1, njk):
                    if _u01(rng) * (a + i) < a:
                        m += 1
        m_k[k] = m
    total = 0.0
    for k in range(K):
        g = _gamma_sample(rng, float(m_k[k]))
        beta[k] = g
        total += g
    g_rem = _gamma_sample(rng, gamma)
    total += g_rem
    if total <= 0.0:  # all draws underflowed (pathologically small gamma)
        for k in range(K):
            beta[k] = 1.0 / (K + 1)
        beta_rem[0] = 1.0 / (K + 1)
        return
    for k in range(K):
        beta[k] /= total
    beta_rem[0] = g_rem / total


# ---------------------------------------------------------------------------
# state construction and sweeps
# ---------------------------------------------------------------------------

def _flatten(docs: Sequence[EncodedDocument]) -> tuple[np.ndarray, np.ndarray, tuple[str, ...]]:
    ids = tuple(d.id for d in docs)
    n = sum(len(d.tokens) for d in docs)
    tokens = np.empty(n, dtype=np.int32)
    doc_of = np.empty(n, dtype=np.int32)
    pos = 0
    for j, d in enumerate(docs):
        m = len(d.tokens)
        tokens[pos:pos + m] = d.tokens
        doc_of[pos:pos + m] = j
        pos += m
    return tokens, doc_of, ids


def _grow(state: SamplerState, new_cap: int) -> None:
    old = state.capacity
    if new_cap <= old:
        return
    n_kw = np.zeros((new_cap, state.n_vocab), dtype=np.int32)
    n_kw[:old] = state.n_kw
    n_k = np.zeros(new_cap, dtype=np.int32)
    n_k[:old] = state.n_k
    n_jk = np.zeros((state.n_docs, new_cap), dtype=np.int32)
    n_jk[:, :old] = state.n_jk
    m_k = np.zeros(new_cap, dtype=np.int64)
    m_k[:old] = state.m_k
    beta = np.zeros(new_cap, dtype=np.float64)
    beta[:old] = state.beta
    state.n_kw, state.n_k, state.n_jk, state.m_k, state.beta = n_kw, n_k, n_jk, m_k, beta


def _compact(state: SamplerState) -> None:
    """Drop empty topics and renumber the survivors."""
    live = np.flatnonzero(state.n_k[: state.K] > 0)
    if live.size == state.K:
        return
    new_k = int(live.size)
    lut = np.full(state.K, -1, dtype=np.int32)
    lut[live] = np.arange(new_k, dtype=np.int32)
    state.z[:] = lut[state.z]
    state.n_kw[:new_k] = state.n_kw[live]
    state.n_kw[new_k: state.K] = 0
    state.n_k[:new_k] = state.n_k[live]
    state.n_k[new_k: state.K] = 0
    state.n_jk[:, :new_k] = state.n_jk[:, live]
    state.n_jk[:, new_k: state.K] = 0
    state.beta[:new_k] = state.beta[live]
    state.beta[new_k: state.K] = 0.0
    state.m_k[new_k: state.K] = 0
    state.K = new_k


def _run_pass(
    state: SamplerState, hp: Hyperparameters, decrement: int,
    start: int = 0, end: Optional[int] = None,
) -> None:
    i = start
    stop = state.n_tokens if end is None else end
    while True:
        work = np.empty(state.capacity, dtype=np.float64)
        k, i = _token_pass(
            state.tokens[:stop], state.doc_of[:stop], state.z,
            state.n_kw, state.n_k, state.n_jk,
            state.beta, state.beta_rem, work,
            state.K, hp.alpha0, hp.eta, hp.gamma,
            state.n_vocab, state.rng, i, decrement,
        )
        state.K = int(k)
        if i >= stop:
            return
        _grow(state, state.capacity * 2 + 8)


def init_state(docs: Sequence[EncodedDocument], n_vocab: int, hp: Hyperparameters) -> SamplerState:
    """Seat every token once with the sequential predictive rule.

    The global weights are refreshed from table counts at geometrically
    spaced document checkpoints, so the mass reserved for unseen topics
    decays harmonically with the data seen so far (as the predictive
    seating process requires) instead of collapsing after the first few
    stick breaks.
    """
    tokens, doc_of, ids = _flatten(docs)
    if tokens.size == 0:
        raise ValidationError("epoch contains no tokens")
    cap = 16
    state = SamplerState(
        tokens=tokens,
        doc_of=doc_of,
        doc_ids=ids,
        n_vocab=int(n_vocab),
        K=0,
        z=np.full(tokens.size, -1, dtype=np.int32),
        n_kw=np.zeros((cap, n_vocab), dtype=np.int32),
        n_k=np.zeros(cap, dtype=np.int32),
        n_jk=np.zeros((len(ids), cap), dtype=np.int32),
        m_k=np.zeros(cap, dtype=np.int64),
        beta=np.zeros(cap, dtype=np.float64),
        beta_rem=np.ones(1, dtype=np.float64),
        rng=np.array([hp.seed & _MASK64], dtype=np.uint64),
    )
    boundaries = np.append(np.flatnonzero(np.diff(doc_of)) + 1, tokens.size)
    checkpoint = 1
    seated_docs = 0
    start = 0
    for end in boundaries:
        _run_pass(state, hp, decrement=0, start=int(start), end=int(end))
        start = end
        seated_docs += 1
        if seated_docs >= checkpoint:
            _resample_tables_weights(
                state.n_jk, state.n_docs, state.K, hp.alpha0, hp.gamma,
                state.m_k, state.beta, state.beta_rem, state.rng,
            )
            checkpoint = max(checkpoint + 1, int(checkpoint * 1.3))
    return state


def gibbs_sweep(state: SamplerState, hp: Hyperparameters) -> SamplerState:
    """One full sweep: resample every label, drop empty topics, refresh the
    table counts and global weights. Mutates and returns ``state``."""
    _run_pass(state, hp, decrement=1)
    _compact(state)
    _resample_tables_weights(
        state.n_jk, state.n_docs, state.K, hp.alpha0, hp.gamma,
        state.m_k, state.beta, state.beta_rem, state.rng,
    )
    return state


def token_conditional(state: SamplerState, hp: Hyperparameters, i: int) -> np.ndarray:
    """Normalized full conditional of token i's label (existing topics then new).

    Recomputed from the raw assignment vector rather than the maintained
    count arrays, so tests can cross-check the kernel's bookkeeping.
    """
    K, V = state.K, state.n_vocab
    w = int(state.tokens[i])
    j = int(state.doc_of[i])
    mask = np.arange(state.n_tokens) != i
    zz, tt, dd = state.z[mask], state.tokens[mask], state.doc_of[mask]
    p = np.empty(K + 1, dtype=np.float64)
    for k in range(K):
        n_jk = int(np.sum((dd == j) & (zz == k)))
        n_kw = int(np.sum((zz == k) & (tt == w)))
        n_k = int(np.sum(zz == k))
        p[k] = (n_jk + hp.alpha0 * state.beta[k]) * (n_kw + hp.eta) / (n_k + V * hp.eta)
    p[K] = hp.alpha0 * state.beta_rem[0] / V
    return p / p.sum()


def log_likelihood(state: SamplerState, hp: Hyperparameters) -> float:
    """Collapsed log p(words | assignments, eta)."""
    K, V, eta = state.K, state.n_vocab, hp.eta
    n_kw = state.n_kw[:K]
    nz = n_kw[n_kw > 0].astype(np.float64)
    ll = K * gammaln(V * eta) - float(gammaln(state.n_k[:K] + V * eta).sum())
    ll += float(gammaln(nz + eta).sum()) - nz.size * float(gammaln(eta))
    return float(ll)


def estimate_topics(state: SamplerState, hp: Hyperparameters, epoch_index: int = 0) -> list[Topic]:
    """Smoothed topic-term distributions and popularity from the current state."""
    K, V = state.K, state.n_vocab
    total = float(state.n_k[:K].sum())
    out = []
    for k in range(K):
        phi = (state.n_kw[k].astype(np.float64) + hp.eta) / (float(state.n_k[k]) + V * hp.eta)
        out.append(Topic(id=(epoch_index, k), phi=phi, popularity=float(state.n_k[k]) / total))
    return out


def doc_mixtures(state: SamplerState, hp: Hyperparameters) -> np.ndarray:
    """Per-document topic mixtures, smoothed by the global weights."""
    K = state.K
    mix = state.n_jk[:, :K].astype(np.float64) + hp.alpha0 * state.beta[:K]
    return mix / mix.sum(axis=1, keepdims=True)


def fit_epoch(
    docs: Sequence[EncodedDocument],
    n_vocab: int,
    hp: Hyperparameters,
    sweeps: int = 500,
    burn_in: int = 300,
    epoch: Optional[Epoch] = None,
) -> EpochModel:
    """Fit one epoch: initialize, sweep, and summarize the final state."""
    if not sweeps > burn_in >= 0:
        raise ValidationError("require sweeps > burn_in >= 0")
    if epoch is None:
        epoch = Epoch(index=0, start=date(1970, 1, 1), end=date(9999, 1, 1),
                      doc_ids=tuple(d.id for d in docs))
    state = init_state(docs, n_vocab, hp)
    loglik: list[float] = []
    k_trace: list[int] = []
    for _ in range(sweeps):
        gibbs_sweep(state, hp)
        loglik.append(log_likelihood(state, hp))
        k_trace.append(state.K)
    return EpochModel(
        epoch=epoch,
        topics=estimate_topics(state, hp, epoch_index=epoch.index),
        doc_mixtures=doc_mixtures(state, hp),
        loglik_trace=loglik,
        k_trace=k_trace,
        retained_sweeps=sweeps - burn_in,
    )


def fit_all_epochs(
    corpus: EncodedCorpus,
    epochs: Sequence[Epoch],
    hp: Hyperparameters,
    sweeps: int = 500,
    burn_in: int = 300,
    jobs: int = 1,
) -> list[EpochModel]:
    """Fit every non-empty epoch independently under shared hyperparameters.

    Each epoch gets a seed derived from (hp.seed, epoch index), so results do
    not depend on scheduling order and rerunning any single epoch reproduces
    it exactly. Empty epochs are skipped with a warning.
    """
    n_vocab = len(corpus.vocabulary)
    tasks: list[tuple[Epoch, list[EncodedDocument]]] = []
    for ep in epochs:
        docs = epoch_documents(ep, corpus)
        if not docs:
            logger.warning("epoch %d (%s .. %s) is empty; skipping", ep.index, ep.start, ep.end)
            continue
        tasks.append((ep, docs))

    def run(task):
        ep, docs = task
        per_epoch = replace(hp, seed=derive_seed(hp.seed, "epoch", ep.index))
        return fit_epoch(docs, n_vocab, per_epoch, sweeps=sweeps, burn_in=burn_in, epoch=ep)

    if jobs > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            models = list(pool.map(run, tasks))
    else:
        models = [run(t) for t in tasks]
    return models


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def model_to_dict(model: EpochModel, n_vocab: int) -> dict:
    """JSON-ready form of an EpochModel with sparse topic vectors."""
    topics = []
    for t in model.topics:
        keep = np.flatnonzero(t.phi >= PHI_ELISION_THRESHOLD)
        topics.append({
            "k": t.id[1],
            "popularity": t.popularity,
            "phi": [[int(w), float(t.phi[w])] for w in keep],
        })
    return {
        "epoch": {
            "index": model.epoch.index,
            "start": model.epoch.start.isoformat(),
            "end": model.epoch.end.isoformat(),
        },
        "K": model.k,
        "n_vocab": int(n_vocab),
        "topics": topics,
        "loglik_trace": model.loglik_trace,
    }


def model_from_dict(obj: dict) -> EpochModel:
    """Rebuild an EpochModel; elided phi mass is spread uniformly."""
    n_vocab = int(obj["n_vocab"])
    ep = Epoch(
        index=int(obj["epoch"]["index"]),
        start=date.fromisoformat(obj["epoch"]["start"]),
        end=date.fromisoformat(obj["epoch"]["end"]),
    )
    topics = []
    for t in obj["topics"]:
        phi = np.zeros(n_vocab, dtype=np.float64)
        listed = np.zeros(n_vocab, dtype=bool)
        for w, p in t["phi"]:
            phi[int(w)] = float(p)
            listed[int(w)] = True
        missing = 1.0 - float(phi.sum())
        holes = int((~listed).sum())
        if holes > 0 and missing > 0:
            phi[~listed] = missing / holes
        topics.append(Topic(id=(ep.index, int(t["k"])), phi=phi, popularity=float(t["popularity"])))
    return EpochModel(
        epoch=ep,
        topics=topics,
        doc_mixtures=np.zeros((0, len(topics))),
        loglik_trace=[float(x) for x in obj["loglik_trace"]],
    )
