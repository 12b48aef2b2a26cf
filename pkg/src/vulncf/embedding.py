"""Token vocabulary and skip-gram embeddings feeding the graph network.

Per-node features are the mean of the node's token embeddings concatenated
with a one-hot node-kind vector. User identifiers stay verbatim; literals
are bucketed so the vocabulary stays small while identifier-level signals
remain distinguishable.
"""

from __future__ import annotations

import hashlib
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dataset import SourceFunction
from .lang.cpg import NODE_KINDS, CodePropertyGraph, KIND_INDEX
from .lang.lexer import tokenize

UNK = "<unk>"
PAD = "<pad>"

EMBEDDING_FILE_VERSION = 1


class EmptyCorpus(ValueError):
    pass


def normalize_token(lexeme: str) -> str:
    """Bucket literals; keep identifiers, keywords and operators verbatim."""
    if lexeme.isdigit():
        value = int(lexeme)
        if value == 0:
            return "INT_ZERO"
        return "INT_SMALL" if value < 256 else "INT_LARGE"
    if lexeme.startswith('"'):
        return "STR_LIT"
    if lexeme.startswith("'"):
        return "CHAR_LIT"
    return lexeme


def token_stream(source: str) -> list[str]:
    return [normalize_token(t.lexeme) for t in tokenize(source)]


@dataclass(frozen=True)
class Vocab:
    index_of: dict[str, int]
    tokens: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.tokens)

    def lookup(self, token: str) -> int:
        return self.index_of.get(token, 0)

    def content_hash(self) -> str:
        return hashlib.sha256(json.dumps(list(self.tokens)).encode()).hexdigest()


def build_vocab(corpus: list[SourceFunction], min_count: int = 1) -> Vocab:
    """Tokens with frequency >= min_count, ordered by (-frequency, token)."""
    if not corpus:
        raise EmptyCorpus("cannot build a vocabulary from an empty corpus")
    counts: Counter[str] = Counter()
    for fn in corpus:
        counts.update(token_stream(fn.source))
    kept = sorted(
        (tok for tok, c in counts.items() if c >= min_count),
        key=lambda tok: (-counts[tok], tok),
    )
    tokens = (UNK, PAD, *kept)
    return Vocab(index_of={t: i for i, t in enumerate(tokens)}, tokens=tokens)


@dataclass
class SkipgramConfig:
    window: int = 5
    negatives: int = 5
    d_tok: int = 32
    epochs: int = 5
    lr: float = 5.0
    seed: int = 0
    batch_size: int = 256
    subsample: float = 1e-3  # frequent-token discard threshold; 0 disables

    def validate(self) -> None:
        if self.d_tok < 1:
            raise ValueError("d_tok must be >= 1")
        if self.window < 1:
            raise ValueError("window must be >= 1")
        if self.negatives < 0:
            raise ValueError("negatives must be >= 0")
        if self.subsample < 0:
            raise ValueError("subsample must be >= 0")


@dataclass
class EmbeddingTable:
    vocab: Vocab
    matrix: np.ndarray  # |vocab| x d_tok
    meta: dict = field(default_factory=dict)

    @property
    def d_tok(self) -> int:
        return int(self.matrix.shape[1])

    def row(self, token: str) -> np.ndarray:
        return self.matrix[self.vocab.lookup(token)]

    def save(self, path: str | Path) -> None:
        doc = {
            "version": EMBEDDING_FILE_VERSION,
            "vocab_size": len(self.vocab),
            "d_tok": self.d_tok,
            "seed": self.meta.get("seed", 0),
            "meta": self.meta,
            "vocab": list(self.vocab.tokens),
            "rows": [[float(x) for x in row] for row in self.matrix],
        }
        Path(path).write_text(json.dumps(doc) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "EmbeddingTable":
        doc = json.loads(Path(path).read_text())
        if doc.get("version") != EMBEDDING_FILE_VERSION:
            raise ValueError(f"unsupported embedding file version {doc.get('version')}")
        tokens = tuple(doc["vocab"])
        matrix = np.asarray(doc["rows"], dtype=np.float64)
        if matrix.shape != (doc["vocab_size"], doc["d_tok"]):
            raise ValueError(
                f"embedding matrix shape {matrix.shape} does not match header "
                f"({doc['vocab_size']}, {doc['d_tok']})"
            )
        vocab = Vocab(index_of={t: i for i, t in enumerate(tokens)}, tokens=tokens)
        return cls(vocab=vocab, matrix=matrix, meta=doc.get("meta", {}))


def _init_matrix(vocab_size: int, d_tok: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    m = (rng.random((vocab_size, d_tok)) - 0.5) / d_tok
    m[1] = 0.0  # PAD
    return m


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-np.clip(x, -30, 30)))


def pretrain_skipgram(
    corpus: list[SourceFunction],
    vocab: Vocab | None = None,
    cfg: SkipgramConfig | None = None,
) -> EmbeddingTable:
    """Skip-gram with negative sampling over per-function token streams.

    Single-threaded mini-batch SGD; bit-reproducible under a fixed seed.
    Every 20th (center, context) pair is held out to monitor that positive
    pair scores improve across epochs.
    """
    cfg = cfg or SkipgramConfig()
    cfg.validate()
    if vocab is None:
        vocab = build_vocab(corpus)
    if not corpus:
        raise EmptyCorpus("cannot pretrain on an empty corpus")

    streams = [[vocab.lookup(t) for t in token_stream(fn.source)] for fn in corpus]

    # discard frequent tokens before pairing so informative co-occurrences
    # are not drowned out by punctuation
    if cfg.subsample > 0:
        total = sum(len(s) for s in streams)
        counts = np.bincount(
            np.concatenate([np.asarray(s, dtype=np.int64) for s in streams if s] or [np.zeros(0, np.int64)]),
            minlength=len(vocab),
        )
        rel = counts / max(1, total)
        with np.errstate(divide="ignore", invalid="ignore"):
            keep = np.sqrt(cfg.subsample / rel) + cfg.subsample / rel
        keep = np.minimum(1.0, np.nan_to_num(keep, nan=1.0, posinf=1.0))
        sub_rng = np.random.default_rng(cfg.seed + 2)
        streams = [
            [tok for tok in s if sub_rng.random() < keep[tok]] for s in streams
        ]

    centers: list[int] = []
    contexts: list[int] = []
    for stream in streams:
        n = len(stream)
        for i, c in enumerate(stream):
            lo = max(0, i - cfg.window)
            hi = min(n, i + cfg.window + 1)
            for j in range(lo, hi):
                if j != i:
                    centers.append(c)
                    contexts.append(stream[j])
    centers_arr = np.asarray(centers, dtype=np.int64)
    contexts_arr = np.asarray(contexts, dtype=np.int64)

    w_in = _init_matrix(len(vocab), cfg.d_tok, cfg.seed)
    w_out = np.zeros((len(vocab), cfg.d_tok), dtype=np.float64)
    meta = {
        "epochs": cfg.epochs, "window": cfg.window, "negatives": cfg.negatives,
        "seed": cfg.seed, "lr": cfg.lr, "epoch_loss": [], "holdout_score": [],
    }

    if len(centers_arr) == 0 or cfg.epochs == 0:
        table = EmbeddingTable(vocab=vocab, matrix=w_in, meta=meta)
        _finalize_special_rows(table)
        return table

    holdout_mask = np.arange(len(centers_arr)) % 20 == 19
    train_idx = np.flatnonzero(~holdout_mask)
    ho_c, ho_x = centers_arr[holdout_mask], contexts_arr[holdout_mask]

    # unigram^0.75 negative-sampling distribution over the training stream
    freq = np.bincount(centers_arr[train_idx], minlength=len(vocab)).astype(np.float64)
    probs = freq**0.75
    if probs.sum() == 0:
        probs = np.ones(len(vocab))
    probs /= probs.sum()

    rng = np.random.default_rng(cfg.seed + 1)
    for _ in range(cfg.epochs):
        order = rng.permutation(len(train_idx))
        losses = []
        for off in range(0, len(order), cfg.batch_size):
            batch = train_idx[order[off : off + cfg.batch_size]]
            c = centers_arr[batch]
            x = contexts_arr[batch]
            v = w_in[c]  # B x d
            u = w_out[x]
            step = cfg.lr / max(1, len(batch))  # mean-gradient mini-batch
            pos = _sigmoid(np.einsum("bd,bd->b", v, u))
            grad_v = (pos - 1.0)[:, None] * u
            grad_u = (pos - 1.0)[:, None] * v
            loss = -np.log(np.maximum(pos, 1e-12)).sum()
            if cfg.negatives > 0:
                neg = rng.choice(len(vocab), size=(len(batch), cfg.negatives), p=probs)
                un = w_out[neg]  # B x K x d
                sneg = _sigmoid(np.einsum("bd,bkd->bk", v, un))
                loss += -np.log(np.maximum(1.0 - sneg, 1e-12)).sum()
                grad_v += np.einsum("bk,bkd->bd", sneg, un)
                gneg = sneg[:, :, None] * v[:, None, :]
                np.subtract.at(w_out, neg.ravel(), step * gneg.reshape(-1, cfg.d_tok))
            np.subtract.at(w_in, c, step * grad_v)
            np.subtract.at(w_out, x, step * grad_u)
            losses.append(loss / max(1, len(batch)))
        meta["epoch_loss"].append(float(np.mean(losses)))
        if len(ho_c):
            score = _sigmoid(np.einsum("bd,bd->b", w_in[ho_c], w_out[ho_x])).mean()
            meta["holdout_score"].append(float(score))

    table = EmbeddingTable(vocab=vocab, matrix=w_in, meta=meta)
    _finalize_special_rows(table)
    return table


def _finalize_special_rows(table: EmbeddingTable) -> None:
    """UNK row becomes the mean of trained rows; PAD row stays all-zero."""
    if len(table.vocab) > 2:
        table.matrix[0] = table.matrix[2:].mean(axis=0)
    else:
        table.matrix[0] = 0.0
    table.matrix[1] = 0.0


def feature_dim(table: EmbeddingTable) -> int:
    return table.d_tok + len(NODE_KINDS)


def node_features(g: CodePropertyGraph, table: EmbeddingTable) -> np.ndarray:
    """N x (d_tok + 15) matrix: mean token embedding, then one-hot node kind."""
    n = len(g.nodes)
    out = np.zeros((n, feature_dim(table)), dtype=np.float64)
    d = table.d_tok
    for node in g.nodes:
        if node.tokens:
            rows = [table.row(normalize_token(t)) for t in node.tokens]
            out[node.node_id, :d] = np.mean(rows, axis=0)
        else:
            out[node.node_id, :d] = table.matrix[1]  # PAD
        out[node.node_id, d + KIND_INDEX[node.kind]] = 1.0
    return out
