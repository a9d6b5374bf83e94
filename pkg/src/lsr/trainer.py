"""ADAM training loop with in-batch negatives and MRR@10 checkpoint selection.

Deterministic given (seed, config, data): batch composition, shuffling and
every parameter update are driven by a single seeded generator, so repeated
runs produce byte-identical checkpoints.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Sequence

import numpy as np

from .encoder import EncoderConfig, EncoderParams, encode_seq
from .errors import ConfigError, DataError
from .evalir import Qrels, mrr_at_k
from .objective import RegWeights, total_loss
from .textpipe import CorpusRecord, TokenSeq, Vocabulary, tokenize


@dataclass
class TrainConfig:
    batch_size: int = 16
    total_steps: int = 2000
    warmup_steps: int = 100
    learning_rate: float = 2e-3
    ramp_steps: int = 800
    lambda_q: float = 0.0
    lambda_d: float = 0.0
    reg_kind: str = "flops"
    use_in_batch_negatives: bool = True
    validation_query_count: int = 50
    validation_interval: int = 250
    seed: int = 0
    # encoder settings
    embed_dim: int = 64
    context_depth: int = 0
    aggregation: str = "log_saturate"
    gating: str = "none"
    max_len: int = 256

    def __post_init__(self):
        for name in (
            "batch_size", "total_steps", "warmup_steps", "ramp_steps",
            "validation_query_count", "validation_interval",
        ):
            if getattr(self, name) < (0 if name in ("total_steps", "warmup_steps") else 1):
                raise ConfigError(f"{name} must be positive")

    def encoder_config(self, vocab_size: int) -> EncoderConfig:
        return EncoderConfig(
            vocab_size=vocab_size,
            embed_dim=self.embed_dim,
            context_depth=self.context_depth,
            aggregation=self.aggregation,
            gating=self.gating,
            max_len=self.max_len,
        )

    def reg_weights(self) -> RegWeights:
        return RegWeights(self.lambda_q, self.lambda_d, self.ramp_steps, self.reg_kind)


def parse_config_file(path) -> dict[str, str]:
    """Flat `key = value` lines; '#' starts a comment."""
    raw: dict[str, str] = {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"missing config file: {path}")
    for lineno, line in enumerate(p.read_text(encoding="utf-8").splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        raw[key] = value
    return raw


def config_from_dict(raw: dict[str, str]) -> TrainConfig:
    """Build a TrainConfig from string key/values, rejecting unknown keys."""
    typed = {}
    known = {f.name: f.type for f in fields(TrainConfig)}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        ftype = known[key]
        try:
            if ftype == "int":
                typed[key] = int(value)
            elif ftype == "float":
                typed[key] = float(value)
            elif ftype == "bool":
                if value.lower() not in ("true", "false", "0", "1"):
                    raise ValueError(value)
                typed[key] = value.lower() in ("true", "1")
            else:
                typed[key] = value
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {value!r}") from exc
    return TrainConfig(**typed)


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    def ensure(self, params: EncoderParams) -> None:
        for name, value in params.values.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(value)
                self.v[name] = np.zeros_like(value)


def adam_step(params: EncoderParams, state: AdamState, lr: float) -> None:
    """One bias-corrected ADAM update from params.grads; t always increments."""
    state.ensure(params)
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    for name, g in params.grads.items():
        if not np.all(np.isfinite(g)):
            raise DataError(f"non-finite gradient in tensor {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        mhat = m / (1 - b1**state.t)
        vhat = v / (1 - b2**state.t)
        params.values[name] -= lr * mhat / (np.sqrt(vhat) + state.eps)


def lr_at(step: int, peak: float, warmup_steps: int, total_steps: int) -> float:
    """Linear warmup to peak, then linear decay to 0 at total_steps."""
    if step <= warmup_steps:
        return peak * step / max(1, warmup_steps)
    if total_steps <= warmup_steps:
        return peak
    return peak * max(0, total_steps - step) / (total_steps - warmup_steps)


class TrainData:
    """Tokenized corpus, queries and triples keyed for training."""

    def __init__(
        self,
        corpus: Sequence[CorpusRecord],
        queries: Sequence[CorpusRecord],
        triples: Sequence[tuple[str, str, str]],
        vocab: Vocabulary,
        max_len: int,
    ):
        self.vocab = vocab
        self.doc_seqs: dict[str, TokenSeq] = {
            r.doc_id: tokenize(r.text, vocab, max_len) for r in corpus
        }
        self.query_seqs: dict[str, TokenSeq] = {
            r.doc_id: tokenize(r.text, vocab, max_len) for r in queries
        }
        self.triples: list[tuple[TokenSeq, TokenSeq, TokenSeq]] = []
        for qid, pos_id, neg_id in triples:
            try:
                self.triples.append(
                    (self.query_seqs[qid], self.doc_seqs[pos_id], self.doc_seqs[neg_id])
                )
            except KeyError as exc:
                raise DataError(f"triple references unknown id {exc.args[0]!r}") from exc
        if not self.triples:
            raise DataError("no training triples")


def validate(
    params: EncoderParams,
    query_seqs: dict[str, TokenSeq],
    qrels: Qrels,
    doc_seqs: dict[str, TokenSeq],
) -> tuple[float, dict[str, list[tuple[str, float]]]]:
    """Brute-force full-corpus retrieval MRR@10 with the current parameters.

    Returns the MRR@10 and the per-query ranking it was computed from.
    Zero-score documents are excluded; ties break on ascending doc_id,
    matching the retrieval module.
    """
    if not query_seqs:
        raise DataError("empty validation query set")
    doc_ids = sorted(doc_seqs)
    D = np.stack([encode_seq(doc_seqs[d], params)[0] for d in doc_ids])
    run: dict[str, list[tuple[str, float]]] = {}
    for qid, seq in query_seqs.items():
        qv, _ = encode_seq(seq, params)
        scores = D @ qv
        hits = np.flatnonzero(scores > 0.0)
        ranked = sorted(
            ((doc_ids[i], float(scores[i])) for i in hits),
            key=lambda e: (-e[1], e[0]),
        )
        run[qid] = ranked[:10]
    scoped = {qid: qrels.get(qid, {}) for qid in query_seqs}
    return mrr_at_k(run, scoped, 10).mean, run


@dataclass
class TrainResult:
    params: EncoderParams  # best checkpoint by validation MRR@10
    best_mrr: float
    best_step: int
    history: list[tuple[int, float]]  # (step, mrr10) in evaluation order
    final_params: EncoderParams


def train(
    data: TrainData,
    qrels: Qrels,
    config: TrainConfig,
    log=None,
) -> TrainResult:
    """Full training loop; returns the best checkpoint by validation MRR@10.

    Validation runs at step 0, every validation_interval steps, and at the
    final step, over the first validation_query_count query ids (sorted).
    """
    enc_config = config.encoder_config(len(data.vocab))
    params = EncoderParams.init_random(enc_config, config.seed)
    reg = config.reg_weights()
    state = AdamState()
    rng = np.random.default_rng(config.seed)

    val_ids = sorted(data.query_seqs)[: config.validation_query_count]
    val_queries = {qid: data.query_seqs[qid] for qid in val_ids}

    def run_validation(step: int):
        mrr, _ = validate(params, val_queries, qrels, data.doc_seqs)
        history.append((step, mrr))
        if log:
            log(f"step {step}: validation MRR@10 = {mrr:.4f}")
        return mrr

    history: list[tuple[int, float]] = []
    best_mrr = run_validation(0)
    best_step = 0
    best = params.copy()

    step = 0
    order: list[int] = []
    pos = 0
    while step < config.total_steps:
        if pos >= len(order):
            order = rng.permutation(len(data.triples)).tolist()
            pos = 0
        batch_idx = order[pos : pos + config.batch_size]
        pos += len(batch_idx)
        batch = [data.triples[i] for i in batch_idx]
        step += 1
        loss, _ = total_loss(
            batch, params, reg, step,
            use_in_batch_negatives=config.use_in_batch_negatives,
        )
        if not np.isfinite(loss):
            raise DataError(f"non-finite loss at step {step}")
        adam_step(params, state, lr_at(step, config.learning_rate,
                                       config.warmup_steps, config.total_steps))
        if step % config.validation_interval == 0 or step == config.total_steps:
            mrr = run_validation(step)
            if mrr > best_mrr:
                best_mrr, best_step, best = mrr, step, params.copy()
    return TrainResult(best, best_mrr, best_step, history, params)


def write_history_csv(history: list[tuple[int, float]], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,mrr10\n")
        for step, mrr in history:
            fh.write(f"{step},{mrr:.6f}\n")


__all__ = [
    "TrainConfig", "TrainData", "TrainResult", "AdamState", "adam_step",
    "lr_at", "train", "validate", "parse_config_file", "config_from_dict",
    "write_history_csv",
]
