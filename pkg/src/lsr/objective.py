"""Ranking losses, sparsity regularizers, lambda scheduling, total objective.

The training objective combines a softmax ranking loss with in-batch
negatives and a sparsity regularizer (l1 or the squared-mean-activation
"flops" regularizer), with separate weights for query and document
representations, each ramped quadratically over the first ramp_steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .encoder import EncoderParams, encode_seq, encoder_backward
from .errors import ShapeError
from .reps import SparseRep
from .textpipe import TokenSeq

REG_KINDS = ("l1", "flops")


@dataclass(frozen=True)
class RegWeights:
    lambda_q: float
    lambda_d: float
    ramp_steps: int
    reg_kind: str = "flops"

    def __post_init__(self):
        if self.lambda_q < 0 or self.lambda_d < 0:
            raise ValueError("lambda weights must be non-negative")
        if self.ramp_steps < 1:
            raise ValueError("ramp_steps must be >= 1")
        if self.reg_kind not in REG_KINDS:
            raise ValueError(f"unknown reg_kind {self.reg_kind!r}")


def lambda_at(step: int, lambda_max: float, ramp_steps: int) -> float:
    """Quadratic ramp: lambda_max * (step/T)^2 until step T, constant after."""
    if step < 0 or ramp_steps < 1:
        raise ValueError("step must be >= 0 and ramp_steps >= 1")
    if step >= ramp_steps:
        return lambda_max
    return lambda_max * (step / ramp_steps) ** 2


def score(q: SparseRep, d: SparseRep) -> float:
    """Sparse dot product over the support intersection."""
    if q.vocab_size != d.vocab_size:
        raise ShapeError("vocab size mismatch between representations")
    common, qi, di = np.intersect1d(
        q.ids, d.ids, assume_unique=True, return_indices=True
    )
    if common.size == 0:
        return 0.0
    return float(np.dot(q.weights[qi], d.weights[di]))


def _logsumexp(z: np.ndarray) -> float:
    m = z.max()
    return float(m + np.log(np.exp(z - m).sum()))


def rank_loss(s_pos: float, s_neg: float) -> float:
    """Pairwise softmax loss -log(e^{s+} / (e^{s+} + e^{s-}))."""
    z = np.array([s_pos, s_neg], dtype=np.float64)
    return _logsumexp(z) - s_pos


def rank_ibn_loss(
    s_pos: np.ndarray, s_neg: np.ndarray, s_ibn: np.ndarray
) -> float:
    """Mean softmax loss with in-batch negatives.

    s_pos, s_neg: shape (N,); s_ibn: shape (N, N-1) holding scores against
    the other queries' positives. With N=1 this reduces to rank_loss.
    """
    n = s_pos.shape[0]
    total = 0.0
    for i in range(n):
        z = np.concatenate(([s_pos[i], s_neg[i]], s_ibn[i]))
        total += _logsumexp(z) - s_pos[i]
    return total / n


def _pool(reps) -> np.ndarray:
    if isinstance(reps, np.ndarray):
        return reps
    rows = [r.to_dense() if isinstance(r, SparseRep) else np.asarray(r) for r in reps]
    return np.stack(rows)


def l1_reg(reps) -> float:
    """Sum over the vocabulary of the batch-mean weight (weights are >= 0)."""
    return float(_pool(reps).mean(axis=0).sum())


def flops_reg(reps) -> float:
    """Sum over the vocabulary of the squared batch-mean weight.

    Compared to l1 this pushes down high average term weights, favoring
    balanced posting lists.
    """
    mean = _pool(reps).mean(axis=0)
    return float(np.dot(mean, mean))


def _reg_value_and_grad(pool: np.ndarray, kind: str) -> tuple[float, np.ndarray]:
    """Value and per-rep gradient of the chosen regularizer on an M x V pool."""
    m = pool.shape[0]
    mean = pool.mean(axis=0)
    if kind == "l1":
        return float(mean.sum()), np.full_like(mean, 1.0 / m)
    return float(np.dot(mean, mean)), 2.0 * mean / m


def total_loss(
    batch: list[tuple[TokenSeq, TokenSeq, TokenSeq]],
    params: EncoderParams,
    reg: RegWeights,
    step: int,
    use_in_batch_negatives: bool = True,
) -> tuple[float, dict[str, np.ndarray]]:
    """Forward + backward of the full objective on one triple batch.

    Encodes every query, positive and negative, computes the ranking loss
    (optionally with in-batch negatives), adds the scheduled query/document
    regularizers (documents pool positives and negatives), and accumulates
    exact parameter gradients into params.grads. Gradients are zeroed first.
    """
    n = len(batch)
    if n < 1:
        raise ValueError("empty batch")
    params.zero_grads()

    q_dense, q_caches = [], []
    p_dense, p_caches = [], []
    g_dense, g_caches = [], []
    for q_seq, p_seq, n_seq in batch:
        dv, cache = encode_seq(q_seq, params)
        q_dense.append(dv)
        q_caches.append(cache)
        dv, cache = encode_seq(p_seq, params)
        p_dense.append(dv)
        p_caches.append(cache)
        dv, cache = encode_seq(n_seq, params)
        g_dense.append(dv)
        g_caches.append(cache)
    Q = np.stack(q_dense)
    P = np.stack(p_dense)
    G = np.stack(g_dense)

    s_qp = Q @ P.T  # s_qp[i, j] = s(q_i, d_j+)
    s_neg = np.einsum("iv,iv->i", Q, G)

    dQ = np.zeros_like(Q)
    dP = np.zeros_like(P)
    dG = np.zeros_like(G)
    rank_total = 0.0
    for i in range(n):
        if use_in_batch_negatives:
            others = [j for j in range(n) if j != i]
            z = np.concatenate(([s_qp[i, i], s_neg[i]], s_qp[i, others]))
        else:
            others = []
            z = np.array([s_qp[i, i], s_neg[i]])
        m = z.max()
        e = np.exp(z - m)
        p = e / e.sum()
        rank_total += float(m + np.log(e.sum())) - z[0]
        coef = p / n
        coef[0] -= 1.0 / n
        dQ[i] += coef[0] * P[i] + coef[1] * G[i]
        dP[i] += coef[0] * Q[i]
        dG[i] += coef[1] * Q[i]
        for k, j in enumerate(others):
            dQ[i] += coef[2 + k] * P[j]
            dP[j] += coef[2 + k] * Q[i]
    loss = rank_total / n

    lam_q = lambda_at(step, reg.lambda_q, reg.ramp_steps)
    lam_d = lambda_at(step, reg.lambda_d, reg.ramp_steps)
    if lam_q > 0.0:
        val, grad = _reg_value_and_grad(Q, reg.reg_kind)
        loss += lam_q * val
        dQ += lam_q * grad
    if lam_d > 0.0:
        doc_pool = np.concatenate([P, G])
        val, grad = _reg_value_and_grad(doc_pool, reg.reg_kind)
        loss += lam_d * val
        dP += lam_d * grad
        dG += lam_d * grad

    for i in range(n):
        encoder_backward(dQ[i], q_caches[i], params)
        encoder_backward(dP[i], p_caches[i], params)
        encoder_backward(dG[i], g_caches[i], params)
    return loss, params.grads
