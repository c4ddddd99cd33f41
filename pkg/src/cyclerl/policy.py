"""Autoregressive linear-softmax policy over scratchpad features.

The policy is a single ``|V| x d`` weight matrix; the next-token
distribution is ``softmax(W @ features(state) / temperature)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import env
from .env import Question

__all__ = [
    "PolicyParams",
    "init_params",
    "logits",
    "log_softmax",
    "logprob",
    "probs",
    "sample_token",
    "entropy",
    "grad_logprob",
    "Response",
    "RolloutBatch",
    "rollout",
    "rollout_batch",
    "replay_features",
    "token_logprobs",
    "state_ids",
    "state_table",
    "batch_answers",
]


@dataclass
class PolicyParams:
    weights: np.ndarray

    def __post_init__(self) -> None:
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2 or self.weights.shape[0] != env.VOCAB_SIZE:
            raise ValueError(f"weights must have shape ({env.VOCAB_SIZE}, d), got {self.weights.shape}")
        if not np.all(np.isfinite(self.weights)):
            raise ValueError("weights contain non-finite entries")

    @property
    def k_max(self) -> int:
        return self.weights.shape[1] - 10 - env.VOCAB_SIZE - 2

    def copy(self) -> "PolicyParams":
        return PolicyParams(self.weights.copy())


def init_params(k_max: int = env.K_MAX, wait_bias: float = 1.5) -> PolicyParams:
    """Zero weights except a positive bias on ``WAIT`` (an overthinking prior)."""
    w = np.zeros((env.VOCAB_SIZE, env.feature_dim(k_max)))
    w[env.WAIT, -1] = wait_bias
    return PolicyParams(w)


def logits(params: PolicyParams, feat: np.ndarray) -> np.ndarray:
    feat = np.asarray(feat, dtype=np.float64)
    if feat.shape[-1] != params.weights.shape[1]:
        raise ValueError(f"feature dim {feat.shape[-1]} != weight dim {params.weights.shape[1]}")
    return feat @ params.weights.T


def log_softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def probs(params: PolicyParams, feat: np.ndarray, temperature: float = 1.0) -> np.ndarray:
    return np.exp(log_softmax(logits(params, feat) / temperature))


def logprob(params: PolicyParams, feat: np.ndarray, token: int, temperature: float = 1.0) -> float:
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    return float(log_softmax(logits(params, feat) / temperature)[token])


def _inverse_cdf(p: np.ndarray, u: np.ndarray) -> np.ndarray:
    cdf = np.cumsum(p, axis=-1)
    tok = (cdf <= u[..., None]).sum(axis=-1)
    return np.minimum(tok, p.shape[-1] - 1)


def sample_token(params: PolicyParams, feat: np.ndarray, temperature: float, rng: np.random.Generator) -> int:
    p = probs(params, feat, temperature)
    return int(_inverse_cdf(p, np.asarray(rng.random())))


def entropy(params: PolicyParams, feat: np.ndarray, temperature: float = 1.0) -> float:
    lp = log_softmax(logits(params, feat) / temperature)
    return float(-(np.exp(lp) * lp).sum())


def grad_logprob(params: PolicyParams, feat: np.ndarray, token: int) -> np.ndarray:
    """d logprob(token) / dW at temperature 1."""
    feat = np.asarray(feat, dtype=np.float64)
    g = -probs(params, feat)
    g[token] += 1.0
    return np.outer(g, feat)


@dataclass
class Response:
    tokens: list[int]
    logprobs: np.ndarray
    truncated: bool

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass
class RolloutBatch:
    """Padded rollouts of ``n`` responses; rows are ragged up to ``lengths``.

    ``feat_idx[i, t]`` holds the four active feature positions of the state
    the policy saw before emitting ``tokens[i, t]``.
    """

    tokens: np.ndarray  # (n, cap) int, -1 past the end
    logprobs: np.ndarray  # (n, cap)
    entropies: np.ndarray  # (n, cap), at the rollout temperature
    feat_idx: np.ndarray  # (n, cap, 4) int
    lengths: np.ndarray  # (n,)
    cap: int
    temperature: float
    _mask: np.ndarray | None = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.lengths)

    @property
    def mask(self) -> np.ndarray:
        if self._mask is None:
            self._mask = np.arange(self.tokens.shape[1])[None, :] < self.lengths[:, None]
        return self._mask

    def flat(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(row, feat_idx, token, logprob)`` of every sampled token, row-major."""
        m = self.mask
        rows = np.broadcast_to(np.arange(self.n)[:, None], m.shape)[m]
        return rows, self.feat_idx[m], self.tokens[m], self.logprobs[m]

    def token_list(self, i: int) -> list[int]:
        return [int(t) for t in self.tokens[i, : self.lengths[i]]]

    def response(self, i: int) -> Response:
        toks = self.token_list(i)
        return Response(toks, self.logprobs[i, : self.lengths[i]].copy(), not toks or toks[-1] != env.EOS)

    def responses(self) -> list[Response]:
        return [self.response(i) for i in range(self.n)]


def _state_feat_idx(k_max: int) -> np.ndarray:
    """Sparse feature indices of every (acc, rem, last) state, in state-id order."""
    acc, rem, last = np.meshgrid(np.arange(10), np.arange(k_max + 1), np.arange(env.VOCAB_SIZE), indexing="ij")
    last_off = 10 + k_max + 1
    return np.stack(
        [acc.ravel(), 10 + rem.ravel(), last_off + last.ravel(), np.full(acc.size, last_off + env.VOCAB_SIZE)],
        axis=1,
    )


def state_ids(feat_idx: np.ndarray, k_max: int = env.K_MAX) -> np.ndarray:
    """Flat state id ``(acc * (k_max + 1) + rem) * |V| + last`` from sparse feature indices."""
    feat_idx = np.asarray(feat_idx)
    last_off = 10 + k_max + 1
    return (feat_idx[..., 0] * (k_max + 1) + feat_idx[..., 1] - 10) * env.VOCAB_SIZE + feat_idx[..., 2] - last_off


def state_table(params: PolicyParams, temperature: float = 1.0) -> np.ndarray:
    """Next-token log-probs for every scratch state, shape ``(n_states, |V|)``.

    The state space is tiny, so rollouts and loss evaluation look up rows
    here instead of recomputing a softmax per token.
    """
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    f = _state_feat_idx(params.k_max)
    return log_softmax((params.weights.T / temperature)[f].sum(axis=1))


def rollout_batch(
    params: PolicyParams,
    questions: Sequence[Question],
    cap: int,
    temperature: float,
    rngs: Sequence[np.random.Generator] | None = None,
    uniforms: np.ndarray | None = None,
) -> RolloutBatch:
    """Sample one response per question, all in lockstep.

    Response ``i`` consumes the uniforms ``uniforms[i, :cap]``, or ``cap``
    draws from ``rngs[i]`` taken up front, so it depends only on its own
    stream and not on which other responses share the batch.
    """
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    if temperature <= 0:
        raise ValueError("temperature must be > 0")
    n = len(questions)
    if (rngs is None) == (uniforms is None):
        raise ValueError("pass exactly one of rngs or uniforms")
    if uniforms is None:
        if len(rngs) != n:
            raise ValueError("need one generator per question")
        u = np.stack([r.random(cap) for r in rngs]) if n else np.zeros((0, cap))
    else:
        u = np.asarray(uniforms, dtype=np.float64)
        if u.ndim != 2 or u.shape[0] != n or u.shape[1] < cap:
            raise ValueError(f"uniforms must have shape ({n}, >= {cap}), got {u.shape}")
    k_max = params.k_max
    if any(q.k > k_max for q in questions):
        raise ValueError(f"question longer than policy k_max={k_max}")
    rem_off, last_off = 10, 10 + k_max + 1
    bias = last_off + env.VOCAB_SIZE

    k = np.array([q.k for q in questions], dtype=np.int64)
    digits = np.zeros((n, max(1, k_max)), dtype=np.int64)
    for i, q in enumerate(questions):
        digits[i, : q.k] = q.digits

    lp_tab = state_table(params, temperature)
    p_tab = np.exp(lp_tab)
    cdf_tab = np.cumsum(p_tab, axis=1)
    ent_tab = -(p_tab * lp_tab).sum(axis=1)

    acc = np.zeros(n, dtype=np.int64)
    rem = k.copy()
    last = np.full(n, env.PAD, dtype=np.int64)
    tokens = np.full((n, cap), -1, dtype=np.int64)
    lps = np.zeros((n, cap))
    ents = np.zeros((n, cap))
    fidx = np.zeros((n, cap, 4), dtype=np.int64)
    lengths = np.zeros(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)

    for t in range(cap):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        a, r, l = acc[idx], np.minimum(rem[idx], k_max), last[idx]
        sid = (a * (k_max + 1) + r) * env.VOCAB_SIZE + l
        tok = np.minimum((cdf_tab[sid] <= u[idx, t, None]).sum(axis=1), env.VOCAB_SIZE - 1)
        tokens[idx, t] = tok
        lps[idx, t] = lp_tab[sid, tok]
        ents[idx, t] = ent_tab[sid]
        fidx[idx, t, 0] = a
        fidx[idx, t, 1] = rem_off + r
        fidx[idx, t, 2] = last_off + l
        fidx[idx, t, 3] = bias
        lengths[idx] += 1

        consume = (tok == env.NEXT) & (rem[idx] > 0)
        ci = idx[consume]
        acc[ci] = (acc[ci] + digits[ci, k[ci] - rem[ci]]) % 10
        rem[ci] -= 1
        last[idx] = tok
        alive[idx[tok == env.EOS]] = False

    return RolloutBatch(tokens, lps, ents, fidx, lengths, cap, temperature)


def batch_answers(batch: RolloutBatch, cap: int | None = None) -> np.ndarray:
    """Digit of the last answer token among each row's first ``cap`` tokens, or -1."""
    toks = batch.tokens if cap is None else batch.tokens[:, :cap]
    is_ans = (toks >= env.ANS_BASE) & (toks < env.ANS_BASE + 10)
    if toks.shape[1] == 0:
        return np.full(batch.n, -1, dtype=np.int64)
    last = toks.shape[1] - 1 - np.argmax(is_ans[:, ::-1], axis=1)
    digit = toks[np.arange(batch.n), last] - env.ANS_BASE
    return np.where(is_ans.any(axis=1), digit, -1)


def rollout(
    params: PolicyParams,
    question: Question,
    cap: int,
    temperature: float,
    rng: np.random.Generator,
) -> Response:
    return rollout_batch(params, [question], cap, temperature, [rng]).response(0)


def replay_features(question: Question, tokens: Sequence[int], k_max: int = env.K_MAX) -> np.ndarray:
    """Dense feature rows of the states preceding each token."""
    state = env.initial_state(question)
    rows = []
    for tok in tokens:
        rows.append(env.features(state, k_max))
        state = env.step_state(state, question, tok)
    return np.array(rows).reshape(len(rows), env.feature_dim(k_max))


def token_logprobs(params: PolicyParams, feat_idx: np.ndarray, tokens: np.ndarray, temperature: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Log-probabilities of ``tokens`` given sparse feature indices.

    Returns ``(logprobs, probs)`` where ``probs`` is the full next-token
    distribution at each position.  Values match those recorded by
    :func:`rollout_batch` bit for bit.
    """
    lp_tab = state_table(params, temperature)
    sid = state_ids(feat_idx, params.k_max)
    lp = lp_tab[sid]
    chosen = np.take_along_axis(lp, np.asarray(tokens)[..., None], axis=-1)[..., 0]
    return chosen, np.exp(lp)
