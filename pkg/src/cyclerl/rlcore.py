"""Group-relative policy optimization with decoupled clipping.

Holds the length-capping reward, group-normalized advantages, the clipped
token-level surrogate loss with its exact gradient, and an Adam optimizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from . import env
from .env import Question
from .policy import PolicyParams, Response, RolloutBatch, _state_feat_idx, replay_features, state_ids, state_table

__all__ = [
    "ClipSpec",
    "Group",
    "LossStats",
    "OptimizerState",
    "capped_reward",
    "group_advantages",
    "batch_advantages",
    "surrogate_loss",
    "batch_surrogate_loss",
    "adam_step",
]

DEGENERATE_STD = 1e-8


@dataclass(frozen=True)
class ClipSpec:
    eps_low: float = 0.2
    eps_high: float = 0.28
    kl_coef: float = 0.0

    def __post_init__(self) -> None:
        if not 0 < self.eps_low < 1:
            raise ValueError(f"eps_low must lie in (0, 1), got {self.eps_low}")
        if self.eps_high < self.eps_low:
            raise ValueError("eps_high must be >= eps_low")
        if self.kl_coef < 0:
            raise ValueError("kl_coef must be >= 0")


def capped_reward(question: Question, response: Response | Sequence[int], cap: int) -> int:
    """1 iff a correct answer can be extracted from the first ``cap`` tokens."""
    if cap < 1:
        raise ValueError(f"cap must be >= 1, got {cap}")
    tokens = response.tokens if isinstance(response, Response) else response
    return env.verify(question, list(tokens[:cap]))


def group_advantages(rewards: Sequence[float]) -> np.ndarray:
    """(R - mean) / std with population std; all zeros if the group is degenerate."""
    r = np.asarray(rewards, dtype=np.float64)
    if r.ndim != 1 or r.size < 2:
        raise ValueError(f"group needs at least 2 rewards, got {r.size}")
    std = r.std()
    if std < DEGENERATE_STD:
        return np.zeros_like(r)
    return (r - r.mean()) / std


def batch_advantages(rewards: np.ndarray) -> np.ndarray:
    """Row-wise :func:`group_advantages` over a ``(n_groups, G)`` array."""
    return np.stack([group_advantages(row) for row in np.asarray(rewards, dtype=np.float64)])


@dataclass
class Group:
    """G responses to one question, with everything frozen at rollout time."""

    question: Question
    responses: list[Response]
    rewards: np.ndarray
    advantages: np.ndarray
    feats: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self) -> None:
        self.rewards = np.asarray(self.rewards, dtype=np.float64)
        self.advantages = np.asarray(self.advantages, dtype=np.float64)
        g = len(self.responses)
        if self.rewards.shape != (g,) or self.advantages.shape != (g,):
            raise ValueError("rewards and advantages must have one entry per response")

    @property
    def old_logprobs(self) -> list[np.ndarray]:
        return [r.logprobs for r in self.responses]


@dataclass
class LossStats:
    loss: float
    clip_frac: float
    n_tokens: int


def _token_weights(lengths: np.ndarray, rows: np.ndarray, n_groups: int, group_size: int, loss_norm: str) -> np.ndarray:
    if loss_norm == "response":
        return 1.0 / (np.maximum(lengths, 1) * group_size * n_groups)[rows]
    if loss_norm == "token":
        return np.full(len(rows), 1.0 / max(len(rows), 1))
    raise ValueError(f"loss_norm must be 'response' or 'token', got {loss_norm!r}")


def batch_surrogate_loss(
    params: PolicyParams,
    batch: RolloutBatch,
    advantages: np.ndarray,
    group_size: int,
    clip: ClipSpec,
    loss_norm: Literal["response", "token"] = "response",
) -> tuple[float, np.ndarray, LossStats]:
    """Clipped surrogate loss and gradient for a padded rollout batch.

    Rows of ``batch`` are grouped consecutively, ``group_size`` per
    question.  ``batch.logprobs`` serve as both the old-policy and
    the reference log-probabilities.
    """
    if batch.temperature != 1.0:
        raise ValueError("training batches must be sampled at temperature 1")
    n = batch.n
    if n % group_size:
        raise ValueError(f"batch of {n} rollouts is not a multiple of group size {group_size}")
    adv = np.asarray(advantages, dtype=np.float64).reshape(n)
    rows, fidx, toks, old_lp = batch.flat()
    sid = state_ids(fidx, params.k_max)
    lp_tab = state_table(params)
    new_lp = lp_tab[sid, toks]
    w = _token_weights(batch.lengths, rows, n // group_size, group_size, loss_norm)
    term, dterm, binding = _clipped_terms(new_lp, old_lp, adv[rows], clip)

    loss = -float((w * term).sum())
    # coefficient of d(new_lp) in the loss, per token
    coef = -w * dterm
    if clip.kl_coef > 0:
        kl, dkl = _k3_kl(new_lp, old_lp)
        loss += clip.kl_coef * float((w * kl).sum())
        coef = coef + clip.kl_coef * w * dkl

    grad = _state_grad(params, sid, toks, np.exp(lp_tab), coef)
    stats = LossStats(loss, float(binding.sum()) / max(len(toks), 1), len(toks))
    return loss, grad, stats


def _clipped_terms(new_lp, old_lp, adv, clip: ClipSpec):
    ratio = np.exp(new_lp - old_lp)
    clipped = np.clip(ratio, 1.0 - clip.eps_low, 1.0 + clip.eps_high)
    unclipped_term = ratio * adv
    term = np.minimum(unclipped_term, clipped * adv)
    binding = ((ratio > 1.0 + clip.eps_high) & (adv > 0)) | ((ratio < 1.0 - clip.eps_low) & (adv < 0))
    # d term / d new_lp: ratio * adv on the unclipped branch, 0 where the clip binds
    dterm = np.where(binding, 0.0, unclipped_term)
    return term, dterm, binding


def _k3_kl(new_lp, ref_lp):
    """Per-token k3 estimate of KL(new || ref) and its derivative in new_lp."""
    d = ref_lp - new_lp
    return np.exp(d) - d - 1.0, 1.0 - np.exp(d)


def _state_grad(params: PolicyParams, sid: np.ndarray, tokens: np.ndarray, p_tab: np.ndarray, coef: np.ndarray) -> np.ndarray:
    """Sum over tokens of ``coef * (onehot(token) - p) x feat``, pooled per scratch state."""
    n_states, V = p_tab.shape
    per_state = np.bincount(sid, weights=coef, minlength=n_states)
    per_choice = np.bincount(sid * V + tokens, weights=coef, minlength=n_states * V).reshape(n_states, V)
    v = per_choice - per_state[:, None] * p_tab
    phi = np.zeros((n_states, params.weights.shape[1]))
    np.put_along_axis(phi, _state_feat_idx(params.k_max), 1.0, axis=1)
    return v.T @ phi


def surrogate_loss(
    params: PolicyParams,
    groups: Sequence[Group],
    new_logprobs: Sequence[Sequence[np.ndarray]],
    clip: ClipSpec,
    loss_norm: Literal["response", "token"] = "response",
) -> tuple[float, np.ndarray]:
    """Clipped surrogate loss over a list of :class:`Group` objects.

    ``new_logprobs[g][i]`` are the current-policy per-token log-probs of
    response ``i`` in group ``g``.  Per-token features come from
    ``Group.feats`` when present, otherwise by replaying the scratchpad.
    """
    if len(new_logprobs) != len(groups):
        raise ValueError("one entry of new_logprobs per group required")
    n_groups = len(groups)
    n_total_tokens = sum(len(r) for g in groups for r in g.responses)
    loss = 0.0
    grad = np.zeros_like(params.weights)
    for g, grp in enumerate(groups):
        G = len(grp.responses)
        if len(new_logprobs[g]) != G:
            raise ValueError(f"group {g}: need new log-probs for all {G} responses")
        feats = grp.feats or [replay_features(grp.question, r.tokens, params.k_max) for r in grp.responses]
        for i, resp in enumerate(grp.responses):
            new = np.asarray(new_logprobs[g][i], dtype=np.float64)
            old = np.asarray(resp.logprobs, dtype=np.float64)
            if new.shape != old.shape or new.shape != (len(resp),):
                raise ValueError(f"group {g} response {i}: log-prob length mismatch")
            if len(resp) == 0:
                continue
            if loss_norm == "response":
                w = 1.0 / (len(resp) * G * n_groups)
            elif loss_norm == "token":
                w = 1.0 / n_total_tokens
            else:
                raise ValueError(f"loss_norm must be 'response' or 'token', got {loss_norm!r}")
            term, dterm, _ = _clipped_terms(new, old, grp.advantages[i], clip)
            loss -= w * term.sum()
            coef = -w * dterm
            if clip.kl_coef > 0:
                kl, dkl = _k3_kl(new, old)
                loss += clip.kl_coef * w * kl.sum()
                coef = coef + clip.kl_coef * w * dkl
            phi = np.asarray(feats[i], dtype=np.float64)
            z = phi @ params.weights.T
            pr = np.exp(z - z.max(axis=1, keepdims=True))
            pr /= pr.sum(axis=1, keepdims=True)
            v = -pr * coef[:, None]
            v[np.arange(len(resp)), resp.tokens] += coef
            grad += v.T @ phi
    return float(loss), grad


@dataclass
class OptimizerState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, params: PolicyParams) -> "OptimizerState":
        return cls(np.zeros_like(params.weights), np.zeros_like(params.weights), 0)

    def copy(self) -> "OptimizerState":
        return OptimizerState(self.m.copy(), self.v.copy(), self.step)


def adam_step(
    params: PolicyParams,
    grad: np.ndarray,
    state: OptimizerState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> tuple[PolicyParams, OptimizerState]:
    """One bias-corrected Adam update; inputs are not modified."""
    if grad.shape != params.weights.shape or state.m.shape != params.weights.shape:
        raise ValueError("params, grad and optimizer moments must share a shape")
    t = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * grad
    v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = m / (1.0 - beta1**t)
    v_hat = v / (1.0 - beta2**t)
    w = params.weights - lr * m_hat / (np.sqrt(v_hat) + eps)
    return PolicyParams(w), OptimizerState(m, v, t)
