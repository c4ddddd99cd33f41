"""Chain-sum reasoning environment.

A question is a list of digits; the answer is their sum mod 10.  A response
walks a scratchpad automaton: ``NEXT`` consumes one digit into the running
sum, ``WAIT`` does nothing (verification filler), ``ANS_d`` commits an
answer and ``EOS`` ends the response.  The last ``ANS_d`` in a response is
its final answer.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "NEXT",
    "WAIT",
    "ANS_BASE",
    "EOS",
    "PAD",
    "VOCAB_SIZE",
    "TOKEN_NAMES",
    "K_MAX",
    "ans_token",
    "token_id",
    "Question",
    "ScratchState",
    "initial_state",
    "step_state",
    "feature_dim",
    "feature_index",
    "features",
    "extract_answer",
    "verify",
    "golden_tokens",
    "gen_dataset",
    "save_dataset",
    "load_dataset",
]

NEXT = 0
WAIT = 1
ANS_BASE = 2
EOS = 12
PAD = 13
VOCAB_SIZE = 14
K_MAX = 12

TOKEN_NAMES = ("NEXT", "WAIT", *(f"ANS_{d}" for d in range(10)), "EOS", "PAD")


def ans_token(d: int) -> int:
    return ANS_BASE + d


def token_id(name: str) -> int:
    """Vocabulary index of a token name such as ``"WAIT"`` or ``"ANS_3"``."""
    try:
        return TOKEN_NAMES.index(name.upper())
    except ValueError:
        raise ValueError(f"unknown token name {name!r}") from None


@dataclass(frozen=True)
class Question:
    digits: tuple[int, ...]
    answer: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "digits", tuple(int(d) for d in self.digits))
        if not self.digits:
            raise ValueError("question needs at least one digit")
        if any(not 0 <= d <= 9 for d in self.digits):
            raise ValueError(f"digits must lie in [0, 9]: {self.digits}")
        if self.answer != sum(self.digits) % 10:
            raise ValueError(f"answer {self.answer} != sum(digits) mod 10")

    @classmethod
    def from_digits(cls, digits: Iterable[int]) -> "Question":
        digits = tuple(int(d) for d in digits)
        return cls(digits, sum(digits) % 10)

    @property
    def k(self) -> int:
        return len(self.digits)


@dataclass(frozen=True)
class ScratchState:
    acc: int
    remaining: int
    last_token: int


def initial_state(question: Question) -> ScratchState:
    # PAD doubles as the start-of-response marker in the last-token slot
    return ScratchState(acc=0, remaining=question.k, last_token=PAD)


def step_state(state: ScratchState, question: Question, token: int) -> ScratchState:
    """Advance the scratchpad by one emitted token."""
    if token == NEXT and state.remaining > 0:
        digit = question.digits[question.k - state.remaining]
        return ScratchState((state.acc + digit) % 10, state.remaining - 1, token)
    return ScratchState(state.acc, state.remaining, token)


def feature_dim(k_max: int = K_MAX) -> int:
    return 10 + (k_max + 1) + VOCAB_SIZE + 1


def feature_index(state: ScratchState, k_max: int = K_MAX) -> tuple[int, int, int, int]:
    """Positions of the four active entries of :func:`features`."""
    rem_off = 10
    last_off = rem_off + k_max + 1
    bias = last_off + VOCAB_SIZE
    return (state.acc, rem_off + min(state.remaining, k_max), last_off + state.last_token, bias)


def features(state: ScratchState, k_max: int = K_MAX) -> np.ndarray:
    """One-hot(acc) + one-hot(remaining) + one-hot(last token) + bias."""
    x = np.zeros(feature_dim(k_max))
    x[list(feature_index(state, k_max))] = 1.0
    return x


def extract_answer(tokens: Sequence[int]) -> int | None:
    for tok in reversed(tokens):
        if ANS_BASE <= tok < ANS_BASE + 10:
            return int(tok) - ANS_BASE
    return None


def verify(question: Question, tokens: Sequence[int]) -> int:
    return int(extract_answer(tokens) == question.answer)


def golden_tokens(question: Question) -> list[int]:
    return [NEXT] * question.k + [ans_token(question.answer), EOS]


def gen_dataset(seed: int, n: int, k_range: tuple[int, int]) -> list[Question]:
    """Draw ``n`` questions with ``k`` uniform in ``k_range`` (inclusive)."""
    k_min, k_max = k_range
    if not 1 <= k_min <= k_max:
        raise ValueError(f"invalid k_range {k_range}: need 1 <= k_min <= k_max")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    rng = np.random.default_rng(seed)
    ks = rng.integers(k_min, k_max + 1, size=n)
    return [Question.from_digits(rng.integers(0, 10, size=int(k))) for k in ks]


def save_dataset(questions: Iterable[Question], path: str | Path) -> None:
    with open(path, "w") as f:
        for q in questions:
            f.write(json.dumps({"digits": list(q.digits), "answer": q.answer}) + "\n")


def load_dataset(path: str | Path) -> list[Question]:
    out = []
    with open(path) as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                out.append(Question(tuple(rec["digits"]), int(rec["answer"])))
    return out
