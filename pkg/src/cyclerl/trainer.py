"""Training loop: scheduled caps, grouped rollouts, clipped updates, telemetry.

All randomness is derived from ``config.seed`` and the step/question/sample
indices through :class:`numpy.random.SeedSequence`, so a run is fully
reproducible and resuming from a checkpoint replays the remaining steps
exactly.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import env
from .env import Question
from .policy import PolicyParams, RolloutBatch, batch_answers, init_params, rollout_batch
from .rlcore import ClipSpec, OptimizerState, adam_step, batch_advantages, batch_surrogate_loss
from .schedule import ScheduleKind, ScheduleSpec, cap_at

__all__ = [
    "TrainConfig",
    "toy_config",
    "MetricsRecord",
    "EvalRecord",
    "CheckpointRecord",
    "TrainResult",
    "CheckpointError",
    "CheckpointNotFoundError",
    "CorruptCheckpointError",
    "CheckpointVersionError",
    "CHECKPOINT_VERSION",
    "METRICS_HEADER",
    "EVAL_HEADER",
    "train",
    "evaluate",
    "evaluate_batch",
    "save_checkpoint",
    "load_checkpoint",
    "load_config",
    "save_config",
    "read_metrics",
    "datasets",
]

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1

# stream tags for SeedSequence-derived generators
_QUESTIONS, _ROLLOUT, _EVAL, _TRAIN_SET, _EVAL_SET = 0, 1, 2, 3, 4


@dataclass(frozen=True)
class TrainConfig:
    """Everything that determines a training run.

    Defaults are desk-scale; the large-model settings were group size 32,
    128 questions per step, learning rate 1e-6 and 64 evaluation samples.
    """

    schedule: ScheduleSpec = field(
        default_factory=lambda: ScheduleSpec(ScheduleKind.COSINE, l_max=64, l_min=24, cycle_len=60, n_cycles=3)
    )
    group_size: int = 8
    batch_questions: int = 16
    inner_epochs: int = 2
    lr: float = 5e-3
    clip: ClipSpec = field(default_factory=ClipSpec)
    loss_norm: str = "response"
    train_temperature: float = 1.0
    eval_temperature: float = 0.6
    eval_samples: int = 16
    seed: int = 0
    n_train: int = 2000
    n_eval: int = 64
    eval_every: int = 10
    k_range: tuple[int, int] = (4, 8)
    k_max: int = env.K_MAX
    wait_bias: float = 1.5

    def __post_init__(self) -> None:
        if isinstance(self.schedule, dict):
            object.__setattr__(self, "schedule", ScheduleSpec.from_dict(self.schedule))
        if isinstance(self.clip, dict):
            object.__setattr__(self, "clip", ClipSpec(**self.clip))
        object.__setattr__(self, "k_range", tuple(int(k) for k in self.k_range))
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if self.batch_questions < 1:
            raise ValueError("batch_questions must be >= 1")
        if self.inner_epochs < 1:
            raise ValueError("inner_epochs must be >= 1")
        if not self.lr >= 0:
            raise ValueError("lr must be >= 0")
        if self.train_temperature != 1.0:
            raise ValueError("train_temperature must be 1.0; rollout log-probs feed the gradient directly")
        if self.eval_temperature <= 0:
            raise ValueError("eval_temperature must be > 0")
        if self.eval_samples < 1 or self.n_train < 1 or self.n_eval < 1 or self.eval_every < 1:
            raise ValueError("eval_samples, n_train, n_eval and eval_every must be >= 1")
        if self.loss_norm not in ("response", "token"):
            raise ValueError("loss_norm must be 'response' or 'token'")
        if not 1 <= self.k_range[0] <= self.k_range[1] <= self.k_max:
            raise ValueError(f"k_range {self.k_range} must satisfy 1 <= min <= max <= k_max={self.k_max}")

    @property
    def total_steps(self) -> int:
        return self.schedule.total_steps

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["schedule"] = self.schedule.to_dict()
        d["k_range"] = list(self.k_range)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)


def toy_config(seed: int = 0, **overrides) -> TrainConfig:
    """The documented desk-scale run: cosine caps 64/24, T=60, 3 cycles, k in [4, 8].

    Unlike the bare :class:`TrainConfig` defaults it samples 128 questions
    x 32 responses per step at ``lr=0.02``.  With 16 x 8 the WAIT-biased
    init rarely reaches a rewarded rollout and nothing is learned in three
    cycles.
    """
    base = TrainConfig(seed=seed, lr=0.02, batch_questions=128, group_size=32)
    return base.replace(**overrides)


def save_config(config: TrainConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n")


def load_config(path: str | Path) -> TrainConfig:
    with open(path) as f:
        return TrainConfig.from_dict(json.load(f))


METRICS_HEADER = ("step", "cap", "reward_mean", "pass1_train", "mean_len", "entropy_mean", "wait_per_1k", "loss", "clip_frac")
EVAL_HEADER = ("step", "cap", "pass1", "mean_len", "wait_per_1k", "entropy_mean")


@dataclass(frozen=True)
class MetricsRecord:
    step: int
    cap: int
    reward_mean: float
    pass1_train: float
    mean_len: float
    entropy_mean: float
    wait_per_1k: float
    loss: float
    clip_frac: float

    def row(self) -> list:
        return [getattr(self, k) for k in METRICS_HEADER]


@dataclass(frozen=True)
class EvalRecord:
    """Evaluation of the parameters after ``step`` updates."""

    step: int
    cap: int
    pass1: float
    mean_len: float
    wait_per_1k: float
    entropy_mean: float

    def row(self) -> list:
        return [getattr(self, k) for k in EVAL_HEADER]


@dataclass
class CheckpointRecord:
    step: int
    params: PolicyParams
    opt_state: OptimizerState
    config: TrainConfig
    version: int = CHECKPOINT_VERSION

    @property
    def rng_state(self) -> dict:
        # every generator is a pure function of (seed, step, indices)
        return {"seed": self.config.seed, "next_step": self.step}

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, CheckpointRecord):
            return NotImplemented
        return (
            self.version == other.version
            and self.step == other.step
            and self.config == other.config
            and np.array_equal(self.params.weights, other.params.weights)
            and np.array_equal(self.opt_state.m, other.opt_state.m)
            and np.array_equal(self.opt_state.v, other.opt_state.v)
            and self.opt_state.step == other.opt_state.step
        )


@dataclass
class TrainResult:
    final: CheckpointRecord
    metrics: list[MetricsRecord]
    evals: list[EvalRecord]
    out_dir: Path | None = None


class CheckpointError(Exception):
    pass


class CheckpointNotFoundError(CheckpointError, FileNotFoundError):
    pass


class CorruptCheckpointError(CheckpointError, ValueError):
    pass


class CheckpointVersionError(CheckpointError, ValueError):
    pass


def _checkpoint_doc(record: CheckpointRecord) -> dict:
    w = record.params.weights
    return {
        "format_version": record.version,
        "step": record.step,
        "params": {"shape": list(w.shape), "weights": [float(x) for x in w.ravel()]},
        "optimizer": {
            "step": record.opt_state.step,
            "m": [float(x) for x in record.opt_state.m.ravel()],
            "v": [float(x) for x in record.opt_state.v.ravel()],
        },
        "rng": record.rng_state,
        "config": record.config.to_dict(),
    }


def save_checkpoint(record: CheckpointRecord, path: str | Path) -> None:
    """Write a checkpoint as JSON; floats use shortest round-trip repr."""
    text = json.dumps(_checkpoint_doc(record), indent=1, sort_keys=True) + "\n"
    tmp = Path(str(path) + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> CheckpointRecord:
    path = Path(path)
    if not path.is_file():
        raise CheckpointNotFoundError(f"checkpoint not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptCheckpointError(f"cannot parse checkpoint {path}: {exc}") from exc
    if not isinstance(doc, dict) or "format_version" not in doc:
        raise CorruptCheckpointError(f"checkpoint {path} has no format_version")
    if doc["format_version"] != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"checkpoint {path} has format_version {doc['format_version']}, expected {CHECKPOINT_VERSION}"
        )
    try:
        shape = tuple(doc["params"]["shape"])
        weights = np.array(doc["params"]["weights"], dtype=np.float64).reshape(shape)
        opt = doc["optimizer"]
        m = np.array(opt["m"], dtype=np.float64).reshape(shape)
        v = np.array(opt["v"], dtype=np.float64).reshape(shape)
        config = TrainConfig.from_dict(doc["config"])
        return CheckpointRecord(
            step=int(doc["step"]),
            params=PolicyParams(weights),
            opt_state=OptimizerState(m, v, int(opt["step"])),
            config=config,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpointError(f"malformed checkpoint {path}: {exc}") from exc


def datasets(config: TrainConfig) -> tuple[list[Question], list[Question]]:
    """Train and held-out eval questions for a config."""
    train_set = env.gen_dataset([config.seed, _TRAIN_SET], config.n_train, config.k_range)
    eval_set = env.gen_dataset([config.seed, _EVAL_SET], config.n_eval, config.k_range)
    return train_set, eval_set


def _rng(*key: int) -> np.random.Generator:
    return np.random.default_rng(list(key))


def _correct(batch: RolloutBatch, questions: Sequence[Question]) -> np.ndarray:
    answers = np.array([q.answer for q in questions], dtype=np.int64)
    return (batch_answers(batch) == answers).astype(np.float64)


def _wait_per_1k(batch: RolloutBatch) -> float:
    n_tok = int(batch.lengths.sum())
    return 1000.0 * int((batch.tokens == env.WAIT).sum()) / n_tok if n_tok else 0.0


def evaluate_batch(
    params: PolicyParams,
    questions: Sequence[Question],
    n_samples: int,
    temperature: float,
    cap: int,
    seed: int = 0,
) -> tuple[float, float, RolloutBatch]:
    if not questions:
        raise ValueError("cannot evaluate on an empty question set")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    qs = [q for q in questions for _ in range(n_samples)]
    # common random numbers: question qi sees the same draws at every step
    u = np.concatenate([_rng(seed, _EVAL, qi).random((n_samples, cap)) for qi in range(len(questions))])
    batch = rollout_batch(params, qs, cap, temperature, uniforms=u)
    correct = _correct(batch, qs)
    pass1 = float(correct.reshape(len(questions), n_samples).mean(axis=1).mean())
    return pass1, float(batch.lengths.mean()), batch


def evaluate(
    params: PolicyParams,
    questions: Sequence[Question],
    n_samples: int,
    temperature: float,
    cap: int,
    seed: int = 0,
) -> tuple[float, float]:
    """Pass@1 (mean per-question success rate) and mean response length."""
    pass1, mean_len, _ = evaluate_batch(params, questions, n_samples, temperature, cap, seed)
    return pass1, mean_len


def _eval_record(config: TrainConfig, params: PolicyParams, eval_set, step: int) -> EvalRecord:
    cap = config.schedule.l_max
    pass1, mean_len, batch = evaluate_batch(params, eval_set, config.eval_samples, config.eval_temperature, cap, config.seed)
    wait_1k = _wait_per_1k(batch)
    ent = float(batch.entropies[batch.mask].mean())
    return EvalRecord(step, cap, pass1, mean_len, wait_1k, ent)


def train_step(
    config: TrainConfig,
    params: PolicyParams,
    opt: OptimizerState,
    train_set: Sequence[Question],
    t: int,
) -> tuple[PolicyParams, OptimizerState, MetricsRecord]:
    """One scheduled step: rollouts at the step's cap, then ``inner_epochs`` updates."""
    cap = cap_at(config.schedule, t)
    G, B = config.group_size, config.batch_questions
    q_idx = _rng(config.seed, _QUESTIONS, t).integers(len(train_set), size=B)
    qs = [train_set[i] for i in q_idx for _ in range(G)]
    u = _rng(config.seed, _ROLLOUT, t).random((B * G, cap))
    batch = rollout_batch(params, qs, cap, config.train_temperature, uniforms=u)

    # responses never outrun the cap they were sampled under, so the capped
    # reward and uncapped correctness coincide here
    rewards = _correct(batch, qs)
    pass1_train = float(rewards.mean())
    adv = batch_advantages(rewards.reshape(B, G)).ravel()

    losses, clip_fracs = [], []
    for _ in range(config.inner_epochs):
        loss, grad, stats = batch_surrogate_loss(params, batch, adv, G, config.clip, config.loss_norm)
        losses.append(loss)
        clip_fracs.append(stats.clip_frac)
        params, opt = adam_step(params, grad, opt, config.lr)

    wait_1k = _wait_per_1k(batch)
    rec = MetricsRecord(
        step=t,
        cap=cap,
        reward_mean=float(rewards.mean()),
        pass1_train=pass1_train,
        mean_len=float(batch.lengths.mean()),
        entropy_mean=float(batch.entropies[batch.mask].mean()),
        wait_per_1k=wait_1k,
        loss=float(np.mean(losses)),
        clip_frac=float(np.mean(clip_fracs)),
    )
    return params, opt, rec


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[list]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def read_metrics(path: str | Path) -> list[dict]:
    """Rows of a metrics or eval CSV with numeric values parsed."""
    out = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            out.append({k: (int(v) if k in ("step", "cap") else float(v)) for k, v in row.items()})
    return out


def _ckpt_path(out_dir: Path, step: int) -> Path:
    return out_dir / f"ckpt_{step:06d}.json"


def train(
    config: TrainConfig,
    out_dir: str | Path | None = None,
    resume_from: CheckpointRecord | str | Path | None = None,
    max_steps: int | None = None,
) -> TrainResult:
    """Run (or resume) a training run.

    Steps ``0 .. config.total_steps - 1`` each take the scheduler's cap.
    The eval set is scored at step 0, every ``eval_every`` steps and after
    the last step; checkpoints are written alongside those evaluations.
    With ``out_dir`` set, ``config.json``, ``metrics.csv``, ``eval.csv``
    and ``ckpt_*.json`` are written there.  ``max_steps`` stops early
    (used to produce mid-run checkpoints).
    """
    train_set, eval_set = datasets(config)
    if resume_from is not None:
        rec = resume_from if isinstance(resume_from, CheckpointRecord) else load_checkpoint(resume_from)
        if rec.config != config:
            raise ValueError("checkpoint config does not match the requested config")
        params, opt, start = rec.params.copy(), rec.opt_state.copy(), rec.step
    else:
        params = init_params(config.k_max, config.wait_bias)
        opt = OptimizerState.zeros_like(params)
        start = 0
    end = config.total_steps if max_steps is None else min(config.total_steps, max_steps)

    out = Path(out_dir) if out_dir is not None else None
    prior_metrics: list[list] = []
    prior_evals: list[list] = []
    if out is not None:
        try:
            out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise OSError(f"cannot create output directory {out}: {exc}") from exc
        if not os.access(out, os.W_OK):
            raise PermissionError(f"output directory {out} is not writable")
        save_config(config, out / "config.json")
        if start > 0:
            # keep records already produced up to the resume point; the eval
            # at ``start`` belongs to the original run and is not repeated
            if (out / "metrics.csv").exists():
                prior_metrics = [[r[k] for k in METRICS_HEADER] for r in read_metrics(out / "metrics.csv") if r["step"] < start]
            if (out / "eval.csv").exists():
                prior_evals = [[r[k] for k in EVAL_HEADER] for r in read_metrics(out / "eval.csv") if r["step"] <= start]

    metrics: list[MetricsRecord] = []
    evals: list[EvalRecord] = []

    def checkpoint(step: int) -> None:
        ev = _eval_record(config, params, eval_set, step)
        evals.append(ev)
        log.info("step %d: eval pass@1=%.3f mean_len=%.2f", step, ev.pass1, ev.mean_len)
        if out is not None:
            save_checkpoint(CheckpointRecord(step, params, opt, config), _ckpt_path(out, step))

    if start == 0:
        checkpoint(0)
    for t in range(start, end):
        params, opt, rec = train_step(config, params, opt, train_set, t)
        metrics.append(rec)
        done = t + 1
        if done % config.eval_every == 0 or done == end:
            checkpoint(done)
            if out is not None:
                _write_csv(out / "metrics.csv", METRICS_HEADER, prior_metrics + [m.row() for m in metrics])
                _write_csv(out / "eval.csv", EVAL_HEADER, prior_evals + [e.row() for e in evals])

    if out is not None and not metrics:
        _write_csv(out / "metrics.csv", METRICS_HEADER, prior_metrics)
        _write_csv(out / "eval.csv", EVAL_HEADER, prior_evals + [e.row() for e in evals])
    final = CheckpointRecord(end if end > start else start, params, opt, config)
    return TrainResult(final, metrics, evals, out)
