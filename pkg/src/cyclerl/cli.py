"""Command-line entry point: ``train``, ``eval``, ``schedule`` and ``analyze``.

Exit codes: 0 on success, 1 on a usage error (bad or missing flag), 2 on a
runtime error such as an unreadable file or a corrupt checkpoint.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from . import env, metrics, trainer
from .schedule import ScheduleKind, ScheduleSpec, dump_curve, write_curve_csv

__all__ = ["main", "UsageError", "load_rollouts", "save_rollouts"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _positive_float(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {v}")
    return v


def save_rollouts(token_lists: Sequence[Sequence[int]], path: str | Path) -> None:
    """One JSON object per line: ``{"tokens": ["NEXT", "WAIT", ...]}``."""
    with open(path, "w") as f:
        for toks in token_lists:
            f.write(json.dumps({"tokens": [env.TOKEN_NAMES[t] for t in toks]}) + "\n")


def load_rollouts(path: str | Path) -> list[list[int]]:
    """Read a rollouts JSONL file; tokens may be names or integer ids."""
    out = []
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                toks = rec["tokens"] if isinstance(rec, dict) else rec
                out.append([t if isinstance(t, int) else env.token_id(t) for t in toks])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: bad rollout record: {exc}") from exc
    return out


# -- train ---------------------------------------------------------------------

_TRAIN_FLAGS = {
    "seed": "seed",
    "lr": "lr",
    "group_size": "group_size",
    "batch_questions": "batch_questions",
    "inner_epochs": "inner_epochs",
    "eval_every": "eval_every",
    "eval_samples": "eval_samples",
}


def _train_config(args) -> trainer.TrainConfig:
    # precedence: flag > config file > toy defaults
    doc = trainer.toy_config().to_dict()
    if args.config is not None:
        try:
            with open(args.config) as f:
                file_doc = json.load(f)
        except OSError as exc:
            raise RuntimeError(f"cannot read config {args.config}: {exc.strerror or exc}") from exc
        except json.JSONDecodeError as exc:
            raise RuntimeError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(file_doc, dict):
            raise RuntimeError(f"config {args.config} must be a JSON object")
        doc.update(file_doc)
        try:
            trainer.TrainConfig.from_dict(doc)
        except (TypeError, ValueError) as exc:
            raise RuntimeError(f"config {args.config}: {exc}") from exc
    for flag, name in _TRAIN_FLAGS.items():
        v = getattr(args, flag)
        if v is not None:
            doc[name] = v
    try:
        return trainer.TrainConfig.from_dict(doc)
    except (TypeError, ValueError) as exc:
        raise UsageError(f"cyclerl train: invalid flag value: {exc}") from exc


def _cmd_train(args) -> int:
    config = _train_config(args)
    result = trainer.train(config, args.out, resume_from=args.resume, max_steps=args.max_steps)
    last = result.evals[-1] if result.evals else None
    msg = f"trained {len(result.metrics)} steps -> {args.out}"
    if last is not None:
        msg += f"; step {last.step}: pass@1={last.pass1:.4f} mean_length={last.mean_len:.2f}"
    print(msg)
    return 0


# -- eval ----------------------------------------------------------------------


def _cmd_eval(args) -> int:
    rec = trainer.load_checkpoint(args.ckpt)
    cfg = rec.config
    _, eval_set = trainer.datasets(cfg)
    if args.questions is not None:
        eval_set = eval_set[: args.questions]
    cap = args.cap if args.cap is not None else cfg.schedule.l_max
    seed = cfg.seed if args.seed is None else args.seed
    pass1, mean_len, batch = trainer.evaluate_batch(rec.params, eval_set, args.n, args.temp, cap, seed)
    print(f"pass@1={pass1:.4f} mean_length={mean_len:.2f}")
    if args.rollouts_out is not None:
        save_rollouts([batch.token_list(i) for i in range(batch.n)], args.rollouts_out)
    return 0


# -- schedule ------------------------------------------------------------------


def _cmd_schedule(args) -> int:
    try:
        spec = ScheduleSpec(ScheduleKind(args.kind), args.lmax, args.lmin, args.cycle)
    except ValueError as exc:
        raise UsageError(f"cyclerl schedule: invalid --lmax/--lmin/--cycle: {exc}") from exc
    curve = dump_curve(spec, args.steps)
    if args.out is None:
        print("step,cap")
        for t, c in curve:
            print(f"{t},{c}")
    else:
        write_curve_csv(curve, args.out)
    return 0


# -- analyze -------------------------------------------------------------------


def _cmd_acc_cr(args) -> int:
    table = metrics.load_bench_table(args.table)
    if args.model is not None:
        if args.model not in table:
            raise UsageError(f"cyclerl analyze acc-cr: --model {args.model!r} not in {args.table}")
        rep = metrics.acc_cr(table[args.model], method=args.method)
        print("bench,delta_acc,cr")
        for name, d, c in zip(rep.names, rep.delta_acc, rep.cr):
            print(f"{name},{d:.4f},{c:.4f}")
        print(f"{args.model} acc/cr={rep.aggregate:.4f}")
        return 0
    for model, rows in table.items():
        print(f"{model} acc/cr={metrics.acc_cr(rows, method=args.method).aggregate:.4f}")
    return 0


def _cmd_tokens(args) -> int:
    try:
        markers = {env.token_id(m.strip()) for m in args.markers.split(",") if m.strip()}
    except ValueError as exc:
        raise UsageError(f"cyclerl analyze tokens: --markers: {exc}") from exc
    if not markers:
        raise UsageError("cyclerl analyze tokens: --markers needs at least one token name")
    per_resp, per_1k = metrics.marker_frequency(load_rollouts(args.rollouts), markers)
    print(f"per_response={per_resp:.4f} per_1k={per_1k:.2f}")
    return 0


def _cmd_pareto(args) -> int:
    front = metrics.pareto_export(metrics.load_points(args.points))
    if args.out is None:
        metrics.write_points(front, sys.stdout)
    else:
        with open(args.out, "w", newline="") as f:
            metrics.write_points(front, f)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cyclerl", description="Cyclic length-cap RL on a toy chain-sum task.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.required = True

    t = sub.add_parser(
        "train",
        help="run a training job",
        description="Train a policy. Precedence for every field: flag > --config file > toy defaults.",
    )
    t.add_argument("--config", help="JSON file with TrainConfig fields (missing fields use toy defaults)")
    t.add_argument("--out", required=True, help="output directory for config, CSV logs and checkpoints")
    t.add_argument("--seed", type=int, help="master seed (overrides the file)")
    t.add_argument("--lr", type=float, help="Adam learning rate")
    t.add_argument("--group-size", type=int, help="responses per question (G)")
    t.add_argument("--batch-questions", type=int, help="questions per step")
    t.add_argument("--inner-epochs", type=int, help="optimizer passes per rollout batch")
    t.add_argument("--eval-every", type=int, help="evaluate and checkpoint every N steps")
    t.add_argument("--eval-samples", type=int, help="samples per eval question")
    t.add_argument("--max-steps", type=_positive_int, help="stop after this many steps")
    t.add_argument("--resume", help="checkpoint to resume from; must match the resolved config")
    t.set_defaults(func=_cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint", description="Score a checkpoint on its held-out question set.")
    e.add_argument("--ckpt", required=True, help="checkpoint JSON file")
    e.add_argument("--n", type=_positive_int, default=16, help="samples per question (default 16)")
    e.add_argument("--temp", type=_positive_float, default=0.6, help="sampling temperature (default 0.6)")
    e.add_argument("--cap", type=_positive_int, help="token cap (default: the run's l_max)")
    e.add_argument("--questions", type=_positive_int, help="use only the first N eval questions")
    e.add_argument("--seed", type=int, help="sampling seed (default: the run's seed)")
    e.add_argument("--rollouts-out", help="write sampled rollouts as JSONL for 'analyze tokens'")
    e.set_defaults(func=_cmd_eval)

    s = sub.add_parser("schedule", help="dump a cap curve", description="Write the per-step token cap as step,cap CSV.")
    s.add_argument("--kind", required=True, choices=[k.value for k in ScheduleKind], help="scheduler shape")
    s.add_argument("--lmax", type=_positive_int, required=True, help="largest cap")
    s.add_argument("--lmin", type=_positive_int, required=True, help="smallest cap")
    s.add_argument("--cycle", type=int, required=True, help="cycle length T in steps (>= 2)")
    s.add_argument("--steps", type=_positive_int, required=True, help="number of steps to dump")
    s.add_argument("--out", help="CSV path (default: stdout)")
    s.set_defaults(func=_cmd_schedule)

    a = sub.add_parser("analyze", help="metrics over tables, rollouts and points", description="Analysis tools.")
    asub = a.add_subparsers(dest="analysis", metavar="ANALYSIS", parser_class=_Parser)
    asub.required = True
    ac = asub.add_parser("acc-cr", help="accuracy gain over compression ratio", description="Aggregate mean(dAcc) / mean(CR) per model.")
    ac.add_argument("--table", required=True, help="CSV with model,bench,acc_init,len_init,acc_cur,len_cur")
    ac.add_argument("--model", help="report one model with per-benchmark rows")
    ac.add_argument("--method", choices=["ratio_of_means", "mean_of_ratios"], default="ratio_of_means", help="aggregation rule")
    ac.set_defaults(func=_cmd_acc_cr)
    at = asub.add_parser("tokens", help="marker token frequency", description="Count marker tokens in a rollouts JSONL file.")
    at.add_argument("--rollouts", required=True, help='JSONL, one {"tokens": [...]} per line')
    at.add_argument("--markers", default="WAIT", help="comma-separated token names (default WAIT)")
    at.set_defaults(func=_cmd_tokens)
    ap = asub.add_parser("pareto", help="non-dominated (length, accuracy) points", description="Export the Pareto frontier.")
    ap.add_argument("--points", required=True, help="CSV with length,accuracy[,label]")
    ap.add_argument("--out", help="CSV path (default: stdout)")
    ap.set_defaults(func=_cmd_pareto)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.verbose:
            logging.basicConfig(level=logging.INFO, format="%(message)s")
        return args.func(args)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, RuntimeError, ValueError, trainer.CheckpointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
