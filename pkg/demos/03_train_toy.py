"""Train on the toy task and watch length, WAIT usage and entropy cycle.

Three cosine cycles between caps 64 and 24.  Takes about 15 seconds.
"""

import numpy as np

from cyclerl import env, metrics, trainer

cfg = trainer.toy_config(seed=0)
res = trainer.train(cfg)

caps = np.array([m.cap for m in res.metrics])
mean_len = np.array([m.mean_len for m in res.metrics])
wait = np.array([m.wait_per_1k for m in res.metrics])
ent = np.array([m.entropy_mean for m in res.metrics])

print(" step  cap  mean_len  WAIT/1k  entropy")
for t in range(0, cfg.total_steps, 15):
    print(f"{t:5d} {caps[t]:4d} {mean_len[t]:9.1f} {wait[t]:8.1f} {ent[t]:8.3f}")

# Held-out accuracy is scored at the largest cap every few steps.
print("\neval pass@1:", " ".join(f"{e.step}:{e.pass1:.2f}" for e in res.evals[::3]))

# Where does each cycle's shortest-response step fall relative to the cap
# trough?  Here the policy follows the cap within a couple of steps.
for row in metrics.lag_report(mean_len, caps, cfg.schedule.cycle_len):
    print(f"cycle {row['cycle']}: cap trough at {row['cap_trough']}, length trough at {row['len_trough']} (lag {row['lag']})")

# Entropy dips during compression but does not collapse.
summary = metrics.entropy_summary(ent, window=5, cycle_len=cfg.schedule.cycle_len)
print("per-cycle smoothed entropy min:", np.round(summary.cycle_min, 3))

# Each eval is a (length, accuracy) operating point; keep the efficient ones.
front = metrics.pareto_export([(e.mean_len, e.pass1, f"step {e.step}") for e in res.evals])
print("Pareto points:", [(round(p.length, 1), round(p.accuracy, 3), p.label) for p in front])

# A trained response on a fresh question.  It reads every digit and answers,
# then repeats the answer: only the last answer token is scored and nothing
# rewards stopping early, so the tail fills whatever cap is allowed.
_, eval_set = trainer.datasets(cfg)
_, _, batch = trainer.evaluate_batch(res.final.params, eval_set[:1], 1, 0.6, 64)
print("\nquestion", eval_set[0].digits, "->", " ".join(env.TOKEN_NAMES[t] for t in batch.token_list(0)))
