"""The chain-sum task the policy learns.

A question is a list of digits; the answer is their sum mod 10.  The policy
reads one digit per NEXT token into a running scratch accumulator, may emit
WAIT as filler, and answers with ANS_d.  The last answer token counts.
"""

import numpy as np

from cyclerl import env, policy, rlcore

q = env.Question.from_digits([3, 9, 4, 7, 1])
gold = env.golden_tokens(q)
print("digits", q.digits, "answer", q.answer)
print("golden response:", [env.TOKEN_NAMES[t] for t in gold])

# The length-capping reward only looks at the first `cap` tokens, so a
# response that answers late earns nothing under a tight cap.
for cap in (q.k, q.k + 1, q.k + 2):
    print(f"  cap {cap}: reward {rlcore.capped_reward(q, gold, cap)}")

padded = [env.WAIT] * 6 + gold
print("with 6 WAITs in front:", [rlcore.capped_reward(q, padded, c) for c in (q.k + 2, q.k + 8)], "at caps", (q.k + 2, q.k + 8))

# The untrained policy leans on WAIT: its only nonzero weight is a bias
# toward that token.
params = policy.init_params()
batch = policy.rollout_batch(params, [q] * 200, 64, 1.0, uniforms=np.random.default_rng(0).random((200, 64)))
share = (batch.tokens == env.WAIT).sum() / batch.lengths.sum()
print(f"\ninitial policy: WAIT share {share:.2f}, mean length {batch.lengths.mean():.1f}")
print("first sampled response:", " ".join(env.TOKEN_NAMES[t] for t in batch.token_list(0)[:16]), "...")
