"""How the three cap schedules move over one cycle.

Every schedule starts a cycle at the largest cap, compresses to the
smallest, and expands back.  They differ in how abruptly they do it.
"""

import numpy as np

from cyclerl.schedule import ScheduleSpec, dump_curve

T = 24
kinds = ["stair", "cosine", "stair_cosine"]

# Caps are whole token counts, so each curve is rounded half-up.
for kind in kinds:
    spec = ScheduleSpec(kind, l_max=64, l_min=24, cycle_len=T)
    caps = np.array([c for _, c in dump_curve(spec, T)])
    bars = "".join(" .:-=+*#%@"[int(9 * (c - 24) / 40)] for c in caps)
    print(f"{kind:>13}  {bars}  mean cap {caps.mean():.1f}")

# The stair spends half the cycle at each extreme; the cosine is smooth;
# the stair-cosine holds plateaus at both ends and blends between them.
# Mean caps show how much generation budget each shape grants per cycle.

# The same spec scaled to long-context budgets:
big = ScheduleSpec("cosine", l_max=16384, l_min=8192, cycle_len=640)
print("\nlarge cosine caps at t = 0, 160, 320, 480:", [c for t, c in dump_curve(big, 481) if t % 160 == 0])
