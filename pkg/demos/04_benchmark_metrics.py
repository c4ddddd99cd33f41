"""Accuracy gain per unit of compression on the shipped benchmark table.

For each model, dAcc = max(acc_cur / acc_init - 1, 0) and CR = len_cur /
len_init per benchmark.  The headline score is mean(dAcc) / mean(CR).
"""

from cyclerl import metrics

table = metrics.load_bench_table(metrics.bench_table_path())

print(f"{'model':<28} {'ratio of means':>15} {'mean of ratios':>15}")
for model, rows in table.items():
    a = metrics.acc_cr(rows).aggregate
    b = metrics.acc_cr(rows, method="mean_of_ratios").aggregate
    print(f"{model:<28} {a:15.3f} {b:15.3f}")

# The two aggregations can disagree by more than a rounding step, which is
# why the ratio of means is the default: it reproduces the published scores.

# One benchmark as an accuracy/length trade-off: which models sit on the
# frontier of short-and-accurate?
points = [
    (r.len_cur, r.acc_cur, model)
    for model, rows in table.items()
    if model.endswith("1.5B")
    for r in rows
    if r.name == "AIME24"
]
for p in metrics.pareto_export(points):
    print(f"AIME24 frontier: {p.label:<28} len {p.length:7.0f}  acc {p.accuracy:.1f}")
