"""
Cost versus time provisioning
=============================

The cost policy buys the fewest workers that still meet the deadline; the
time policy buys as many as the job can use. Sweeping the deadline shows
the price of finishing early.
"""

import numpy as np

from slaprov import MS_PER_MINUTE, compare_policies, table1_cluster, table1_workload

deadlines = np.arange(10, 65, 5)
table = []
for minutes in deadlines:
    cost, time = compare_policies(table1_cluster(), table1_workload(int(minutes) * MS_PER_MINUTE))
    table.append((cost.makespan, cost.extra_cost, time.makespan, time.extra_cost))
table = np.array(table, dtype=float)
table[:, [0, 2]] /= MS_PER_MINUTE
table[:, [1, 3]] /= 1e6

print("deadline | cost: finish  US$  | time: finish   US$")
for minutes, (cm, cc, tm, tc) in zip(deadlines, table):
    print(f"{minutes:>6}m  | {cm:>11.1f} {cc:>5.2f} | {tm:>11.1f} {tc:>5.2f}")

# %%
# The time policy is never slower and never cheaper. Past 60 minutes the
# static workers suffice on their own and neither policy spends anything.
assert (table[:, 2] <= table[:, 0]).all() and (table[:, 3] >= table[:, 1]).all()
