"""
Replaying the four reference scenarios
======================================

One job of 120 two-minute tasks runs on four static workers, with no
deadline and then with deadlines of 45, 30 and 15 minutes. Dynamic
workers boot in 90 s and cost US$0.085 per started hour.
"""

import numpy as np

from slaprov import MS_PER_MINUTE, format_table1, table1

rows = table1()
print(format_table1(rows))

# The measured runs carry about a minute of overhead on the baseline; the
# model gives the ideal 60:00 exactly.
baseline = rows[0]
print(f"\nbaseline makespan: {baseline.makespan / MS_PER_MINUTE:.1f} min")

# %%
# How much does the boot delay matter?
# -------------------------------------
# The tight deadlines are sensitive to how long a new worker takes to come
# up: the later the extra workers arrive, the more of them are needed.

boots = np.array([0, 30, 90, 180, 300]) * 1000
counts = np.array([[r.dynamic for r in table1(boot_delay=int(b))[1:]] for b in boots])
print("\nboot delay (s) | 45min 30min 15min")
for b, row in zip(boots // 1000, counts):
    print(f"{b:>14} | {row[0]:>5} {row[1]:>5} {row[2]:>5}")
