"""
Following one job through its states
====================================

The user says each task takes four minutes; they actually take about two.
The scheduler buys workers against the pessimistic estimate, then learns
from finished tasks and lets the surplus go.
"""

from slaprov import (
    MS_PER_MINUTE,
    ClusterConfig,
    JobSpec,
    PoolConfig,
    RuntimeDistribution,
    WorkloadSpec,
    hms,
    run_scenario,
)

cluster = ClusterConfig(2, (PoolConfig(0, 60_000, 60 * MS_PER_MINUTE, 85_000, 32),))
runtime = RuntimeDistribution("uniform", lo=100_000, hi=140_000, seed=11)
workload = WorkloadSpec((JobSpec(1, 40, 4 * MS_PER_MINUTE, actual_runtime=runtime, deadline=40 * MS_PER_MINUTE),))
report = run_scenario(cluster, workload)
sim = report.simulation

print("state changes")
for at, source, trigger, target in report.job(1)["state_history"]:
    print(f"  {hms(at)}  {source or 'start':>16} -> {target:<16} on {trigger}")

print("\nprovisioning events")
for row in sim.trace:
    if row.kind in ("Request", "Acquire", "Release", "Decommission"):
        print(f"  {hms(row.time)}  {row.kind:<12} worker={row.worker if row.worker is not None else '-'}  {row.detail}")

job = report.job(1)
print(f"\nfinished {hms(job['finished_at'])} against a {hms(job['deadline'])} deadline; "
      f"margin {job['margin'] // 1000} s; extra cost US${report.totals['extra_cost_usd']}")
