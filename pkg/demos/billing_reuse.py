"""
Getting the most out of a paid hour
===================================

A dynamic worker is billed for the whole hour it started, so once its job
is done it stays around until the hour runs out. Any work that shows up in
the meantime gets it for free.
"""

from slaprov import (
    MS_PER_MINUTE,
    ClusterConfig,
    JobSpec,
    PoolConfig,
    WorkloadSpec,
    hms,
    run_scenario,
)

cluster = ClusterConfig(4, (PoolConfig(0, 90_000, 60 * MS_PER_MINUTE, 85_000, 64),))
workload = WorkloadSpec((
    JobSpec(1, 120, 2 * MS_PER_MINUTE, deadline=45 * MS_PER_MINUTE),
    JobSpec(2, 12, 2 * MS_PER_MINUTE, arrival=42 * MS_PER_MINUTE),  # no deadline
))
report = run_scenario(cluster, workload)

for job in report.jobs:
    print(f"job {job['job_id']}: finished {hms(job['finished_at'])}, dynamic workers bought {job['dynamic_acquired']}")

print("\nworker  origin   lease              tasks served")
for w in report.workers:
    lease = "-" if w["lease_end"] is None else f"{hms(w['lease_start'])}-{hms(w['lease_end'])}"
    print(f"{w['worker_id']:>6}  {w['origin']:<7}  {lease:<17}  {w['tasks_served']}")

# %%
# Job 2 has no deadline and never triggers a purchase, yet it runs on the
# two extra workers that job 1 paid for. The bill stays at two periods.
sim = report.simulation
for w in sim.dynamic_workers:
    jobs = sorted({job for job, _, _ in w.serving})
    print(f"worker {w.worker_id} served jobs {jobs}")
print(f"extra cost US${report.totals['extra_cost_usd']}, attributed {report.totals['cost_by_job']}")
