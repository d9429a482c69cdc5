"""Seeded random scenario generator for the property and acceptance suites."""

import random

from slaprov.accounting import PeakWindow
from slaprov.config import ClusterConfig, InjectedEvent, JobSpec, PoolConfig, RuntimeDistribution, WorkloadSpec
from slaprov.model import MS_PER_HOUR, MS_PER_MINUTE, MS_PER_SECOND
from slaprov.scheduler import ProvisioningPolicy
from fractions import Fraction


def random_cluster(rng, policy=ProvisioningPolicy.COST_OPTIMIZATION):
    period = rng.choice([10 * MS_PER_MINUTE, 30 * MS_PER_MINUTE, MS_PER_HOUR])
    pool = PoolConfig(0, rng.choice([0, 30 * MS_PER_SECOND, 90 * MS_PER_SECOND, 180 * MS_PER_SECOND]),
                      period, rng.randint(1_000, 200_000), rng.randint(1, 64))
    windows = ()
    if rng.random() < 0.3:
        start = rng.randrange(0, 12) * MS_PER_HOUR
        windows = (PeakWindow(start, start + rng.randint(1, 6) * MS_PER_HOUR, Fraction(rng.choice([3, 5, 7]), 2)),)
    return ClusterConfig(rng.randint(1, 6), (pool,), policy=policy, peak_windows=windows)


def random_job(rng, job_id, static, qos=None, jitter=True):
    tasks = rng.randint(1, 64)
    est = rng.randint(10, 600) * MS_PER_SECOND
    if qos is None:
        qos = rng.random() < 0.75
    deadline = None
    if qos:
        serial = -(-tasks // static) * est
        deadline = max(MS_PER_SECOND, int(serial * rng.uniform(0.05, 1.5)))
    runtime = None
    if jitter and rng.random() < 0.5:
        runtime = RuntimeDistribution("uniform", lo=max(1, int(est * 0.7)), hi=int(est * 1.3), seed=rng.randrange(2**31))
    arrival = 0 if job_id == 0 else rng.randint(0, 30) * MS_PER_MINUTE
    return JobSpec(job_id, tasks, est, arrival, runtime, deadline)


def random_scenario(seed, *, faults=False, qos_only=False, jitter=True, max_jobs=4,
                    policy=ProvisioningPolicy.COST_OPTIMIZATION):
    rng = random.Random(seed)
    cluster = random_cluster(rng, policy)
    jobs = tuple(random_job(rng, i, cluster.static_workers, True if qos_only else None, jitter)
                 for i in range(rng.randint(1, max_jobs)))
    events = []
    if faults:
        horizon = 60 * MS_PER_MINUTE
        for _ in range(rng.randint(0, 2)):
            events.append(InjectedEvent("cancel", rng.randint(0, horizon), job_id=rng.choice(jobs).job_id))
        for _ in range(rng.randint(0, 4)):
            events.append(InjectedEvent("worker_failure", rng.randint(0, horizon)))
    return cluster, WorkloadSpec(jobs, tuple(events))
