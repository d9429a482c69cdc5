"""Deadline-driven dynamic provisioning for bag-of-tasks jobs, on a deterministic discrete-event simulator."""

from .accounting import PriceSchedule, close_lease, format_usd, job_cost_attribution, period_price, sla_outcome
from .config import (
    ClusterConfig,
    InjectedEvent,
    JobSpec,
    PoolConfig,
    RuntimeDistribution,
    WorkloadSpec,
    parse_configs,
    table1_cluster,
    table1_workload,
)
from .engine import EventKind, Kernel
from .model import MS_PER_HOUR, MS_PER_MINUTE, MS_PER_SECOND, Job, JobState, ResourcePool, Task, Trigger, Worker, transition
from .reports import RunReport, compare_policies, format_table1, hms, run_scenario, table1
from .scheduler import ProvisioningPolicy, Scheduler, dispatch, estimate_completion, required_extra
from .simulation import Simulation

__all__ = [
    "MS_PER_HOUR", "MS_PER_MINUTE", "MS_PER_SECOND",
    "ClusterConfig", "EventKind", "InjectedEvent", "Job", "JobSpec", "JobState", "Kernel", "PoolConfig",
    "PriceSchedule", "ProvisioningPolicy", "ResourcePool", "RunReport", "RuntimeDistribution", "Scheduler",
    "Simulation", "Task", "Trigger", "Worker", "WorkloadSpec", "close_lease", "compare_policies", "dispatch",
    "estimate_completion", "format_table1", "format_usd", "hms", "job_cost_attribution", "parse_configs",
    "period_price", "required_extra", "run_scenario", "sla_outcome", "table1", "table1_cluster", "table1_workload",
    "transition",
]
