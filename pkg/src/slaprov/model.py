"""Jobs, tasks, workers, resource pools and the job lifecycle state machine."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

MS_PER_SECOND = 1_000
MS_PER_MINUTE = 60_000
MS_PER_HOUR = 3_600_000
MICROS_PER_USD = 1_000_000


class TaskStatus(Enum):
    PENDING = "Pending"
    RUNNING = "Running"
    DONE = "Done"
    FAILED = "Failed"
    CANCELLED = "Cancelled"


@dataclass
class Task:
    task_id: int
    job_id: int
    estimated_runtime: int
    actual_runtime: int
    status: TaskStatus = TaskStatus.PENDING
    worker_id: Optional[int] = None
    started_at: Optional[int] = None
    finished_at: Optional[int] = None
    attempts: int = 0

    def __post_init__(self) -> None:
        if self.estimated_runtime <= 0 or self.actual_runtime <= 0:
            raise ValueError(f"task {self.task_id}: runtimes must be positive")


class JobState(Enum):
    QOS = "QoS"
    QUEUED = "Queued"
    UNDERPROVISIONED = "Underprovisioned"
    PROVISIONED = "Provisioned"
    UNFEASIBLE = "Unfeasible"
    FINISHED = "Finished"


class Trigger(Enum):
    ADMIT = "Admit"
    NO_CAPACITY = "NoCapacity"
    DEADLINE_AT_RISK = "DeadlineAtRisk"
    DEADLINE_SAFE = "DeadlineSafe"
    DEADLINE_IMPOSSIBLE = "DeadlineImpossible"
    ALL_TASKS_DONE = "AllTasksDone"
    TASK_FAILED_FATALLY = "TaskFailedFatally"
    CANCEL = "Cancel"
    EARLY_COMPLETION_RECOVERY = "EarlyCompletionRecovery"


class FinishReason(Enum):
    COMPLETED = "Completed"
    FAILED_JOB = "FailedJob"
    CANCELLED_JOB = "CancelledJob"


FINISHING_TRIGGERS = {
    Trigger.ALL_TASKS_DONE: FinishReason.COMPLETED,
    Trigger.TASK_FAILED_FATALLY: FinishReason.FAILED_JOB,
    Trigger.CANCEL: FinishReason.CANCELLED_JOB,
}

# States a regular (deadline-free) job may never occupy.
PROVISIONING_STATES = frozenset({JobState.UNDERPROVISIONED, JobState.PROVISIONED, JobState.UNFEASIBLE})


class IllegalTransition(Exception):
    def __init__(self, state: Optional[JobState], trigger: Trigger, qos: bool):
        name = state.value if state is not None else "start"
        super().__init__(f"no edge from {name} on {trigger.value} (qos={qos})")
        self.state = state
        self.trigger = trigger


def next_state(state: Optional[JobState], trigger: Trigger, qos: bool) -> JobState:
    """Return the target of the edge ``state --trigger-->`` or raise IllegalTransition.

    ``state`` is None for a job that has not been admitted yet.
    """
    S = JobState
    if state is None:
        if trigger is Trigger.ADMIT:
            return S.QOS if qos else S.QUEUED
        raise IllegalTransition(state, trigger, qos)
    if state is S.FINISHED:
        raise IllegalTransition(state, trigger, qos)
    if not qos:
        # regular jobs only ever sit in Queued
        if state is S.QUEUED and trigger in FINISHING_TRIGGERS:
            return S.FINISHED
        raise IllegalTransition(state, trigger, qos)
    if trigger in FINISHING_TRIGGERS:
        return S.FINISHED

    if trigger is Trigger.NO_CAPACITY and state is S.QOS:
        return S.QUEUED
    if trigger is Trigger.DEADLINE_AT_RISK and state in (S.QOS, S.QUEUED, S.UNDERPROVISIONED, S.PROVISIONED):
        return S.UNDERPROVISIONED
    if trigger is Trigger.DEADLINE_SAFE and state in (S.QOS, S.QUEUED, S.UNDERPROVISIONED):
        return S.PROVISIONED
    if trigger is Trigger.DEADLINE_IMPOSSIBLE and state in (S.UNDERPROVISIONED, S.PROVISIONED):
        return S.UNFEASIBLE
    if trigger is Trigger.EARLY_COMPLETION_RECOVERY and state is S.UNFEASIBLE:
        return S.UNDERPROVISIONED
    raise IllegalTransition(state, trigger, qos)


@dataclass(frozen=True)
class StateChange:
    at: int
    source: Optional[JobState]
    trigger: Trigger
    target: JobState


@dataclass
class Job:
    job_id: int
    tasks: list[Task]
    submitted_at: int
    deadline: Optional[int] = None
    state: Optional[JobState] = None
    finished_at: Optional[int] = None
    finish_reason: Optional[FinishReason] = None
    user_estimate: int = 0
    history: list[StateChange] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.user_estimate and self.tasks:
            self.user_estimate = self.tasks[0].estimated_runtime

    @property
    def qos(self) -> bool:
        return self.deadline is not None

    @property
    def finished(self) -> bool:
        return self.state is JobState.FINISHED

    @property
    def estimate(self) -> int:
        """Current per-task runtime estimate (shared by all unfinished tasks)."""
        for task in self.tasks:
            if task.status is not TaskStatus.DONE:
                return task.estimated_runtime
        return self.user_estimate


def transition(job: Job, trigger: Trigger) -> JobState:
    """Pure lookup of the state ``job`` would move to on ``trigger``."""
    return next_state(job.state, trigger, job.qos)


def apply_transition(job: Job, trigger: Trigger, now: int) -> StateChange:
    target = transition(job, trigger)
    change = StateChange(now, job.state, trigger, target)
    job.state = target
    if target is JobState.FINISHED:
        job.finished_at = now
        job.finish_reason = FINISHING_TRIGGERS[trigger]
    job.history.append(change)
    return change


def remaining_tasks(job: Job) -> int:
    return sum(1 for t in job.tasks if t.status in (TaskStatus.PENDING, TaskStatus.RUNNING))


class WorkerStatus(Enum):
    BOOTING = "Booting"
    IDLE = "Idle"
    BUSY = "Busy"
    DECOMMISSIONED = "Decommissioned"


@dataclass
class Worker:
    """Single-slot executor. ``pool_id`` is None for static workers."""

    worker_id: int
    pool_id: Optional[int] = None
    status: WorkerStatus = WorkerStatus.IDLE
    task_id: Optional[int] = None
    lease_start: Optional[int] = None
    ready_at: int = 0
    releasable: bool = False
    bound_job: Optional[int] = None
    released_by: Optional[int] = None
    # (time, job_id or None) whenever the binding changes; used for per-period cost attribution
    bindings: list[tuple[int, Optional[int]]] = field(default_factory=list)
    # (job_id, start, end) for every task execution on this worker
    serving: list[tuple[int, int, int]] = field(default_factory=list)

    @property
    def static(self) -> bool:
        return self.pool_id is None

    @property
    def dynamic(self) -> bool:
        return self.pool_id is not None

    @property
    def live(self) -> bool:
        return self.status is not WorkerStatus.DECOMMISSIONED

    def bind(self, job_id: Optional[int], now: int) -> None:
        self.bound_job = job_id
        self.bindings.append((now, job_id))


@dataclass
class ResourcePool:
    pool_id: int
    boot_delay: int
    billing_period: int
    price_per_period: int
    max_instances: int
    acquired_count: int = 0

    def __post_init__(self) -> None:
        if self.billing_period <= 0:
            raise ValueError("billing_period must be positive")
        if self.price_per_period < 0 or self.boot_delay < 0 or self.max_instances < 0:
            raise ValueError("pool parameters must be non-negative")

    @property
    def headroom(self) -> int:
        return self.max_instances - self.acquired_count


def m1_small_pool(pool_id: int = 0, boot_delay: int = 90_000, max_instances: int = 64) -> ResourcePool:
    """On-demand single-core instance at US$0.085 per hour."""
    return ResourcePool(pool_id, boot_delay, MS_PER_HOUR, 85_000, max_instances)


def make_job(job_id: int, task_count: int, estimate: int, *, submitted_at: int = 0,
             deadline: Optional[int] = None, actual: Optional[int] = None, first_task_id: int = 0) -> Job:
    """Convenience constructor for a bag of identical tasks."""
    tasks = [Task(first_task_id + i, job_id, estimate, actual if actual is not None else estimate)
             for i in range(task_count)]
    return Job(job_id, tasks, submitted_at, deadline, user_estimate=estimate)
