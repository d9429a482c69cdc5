"""Admission control, runtime estimation, deadline-driven provisioning decisions and dispatch.

Every decision is a function of a :class:`ClusterSnapshot`, a read-only view of
the cluster at one instant. The only state the :class:`Scheduler` keeps is the
list of observed task runtimes per job and the log of resource grants.
"""

from __future__ import annotations

import heapq
import logging
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Mapping, Optional, Sequence, Union

from .engine import EventKind
from .model import (
    Job,
    JobState,
    ResourcePool,
    TaskStatus,
    Trigger,
    Worker,
    WorkerStatus,
    next_state,
)

logger = logging.getLogger(__name__)


class ProvisioningPolicy(Enum):
    COST_OPTIMIZATION = "cost"
    TIME_OPTIMIZATION = "time"


class NoWorkers(Exception):
    """The job has queued tasks but no worker could ever run them."""


class DuplicateJob(Exception):
    pass


# -- snapshot -----------------------------------------------------------------


@dataclass(frozen=True)
class WorkerView:
    worker_id: int
    static: bool
    status: WorkerStatus
    ready_at: int = 0
    bound_job: Optional[int] = None
    releasable: bool = False
    task_id: Optional[int] = None
    task_job: Optional[int] = None
    started_at: Optional[int] = None
    lease_start: Optional[int] = None
    billing_period: Optional[int] = None

    @property
    def live(self) -> bool:
        return self.status is not WorkerStatus.DECOMMISSIONED


@dataclass(frozen=True)
class JobView:
    job_id: int
    submitted_at: int
    estimate: int
    deadline: Optional[int] = None
    state: Optional[JobState] = None
    queued: tuple[int, ...] = ()
    running: tuple[int, ...] = ()

    @property
    def qos(self) -> bool:
        return self.deadline is not None

    @property
    def finished(self) -> bool:
        return self.state is JobState.FINISHED

    @property
    def remaining(self) -> int:
        return len(self.queued) + len(self.running)

    @property
    def priority(self) -> tuple[int, int]:
        return (self.submitted_at, self.job_id)


@dataclass(frozen=True)
class ClusterSnapshot:
    now: int
    workers: tuple[WorkerView, ...] = ()
    jobs: tuple[JobView, ...] = ()
    headroom: Mapping[int, int] = field(default_factory=dict)

    def job(self, job_id: int) -> JobView:
        for jv in self.jobs:
            if jv.job_id == job_id:
                return jv
        raise KeyError(job_id)

    def worker(self, worker_id: int) -> WorkerView:
        for wv in self.workers:
            if wv.worker_id == worker_id:
                return wv
        raise KeyError(worker_id)

    def estimate_of(self, job_id: int) -> int:
        return self.job(job_id).estimate

    def free_at(self, w: WorkerView) -> int:
        """Earliest instant the worker is expected to accept a new task."""
        if w.status is WorkerStatus.BOOTING:
            return max(self.now, w.ready_at)
        if w.status is WorkerStatus.BUSY:
            return max(self.now, w.started_at + self.estimate_of(w.task_job))
        return self.now

    def is_shared(self, w: WorkerView) -> bool:
        """Static workers and unbound (or orphaned) dynamic workers serve any job."""
        if w.static or w.bound_job is None:
            return True
        try:
            return self.job(w.bound_job).finished
        except KeyError:
            return True

    def with_estimate(self, job_id: int, estimate: int) -> "ClusterSnapshot":
        jobs = tuple(replace(j, estimate=estimate) if j.job_id == job_id else j for j in self.jobs)
        return replace(self, jobs=jobs)

    def with_job(self, jv: JobView) -> "ClusterSnapshot":
        return replace(self, jobs=self.jobs + (jv,))

    def with_released(self, worker_ids: Iterable[int]) -> "ClusterSnapshot":
        ids = set(worker_ids)
        workers = []
        for w in self.workers:
            if w.worker_id in ids:
                if w.status is WorkerStatus.BUSY:
                    w = replace(w, releasable=True)
                else:
                    w = replace(w, releasable=True, bound_job=None)
            workers.append(w)
        return replace(self, workers=tuple(workers))


def view_of_worker(w: Worker, tasks: Mapping[int, "object"], billing_period: Optional[int] = None) -> WorkerView:
    task = tasks[w.task_id] if w.task_id is not None else None
    return WorkerView(
        worker_id=w.worker_id,
        static=w.static,
        status=w.status,
        ready_at=w.ready_at,
        bound_job=w.bound_job,
        releasable=w.releasable,
        task_id=w.task_id,
        task_job=task.job_id if task is not None else None,
        started_at=task.started_at if task is not None else None,
        lease_start=w.lease_start,
        billing_period=billing_period,
    )


def view_of_job(job: Job) -> JobView:
    queued = tuple(t.task_id for t in job.tasks if t.status is TaskStatus.PENDING)
    running = tuple(t.task_id for t in job.tasks if t.status is TaskStatus.RUNNING)
    return JobView(job.job_id, job.submitted_at, job.estimate, job.deadline, job.state, queued, running)


def snapshot_of(now: int, jobs: Iterable[Job], workers: Iterable[Worker],
                pools: Iterable[ResourcePool] = ()) -> ClusterSnapshot:
    """Freeze live model objects into a snapshot."""
    jobs, pools = list(jobs), list(pools)
    tasks = {t.task_id: t for j in jobs for t in j.tasks}
    periods = {p.pool_id: p.billing_period for p in pools}
    return ClusterSnapshot(
        now=now,
        workers=tuple(view_of_worker(w, tasks, periods.get(w.pool_id)) for w in sorted(workers, key=lambda w: w.worker_id)),
        jobs=tuple(view_of_job(j) for j in jobs if j.state is not None),
        headroom={p.pool_id: p.headroom for p in pools},
    )


# -- dry run ------------------------------------------------------------------


def dry_run(snapshot: ClusterSnapshot, job_id: int, extra: int = 0, boot_delay: int = 0,
            exclude: Iterable[int] = ()) -> int:
    """Predicted finish time of ``job_id`` under the dispatcher's own rules.

    QoS jobs at or ahead of the target in priority order are replayed with a
    greedy list schedule: at every instant, tasks in FIFO order take an idle
    worker bound to their job first, then the lowest-id shared worker.
    ``extra`` phantom workers bound to the target become free at
    ``now + boot_delay``. Workers in ``exclude`` finish their current task but
    take no new ones.
    """
    now = snapshot.now
    target = snapshot.job(job_id)
    excluded = set(exclude)

    finish = now
    for w in snapshot.workers:
        if w.status is WorkerStatus.BUSY and w.task_job == job_id:
            finish = max(finish, snapshot.free_at(w))
    if not target.queued:
        return finish

    ahead = sorted(
        (j for j in snapshot.jobs
         if j.qos and not j.finished and j.queued and (j.priority <= target.priority)),
        key=lambda j: j.priority,
    ) if target.qos else [target]
    ahead_ids = {j.job_id for j in ahead}
    counts = {j.job_id: len(j.queued) for j in ahead}
    durations = {j.job_id: j.estimate for j in ahead}

    bound_of: dict[int, Optional[int]] = {}
    heap: list[tuple[int, int]] = []
    for w in snapshot.workers:
        if not w.live or w.worker_id in excluded:
            continue
        if snapshot.is_shared(w):
            bound_of[w.worker_id] = None
        elif w.bound_job in ahead_ids:
            bound_of[w.worker_id] = w.bound_job
        else:
            continue
        heapq.heappush(heap, (snapshot.free_at(w), w.worker_id))
    next_id = max((w.worker_id for w in snapshot.workers), default=-1) + 1
    for i in range(extra):
        bound_of[next_id + i] = job_id
        heapq.heappush(heap, (now + boot_delay, next_id + i))

    if not any(b is None or b == job_id for b in bound_of.values()):
        raise NoWorkers(f"job {job_id} has {counts[job_id]} queued tasks and no usable worker")

    idle: list[int] = []
    while counts[job_id] > 0:
        if not heap:
            raise NoWorkers(f"job {job_id} cannot be scheduled on the remaining workers")
        t = heap[0][0]
        while heap and heap[0][0] == t:
            idle.append(heapq.heappop(heap)[1])
        idle.sort()
        for j in ahead:
            jid = j.job_id
            while counts[jid] > 0 and idle:
                wid = _pick(idle, bound_of, jid)
                if wid is None:
                    break
                idle.remove(wid)
                counts[jid] -= 1
                end = t + durations[jid]
                heapq.heappush(heap, (end, wid))
                if jid == job_id:
                    finish = max(finish, end)
    return finish


def _pick(idle: Sequence[int], bound_of: Mapping[int, Optional[int]], job_id: int) -> Optional[int]:
    shared = None
    for wid in idle:
        owner = bound_of[wid]
        if owner == job_id:
            return wid
        if owner is None and shared is None:
            shared = wid
    return shared


def estimate_completion(job: JobView, snapshot: ClusterSnapshot, hypothetical_extra: int,
                        pool: ResourcePool, exclude: Iterable[int] = ()) -> int:
    if hypothetical_extra < 0:
        raise ValueError("hypothetical_extra must be >= 0")
    return dry_run(snapshot, job.job_id, hypothetical_extra, pool.boot_delay, exclude)


def _estimate_or_inf(job: JobView, snapshot: ClusterSnapshot, extra: int, pool: ResourcePool,
                     exclude: Iterable[int] = ()) -> float:
    try:
        return estimate_completion(job, snapshot, extra, pool, exclude)
    except NoWorkers:
        return float("inf")


def assigned_workers(job: JobView, snapshot: ClusterSnapshot) -> int:
    return sum(1 for w in snapshot.workers
               if w.live and (snapshot.is_shared(w) or w.bound_job == job.job_id))


def minimal_extra(job: JobView, snapshot: ClusterSnapshot, pool: ResourcePool) -> Optional[int]:
    """Smallest n >= 1 meeting the deadline, or None if no allowed n does."""
    upper = min(job.remaining, snapshot.headroom.get(pool.pool_id, 0))
    for n in range(1, upper + 1):
        if _estimate_or_inf(job, snapshot, n, pool) <= job.deadline:
            return n
    return None


def required_extra(job: JobView, snapshot: ClusterSnapshot, pool: ResourcePool,
                   policy: ProvisioningPolicy) -> Optional[int]:
    """Number of extra workers to request; None means the deadline is out of reach."""
    if not job.qos:
        raise ValueError(f"job {job.job_id} has no deadline")
    if _estimate_or_inf(job, snapshot, 0, pool) <= job.deadline:
        raise ValueError(f"job {job.job_id} already meets its deadline with current resources")
    n_cost = minimal_extra(job, snapshot, pool)
    if n_cost is None or policy is ProvisioningPolicy.COST_OPTIMIZATION:
        return n_cost
    useful = job.remaining - assigned_workers(job, snapshot)
    return max(n_cost, min(useful, snapshot.headroom.get(pool.pool_id, 0)))


class Feasibility(Enum):
    FEASIBLE = "feasible"
    NEEDS_EXTRA = "needs-extra"
    UNFEASIBLE = "unfeasible"


def classify_feasibility(job: JobView, snapshot: ClusterSnapshot, pool: ResourcePool) -> Feasibility:
    if _estimate_or_inf(job, snapshot, 0, pool) <= job.deadline:
        return Feasibility.FEASIBLE
    if minimal_extra(job, snapshot, pool) is not None:
        return Feasibility.NEEDS_EXTRA
    return Feasibility.UNFEASIBLE


# -- dispatch -----------------------------------------------------------------


def dispatch(snapshot: ClusterSnapshot) -> list[tuple[int, int]]:
    """Match queued tasks to idle workers.

    QoS tasks go first, FIFO by (submission time, job id, task id); each takes
    an idle worker bound to its job if there is one, else the lowest-id shared
    worker. Regular tasks then fill the remaining shared workers.
    """
    idle = sorted(w.worker_id for w in snapshot.workers if w.status is WorkerStatus.IDLE)
    if not idle:
        return []
    bound_of = {w.worker_id: (None if snapshot.is_shared(w) else w.bound_job) for w in snapshot.workers}
    pending = sorted((j for j in snapshot.jobs if not j.finished and j.queued), key=lambda j: (not j.qos, j.priority))
    out = []
    for j in pending:
        for task_id in sorted(j.queued):
            wid = _pick(idle, bound_of, j.job_id) if j.qos else _first_shared(idle, bound_of)
            if wid is None:
                break
            idle.remove(wid)
            out.append((task_id, wid))
        if not idle:
            break
    return out


def _first_shared(idle: Sequence[int], bound_of: Mapping[int, Optional[int]]) -> Optional[int]:
    return next((wid for wid in idle if bound_of[wid] is None), None)


def select_releasable(job: JobView, count: int, snapshot: ClusterSnapshot) -> list[int]:
    """Pick ``count`` of the job's bound dynamic workers to give back.

    Idle before booting before busy, then the one furthest into its current
    billing period, then lowest id.
    """
    if count <= 0:
        return []
    candidates = [w for w in snapshot.workers
                  if w.live and not w.static and w.bound_job == job.job_id and not w.releasable]
    if count > len(candidates):
        raise ValueError(f"job {job.job_id} has only {len(candidates)} releasable workers")
    rank = {WorkerStatus.IDLE: 0, WorkerStatus.BOOTING: 1, WorkerStatus.BUSY: 2}

    def into_period(w: WorkerView) -> int:
        if w.lease_start is None or not w.billing_period:
            return 0
        return (snapshot.now - w.lease_start) % w.billing_period

    candidates.sort(key=lambda w: (rank[w.status], -into_period(w), w.worker_id))
    return [w.worker_id for w in candidates[:count]]


# -- actions ------------------------------------------------------------------


@dataclass(frozen=True)
class RequestResources:
    job_id: int
    count: int
    pool_id: int


@dataclass(frozen=True)
class ReleaseResources:
    worker_ids: tuple[int, ...]


@dataclass(frozen=True)
class Dispatch:
    task_id: int
    worker_id: int


@dataclass(frozen=True)
class SetJobState:
    job_id: int
    trigger: Trigger


SchedulerAction = Union[RequestResources, ReleaseResources, Dispatch, SetJobState]


@dataclass(frozen=True)
class Admitted:
    state: JobState


@dataclass(frozen=True)
class Rejected:
    reason: str


@dataclass(frozen=True)
class Grant:
    """A resource request together with the snapshot it was computed from."""

    job_id: int
    count: int
    snapshot: ClusterSnapshot
    predicted_finish: int
    deadline: int
    policy: ProvisioningPolicy


class Scheduler:
    def __init__(self, pool: ResourcePool, policy: ProvisioningPolicy = ProvisioningPolicy.COST_OPTIMIZATION,
                 strict: bool = False):
        self.pool = pool
        self.policy = policy
        self.strict = strict
        self.completions: dict[int, list[int]] = {}
        self.grants: list[Grant] = []
        self._seen: set[int] = set()

    def examine_and_admit(self, job: Job, snapshot: ClusterSnapshot, strict: Optional[bool] = None) -> Union[Admitted, Rejected]:
        if job.job_id in self._seen:
            raise DuplicateJob(job.job_id)
        self._seen.add(job.job_id)
        strict = self.strict if strict is None else strict
        now = snapshot.now
        if job.deadline is not None and job.deadline <= now:
            return Rejected("ExpiredDeadline")
        if not job.tasks:
            return Rejected("EmptyJob")
        if any(t.estimated_runtime <= 0 for t in job.tasks):
            return Rejected("NonPositiveEstimate")
        if strict and job.qos:
            jv = replace(view_of_job(job), state=JobState.QOS)
            if classify_feasibility(jv, snapshot.with_job(jv), self.pool) is Feasibility.UNFEASIBLE:
                return Rejected("UnfeasibleAtSubmission")
        return Admitted(next_state(None, Trigger.ADMIT, job.qos))

    def update_estimate(self, job: Job, actual_runtime: int) -> int:
        """Fold one observed runtime into the job's estimate and return it.

        The estimate is the rounded mean of all observed runtimes; it replaces
        the estimate on every task that has not completed.
        """
        history = self.completions.setdefault(job.job_id, [])
        history.append(actual_runtime)
        n = len(history)
        estimate = (2 * sum(history) + n) // (2 * n)
        for t in job.tasks:
            if t.status is not TaskStatus.DONE:
                t.estimated_runtime = estimate
        return estimate

    def on_job_event(self, kind: EventKind, job: Job, snapshot: ClusterSnapshot,
                     completed_runtime: Optional[int] = None) -> list[SchedulerAction]:
        """One pass of the deadline-driven provisioning loop for ``job``.

        Runs on task completion, job arrival, and whenever a worker bound to
        the job finishes booting. Always ends with the dispatch actions for
        the whole cluster.
        """
        if job.finished:
            raise ValueError(f"job {job.job_id} is finished")
        actions: list[SchedulerAction] = []
        if kind is EventKind.TASK_FINISH and completed_runtime is not None:
            snapshot = snapshot.with_estimate(job.job_id, self.update_estimate(job, completed_runtime))

        if job.qos:
            snapshot = self._provision(kind, job, snapshot, actions)
        actions.extend(Dispatch(t, w) for t, w in dispatch(snapshot))
        return actions

    def _provision(self, kind: EventKind, job: Job, snapshot: ClusterSnapshot,
                   actions: list[SchedulerAction]) -> ClusterSnapshot:
        jv = snapshot.job(job.job_id)
        state = job.state
        pool = self.pool

        def emit(trigger: Trigger) -> None:
            nonlocal state
            state = next_state(state, trigger, True)
            actions.append(SetJobState(job.job_id, trigger))

        if kind is EventKind.JOB_ARRIVAL and state is JobState.QOS and jv.queued:
            if not any(w.status is WorkerStatus.IDLE and (snapshot.is_shared(w) or w.bound_job == job.job_id)
                       for w in snapshot.workers):
                emit(Trigger.NO_CAPACITY)
        if not jv.queued:
            return snapshot

        predicted = _estimate_or_inf(jv, snapshot, 0, pool)
        if state is JobState.UNFEASIBLE:
            if predicted > jv.deadline and minimal_extra(jv, snapshot, pool) is None:
                return snapshot
            emit(Trigger.EARLY_COMPLETION_RECOVERY)

        if predicted > jv.deadline:
            if state is not JobState.UNDERPROVISIONED:
                emit(Trigger.DEADLINE_AT_RISK)
            n = required_extra(jv, snapshot, pool, self.policy)
            if n is None:
                emit(Trigger.DEADLINE_IMPOSSIBLE)
            else:
                actions.append(RequestResources(job.job_id, n, pool.pool_id))
                self.grants.append(Grant(job.job_id, n, snapshot,
                                         estimate_completion(jv, snapshot, n, pool), jv.deadline, self.policy))
            return snapshot

        if self.policy is ProvisioningPolicy.COST_OPTIMIZATION:
            surplus = self._surplus(jv, snapshot)
            if surplus:
                actions.append(ReleaseResources(tuple(surplus)))
                snapshot = snapshot.with_released(surplus)
        if state in (JobState.QOS, JobState.QUEUED, JobState.UNDERPROVISIONED):
            emit(Trigger.DEADLINE_SAFE)
        return snapshot

    def _surplus(self, jv: JobView, snapshot: ClusterSnapshot) -> list[int]:
        bound = [w for w in snapshot.workers
                 if w.live and not w.static and w.bound_job == jv.job_id and not w.releasable]
        for keep in range(len(bound)):
            release = select_releasable(jv, len(bound) - keep, snapshot)
            if _estimate_or_inf(jv, snapshot, 0, self.pool, exclude=release) <= jv.deadline:
                return release
        return []
