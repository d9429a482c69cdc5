"""Wires the kernel, scheduler, provisioner and accounting into one scenario run."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Iterable, Optional

import numpy as np

from .accounting import Accounting, SlaRecord
from .config import ClusterConfig, InjectedEvent, RuntimeDistribution, WorkloadSpec
from .engine import Event, EventKind, Kernel
from .model import (
    Job,
    JobState,
    StateChange,
    Task,
    TaskStatus,
    Trigger,
    Worker,
    WorkerStatus,
    apply_transition,
    remaining_tasks,
)
from .provisioning import BoundaryDecision, LeaseLedgerEntry, PoolExhausted, Provisioner
from .scheduler import (
    Admitted,
    ClusterSnapshot,
    Dispatch,
    ReleaseResources,
    RequestResources,
    Scheduler,
    SchedulerAction,
    SetJobState,
    dispatch,
    snapshot_of,
)

logger = logging.getLogger(__name__)

TRACE_COLUMNS = ("time", "kind", "job", "task", "worker", "detail")


@dataclass(frozen=True)
class TraceRow:
    time: int
    kind: str
    job: Optional[int] = None
    task: Optional[int] = None
    worker: Optional[int] = None
    detail: str = ""

    def as_csv(self) -> list[str]:
        return [str(self.time), self.kind, _blank(self.job), _blank(self.task), _blank(self.worker), self.detail]


def _blank(v: Optional[int]) -> str:
    return "" if v is None else str(v)


@dataclass(frozen=True)
class ActionRecord:
    """A scheduler action together with the job's state when it was emitted."""

    time: int
    job_id: Optional[int]
    state: Optional[JobState]
    action: SchedulerAction


def actual_runtimes(spec_runtime, task_count: int, user_estimate: int, job_id: int, seed: int) -> list[int]:
    if spec_runtime is None:
        return [user_estimate] * task_count
    if isinstance(spec_runtime, int):
        return [spec_runtime] * task_count
    dist: RuntimeDistribution = spec_runtime
    if dist.kind == "fixed":
        return [dist.value] * task_count
    entropy = [dist.seed] if dist.seed is not None else [seed, job_id]
    rng = np.random.default_rng(np.random.SeedSequence(entropy))
    return [int(x) for x in rng.integers(dist.lo, dist.hi + 1, size=task_count)]


class Simulation:
    def __init__(self, cluster: ClusterConfig, workload: WorkloadSpec, seed: int = 0):
        self.cluster = cluster
        self.workload = workload
        self.kernel = Kernel()
        self.pools = {p.pool_id: p.build() for p in cluster.pools}
        self.pool = self.pools[cluster.default_pool]
        self.workers: dict[int, Worker] = {i: Worker(i) for i in range(cluster.static_workers)}
        self.scheduler = Scheduler(self.pool, cluster.policy, cluster.strict_admission)
        self.accounting = Accounting(cluster.price_schedule())
        self.provisioner = Provisioner(self.kernel, self.pools, self.workers, cluster.static_workers,
                                       on_lease_closed=self._lease_closed)
        self.max_attempts = cluster.max_attempts

        self.jobs: dict[int, Job] = {}
        self.tasks: dict[int, Task] = {}
        self.rejected: dict[int, str] = {}
        self.trace: list[TraceRow] = []
        self.transitions: list[tuple[int, StateChange]] = []
        self.actions: list[ActionRecord] = []
        self._finish_events: dict[int, int] = {}
        self._pending_offers: list[int] = []

        next_task = 0
        for spec in workload.jobs:
            runtimes = actual_runtimes(spec.actual_runtime, spec.task_count, spec.user_estimate, spec.job_id, seed)
            tasks = [Task(next_task + i, spec.job_id, spec.user_estimate, rt) for i, rt in enumerate(runtimes)]
            next_task += spec.task_count
            deadline = None if spec.deadline is None else spec.arrival + spec.deadline
            job = Job(spec.job_id, tasks, spec.arrival, deadline, user_estimate=spec.user_estimate)
            self.jobs[job.job_id] = job
            self.tasks.update((t.task_id, t) for t in tasks)
            self.kernel.schedule(spec.arrival, EventKind.JOB_ARRIVAL, job.job_id)
        for ev in workload.events:
            kind = EventKind.JOB_CANCEL if ev.type == "cancel" else EventKind.WORKER_FAILURE
            self.kernel.schedule(ev.at, kind, ev)

        self.handlers = {
            EventKind.JOB_ARRIVAL: self._on_arrival,
            EventKind.TASK_FINISH: self._on_task_finish,
            EventKind.WORKER_BOOT_COMPLETE: self._on_boot_complete,
            EventKind.BILLING_BOUNDARY: self._on_billing_boundary,
            EventKind.JOB_CANCEL: self._on_cancel,
            EventKind.WORKER_FAILURE: self._on_worker_failure,
            EventKind.SIM_END: lambda ev: self._log("SimEnd"),
        }
        self.drained_at: Optional[int] = None

    # -- driving ----------------------------------------------------------------

    def run(self) -> int:
        self.drained_at = self.kernel.run_until_drained(self.handlers)
        return self.drained_at

    @property
    def now(self) -> int:
        return self.kernel.now()

    def snapshot(self) -> ClusterSnapshot:
        return snapshot_of(self.now, self.jobs.values(), self.workers.values(), self.pools.values())

    def _log(self, kind: str, job: Optional[int] = None, task: Optional[int] = None,
             worker: Optional[int] = None, detail: str = "") -> None:
        self.trace.append(TraceRow(self.now, kind, job, task, worker, detail))

    # -- handlers ---------------------------------------------------------------

    def _on_arrival(self, ev: Event) -> None:
        job = self.jobs[ev.payload]
        self._log("JobArrival", job.job_id, detail=f"tasks={len(job.tasks)};deadline={_blank(job.deadline)}")
        verdict = self.scheduler.examine_and_admit(job, self.snapshot())
        if not isinstance(verdict, Admitted):
            self.rejected[job.job_id] = verdict.reason
            self._log("Rejected", job.job_id, detail=verdict.reason)
            return
        self._transition(job, Trigger.ADMIT)
        self._evaluate(EventKind.JOB_ARRIVAL, job)
        self._settle()

    def _on_task_finish(self, ev: Event) -> None:
        task = self.tasks[ev.payload]
        worker = self.workers[task.worker_id]
        job = self.jobs[task.job_id]
        self._finish_events.pop(task.task_id, None)
        task.status = TaskStatus.DONE
        task.finished_at = self.now
        self._free_worker(worker, task)
        self._log("TaskFinish", job.job_id, task.task_id, worker.worker_id, f"runtime={task.actual_runtime}")
        if remaining_tasks(job) == 0:
            self.scheduler.update_estimate(job, task.actual_runtime)
            self._finish_job(job, Trigger.ALL_TASKS_DONE)
        else:
            self._evaluate(EventKind.TASK_FINISH, job, task.actual_runtime)
        self._settle()

    def _on_boot_complete(self, ev: Event) -> None:
        w = self.workers[ev.payload]
        if not w.live:
            return
        self.provisioner.announce_ready(w.worker_id)
        self._log("BootComplete", w.bound_job, worker=w.worker_id)
        job = self.jobs.get(w.bound_job) if w.bound_job is not None else None
        if job is not None and not job.finished:
            self._evaluate(None, job)
        else:
            self._pending_offers.append(w.worker_id)
        self._settle()

    def _on_billing_boundary(self, ev: Event) -> None:
        w = self.workers[ev.payload]
        if not w.live:
            return
        decision, dependents = self.provisioner.on_billing_boundary(w.worker_id, self.snapshot())
        detail = decision.value
        if dependents:
            detail += ";for=" + "|".join(map(str, dependents))
        self._log("BillingBoundary", w.bound_job, worker=w.worker_id, detail=detail)
        self._settle()

    def _on_cancel(self, ev: Event) -> None:
        spec: InjectedEvent = ev.payload
        job = self.jobs.get(spec.job_id)
        if job is None or job.state is None or job.finished:
            self._log("JobCancel", spec.job_id, detail="ignored")
            return
        self._log("JobCancel", job.job_id)
        self._finish_job(job, Trigger.CANCEL)
        self._settle()

    def _on_worker_failure(self, ev: Event) -> None:
        spec: InjectedEvent = ev.payload
        if spec.worker_id is not None:
            w = self.workers.get(spec.worker_id)
        else:
            w = next((w for _, w in sorted(self.workers.items()) if w.status is WorkerStatus.BUSY), None)
        if w is None or w.status is not WorkerStatus.BUSY:
            self._log("WorkerFailure", worker=None if w is None else w.worker_id, detail="no-op")
            return
        task = self.tasks[w.task_id]
        job = self.jobs[task.job_id]
        self.kernel.cancel(self._finish_events.pop(task.task_id))
        fatal = task.attempts >= self.max_attempts
        task.status = TaskStatus.FAILED if fatal else TaskStatus.PENDING
        self._free_worker(w, task)
        task.started_at = None
        self._log("WorkerFailure", job.job_id, task.task_id, w.worker_id,
                  f"attempts={task.attempts};{'fatal' if fatal else 'requeued'}")
        if fatal:
            self._finish_job(job, Trigger.TASK_FAILED_FATALLY)
        else:
            self._evaluate(None, job)
        self._settle()

    # -- helpers ----------------------------------------------------------------

    def _evaluate(self, kind: Optional[EventKind], job: Job, runtime: Optional[int] = None) -> None:
        actions = self.scheduler.on_job_event(kind, job, self.snapshot(), runtime)
        self._apply(actions)

    def _apply(self, actions: Iterable[SchedulerAction]) -> None:
        reevaluate: list[Job] = []
        for action in actions:
            job_id = getattr(action, "job_id", None)
            state = self.jobs[job_id].state if job_id is not None else None
            self.actions.append(ActionRecord(self.now, job_id, state, action))
            if isinstance(action, SetJobState):
                self._transition(self.jobs[action.job_id], action.trigger)
            elif isinstance(action, RequestResources):
                reevaluate.extend(self._request(action))
            elif isinstance(action, ReleaseResources):
                self._release(action.worker_ids)
            elif isinstance(action, Dispatch):
                self._start(self.tasks[action.task_id], self.workers[action.worker_id])
        for job in reevaluate:
            if not job.finished:
                self._evaluate(None, job)

    def _request(self, action: RequestResources) -> list[Job]:
        job = self.jobs[action.job_id]
        self._log("Request", job.job_id, detail=f"count={action.count};pool={action.pool_id}")
        req = self.provisioner.request(job.job_id, action.pool_id, action.count)
        try:
            ids = self.provisioner.acquire(req)
        except PoolExhausted:
            self._log("PoolExhausted", job.job_id, detail=f"requested={action.count}")
            return [job]
        for wid in ids:
            self._log("Acquire", job.job_id, worker=wid,
                      detail=f"pool={action.pool_id};ready_at={self.workers[wid].ready_at}")
        if len(ids) < action.count:
            self._log("Shortfall", job.job_id, detail=f"missing={action.count - len(ids)}")
            return [job]
        return []

    def _release(self, worker_ids: Iterable[int]) -> None:
        for wid in worker_ids:
            w = self.workers[wid]
            w.releasable = True
            self._log("Release", w.bound_job, worker=wid, detail=w.status.value)
            if w.status is not WorkerStatus.BUSY:
                w.released_by = w.bound_job
                w.bind(None, self.now)
                if w.status is WorkerStatus.IDLE:
                    self._pending_offers.append(wid)

    def _start(self, task: Task, w: Worker) -> None:
        if w.status is not WorkerStatus.IDLE or task.status is not TaskStatus.PENDING:
            raise RuntimeError(f"cannot start task {task.task_id} on worker {w.worker_id} ({w.status.value})")
        task.status = TaskStatus.RUNNING
        task.worker_id = w.worker_id
        task.started_at = self.now
        task.attempts += 1
        w.status = WorkerStatus.BUSY
        w.task_id = task.task_id
        self._finish_events[task.task_id] = self.kernel.schedule(
            self.now + task.actual_runtime, EventKind.TASK_FINISH, task.task_id)
        self._log("Dispatch", task.job_id, task.task_id, w.worker_id)

    def _free_worker(self, w: Worker, task: Task) -> None:
        w.serving.append((task.job_id, task.started_at, self.now))
        w.status = WorkerStatus.IDLE
        w.task_id = None
        if w.dynamic and w.releasable and w.bound_job is not None:
            w.released_by = w.bound_job
            w.bind(None, self.now)
            self._pending_offers.append(w.worker_id)

    def _transition(self, job: Job, trigger: Trigger) -> None:
        change = apply_transition(job, trigger, self.now)
        self.transitions.append((job.job_id, change))
        source = change.source.value if change.source is not None else "start"
        self._log("State", job.job_id, detail=f"{source}>{change.target.value};{trigger.value}")

    def _finish_job(self, job: Job, trigger: Trigger) -> None:
        for task in job.tasks:
            if task.status is TaskStatus.RUNNING:
                self.kernel.cancel(self._finish_events.pop(task.task_id))
                task.status = TaskStatus.CANCELLED
                self._free_worker(self.workers[task.worker_id], task)
            elif task.status is TaskStatus.PENDING:
                task.status = TaskStatus.CANCELLED
        self._transition(job, trigger)
        rec = self.accounting.record_sla(job)
        self._log("JobFinished", job.job_id, detail=f"{job.finish_reason.value};met={int(rec.met)}")
        for w in self.workers.values():
            if w.dynamic and w.live and w.bound_job == job.job_id:
                w.released_by = job.job_id
                w.bind(None, self.now)
                w.releasable = True
                if w.status is WorkerStatus.IDLE:
                    self._pending_offers.append(w.worker_id)

    def _settle(self) -> None:
        """Place paid idle workers, then fill every idle worker that has work."""
        while self._pending_offers:
            offers, self._pending_offers = sorted(set(self._pending_offers)), []
            for wid in offers:
                w = self.workers[wid]
                if w.status is not WorkerStatus.IDLE:
                    continue
                offer = self.provisioner.offer_paid_idle(wid, self.snapshot())
                self._log(offer.kind.value, offer.job_id, worker=wid)
        self._apply(Dispatch(t, w) for t, w in dispatch(self.snapshot()))

    def _lease_closed(self, w: Worker, entry: LeaseLedgerEntry) -> None:
        rec = self.accounting.record_lease(w.worker_id, entry.lease_start, entry.decommissioned_at,
                                           self.pools[w.pool_id], w.bindings, w.serving)
        self._log("Decommission", worker=w.worker_id,
                  detail=f"pool={w.pool_id};lease_start={entry.lease_start};periods={rec.billed_periods}")

    # -- results ----------------------------------------------------------------

    @property
    def dynamic_workers(self) -> list[Worker]:
        return [w for w in self.workers.values() if w.dynamic]

    def static_cost(self) -> int:
        horizon = max((j.finished_at for j in self.jobs.values() if j.finished_at is not None), default=0)
        periods = math.ceil(horizon / self.cluster.static_billing_period)
        return self.cluster.static_workers * periods * self.cluster.static_price_per_period

    def sla_records(self) -> dict[int, SlaRecord]:
        return {r.job_id: r for r in self.accounting.sla_history}
