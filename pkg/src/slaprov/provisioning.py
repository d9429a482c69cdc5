"""Dynamic provisioner and resource pool manager.

Leases are opened on request, become usable only after the pool's boot delay,
and are closed only at a billing boundary.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Mapping, MutableMapping, Optional

from .engine import EventKind, Kernel
from .model import JobState, ResourcePool, Worker, WorkerStatus
from .scheduler import ClusterSnapshot, NoWorkers, dry_run

logger = logging.getLogger(__name__)


class PoolExhausted(Exception):
    def __init__(self, pool_id: int, requested: int):
        super().__init__(f"pool {pool_id} has no headroom for {requested} more workers")
        self.pool_id = pool_id
        self.requested = requested


class NotBooting(Exception):
    pass


class WorkerBusy(Exception):
    pass


@dataclass(frozen=True)
class AcquisitionRequest:
    request_id: int
    job_id: int
    pool_id: int
    count: int
    issued_at: int

    def __post_init__(self) -> None:
        if self.count < 1:
            raise ValueError("count must be >= 1")


@dataclass
class LeaseLedgerEntry:
    worker_id: int
    pool_id: int
    lease_start: int
    boundaries: int = 0
    decommissioned_at: Optional[int] = None


class BoundaryDecision(Enum):
    KEEP_ANOTHER_PERIOD = "KeepAnotherPeriod"
    DECOMMISSION = "Decommission"


class OfferKind(Enum):
    REASSIGNED = "Reassigned"
    OFFERED_TO_REGULAR = "OfferedToRegular"
    LEFT_IDLE = "LeftIdle"


@dataclass(frozen=True)
class Offer:
    kind: OfferKind
    job_id: Optional[int] = None


def jobs_depending_on(worker_id: int, snapshot: ClusterSnapshot) -> list[int]:
    """Provisioned QoS jobs whose deadline would slip without this worker, earliest deadline first."""
    out = []
    for jv in sorted(snapshot.jobs, key=lambda j: (j.deadline or 0, j.job_id)):
        if not jv.qos or jv.state is not JobState.PROVISIONED:
            continue
        try:
            without = dry_run(snapshot, jv.job_id, exclude=(worker_id,))
        except NoWorkers:
            without = float("inf")
        if without > jv.deadline:
            out.append(jv.job_id)
    return out


def boundary_decision(worker: Worker, snapshot: ClusterSnapshot) -> tuple[BoundaryDecision, list[int]]:
    """Decide whether a dynamic worker survives the billing boundary it just reached."""
    if worker.status is not WorkerStatus.IDLE:
        return BoundaryDecision.KEEP_ANOTHER_PERIOD, []
    bound_finished = worker.bound_job is None or snapshot.is_shared(snapshot.worker(worker.worker_id))
    if not (worker.releasable or bound_finished):
        return BoundaryDecision.KEEP_ANOTHER_PERIOD, []
    dependents = jobs_depending_on(worker.worker_id, snapshot)
    if dependents:
        return BoundaryDecision.KEEP_ANOTHER_PERIOD, dependents
    return BoundaryDecision.DECOMMISSION, []


class Provisioner:
    def __init__(self, kernel: Kernel, pools: Mapping[int, ResourcePool], workers: MutableMapping[int, Worker],
                 next_worker_id: int = 0, on_lease_closed: Optional[Callable[[Worker, LeaseLedgerEntry], None]] = None):
        self.kernel = kernel
        self.pools = pools
        self.workers = workers
        self.ledger: dict[int, LeaseLedgerEntry] = {}
        self.on_lease_closed = on_lease_closed
        self._next_worker_id = next_worker_id
        self._next_request_id = 0

    def request(self, job_id: int, pool_id: int, count: int) -> AcquisitionRequest:
        req = AcquisitionRequest(self._next_request_id, job_id, pool_id, count, self.kernel.now())
        self._next_request_id += 1
        return req

    def acquire(self, req: AcquisitionRequest) -> list[int]:
        """Open up to ``req.count`` leases; ids come back before the workers are usable."""
        pool = self.pools[req.pool_id]
        granted = min(req.count, pool.headroom)
        if granted <= 0:
            raise PoolExhausted(pool.pool_id, req.count)
        now = self.kernel.now()
        ids = []
        for _ in range(granted):
            wid = self._next_worker_id
            self._next_worker_id += 1
            w = Worker(wid, pool_id=pool.pool_id, status=WorkerStatus.BOOTING,
                       lease_start=now, ready_at=now + pool.boot_delay)
            w.bind(req.job_id, now)
            self.workers[wid] = w
            self.ledger[wid] = LeaseLedgerEntry(wid, pool.pool_id, now)
            pool.acquired_count += 1
            self.kernel.schedule(w.ready_at, EventKind.WORKER_BOOT_COMPLETE, wid)
            self.kernel.schedule(now + pool.billing_period, EventKind.BILLING_BOUNDARY, wid)
            ids.append(wid)
        logger.debug("job %s: acquired %s from pool %s", req.job_id, ids, pool.pool_id)
        return ids

    def announce_ready(self, worker_id: int) -> None:
        w = self.workers[worker_id]
        if w.status is not WorkerStatus.BOOTING:
            raise NotBooting(f"worker {worker_id} is {w.status.value}")
        w.status = WorkerStatus.IDLE

    def on_billing_boundary(self, worker_id: int, snapshot: ClusterSnapshot) -> tuple[BoundaryDecision, list[int]]:
        w = self.workers[worker_id]
        if w.static or not w.live:
            raise ValueError(f"worker {worker_id} has no open lease")
        entry = self.ledger[worker_id]
        entry.boundaries += 1
        decision, dependents = boundary_decision(w, snapshot)
        if decision is BoundaryDecision.DECOMMISSION:
            self.decommission(worker_id)
        else:
            if dependents and (w.bound_job is None or w.bound_job not in dependents):
                # kept for another job's sake: that job now owns the next period
                w.bind(dependents[0], self.kernel.now())
                w.releasable = False
            pool = self.pools[w.pool_id]
            self.kernel.schedule(entry.lease_start + (entry.boundaries + 1) * pool.billing_period,
                                 EventKind.BILLING_BOUNDARY, worker_id)
        return decision, dependents

    def offer_paid_idle(self, worker_id: int, snapshot: ClusterSnapshot) -> Offer:
        """Find a use for an idle worker whose period is already paid for."""
        w = self.workers[worker_id]
        now = self.kernel.now()
        candidates = [j for j in snapshot.jobs
                      if j.qos and not j.finished and j.queued and j.job_id != w.released_by]
        if candidates:
            chosen = min(candidates, key=lambda j: (j.deadline, j.priority))
            w.bind(chosen.job_id, now)
            w.releasable = False
            w.released_by = None
            return Offer(OfferKind.REASSIGNED, chosen.job_id)
        if w.bound_job is not None:
            w.bind(None, now)
        w.releasable = True
        if any(not j.qos and not j.finished and j.queued for j in snapshot.jobs):
            return Offer(OfferKind.OFFERED_TO_REGULAR)
        return Offer(OfferKind.LEFT_IDLE)

    def decommission(self, worker_id: int) -> LeaseLedgerEntry:
        w = self.workers[worker_id]
        if w.status is WorkerStatus.BUSY:
            raise WorkerBusy(f"worker {worker_id} is running task {w.task_id}")
        if w.static or not w.live:
            raise ValueError(f"worker {worker_id} cannot be decommissioned")
        entry = self.ledger[worker_id]
        entry.decommissioned_at = self.kernel.now()
        w.status = WorkerStatus.DECOMMISSIONED
        self.pools[w.pool_id].acquired_count -= 1
        if self.on_lease_closed is not None:
            self.on_lease_closed(w, entry)
        return entry
