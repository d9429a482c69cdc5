import pytest

from slaprov.engine import EventKind, Kernel
from slaprov.model import MS_PER_HOUR, MS_PER_MINUTE, JobState, TaskStatus, Worker, WorkerStatus, make_job, m1_small_pool
from slaprov.provisioning import (
    AcquisitionRequest,
    BoundaryDecision,
    NotBooting,
    Offer,
    OfferKind,
    PoolExhausted,
    Provisioner,
    WorkerBusy,
)
from slaprov.scheduler import snapshot_of

TWO_MIN = 2 * MS_PER_MINUTE


def setup(headroom=64, static=0, at=0):
    kernel = Kernel()
    kernel._now = at
    pool = m1_small_pool(boot_delay=90_000, max_instances=headroom)
    workers = {i: Worker(i) for i in range(static)}
    closed = []
    prov = Provisioner(kernel, {0: pool}, workers, next_worker_id=static,
                       on_lease_closed=lambda w, e: closed.append((w.worker_id, e)))
    return kernel, pool, workers, prov, closed


def snap(kernel, workers, pool, jobs=()):
    return snapshot_of(kernel.now(), list(jobs), workers.values(), [pool])


def test_acquire_two_workers_boot_after_delay():
    kernel, pool, workers, prov, _ = setup(static=4)
    ids = prov.acquire(prov.request(1, 0, 2))
    assert ids == [4, 5]
    assert all(workers[i].status is WorkerStatus.BOOTING and workers[i].bound_job == 1 for i in ids)
    pending = [(e.fire_at, e.kind, e.payload) for e in kernel.queue.pending()]
    assert (90_000, EventKind.WORKER_BOOT_COMPLETE, 4) in pending
    assert (90_000, EventKind.WORKER_BOOT_COMPLETE, 5) in pending
    assert (MS_PER_HOUR, EventKind.BILLING_BOUNDARY, 4) in pending
    assert pool.acquired_count == 2


def test_acquire_is_capped_by_headroom():
    kernel, pool, workers, prov, _ = setup(headroom=3)
    assert len(prov.acquire(prov.request(1, 0, 5))) == 3
    with pytest.raises(PoolExhausted):
        prov.acquire(prov.request(1, 0, 1))


def test_request_count_must_be_positive():
    with pytest.raises(ValueError):
        AcquisitionRequest(0, 1, 0, 0, 0)


def test_announce_ready():
    kernel, pool, workers, prov, _ = setup()
    [wid] = prov.acquire(prov.request(1, 0, 1))
    prov.announce_ready(wid)
    assert workers[wid].status is WorkerStatus.IDLE
    with pytest.raises(NotBooting):
        prov.announce_ready(wid)


def _leased(prov, workers, job_id=1):
    [wid] = prov.acquire(prov.request(job_id, 0, 1))
    prov.announce_ready(wid)
    return workers[wid]


def test_boundary_decommissions_idle_worker_of_finished_job():
    kernel, pool, workers, prov, closed = setup()
    w = _leased(prov, workers)
    job = make_job(1, 1, TWO_MIN, deadline=MS_PER_HOUR)
    job.state = JobState.FINISHED
    kernel._now = MS_PER_HOUR
    decision, _ = prov.on_billing_boundary(w.worker_id, snap(kernel, workers, pool, [job]))
    assert decision is BoundaryDecision.DECOMMISSION
    assert w.status is WorkerStatus.DECOMMISSIONED
    assert closed[0][1].boundaries == 1 and closed[0][1].decommissioned_at == MS_PER_HOUR
    assert pool.acquired_count == 0


def test_boundary_keeps_busy_worker():
    kernel, pool, workers, prov, closed = setup()
    w = _leased(prov, workers)
    job = make_job(1, 2, TWO_MIN, deadline=2 * MS_PER_HOUR)
    job.state = JobState.PROVISIONED
    w.status, w.task_id = WorkerStatus.BUSY, 0
    job.tasks[0].status, job.tasks[0].started_at = TaskStatus.RUNNING, MS_PER_HOUR - 60_000
    kernel._now = MS_PER_HOUR
    decision, _ = prov.on_billing_boundary(w.worker_id, snap(kernel, workers, pool, [job]))
    assert decision is BoundaryDecision.KEEP_ANOTHER_PERIOD
    assert closed == []
    assert (2 * MS_PER_HOUR, EventKind.BILLING_BOUNDARY, w.worker_id) in [
        (e.fire_at, e.kind, e.payload) for e in kernel.queue.pending()]
    # a second boundary closes the lease after two periods
    w.status, w.task_id = WorkerStatus.IDLE, None
    job.state = JobState.FINISHED
    kernel._now = 2 * MS_PER_HOUR
    decision, _ = prov.on_billing_boundary(w.worker_id, snap(kernel, workers, pool, [job]))
    assert decision is BoundaryDecision.DECOMMISSION
    assert closed[0][1].boundaries == 2


def test_boundary_keeps_worker_another_job_depends_on():
    kernel, pool, workers, prov, closed = setup()
    w = _leased(prov, workers, job_id=1)
    done = make_job(1, 1, TWO_MIN, deadline=MS_PER_HOUR)
    done.state = JobState.FINISHED
    kernel._now = MS_PER_HOUR
    # job 2 has one task and nothing else to run it on
    other = make_job(2, 1, TWO_MIN, submitted_at=MS_PER_HOUR, deadline=MS_PER_HOUR + 5 * MS_PER_MINUTE,
                     first_task_id=1)
    other.state = JobState.PROVISIONED
    decision, deps = prov.on_billing_boundary(w.worker_id, snap(kernel, workers, pool, [done, other]))
    assert decision is BoundaryDecision.KEEP_ANOTHER_PERIOD
    assert deps == [2]
    assert w.bound_job == 2 and not w.releasable


def test_boundary_keeps_worker_still_bound_to_live_job():
    kernel, pool, workers, prov, closed = setup()
    w = _leased(prov, workers)
    job = make_job(1, 3, TWO_MIN, deadline=10 * MS_PER_HOUR)
    job.state = JobState.PROVISIONED
    kernel._now = MS_PER_HOUR
    decision, _ = prov.on_billing_boundary(w.worker_id, snap(kernel, workers, pool, [job]))
    assert decision is BoundaryDecision.KEEP_ANOTHER_PERIOD


def test_offer_paid_idle_reassigns_to_earliest_deadline():
    kernel, pool, workers, prov, _ = setup()
    w = _leased(prov, workers, job_id=1)
    w.released_by, w.releasable = 1, True
    source = make_job(1, 5, TWO_MIN, deadline=10 * MS_PER_HOUR)
    late = make_job(2, 5, TWO_MIN, deadline=8 * MS_PER_HOUR, first_task_id=5)
    soon = make_job(3, 5, TWO_MIN, deadline=4 * MS_PER_HOUR, first_task_id=10)
    for j in (source, late, soon):
        j.state = JobState.PROVISIONED
    offer = prov.offer_paid_idle(w.worker_id, snap(kernel, workers, pool, [source, late, soon]))
    assert offer == Offer(OfferKind.REASSIGNED, 3)
    assert w.bound_job == 3 and not w.releasable


def test_offer_paid_idle_falls_back_to_regular_then_idle():
    kernel, pool, workers, prov, _ = setup()
    w = _leased(prov, workers, job_id=1)
    regular = make_job(2, 2, TWO_MIN)
    regular.state = JobState.QUEUED
    assert prov.offer_paid_idle(w.worker_id, snap(kernel, workers, pool, [regular])) == Offer(
        OfferKind.OFFERED_TO_REGULAR)
    assert w.bound_job is None
    assert prov.offer_paid_idle(w.worker_id, snap(kernel, workers, pool, [])) == Offer(OfferKind.LEFT_IDLE)


def test_busy_worker_cannot_be_decommissioned():
    kernel, pool, workers, prov, _ = setup()
    w = _leased(prov, workers)
    w.status = WorkerStatus.BUSY
    with pytest.raises(WorkerBusy):
        prov.decommission(w.worker_id)


def test_static_worker_has_no_lease():
    kernel, pool, workers, prov, _ = setup(static=1)
    with pytest.raises(ValueError):
        prov.decommission(0)
