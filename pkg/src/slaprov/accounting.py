"""Posted-price charging, lease usage records and the SLA fulfilment history.

All money is integer micro-dollars.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence, Union

from .model import MICROS_PER_USD, FinishReason, Job, JobState, ResourcePool

MS_PER_DAY = 86_400_000
SHARED = "shared"


class MisalignedLease(Exception):
    pass


class JobNotFinished(Exception):
    pass


@dataclass(frozen=True)
class PeakWindow:
    """Daily window [start, end) in ms after midnight; wraps when end <= start."""

    start: int
    end: int
    multiplier: Fraction

    def __post_init__(self) -> None:
        if self.multiplier <= 0:
            raise ValueError("multiplier must be positive")

    def contains(self, time_of_day: int) -> bool:
        if self.start < self.end:
            return self.start <= time_of_day < self.end
        return time_of_day >= self.start or time_of_day < self.end


@dataclass(frozen=True)
class PriceSchedule:
    base: Mapping[int, int] = field(default_factory=dict)
    peak_windows: tuple[PeakWindow, ...] = ()

    def __post_init__(self) -> None:
        covered = []
        for w in self.peak_windows:
            spans = [(w.start, w.end)] if w.start < w.end else [(w.start, MS_PER_DAY), (0, w.end)]
            covered.extend(spans)
        covered.sort()
        for (_, e1), (s2, _) in zip(covered, covered[1:]):
            if s2 < e1:
                raise ValueError("peak windows overlap")

    def multiplier_at(self, t: int) -> Fraction:
        tod = t % MS_PER_DAY
        for w in self.peak_windows:
            if w.contains(tod):
                return w.multiplier
        return Fraction(1)


def round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def period_price(pool: ResourcePool, period_start: int, schedule: PriceSchedule = PriceSchedule()) -> int:
    base = schedule.base.get(pool.pool_id, pool.price_per_period)
    return round_half_up(base * schedule.multiplier_at(period_start))


@dataclass(frozen=True)
class UsageRecord:
    worker_id: int
    pool_id: int
    lease_start: int
    lease_end: int
    billed_periods: int
    cost: int
    period_costs: tuple[int, ...] = ()
    period_owners: tuple[Optional[int], ...] = ()
    serving: tuple[tuple[int, int, int], ...] = ()


def _owner_at(bindings: Sequence[tuple[int, Optional[int]]], t: int) -> Optional[int]:
    owner = None
    for at, job_id in bindings:
        if at > t:
            break
        owner = job_id
    return owner


def close_lease(worker_id: int, lease_start: int, lease_end: int, pool: ResourcePool,
                schedule: PriceSchedule = PriceSchedule(),
                bindings: Sequence[tuple[int, Optional[int]]] = (),
                serving: Iterable[tuple[int, int, int]] = ()) -> UsageRecord:
    """Bill a closed lease period by period.

    ``bindings`` is the worker's (time, job) binding history; each period is
    owned by whichever job the worker was bound to when the period began.
    """
    duration = lease_end - lease_start
    if duration <= 0 or duration % pool.billing_period:
        raise MisalignedLease(f"worker {worker_id}: lease [{lease_start}, {lease_end}) is not a whole number "
                              f"of {pool.billing_period} ms periods")
    periods = duration // pool.billing_period
    starts = [lease_start + k * pool.billing_period for k in range(periods)]
    costs = tuple(period_price(pool, s, schedule) for s in starts)
    owners = tuple(_owner_at(bindings, s) for s in starts)
    return UsageRecord(worker_id, pool.pool_id, lease_start, lease_end, periods, sum(costs),
                       costs, owners, tuple(serving))


def job_cost_attribution(records: Iterable[UsageRecord]) -> dict[Union[int, str], int]:
    out: dict[Union[int, str], int] = {}
    for rec in records:
        for owner, cost in zip(rec.period_owners, rec.period_costs):
            key = SHARED if owner is None else owner
            out[key] = out.get(key, 0) + cost
    return out


@dataclass(frozen=True)
class SlaRecord:
    job_id: int
    deadline: Optional[int]
    finished_at: int
    met: bool
    margin: Optional[int]
    finish_reason: FinishReason


def sla_outcome(job: Job) -> SlaRecord:
    if job.state is not JobState.FINISHED:
        raise JobNotFinished(job.job_id)
    completed = job.finish_reason is FinishReason.COMPLETED
    if job.deadline is None:
        return SlaRecord(job.job_id, None, job.finished_at, completed, None, job.finish_reason)
    met = completed and job.finished_at <= job.deadline
    return SlaRecord(job.job_id, job.deadline, job.finished_at, met, job.deadline - job.finished_at, job.finish_reason)


class Accounting:
    """Append-only usage and SLA ledgers for one run."""

    def __init__(self, schedule: PriceSchedule = PriceSchedule()):
        self.schedule = schedule
        self.usage: list[UsageRecord] = []
        self.sla_history: list[SlaRecord] = []

    def record_lease(self, worker_id: int, lease_start: int, lease_end: int, pool: ResourcePool,
                     bindings=(), serving=()) -> UsageRecord:
        rec = close_lease(worker_id, lease_start, lease_end, pool, self.schedule, bindings, serving)
        self.usage.append(rec)
        return rec

    def record_sla(self, job: Job) -> SlaRecord:
        rec = sla_outcome(job)
        self.sla_history.append(rec)
        return rec

    def extra_cost(self) -> int:
        return sum(r.cost for r in self.usage)

    def by_job(self) -> dict[Union[int, str], int]:
        return job_cost_attribution(self.usage)


def format_usd(micros: int) -> str:
    """Render micro-dollars as dollars rounded half-up to cents."""
    cents = round_half_up(Fraction(micros, MICROS_PER_USD // 100))
    return f"{cents // 100}.{cents % 100:02d}"
