"""Scenario execution and report emission: trace CSVs, summary JSON, Table 1, policy comparison."""

from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Any, Optional, Union

from .accounting import SHARED, format_usd
from .config import ClusterConfig, WorkloadSpec, table1_cluster, table1_workload
from .model import MS_PER_MINUTE, TaskStatus
from .scheduler import ProvisioningPolicy
from .simulation import TRACE_COLUMNS, Simulation

JOB_COLUMNS = ("job_id", "qos", "submitted_at", "deadline", "state", "finish_reason", "finished_at",
               "makespan", "met", "margin", "tasks", "tasks_done", "dynamic_acquired", "cost")
WORKER_COLUMNS = ("worker_id", "origin", "pool_id", "acquired_for", "lease_start", "ready_at", "lease_end",
                  "billed_periods", "cost", "tasks_served")
FILES = {"events": "events.csv", "jobs": "jobs.csv", "workers": "workers.csv", "summary": "summary.json"}


class PolicyDominanceViolation(AssertionError):
    pass


def hms(ms: Optional[int]) -> str:
    if ms is None:
        return "-"
    s = ms // 1000
    return f"{s // 3600}:{s % 3600 // 60:02d}:{s % 60:02d}"


@dataclass
class RunReport:
    jobs: list[dict[str, Any]]
    workers: list[dict[str, Any]]
    totals: dict[str, Any]
    config: dict[str, Any]
    drained_at: int
    files: dict[str, str] = field(default_factory=dict)
    simulation: Optional[Simulation] = field(default=None, repr=False, compare=False)

    def job(self, job_id: int) -> dict[str, Any]:
        return next(j for j in self.jobs if j["job_id"] == job_id)

    @property
    def makespan(self) -> int:
        """Last finish minus first arrival over all admitted, finished jobs."""
        done = [j for j in self.jobs if j["finished_at"] is not None]
        if not done:
            return 0
        return max(j["finished_at"] for j in done) - min(j["submitted_at"] for j in done)

    def summary(self) -> dict[str, Any]:
        return {
            "config": self.config,
            "drained_at": self.drained_at,
            "files": self.files,
            "jobs": self.jobs,
            "totals": self.totals,
        }


def build_report(sim: Simulation, seed: int = 0) -> RunReport:
    by_job = sim.accounting.by_job()
    acquired_for: dict[int, Optional[int]] = {w.worker_id: (w.bindings[0][1] if w.bindings else None)
                                              for w in sim.dynamic_workers}
    sla = sim.sla_records()
    jobs = []
    for job in sorted(sim.jobs.values(), key=lambda j: j.job_id):
        rec = sla.get(job.job_id)
        jobs.append({
            "job_id": job.job_id,
            "qos": job.qos,
            "submitted_at": job.submitted_at,
            "deadline": job.deadline,
            "state": job.state.value if job.state else ("Rejected" if job.job_id in sim.rejected else None),
            "rejected": sim.rejected.get(job.job_id),
            "finish_reason": job.finish_reason.value if job.finish_reason else None,
            "finished_at": job.finished_at,
            "makespan": None if job.finished_at is None else job.finished_at - job.submitted_at,
            "met": None if rec is None else rec.met,
            "margin": None if rec is None else rec.margin,
            "tasks": len(job.tasks),
            "tasks_done": sum(1 for t in job.tasks if t.status is TaskStatus.DONE),
            "dynamic_acquired": sum(1 for j in acquired_for.values() if j == job.job_id),
            "cost": by_job.get(job.job_id, 0),
            "state_history": [[c.at, c.source.value if c.source else None, c.trigger.value, c.target.value]
                              for c in job.history],
        })
    usage = {r.worker_id: r for r in sim.accounting.usage}
    workers = []
    for wid, w in sorted(sim.workers.items()):
        rec = usage.get(wid)
        workers.append({
            "worker_id": wid,
            "origin": "static" if w.static else "dynamic",
            "pool_id": w.pool_id,
            "acquired_for": acquired_for.get(wid),
            "lease_start": w.lease_start,
            "ready_at": w.ready_at if w.dynamic else 0,
            "lease_end": rec.lease_end if rec else None,
            "billed_periods": rec.billed_periods if rec else 0,
            "cost": rec.cost if rec else 0,
            "tasks_served": len(w.serving),
        })
    extra = sim.accounting.extra_cost()
    static = sim.static_cost()
    totals = {
        "dynamic_workers_acquired": len(sim.dynamic_workers),
        "extra_cost": extra,
        "extra_cost_usd": format_usd(extra),
        "static_cost": static,
        "static_cost_usd": format_usd(static),
        "billed_periods": sum(r.billed_periods for r in sim.accounting.usage),
        "cost_by_job": {str(k): v for k, v in sorted(by_job.items(), key=lambda kv: str(kv[0]))},
        "makespan": 0,
        "jobs_admitted": sum(1 for j in sim.jobs.values() if j.state is not None),
        "jobs_rejected": len(sim.rejected),
        "sla_met": sum(1 for r in sla.values() if r.deadline is not None and r.met),
        "sla_missed": sum(1 for r in sla.values() if r.deadline is not None and not r.met),
    }
    config = {"cluster": sim.cluster.to_json(), "workload": sim.workload.to_json(), "seed": seed}
    report = RunReport(jobs, workers, totals, config, sim.drained_at or 0, simulation=sim)
    report.totals["makespan"] = report.makespan
    return report


def write_outputs(report: RunReport, out_dir: Union[str, os.PathLike]) -> dict[str, str]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    sim = report.simulation
    with open(out / FILES["events"], "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        writer.writerows(row.as_csv() for row in sim.trace)
    _write_table(out / FILES["jobs"], JOB_COLUMNS, report.jobs)
    _write_table(out / FILES["workers"], WORKER_COLUMNS, report.workers)
    report.files = dict(FILES)
    with open(out / FILES["summary"], "w") as fh:
        json.dump(report.summary(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return report.files


def _write_table(path: Path, columns, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow(["" if row.get(c) is None else _cell(row.get(c)) for c in columns])


def _cell(v: Any) -> str:
    if isinstance(v, bool):
        return str(int(v))
    return str(v)


def run_scenario(cluster: ClusterConfig, workload: WorkloadSpec,
                 out_dir: Union[str, os.PathLike, None] = None, seed: int = 0) -> RunReport:
    sim = Simulation(cluster, workload, seed)
    sim.run()
    report = build_report(sim, seed)
    if out_dir is not None:
        write_outputs(report, out_dir)
    return report


# -- independent trace reader ------------------------------------------------------


def totals_from_trace(out_dir: Union[str, os.PathLike]) -> dict[str, int]:
    """Recompute cost totals from events.csv and the config echoed in summary.json.

    Deliberately shares no code with the accounting module.
    """
    out = Path(out_dir)
    with open(out / FILES["summary"]) as fh:
        cluster = json.load(fh)["config"]["cluster"]
    pools = {p["pool_id"]: p for p in cluster["pools"]}
    windows = [(w["start"], w["end"], Fraction(w["multiplier"])) for w in cluster["peak_windows"]]

    def price(pool: dict, start: int) -> int:
        tod = start % 86_400_000
        mult = Fraction(1)
        for lo, hi, m in windows:
            inside = lo <= tod < hi if lo < hi else (tod >= lo or tod < hi)
            if inside:
                mult = m
                break
        return math.floor(pool["price_per_period"] * mult + Fraction(1, 2))

    acquired = 0
    cost = 0
    periods_total = 0
    with open(out / FILES["events"], newline="") as fh:
        for row in csv.DictReader(fh):
            if row["kind"] == "Acquire":
                acquired += 1
            elif row["kind"] == "Decommission":
                fields = dict(kv.split("=") for kv in row["detail"].split(";"))
                pool = pools[int(fields["pool"])]
                start, end = int(fields["lease_start"]), int(row["time"])
                periods = -(-(end - start) // pool["billing_period"])
                periods_total += periods
                cost += sum(price(pool, start + k * pool["billing_period"]) for k in range(periods))
    return {"dynamic_workers_acquired": acquired, "extra_cost": cost, "billed_periods": periods_total}


# -- Table 1 -----------------------------------------------------------------------

# Measured on EC2 (static machines, dynamic machines, execution time, extra cost in micro-dollars).
MEASURED_TABLE1 = {
    "No QoS": (4, 0, "1:00:58", 0),
    "45min": (4, 2, "0:41:06", 170_000),
    "30min": (4, 6, "0:28:24", 510_000),
    "15min": (4, 20, "0:14:18", 1_700_000),
}
TABLE1_DEADLINES = {"No QoS": None, "45min": 45 * MS_PER_MINUTE, "30min": 30 * MS_PER_MINUTE,
                    "15min": 15 * MS_PER_MINUTE}
REFERENCE_ONLY = {"30min", "15min"}


@dataclass(frozen=True)
class Table1Row:
    label: str
    static: int
    dynamic: int
    makespan: int
    extra_cost: int
    measured: tuple[int, int, str, int]
    reference_only: bool
    report: RunReport = field(repr=False, compare=False, default=None)

    def line(self) -> str:
        ps, pd, pt, pc = self.measured
        flag = "  (measured count for reference only)" if self.reference_only else ""
        return (f"{self.label:<7} | {self.static:>2} {self.dynamic:>3} {hms(self.makespan):>8} "
                f"US${format_usd(self.extra_cost):>5} | {ps:>2} {pd:>3} {pt:>8} US${format_usd(pc):>5}{flag}")


def table1(out_dir: Union[str, os.PathLike, None] = None, boot_delay: int = 90_000,
           policy: ProvisioningPolicy = ProvisioningPolicy.COST_OPTIMIZATION) -> list[Table1Row]:
    rows = []
    for label, deadline in TABLE1_DEADLINES.items():
        cluster = table1_cluster(boot_delay, policy=policy)
        sub = None if out_dir is None else Path(out_dir) / label.replace(" ", "_")
        report = run_scenario(cluster, table1_workload(deadline), sub)
        rows.append(Table1Row(label, cluster.static_workers, report.totals["dynamic_workers_acquired"],
                              report.job(1)["makespan"], report.totals["extra_cost"],
                              MEASURED_TABLE1[label], label in REFERENCE_ONLY, report))
    return rows


def format_table1(rows: list[Table1Row]) -> str:
    head = "scenario| simulated: static dyn     time    cost | measured: static dyn     time    cost"
    return "\n".join([head, "-" * len(head)] + [r.line() for r in rows])


# -- policy comparison --------------------------------------------------------------


@dataclass(frozen=True)
class PolicyRow:
    policy: ProvisioningPolicy
    makespan: int
    extra_cost: int
    dynamic: int
    report: RunReport = field(repr=False, compare=False, default=None)


def compare_policies(cluster: ClusterConfig, workload: WorkloadSpec,
                     out_dir: Union[str, os.PathLike, None] = None, seed: int = 0,
                     check: bool = True) -> list[PolicyRow]:
    rows = []
    for policy in (ProvisioningPolicy.COST_OPTIMIZATION, ProvisioningPolicy.TIME_OPTIMIZATION):
        sub = None if out_dir is None else Path(out_dir) / policy.value
        report = run_scenario(replace(cluster, policy=policy), workload, sub, seed)
        rows.append(PolicyRow(policy, report.makespan, report.totals["extra_cost"],
                              report.totals["dynamic_workers_acquired"], report))
    cost, time = rows
    if check and not (time.makespan <= cost.makespan and time.extra_cost >= cost.extra_cost):
        raise PolicyDominanceViolation(
            f"time policy ({hms(time.makespan)}, {time.extra_cost}) does not dominate "
            f"cost policy ({hms(cost.makespan)}, {cost.extra_cost})")
    return rows


def format_policies(rows: list[PolicyRow]) -> str:
    lines = ["policy | makespan | dynamic | extra cost"]
    for r in rows:
        lines.append(f"{r.policy.value:<6} | {hms(r.makespan):>8} | {r.dynamic:>7} | US${format_usd(r.extra_cost)}")
    return "\n".join(lines)
