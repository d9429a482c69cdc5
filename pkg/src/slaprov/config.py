"""Cluster and workload configuration: JSON schemas, duration parsing, validation."""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from typing import Any, Optional, Union

import jsonschema

from .accounting import PeakWindow, PriceSchedule
from .model import MS_PER_HOUR, MS_PER_MINUTE, MS_PER_SECOND, ResourcePool
from .scheduler import ProvisioningPolicy


class SchemaError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message


_UNITS = {"ms": 1, "s": MS_PER_SECOND, "m": MS_PER_MINUTE, "h": MS_PER_HOUR}
_DURATION_RE = re.compile(r"^(?:\d+(?:ms|s|m|h))+$")
_PART_RE = re.compile(r"(\d+)(ms|s|m|h)")


def parse_duration(value: Union[int, str]) -> int:
    """Milliseconds from an int or a string such as ``"2m"``, ``"1h30m"``, ``"90s"``."""
    if isinstance(value, bool):
        raise TypeError("duration cannot be a boolean")
    if isinstance(value, int):
        return value
    text = value.strip()
    if text.isdigit():
        return int(text)
    if not _DURATION_RE.match(text):
        raise ValueError(f"bad duration {value!r}")
    return sum(int(n) * _UNITS[u] for n, u in _PART_RE.findall(text))


_DURATION = {"oneOf": [{"type": "integer"}, {"type": "string", "pattern": r"^(\d+|(\d+(ms|s|m|h))+)$"}]}
_MULTIPLIER = {"oneOf": [{"type": "number", "exclusiveMinimum": 0},
                         {"type": "string", "pattern": r"^\d+(\.\d+)?(/\d+)?$"}]}

CLUSTER_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["static_workers", "pools"],
    "properties": {
        "static_workers": {"type": "integer", "minimum": 0},
        "pools": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["pool_id", "boot_delay", "billing_period", "price_per_period", "max_instances"],
                "properties": {
                    "pool_id": {"type": "integer", "minimum": 0},
                    "boot_delay": _DURATION,
                    "billing_period": _DURATION,
                    "price_per_period": {"type": "integer", "minimum": 0},
                    "max_instances": {"type": "integer", "minimum": 0},
                },
            },
        },
        "default_pool": {"type": "integer"},
        "policy": {"enum": ["cost", "time"]},
        "strict_admission": {"type": "boolean"},
        "peak_windows": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["start", "end", "multiplier"],
                "properties": {"start": _DURATION, "end": _DURATION, "multiplier": _MULTIPLIER},
            },
        },
        "static_price_per_period": {"type": "integer", "minimum": 0},
        "static_billing_period": _DURATION,
        "max_attempts": {"type": "integer", "minimum": 1},
    },
}

WORKLOAD_SCHEMA: dict[str, Any] = {
    "type": "object",
    "additionalProperties": False,
    "required": ["jobs"],
    "properties": {
        "jobs": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["job_id", "task_count", "user_estimate"],
                "properties": {
                    "job_id": {"type": "integer", "minimum": 0},
                    "arrival": _DURATION,
                    "task_count": {"type": "integer", "minimum": 1},
                    "user_estimate": _DURATION,
                    "actual_runtime": {
                        "oneOf": [
                            _DURATION,
                            {
                                "type": "object",
                                "additionalProperties": False,
                                "required": ["kind"],
                                "properties": {
                                    "kind": {"enum": ["fixed", "uniform"]},
                                    "value": _DURATION,
                                    "lo": _DURATION,
                                    "hi": _DURATION,
                                    "seed": {"type": "integer"},
                                },
                            },
                        ]
                    },
                    "deadline": {"oneOf": [_DURATION, {"type": "null"}]},
                },
            },
        },
        "events": {
            "type": "array",
            "items": {
                "type": "object",
                "additionalProperties": False,
                "required": ["type", "at"],
                "properties": {
                    "type": {"enum": ["cancel", "worker_failure"]},
                    "at": _DURATION,
                    "job_id": {"type": "integer"},
                    "worker_id": {"type": "integer"},
                },
            },
        },
    },
}


@dataclass(frozen=True)
class PoolConfig:
    pool_id: int
    boot_delay: int
    billing_period: int
    price_per_period: int
    max_instances: int

    def build(self) -> ResourcePool:
        return ResourcePool(self.pool_id, self.boot_delay, self.billing_period,
                            self.price_per_period, self.max_instances)


@dataclass(frozen=True)
class ClusterConfig:
    static_workers: int
    pools: tuple[PoolConfig, ...]
    default_pool: int = 0
    policy: ProvisioningPolicy = ProvisioningPolicy.COST_OPTIMIZATION
    strict_admission: bool = False
    peak_windows: tuple[PeakWindow, ...] = ()
    static_price_per_period: int = 85_000
    static_billing_period: int = MS_PER_HOUR
    max_attempts: int = 3

    def pool(self, pool_id: Optional[int] = None) -> PoolConfig:
        pool_id = self.default_pool if pool_id is None else pool_id
        return next(p for p in self.pools if p.pool_id == pool_id)

    def price_schedule(self) -> PriceSchedule:
        return PriceSchedule({p.pool_id: p.price_per_period for p in self.pools}, self.peak_windows)

    def to_json(self) -> dict[str, Any]:
        return {
            "static_workers": self.static_workers,
            "pools": [asdict(p) for p in self.pools],
            "default_pool": self.default_pool,
            "policy": self.policy.value,
            "strict_admission": self.strict_admission,
            "peak_windows": [{"start": w.start, "end": w.end, "multiplier": str(w.multiplier)}
                             for w in self.peak_windows],
            "static_price_per_period": self.static_price_per_period,
            "static_billing_period": self.static_billing_period,
            "max_attempts": self.max_attempts,
        }


@dataclass(frozen=True)
class RuntimeDistribution:
    kind: str  # "fixed" | "uniform"
    value: Optional[int] = None
    lo: Optional[int] = None
    hi: Optional[int] = None
    seed: Optional[int] = None


@dataclass(frozen=True)
class JobSpec:
    job_id: int
    task_count: int
    user_estimate: int
    arrival: int = 0
    actual_runtime: Union[int, RuntimeDistribution, None] = None  # None: equal to the user estimate
    deadline: Optional[int] = None  # offset from arrival

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"job_id": self.job_id, "arrival": self.arrival, "task_count": self.task_count,
                               "user_estimate": self.user_estimate, "deadline": self.deadline}
        rt = self.actual_runtime
        if isinstance(rt, RuntimeDistribution):
            out["actual_runtime"] = {k: v for k, v in asdict(rt).items() if v is not None}
        elif rt is not None:
            out["actual_runtime"] = rt
        return out


@dataclass(frozen=True)
class InjectedEvent:
    type: str  # "cancel" | "worker_failure"
    at: int
    job_id: Optional[int] = None
    worker_id: Optional[int] = None


@dataclass(frozen=True)
class WorkloadSpec:
    jobs: tuple[JobSpec, ...] = ()
    events: tuple[InjectedEvent, ...] = ()

    def to_json(self) -> dict[str, Any]:
        return {"jobs": [j.to_json() for j in self.jobs],
                "events": [{k: v for k, v in asdict(e).items() if v is not None} for e in self.events]}


def _validate(doc: Any, schema: dict[str, Any]) -> None:
    validator = jsonschema.Draft7Validator(schema)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        err = errors[0]
        raise SchemaError(_path(err.absolute_path), err.message)


def _path(parts) -> str:
    out = ""
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out


def _positive(value: Any, path: str) -> int:
    ms = parse_duration(value)
    if ms <= 0:
        raise ValueError(f"{path}: duration must be positive, got {value!r}")
    return ms


def _non_negative(value: Any, path: str) -> int:
    ms = parse_duration(value)
    if ms < 0:
        raise ValueError(f"{path}: duration must be non-negative, got {value!r}")
    return ms


def _multiplier(value: Union[int, float, str]) -> Fraction:
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


def cluster_from_dict(doc: Any) -> ClusterConfig:
    _validate(doc, CLUSTER_SCHEMA)
    pools = tuple(
        PoolConfig(p["pool_id"], _non_negative(p["boot_delay"], f"pools[{i}].boot_delay"),
                   _positive(p["billing_period"], f"pools[{i}].billing_period"),
                   p["price_per_period"], p["max_instances"])
        for i, p in enumerate(doc["pools"])
    )
    ids = [p.pool_id for p in pools]
    if len(set(ids)) != len(ids):
        raise SchemaError("pools", "duplicate pool_id")
    default = doc.get("default_pool", pools[0].pool_id if len(pools) == 1 else None)
    if default is None:
        raise SchemaError("default_pool", "required when more than one pool is configured")
    if default not in ids:
        raise SchemaError("default_pool", f"unknown pool {default}")
    windows = tuple(
        PeakWindow(_non_negative(w["start"], f"peak_windows[{i}].start"),
                   _non_negative(w["end"], f"peak_windows[{i}].end"), _multiplier(w["multiplier"]))
        for i, w in enumerate(doc.get("peak_windows", []))
    )
    try:
        PriceSchedule({}, windows)
    except ValueError as exc:
        raise SchemaError("peak_windows", str(exc)) from exc
    return ClusterConfig(
        static_workers=doc["static_workers"],
        pools=pools,
        default_pool=default,
        policy=ProvisioningPolicy(doc.get("policy", "cost")),
        strict_admission=doc.get("strict_admission", False),
        peak_windows=windows,
        static_price_per_period=doc.get("static_price_per_period", 85_000),
        static_billing_period=_positive(doc.get("static_billing_period", MS_PER_HOUR), "static_billing_period"),
        max_attempts=doc.get("max_attempts", 3),
    )


def workload_from_dict(doc: Any) -> WorkloadSpec:
    _validate(doc, WORKLOAD_SCHEMA)
    jobs = []
    for i, j in enumerate(doc["jobs"]):
        where = f"jobs[{i}]"
        rt = j.get("actual_runtime")
        if isinstance(rt, dict):
            if rt["kind"] == "fixed":
                if "value" not in rt:
                    raise SchemaError(f"{where}.actual_runtime", "'value' is required for a fixed runtime")
                rt = RuntimeDistribution("fixed", value=_positive(rt["value"], f"{where}.actual_runtime.value"))
            else:
                if "lo" not in rt or "hi" not in rt:
                    raise SchemaError(f"{where}.actual_runtime", "'lo' and 'hi' are required for a uniform runtime")
                lo = _positive(rt["lo"], f"{where}.actual_runtime.lo")
                hi = _positive(rt["hi"], f"{where}.actual_runtime.hi")
                if hi < lo:
                    raise SchemaError(f"{where}.actual_runtime", "hi must be >= lo")
                rt = RuntimeDistribution("uniform", lo=lo, hi=hi, seed=rt.get("seed"))
        elif rt is not None:
            rt = _positive(rt, f"{where}.actual_runtime")
        deadline = j.get("deadline")
        jobs.append(JobSpec(
            job_id=j["job_id"],
            task_count=j["task_count"],
            user_estimate=_positive(j["user_estimate"], f"{where}.user_estimate"),
            arrival=_non_negative(j.get("arrival", 0), f"{where}.arrival"),
            actual_runtime=rt,
            deadline=None if deadline is None else _positive(deadline, f"{where}.deadline"),
        ))
    ids = [j.job_id for j in jobs]
    if len(set(ids)) != len(ids):
        raise SchemaError("jobs", "duplicate job_id")
    events = []
    for i, e in enumerate(doc.get("events", [])):
        if e["type"] == "cancel" and "job_id" not in e:
            raise SchemaError(f"events[{i}]", "'job_id' is required for a cancel")
        events.append(InjectedEvent(e["type"], _non_negative(e["at"], f"events[{i}].at"),
                                    e.get("job_id"), e.get("worker_id")))
    return WorkloadSpec(tuple(jobs), tuple(events))


def parse_configs(cluster_text: str, workload_text: str) -> tuple[ClusterConfig, WorkloadSpec]:
    try:
        cluster_doc = json.loads(cluster_text)
    except json.JSONDecodeError as exc:
        raise SchemaError("cluster", f"invalid JSON: {exc}") from exc
    try:
        workload_doc = json.loads(workload_text)
    except json.JSONDecodeError as exc:
        raise SchemaError("workload", f"invalid JSON: {exc}") from exc
    return cluster_from_dict(cluster_doc), workload_from_dict(workload_doc)


def table1_cluster(boot_delay: int = 90_000, max_instances: int = 64,
                   policy: ProvisioningPolicy = ProvisioningPolicy.COST_OPTIMIZATION) -> ClusterConfig:
    """Four single-core static workers plus an on-demand pool at US$0.085/hour."""
    return ClusterConfig(4, (PoolConfig(0, boot_delay, MS_PER_HOUR, 85_000, max_instances),), policy=policy)


def table1_workload(deadline: Optional[int]) -> WorkloadSpec:
    """One job of 120 two-minute tasks, optionally with a deadline."""
    return WorkloadSpec((JobSpec(1, 120, 2 * MS_PER_MINUTE, deadline=deadline),))
