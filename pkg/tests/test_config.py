import json
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from slaprov.config import (
    RuntimeDistribution,
    SchemaError,
    cluster_from_dict,
    parse_configs,
    parse_duration,
    table1_cluster,
    table1_workload,
    workload_from_dict,
)
from slaprov.scheduler import ProvisioningPolicy

TABLE1_CLUSTER = {
    "static_workers": 4,
    "pools": [{"pool_id": 0, "boot_delay": "90s", "billing_period": "1h",
               "price_per_period": 85_000, "max_instances": 64}],
    "policy": "cost",
}
TABLE1_WORKLOAD = {"jobs": [{"job_id": 1, "arrival": 0, "task_count": 120, "user_estimate": "2m",
                             "deadline": "45m"}]}


@pytest.mark.parametrize("text,ms", [("2m", 120_000), ("45m", 2_700_000), ("1h30m", 5_400_000), ("90s", 90_000),
                                     ("500ms", 500), ("1500", 1500), (7, 7)])
def test_parse_duration(text, ms):
    assert parse_duration(text) == ms


@pytest.mark.parametrize("bad", ["", "2 minutes", "m", "1.5h", "-3s"])
def test_parse_duration_rejects_garbage(bad):
    with pytest.raises(ValueError):
        parse_duration(bad)


def test_table1_stanza_matches_builder():
    cluster, workload = parse_configs(json.dumps(TABLE1_CLUSTER), json.dumps(TABLE1_WORKLOAD))
    assert cluster == table1_cluster()
    assert workload == table1_workload(2_700_000)
    assert cluster.pool().build().price_per_period == 85_000


def test_zero_tasks_is_schema_error():
    doc = json.loads(json.dumps(TABLE1_WORKLOAD))
    doc["jobs"][0]["task_count"] = 0
    with pytest.raises(SchemaError) as err:
        workload_from_dict(doc)
    assert err.value.path == "jobs[0].task_count"


def test_unknown_field_rejected():
    doc = dict(TABLE1_CLUSTER, turbo=True)
    with pytest.raises(SchemaError):
        cluster_from_dict(doc)


def test_missing_field_reports_path():
    doc = json.loads(json.dumps(TABLE1_CLUSTER))
    del doc["pools"][0]["max_instances"]
    with pytest.raises(SchemaError) as err:
        cluster_from_dict(doc)
    assert err.value.path == "pools[0]"


def test_non_positive_durations_rejected():
    doc = json.loads(json.dumps(TABLE1_WORKLOAD))
    doc["jobs"][0]["user_estimate"] = 0
    with pytest.raises(ValueError):
        workload_from_dict(doc)
    doc = json.loads(json.dumps(TABLE1_CLUSTER))
    doc["pools"][0]["billing_period"] = "0s"
    with pytest.raises(ValueError):
        cluster_from_dict(doc)


def test_zero_boot_delay_and_arrival_allowed():
    doc = json.loads(json.dumps(TABLE1_CLUSTER))
    doc["pools"][0]["boot_delay"] = 0
    assert cluster_from_dict(doc).pools[0].boot_delay == 0


def test_invalid_json_is_schema_error():
    with pytest.raises(SchemaError):
        parse_configs("{", json.dumps(TABLE1_WORKLOAD))


def test_duplicate_job_ids():
    doc = {"jobs": [TABLE1_WORKLOAD["jobs"][0], TABLE1_WORKLOAD["jobs"][0]]}
    with pytest.raises(SchemaError):
        workload_from_dict(doc)


def test_runtime_distributions_and_events():
    doc = {"jobs": [
        {"job_id": 1, "task_count": 3, "user_estimate": "1m", "actual_runtime": {"kind": "uniform", "lo": "30s",
                                                                               "hi": "90s", "seed": 4}},
        {"job_id": 2, "task_count": 3, "user_estimate": "1m", "actual_runtime": {"kind": "fixed", "value": "45s"}},
    ], "events": [{"type": "cancel", "at": "5m", "job_id": 1}, {"type": "worker_failure", "at": 1000}]}
    w = workload_from_dict(doc)
    assert w.jobs[0].actual_runtime == RuntimeDistribution("uniform", lo=30_000, hi=90_000, seed=4)
    assert w.jobs[1].actual_runtime == RuntimeDistribution("fixed", value=45_000)
    assert w.events[0].at == 300_000 and w.events[1].worker_id is None
    with pytest.raises(SchemaError):
        workload_from_dict({"jobs": [], "events": [{"type": "cancel", "at": 0}]})


def test_peak_windows_parse_exactly():
    doc = dict(TABLE1_CLUSTER, peak_windows=[{"start": "18h", "end": "22h", "multiplier": 1.5}])
    assert cluster_from_dict(doc).peak_windows[0].multiplier == Fraction(3, 2)
    doc = dict(TABLE1_CLUSTER, peak_windows=[{"start": "1h", "end": "3h", "multiplier": 2},
                                             {"start": "2h", "end": "4h", "multiplier": 2}])
    with pytest.raises(SchemaError):
        cluster_from_dict(doc)


@given(
    static=st.integers(0, 8),
    boot=st.integers(0, 10**6),
    period=st.integers(1, 10**7),
    price=st.integers(0, 10**6),
    cap=st.integers(0, 100),
    policy=st.sampled_from(list(ProvisioningPolicy)),
)
def test_cluster_round_trip(static, boot, period, price, cap, policy):
    doc = {"static_workers": static, "policy": policy.value,
           "pools": [{"pool_id": 3, "boot_delay": boot, "billing_period": period, "price_per_period": price,
                      "max_instances": cap}]}
    cfg = cluster_from_dict(doc)
    assert cluster_from_dict(cfg.to_json()) == cfg


def test_workload_round_trip():
    w = table1_workload(2_700_000)
    assert workload_from_dict(w.to_json()) == w
