"""Command line entry point: ``slaprov run | table1 | compare``.

Exit codes: 0 success, 2 configuration/schema error, 3 simulator fault.
Errors are reported on stderr as a single JSON object.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional, Sequence

from .config import SchemaError, parse_configs, parse_duration
from .engine import HandlerFault, SimulationError
from .reports import (
    PolicyDominanceViolation,
    compare_policies,
    format_policies,
    format_table1,
    hms,
    run_scenario,
    table1,
)
from .scheduler import ProvisioningPolicy

EXIT_OK = 0
EXIT_SCHEMA = 2
EXIT_FAULT = 3


def _fail(code: int, error: str, message: str, **extra) -> int:
    payload = {"code": code, "error": error, "message": message, **extra}
    print(json.dumps(payload, sort_keys=True), file=sys.stderr)
    return code


def _load(args) -> tuple:
    cluster_text = Path(args.cluster).read_text()
    workload_text = Path(args.workload).read_text()
    cluster, workload = parse_configs(cluster_text, workload_text)
    if args.policy:
        cluster = replace(cluster, policy=ProvisioningPolicy(args.policy))
    if args.boot_delay_override is not None:
        ms = parse_duration(args.boot_delay_override)
        cluster = replace(cluster, pools=tuple(replace(p, boot_delay=ms) for p in cluster.pools))
    return cluster, workload


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="slaprov", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="verb", required=True)

    def scenario_flags(p: argparse.ArgumentParser) -> None:
        p.add_argument("--cluster", required=True, help="cluster JSON file")
        p.add_argument("--workload", required=True, help="workload JSON file")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--policy", choices=[p.value for p in ProvisioningPolicy])
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--boot-delay-override", help="boot delay for every pool (ms or e.g. 90s)")

    scenario_flags(sub.add_parser("run", help="run one scenario and write traces"))
    scenario_flags(sub.add_parser("compare", help="run a scenario under both provisioning policies"))
    t1 = sub.add_parser("table1", help="replay the four reference scenarios")
    t1.add_argument("--out", default="out/table1")
    t1.add_argument("--policy", choices=[p.value for p in ProvisioningPolicy], default="cost")
    t1.add_argument("--boot-delay-override", help="boot delay of the dynamic pool (default 90s)")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    try:
        if args.verb == "table1":
            boot = 90_000 if args.boot_delay_override is None else parse_duration(args.boot_delay_override)
            rows = table1(args.out, boot, ProvisioningPolicy(args.policy))
            print(format_table1(rows))
            return EXIT_OK
        cluster, workload = _load(args)
        if args.verb == "run":
            report = run_scenario(cluster, workload, args.out, args.seed)
            t = report.totals
            print(f"jobs={t['jobs_admitted']} rejected={t['jobs_rejected']} makespan={hms(report.makespan)} "
                  f"dynamic={t['dynamic_workers_acquired']} extra_cost=US${t['extra_cost_usd']} "
                  f"sla_met={t['sla_met']} sla_missed={t['sla_missed']} out={args.out}")
        else:
            rows = compare_policies(cluster, workload, args.out, args.seed)
            print(format_policies(rows))
        return EXIT_OK
    except SchemaError as exc:
        return _fail(EXIT_SCHEMA, "SchemaError", exc.message, path=exc.path)
    except (ValueError, OSError) as exc:
        return _fail(EXIT_SCHEMA, type(exc).__name__, str(exc))
    except HandlerFault as exc:
        ev = exc.event
        return _fail(EXIT_FAULT, "SimulatorFault", str(exc),
                     event={"time": ev.fire_at, "kind": ev.kind.label, "seq": ev.seq})
    except (SimulationError, PolicyDominanceViolation, RuntimeError) as exc:
        return _fail(EXIT_FAULT, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
