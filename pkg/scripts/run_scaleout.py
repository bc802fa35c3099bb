#!/usr/bin/env python3
"""Scale-out experiment: grow the peer count and diff the plans.

Shows that adding peers is incremental — existing nodes and channels
keep their identities and only the new endpoints appear.

    python3 scripts/run_scaleout.py --from 6 --to 9
"""

import argparse

from viewcase.fixture import FIXTURE_MODEL, scale_peers
from viewcase.ipc import assign_ipc, dependency_graph
from viewcase.model import parse_model
from viewcase.partition import MappingPolicy, build_plan, plan_diff


def _materialize(model):
    plan = build_plan(model, MappingPolicy())
    return plan, assign_ipc(dependency_graph(plan, model))


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--from", dest="start", type=int, default=6)
    parser.add_argument("--to", dest="end", type=int, default=7)
    args = parser.parse_args()

    base_model = scale_peers(parse_model(FIXTURE_MODEL), args.start)
    old_plan, old_channels = _materialize(base_model)
    new_plan, new_channels = _materialize(scale_peers(base_model, args.end))
    diff = plan_diff(old_plan, new_plan, old_channels, new_channels)

    print(f"peers {args.start} -> {args.end}")
    print(f"  nodes: {len(old_plan.all_nodes())} -> {len(new_plan.all_nodes())}")
    print(f"  channels: {len(old_channels)} -> {len(new_channels)}")
    for n in diff.added_nodes:
        print(f"  + node {n}")
    for n in diff.removed_nodes:
        print(f"  - node {n}")
    for c in diff.added_channels:
        print(f"  + channel {c}")
    for c in diff.removed_channels:
        print(f"  - channel {c}")
    for c, fields in diff.changed_channels:
        print(f"  ~ channel {c} ({', '.join(fields)})")
    print(f"  footprint: {old_plan.estimated_footprint} -> {new_plan.estimated_footprint}")


if __name__ == "__main__":
    main()
