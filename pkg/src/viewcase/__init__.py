"""Actor-centric runtime-architecture planning and simulation.

The pipeline: a declarative use-case model (actors, use cases, triggers,
include/extend relations, traffic flows) is partitioned into view cases,
mapped onto process nodes under a fault-tolerance or memory policy, wired
with shared-segment / message-queue channels, and then executed as a
deterministic discrete-event simulation of processes with four logical
threads each (watchdog, receiver, processor, transmitter).
"""

__version__ = "0.1.0"

from .model import UseCaseModel, parse_model, render_model, trigger_map, validate_model
from .partition import MappingPolicy, Objective, ProcessPlan, build_plan, plan_diff
from .ipc import assign_ipc, dependency_graph, emit_component_graph

__all__ = [
    "UseCaseModel",
    "parse_model",
    "render_model",
    "trigger_map",
    "validate_model",
    "MappingPolicy",
    "Objective",
    "ProcessPlan",
    "build_plan",
    "plan_diff",
    "dependency_graph",
    "assign_ipc",
    "emit_component_graph",
]
