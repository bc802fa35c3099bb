"""Reference deployment: a communication-interface model plus behaviors.

The model describes a tactical communication interface: an operator
console, two live link hosts with one standby, a bank of monitored
communication equipment, and six peer interfaces::

    Operator ──ExchangeStatus──▶ everyone          (periodic status segment)
    LocalHost#k ──SendData──▶ PeerCI#0..5          (framed packet queues)
    PeerCI#j ──ReceiveData──▶ LocalHost#0..1       (framed packet queues)
    * ──ReportHealth──▶ CommEquipment              (heartbeat segments)
    CommEquipment ──MonitorEquipment──▶ Operator   (alert summaries)

`build_behaviors` attaches statecharts whose actions run the real wire
codecs (packetize / frame / deframe / reassemble), so a simulation run
exercises the same code paths as the unit-level packet tests. Actors
outside this model get a generic relay machine, which keeps arbitrary
models simulatable from the command line.
"""

from __future__ import annotations

from dataclasses import replace

from . import comm
from .engine import SimConfig, SimWorld, instantiate
from .ipc import ChannelKind, IpcChannel, assign_ipc, dependency_graph
from .model import UseCaseModel, parse_model
from .partition import MappingPolicy, ProcessNode, ProcessPlan, build_plan
from .statechart import Action, ActionContext, ActorMessage, MachineBuilder, StateMachine

AUTH_KEY = b"viewcase"
HEALTH_SOURCE = "ReportHealth"
TAKEOVER_PRIORITY = 250

FIXTURE_MODEL = """\
# Tactical communication interface deployment.
actor Operator multiplicity 1
actor LocalHost multiplicity 2
actor StandbyCI multiplicity 1
actor CommEquipment multiplicity 4 shared
actor PeerCI multiplicity 6

usecase SendData "Send outbound track data" codesize 9000
usecase ReceiveData "Receive inbound track data" codesize 9500
usecase ExchangeStatus "Exchange operational status" codesize 3000
usecase MonitorEquipment "Monitor equipment health" codesize 4000
usecase MaintainSession "Maintain peer sessions" codesize 2500
usecase TakeOver "Assume a failed interface role" codesize 5000
usecase DisplayStatus "Display interface status" codesize 2000
usecase ReportHealth "Publish liveness heartbeats" codesize 1000
usecase Authenticate "Authenticate message traffic" codesize 800
usecase LogTraffic "Log message traffic" codesize 1200

trigger Operator -> ExchangeStatus
trigger Operator -> DisplayStatus
trigger Operator -> ReportHealth
trigger LocalHost -> SendData
trigger LocalHost -> ReportHealth
trigger StandbyCI -> TakeOver
trigger StandbyCI -> ReportHealth
trigger CommEquipment -> MonitorEquipment
trigger PeerCI -> ReceiveData
trigger PeerCI -> MaintainSession
trigger PeerCI -> ReportHealth

relation include SendData <- Authenticate
relation include ReceiveData <- Authenticate
relation include ExchangeStatus <- Authenticate
relation include SendData <- LogTraffic
relation include ReceiveData <- LogTraffic

flow ExchangeStatus -> LocalHost periodic 200 size 256
flow ExchangeStatus -> StandbyCI periodic 200 size 256
flow ExchangeStatus -> CommEquipment periodic 200 size 256
flow ExchangeStatus -> PeerCI periodic 200 size 256
flow SendData -> PeerCI async size 1500
flow ReceiveData -> LocalHost async size 1500
flow ReportHealth -> CommEquipment periodic 100 size 64
flow MonitorEquipment -> Operator async size 128
"""


def fixture_model() -> str:
    return FIXTURE_MODEL


def scale_peers(model: UseCaseModel, count: int) -> UseCaseModel:
    """Same deployment with a different number of peer interfaces."""
    if count < 1:
        raise ValueError("peer count must be >= 1")
    actors = tuple(
        replace(a, multiplicity=count) if a.name == "PeerCI" else a for a in model.actors
    )
    return UseCaseModel(actors, model.use_cases, model.relations, model.flows)


# --- statechart actions ------------------------------------------------------


def _bump(counter: str):
    def fn(ctx: ActionContext) -> None:
        ctx.vars[counter] = ctx.vars.get(counter, 0) + 1

    return fn


def _as_bytes(body: object) -> bytes:
    return bytes(body) if isinstance(body, (bytes, bytearray)) else b""


def _authenticate(key: bytes):
    def fn(ctx: ActionContext) -> None:
        body = _as_bytes(ctx.msg.body)
        ctx.vars["_body"] = body
        ctx.vars["_tag"] = comm.auth_tag(key, body)

    return fn


def _encode(lane: int, data_type: str, link: comm.LinkType, mtu: int, key: bytes):
    """Packetize the staged body and frame every packet for the link."""

    def fn(ctx: ActionContext) -> None:
        n = ctx.vars["produced"] = ctx.vars.get("produced", 0) + 1
        app = comm.AppMessage((lane << 20) | n, "", "", data_type, ctx.vars.pop("_body"))
        ctx.vars["_frames"] = [
            comm.convert_to_frame(p, link) for p in comm.packetize(app, mtu, key)
        ]

    return fn


def _transmit(uc: str, data_type: str):
    def fn(ctx: ActionContext) -> None:
        priority = comm.classify_priority(data_type)
        for frame in ctx.vars.pop("_frames"):
            ctx.emit(f"uc:{uc}", ActorMessage("DATA_PKT", frame, priority))
        ctx.vars.pop("_tag", None)

    return fn


def _deframe():
    """Decode the arriving frame; the first byte 0x7E marks the escaped link."""

    def fn(ctx: ActionContext) -> None:
        frame = _as_bytes(ctx.msg.body)
        link = comm.LinkType.LINK_B if frame[:1] == b"\x7e" else comm.LinkType.LINK_A
        try:
            ctx.vars["_pkt"] = comm.convert_from_frame(frame, link)
        except comm.FrameCorrupt:
            ctx.vars["_pkt"] = None
            ctx.vars["corrupt"] = ctx.vars.get("corrupt", 0) + 1

    return fn


def _reassemble(key: bytes):
    def fn(ctx: ActionContext) -> None:
        pkt = ctx.vars.pop("_pkt", None)
        if pkt is None:
            return
        buf = ctx.vars.setdefault("rx", comm.ReassemblyBuffer(owner="local"))
        outcome = comm.reassemble(buf, pkt, now=0, timeout=1 << 30, key=key, src="wire")
        ctx.vars[outcome.kind.value] = ctx.vars.get(outcome.kind.value, 0) + 1
        if outcome.kind is comm.OutcomeKind.COMPLETE:
            assert outcome.message is not None
            ctx.vars["last_size"] = len(outcome.message.payload)

    return fn


# --- machines ----------------------------------------------------------------


def _codec_machine(
    label: str,
    uc: str,
    lane: int,
    link: comm.LinkType,
    trigger: str,
    leaf: str,
    mtu: int,
    key: bytes,
) -> StateMachine:
    """Endpoint that both produces framed traffic and ingests it."""
    b = MachineBuilder(label)
    b.state("Top", initial=leaf)
    b.state(leaf, parent="Top")
    b.transition(
        leaf,
        trigger,
        leaf,
        actions=(
            Action("authenticate", _authenticate(key)),
            Action("encode", _encode(lane, "track_data", link, mtu, key)),
            Action("transmit", _transmit(uc, "track_data")),
        ),
    )
    b.transition(
        leaf,
        "DATA_PKT",
        leaf,
        actions=(Action("deframe", _deframe()), Action("reassemble", _reassemble(key))),
    )
    b.transition(leaf, "ExchangeStatus", leaf, actions=(Action("note_status", _bump("status_seen")),))
    machine = b.build()
    machine.variables["lane"] = lane
    return machine


def _session_machine(label: str) -> StateMachine:
    b = MachineBuilder(label)
    b.state("Session", initial="Down")
    b.state("Down", parent="Session", defer=("PEER_MSG",))
    b.state("Up", parent="Session")
    b.transition("Down", "SESSION_UP", "Up", actions=(Action("open_session", _bump("opens")),))
    b.transition("Up", "SESSION_DOWN", "Down", actions=(Action("close_session", _bump("closes")),))
    b.transition("Up", "PEER_MSG", "Up", actions=(Action("relay_peer", _bump("peer_msgs")),))
    return b.build()


def _operator_machine(label: str) -> StateMachine:
    def record(ctx: ActionContext) -> None:
        ctx.vars["summaries"] = ctx.vars.get("summaries", 0) + 1
        text = _as_bytes(ctx.msg.body).decode("utf-8", "replace")
        if text:
            ctx.vars["alerts"] = ctx.vars.get("alerts", 0) + len(text.split("|"))

    b = MachineBuilder(label)
    b.state("Top", initial="Watch")
    b.state("Watch", parent="Top")
    b.transition("Watch", "EQUIP_STATUS", "Watch", actions=(Action("record_alerts", record),))
    return b.build()


def _monitor_machine(label: str) -> StateMachine:
    b = MachineBuilder(label)
    b.state("Top", initial="Scanning")
    b.state("Scanning", parent="Top")
    b.transition(
        "Scanning", "ExchangeStatus", "Scanning", actions=(Action("note_status", _bump("status_seen")),)
    )
    return b.build()


def _standby_machine(label: str, mtu: int, key: bytes) -> StateMachine:
    b = MachineBuilder(label)
    b.state("Top", initial="Standby")
    b.state("Standby", parent="Top", defer=("DATA_PKT",))
    b.state("Active", parent="Top")
    b.transition("Standby", "TAKEOVER", "Active", actions=(Action("announce", _bump("takeovers")),))
    b.transition("Active", "TAKEOVER", "Active", actions=(Action("announce", _bump("takeovers")),))
    b.transition(
        "Active",
        "DATA_PKT",
        "Active",
        actions=(Action("deframe", _deframe()), Action("reassemble", _reassemble(key))),
    )
    b.transition("Standby", "ExchangeStatus", "Standby", actions=(Action("note_status", _bump("status_seen")),))
    b.transition("Active", "ExchangeStatus", "Active", actions=(Action("note_status", _bump("status_seen")),))
    return b.build()


def _generic_machine(node: ProcessNode, channels: list[IpcChannel] | None) -> StateMachine:
    """Fallback for models without dedicated behaviors: relay own use
    cases onto their channels, acknowledge everything received."""

    def relay(uc: str):
        def fn(ctx: ActionContext) -> None:
            ctx.vars[f"relayed_{uc}"] = ctx.vars.get(f"relayed_{uc}", 0) + 1
            ctx.emit(f"uc:{uc}", ActorMessage("DATA_PKT", _as_bytes(ctx.msg.body), ctx.msg.priority))

        return fn

    b = MachineBuilder(node.id)
    b.state("Top", initial="Idle")
    b.state("Idle", parent="Top")
    owned = set(node.owned_use_cases())
    for uc in sorted(owned):
        b.transition("Idle", uc, "Idle", actions=(Action(f"relay_{uc}", relay(uc)),))
    inbound = set()
    for ch in channels or ():
        if node.id in ch.readers:
            inbound.add(ch.source)
    inbound.add("DATA_PKT")
    for signal in sorted(inbound - owned):
        b.transition("Idle", signal, "Idle", actions=(Action(f"note_{signal}", _bump(f"seen_{signal}")),))
    return b.build()


_FIXTURE_ACTORS = {"Operator", "LocalHost", "StandbyCI", "CommEquipment", "PeerCI"}


def build_behaviors(
    plan: ProcessPlan,
    channels: list[IpcChannel] | None = None,
    mtu_payload: int = 1000,
    auth_key: bytes = AUTH_KEY,
) -> dict[str, dict[str, StateMachine]]:
    """One behavior set per process node, keyed by the machine's use case.

    Message-id lanes are disjoint per node so reassembly keys from
    different producers never collide at a shared consumer.
    """
    out: dict[str, dict[str, StateMachine]] = {}
    host_lane, peer_lane = 1, 16
    for node in plan.all_nodes():
        if node.service:
            out[node.id] = {}
            continue
        actor = node.actor
        if actor == "LocalHost":
            lane, host_lane = host_lane, host_lane + 1
            out[node.id] = {
                "SendData": _codec_machine(
                    node.id, "SendData", lane, comm.LinkType.LINK_A, "SEND_REQ", "Idle", mtu_payload, auth_key
                )
            }
        elif actor == "PeerCI":
            lane, peer_lane = peer_lane, peer_lane + 1
            out[node.id] = {
                "ReceiveData": _codec_machine(
                    node.id, "ReceiveData", lane, comm.LinkType.LINK_B, "RX_DATA", "Listening", mtu_payload, auth_key
                ),
                "MaintainSession": _session_machine(f"{node.id}:session"),
            }
        elif actor == "StandbyCI":
            out[node.id] = {"TakeOver": _standby_machine(node.id, mtu_payload, auth_key)}
        elif actor == "Operator":
            out[node.id] = {"ExchangeStatus": _operator_machine(node.id)}
        elif actor == "CommEquipment":
            out[node.id] = {"MonitorEquipment": _monitor_machine(node.id)}
        else:
            out[node.id] = {"relay": _generic_machine(node, channels)}
    return out


# --- scenarios -----------------------------------------------------------------


def degradation_scenario(
    peers: int = 6, kill: str | None = "PeerCI#3", kill_at: int = 5000
) -> str:
    """Steady traffic on every link; optionally kill one peer mid-run."""
    lines = [
        "stimulus LocalHost#0 SEND_REQ at 100 every 200 priority 180 size 2500",
        "stimulus LocalHost#1 SEND_REQ at 150 every 200 priority 180 size 2500",
    ]
    for k in range(peers):
        lines.append(
            f"stimulus PeerCI#{k} RX_DATA at {120 + 10 * k} every 300 priority 200 size 700"
        )
    if kill:
        lines.append(f"fault kill {kill} at {kill_at}")
    return "\n".join(lines) + "\n"


def failover_scenario(peers: int = 6, kill_at: int = 1000) -> str:
    """Kill both live hosts at once; the standby must take their place."""
    lines = [
        f"stimulus PeerCI#{k} RX_DATA at {100 + 10 * k} every 200 priority 200 size 600"
        for k in range(peers)
    ]
    lines.append(f"fault kill LocalHost#0 at {kill_at}")
    lines.append(f"fault kill LocalHost#1 at {kill_at}")
    return "\n".join(lines) + "\n"


def standby_map(plan: ProcessPlan) -> dict[str, str]:
    """Every live host fails over to the first standby node."""
    standbys = [n.id for n in plan.nodes if n.actor == "StandbyCI"]
    if not standbys:
        return {}
    return {n.id: standbys[0] for n in plan.nodes if n.actor == "LocalHost"}


# --- world assembly --------------------------------------------------------------


def build_world(
    model: UseCaseModel | None = None,
    policy: MappingPolicy | None = None,
    sim_config: SimConfig | None = None,
    comm_config: comm.CommConfig | None = None,
    with_failover: bool = True,
) -> tuple[ProcessPlan, list[IpcChannel], SimWorld]:
    """Plan the model, wire channels, attach behaviors, return a fresh world."""
    model = model or parse_model(FIXTURE_MODEL)
    policy = policy or MappingPolicy()
    cfg = comm_config or comm.DEFAULT_CONFIG
    plan = build_plan(model, policy)
    channels = assign_ipc(dependency_graph(plan, model))
    behaviors = build_behaviors(plan, channels, cfg.mtu_payload, cfg.auth_key)
    failover = None
    if with_failover:
        monitor = next((n.id for n in plan.nodes if n.actor == "CommEquipment"), None)
        alert_channel = next(
            (
                c.id
                for c in channels
                if c.source == "MonitorEquipment" and c.kind is ChannelKind.MESSAGE_QUEUE
            ),
            None,
        )
        failover = comm.build_failover(
            standby_map(plan),
            health_source=HEALTH_SOURCE,
            scan_period=cfg.scan_period,
            dead_threshold=cfg.dead_threshold,
            monitor_process=monitor,
            alert_channel=alert_channel,
        )
    world = instantiate(
        plan,
        channels,
        behaviors,
        config=sim_config,
        failover=failover,
        scan_only_sources=frozenset({HEALTH_SOURCE}),
    )
    return plan, channels, world
