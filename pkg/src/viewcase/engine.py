"""Deterministic discrete-event runtime for process plans.

Each process node becomes a simulated process with the four-thread
template: a watchdog, a receiver that drains channel endpoints into the
mailbox, an event-driven processor that dispatches statechart messages,
and a transmitter that writes periodic snapshots and flushes emitted
messages. Time is a virtual integer millisecond clock; events execute in
(time, insertion-sequence) order, so identical inputs always produce
byte-identical traces.

Scheduling model: watchdog, receiver and transmitter activations are
instantaneous and effectively preempt the processor (at equal times they
sort ahead of processor ticks because they were scheduled a full period
earlier). The processor spends one virtual millisecond per statechart
action, so a long dispatch is interleaved with other activations but its
run-to-completion semantics are untouched — emissions and recalls apply
only when the dispatch finishes.

Scenario files are line oriented (`#` comments):

    fault kill <process> at <ms>
    stimulus <process> <signal> at <ms> every <ms> priority <int> size <bytes>

`every 0` means a one-shot stimulus. Stimulus payloads are seeded random
bytes; the seed affects nothing else.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable

from .ipc import ChannelKind, IpcChannel
from .partition import ProcessNode, ProcessPlan
from .statechart import ActorMessage, StateMachine, dispatch, select_transition, state_context


class ThreadRole(Enum):
    WATCHDOG = "watchdog"
    RECEIVER = "receiver"
    PROCESSOR = "processor"
    TRANSMITTER = "transmitter"


class ThreadState(Enum):
    READY = "ready"
    RUNNING = "running"
    BLOCKED = "blocked"
    FAILED = "failed"


@dataclass
class LogicalThread:
    role: ThreadRole
    priority: int
    period: int | None = None  # None for the event-driven processor
    state: ThreadState = ThreadState.READY


@dataclass(frozen=True)
class SimConfig:
    receiver_period: int = 50
    transmitter_period: int = 50
    watchdog_period: int = 100
    watchdog_timeout: int = 300  # 3 x watchdog period
    watchdog_priority: int = 40
    receiver_priority: int = 30
    transmitter_priority: int = 20
    processor_priority: int = 10
    max_batch: int = 256  # zero-cost processor outcomes folded into one tick


@dataclass(frozen=True)
class FailoverConfig:
    scan_period: int
    scan_fn: Callable[["SimWorld", int], None]


class MissingBehavior(Exception):
    def __init__(self, node_id: str):
        super().__init__(f"no state machine supplied for process node {node_id}")
        self.node_id = node_id


# --- scenario ----------------------------------------------------------------


@dataclass(frozen=True)
class FaultSpec:
    process: str
    at: int


@dataclass(frozen=True)
class StimulusSpec:
    process: str
    signal: str
    at: int
    every: int  # 0 = one-shot
    priority: int
    size: int


@dataclass(frozen=True)
class Scenario:
    faults: tuple[FaultSpec, ...] = ()
    stimuli: tuple[StimulusSpec, ...] = ()


class ScenarioError(Exception):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


def _strip_comment(raw: str) -> str:
    """Drop `#` comments; `#` inside a token (process ids) is not a comment."""
    for i, c in enumerate(raw):
        if c == "#" and (i == 0 or raw[i - 1] in " \t"):
            return raw[:i]
    return raw


def parse_scenario(text: str) -> Scenario:
    faults: list[FaultSpec] = []
    stimuli: list[StimulusSpec] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] == "fault":
                if parts[1] != "kill" or parts[3] != "at":
                    raise ValueError
                faults.append(FaultSpec(parts[2], int(parts[4])))
            elif parts[0] == "stimulus":
                if (
                    len(parts) != 11
                    or parts[3] != "at"
                    or parts[5] != "every"
                    or parts[7] != "priority"
                    or parts[9] != "size"
                ):
                    raise ValueError
                stimuli.append(
                    StimulusSpec(
                        parts[1], parts[2], int(parts[4]), int(parts[6]),
                        int(parts[8]), int(parts[10]),
                    )
                )
            else:
                raise ValueError
        except (ValueError, IndexError):
            raise ScenarioError(
                lineno,
                "expected 'fault kill <process> at <ms>' or "
                "'stimulus <process> <signal> at <ms> every <ms> priority <int> size <bytes>'",
            ) from None
    return Scenario(tuple(faults), tuple(stimuli))


def inject_fault(scenario: Scenario, process_id: str, at: int) -> Scenario:
    return Scenario(scenario.faults + (FaultSpec(process_id, at),), scenario.stimuli)


# --- trace and metrics --------------------------------------------------------


@dataclass(frozen=True)
class TraceRow:
    time: int
    process: str
    thread: str
    event: str
    detail: str


@dataclass(frozen=True)
class SimTrace:
    rows: tuple[TraceRow, ...]

    def to_text(self) -> str:
        return "".join(
            f"{r.time}\t{r.process}\t{r.thread}\t{r.event}\t{r.detail}\n" for r in self.rows
        )

    def rows_of(self, event: str, process: str | None = None) -> list[TraceRow]:
        return [
            r
            for r in self.rows
            if r.event == event and (process is None or r.process == process)
        ]


@dataclass
class LinkStats:
    sent: int = 0
    delivered: int = 0


@dataclass
class ProcessStats:
    dispatches: int = 0
    discards: int = 0
    deferrals: int = 0
    watchdog_trips: int = 0


@dataclass(frozen=True)
class FailoverRecord:
    main: str
    standby: str
    detected_at: int
    active_at: int


@dataclass
class Metrics:
    links: dict[tuple[str, str, str], LinkStats] = field(default_factory=dict)
    processes: dict[str, ProcessStats] = field(default_factory=dict)
    faults: list[tuple[int, str, str]] = field(default_factory=list)
    failover: list[FailoverRecord] = field(default_factory=list)

    def link(self, channel_id: str, producer: str, consumer: str) -> LinkStats:
        key = (channel_id, producer, consumer)
        if key not in self.links:
            self.links[key] = LinkStats()
        return self.links[key]

    def process(self, process_id: str) -> ProcessStats:
        if process_id not in self.processes:
            self.processes[process_id] = ProcessStats()
        return self.processes[process_id]

    def record_failover(self, main: str, standby: str, detected_at: int, active_at: int) -> None:
        self.failover.append(FailoverRecord(main, standby, detected_at, active_at))

    def to_text(self) -> str:
        lines = ["metrics-format: 1", f"links: {len(self.links)}"]
        for (ch, prod, cons) in sorted(self.links):
            s = self.links[(ch, prod, cons)]
            lines.append(f"link: {ch} {prod} {cons} sent {s.sent} delivered {s.delivered}")
        lines.append(f"processes: {len(self.processes)}")
        for pid in sorted(self.processes):
            p = self.processes[pid]
            lines.append(
                f"process: {pid} dispatches {p.dispatches} discards {p.discards} "
                f"deferrals {p.deferrals} trips {p.watchdog_trips}"
            )
        lines.append(f"faults: {len(self.faults)}")
        for t, pid, cause in self.faults:
            lines.append(f"fault: {pid} at {t} cause {cause}")
        lines.append(f"failover: {len(self.failover)}")
        for f in self.failover:
            lines.append(
                f"takeover: main {f.main} standby {f.standby} "
                f"detected {f.detected_at} active {f.active_at}"
            )
        return "\n".join(lines) + "\n"


# --- channel runtimes ---------------------------------------------------------


@dataclass
class MessageQueueRt:
    channel: IpcChannel
    writer: str
    readers: list[str]
    items: list[tuple[int, ActorMessage]] = field(default_factory=list)


@dataclass
class SharedSegmentRt:
    channel: IpcChannel
    writer: str
    readers: list[str]
    slot: ActorMessage | None = None
    version: int = 0
    last_write: int = 0


ChannelRt = MessageQueueRt | SharedSegmentRt


# --- processes ----------------------------------------------------------------


@dataclass
class _ActiveDispatch:
    machine_key: str
    signal: str
    pending_actions: list[tuple[str, int | float]]
    ms_left: int | float
    emitted: tuple[tuple[str, ActorMessage], ...]
    recalled: tuple[ActorMessage, ...]
    dispatch_no: int


@dataclass
class _MailEntry:
    lane: int  # 0 = recalled, 1 = normal arrival
    seq: int
    msg: ActorMessage


@dataclass
class ProcessInstance:
    node: ProcessNode
    threads: dict[ThreadRole, LogicalThread]
    machines: dict[str, StateMachine]
    alive: bool = True
    last_heartbeat: int = 0
    mailbox: list[_MailEntry] = field(default_factory=list)
    outbound: list[tuple[str, ActorMessage]] = field(default_factory=list)  # resolved channel ids
    active: _ActiveDispatch | None = None
    last_progress: int = 0
    tick_scheduled: bool = False
    dispatch_counter: int = 0

    @property
    def id(self) -> str:
        return self.node.id

    def has_work(self) -> bool:
        return self.active is not None or bool(self.mailbox)


@dataclass(frozen=True)
class WatchdogTrip:
    process: str
    at: int
    idle_for: int


def watchdog_check(process: ProcessInstance, now: int, timeout: int) -> WatchdogTrip | None:
    """Trip iff the processor has pending work but has made no progress for >= timeout."""
    if not process.alive or not process.has_work():
        return None
    idle = now - process.last_progress
    if idle >= timeout:
        return WatchdogTrip(process.id, now, idle)
    return None


# --- the world ----------------------------------------------------------------

_EV_FAULT = 0
_EV_STIMULUS = 1
_EV_THREAD = 2
_EV_SCAN = 3
_EV_TICK = 4


class SimWorld:
    """A single-use simulated deployment of a plan; see `instantiate`."""

    def __init__(
        self,
        plan: ProcessPlan,
        channels: list[IpcChannel],
        processes: dict[str, ProcessInstance],
        config: SimConfig,
        failover: FailoverConfig | None,
        scan_only_sources: frozenset[str],
    ):
        self.plan = plan
        self.config = config
        self.failover = failover
        self.scan_only_sources = scan_only_sources
        self.processes = processes
        self.channels: dict[str, ChannelRt] = {}
        for c in channels:
            if c.kind is ChannelKind.MESSAGE_QUEUE:
                self.channels[c.id] = MessageQueueRt(c, c.writer, list(c.readers))
            else:
                self.channels[c.id] = SharedSegmentRt(c, c.writer, list(c.readers))
        self.metrics = Metrics()
        for pid in processes:
            self.metrics.process(pid)
        self.trace_rows: list[TraceRow] = []
        self.used = False
        self.now = 0
        self.horizon = 0
        self.rng = random.Random(0)
        self._heap: list[tuple[int, int, int, tuple]] = []
        self._seq = 0
        self._mail_seq = 0
        self._recall_seq = 0
        self._ticking: str | None = None  # process whose tick is executing

    # -- plumbing --

    def _schedule(self, time: int, kind: int, payload: tuple) -> None:
        if time > self.horizon:
            return
        heapq.heappush(self._heap, (time, self._seq, kind, payload))
        self._seq += 1

    def trace(self, time: int, process: str, thread: str, event: str, detail: str) -> None:
        self.trace_rows.append(TraceRow(time, process, thread, event, detail))

    # -- messaging --

    def post_mailbox(self, process_id: str, msg: ActorMessage, now: int, recalled: bool = False) -> None:
        proc = self.processes[process_id]
        if not proc.alive:
            return
        had_work = proc.has_work()
        if recalled:
            self._recall_seq += 1
            proc.mailbox.append(_MailEntry(0, self._recall_seq, msg))
        else:
            self._mail_seq += 1
            proc.mailbox.append(_MailEntry(1, self._mail_seq, msg))
        if not had_work:
            proc.last_progress = now
        self._wake_processor(proc, now)

    def _wake_processor(self, proc: ProcessInstance, now: int) -> None:
        if proc.alive and proc.has_work() and not proc.tick_scheduled:
            proc.tick_scheduled = True
            # a tick in progress already owns this millisecond
            when = now + 1 if self._ticking == proc.id else now
            self._schedule(when, _EV_TICK, (proc.id,))

    def channel_send(self, channel_id: str, msg: ActorMessage, now: int) -> bool:
        """Send on a channel; returns False when a full queue blocks the writer."""
        ch = self.channels[channel_id]
        if isinstance(ch, MessageQueueRt):
            reader = ch.readers[0]
            stats = self.metrics.link(channel_id, ch.writer, reader)
            alive = self.processes[reader].alive if reader in self.processes else False
            if not alive:
                stats.sent += 1
                self.trace(now, ch.writer, "transmitter", "send", f"{channel_id} {msg.signal} undeliverable")
                return True
            if len(ch.items) >= (ch.channel.capacity or 0):
                return False  # writer blocks; caller retries
            self._mail_seq += 1
            ch.items.append((self._mail_seq, msg))
            stats.sent += 1
            stats.delivered += 1
            self.trace(now, ch.writer, "transmitter", "send", f"{channel_id} {msg.signal} queued")
            return True
        ch.slot = msg
        ch.version += 1
        ch.last_write = now
        for reader in ch.readers:
            stats = self.metrics.link(channel_id, ch.writer, reader)
            stats.sent += 1
            if reader in self.processes and self.processes[reader].alive:
                stats.delivered += 1
        self.trace(now, ch.writer, "transmitter", "send", f"{channel_id} {msg.signal} v{ch.version}")
        return True

    def rebind_endpoints(self, dead_id: str, standby_id: str, now: int) -> list[str]:
        """Move a failed process's channel endpoints to its standby.

        Scan-only (health) segments keep their original writer so the
        failed process stays visibly dead to the health monitor.
        """
        rebound = []
        for ch in self.channels.values():
            if ch.channel.source in self.scan_only_sources:
                continue
            changed = False
            if ch.writer == dead_id:
                ch.writer = standby_id
                changed = True
            if dead_id in ch.readers:
                ch.readers = [
                    r for r in ch.readers if r != dead_id
                ]
                if standby_id not in ch.readers:
                    ch.readers.append(standby_id)
                changed = True
            if changed:
                rebound.append(ch.channel.id)
                self.trace(now, standby_id, "-", "rebind", f"{ch.channel.id} from {dead_id}")
        return rebound

    def kill(self, process_id: str, now: int, cause: str) -> None:
        proc = self.processes[process_id]
        if not proc.alive:
            return
        proc.alive = False
        proc.active = None
        for t in proc.threads.values():
            t.state = ThreadState.FAILED
        self.metrics.faults.append((now, process_id, cause))
        self.trace(now, process_id, "-", "fault", cause)

    # -- event handlers --

    def _on_fault(self, now: int, process_id: str) -> None:
        if process_id in self.processes:
            self.kill(process_id, now, "killed")

    def _on_stimulus(self, now: int, spec: StimulusSpec) -> None:
        if spec.process in self.processes and self.processes[spec.process].alive:
            body = self.rng.randbytes(spec.size)
            self.trace(now, spec.process, "-", "stimulus", f"{spec.signal} size {spec.size}")
            self.post_mailbox(spec.process, ActorMessage(spec.signal, body, spec.priority), now)
        else:
            self.trace(now, spec.process, "-", "stimulus", f"{spec.signal} dropped")
        if spec.every > 0:
            self._schedule(now + spec.every, _EV_STIMULUS, (spec,))

    def _on_scan(self, now: int) -> None:
        assert self.failover is not None
        self.trace(now, "-", "-", "scan", "heartbeat")
        self.failover.scan_fn(self, now)
        self._schedule(now + self.failover.scan_period, _EV_SCAN, ())

    def _on_thread(self, now: int, process_id: str, role: ThreadRole) -> None:
        proc = self.processes[process_id]
        thread = proc.threads[role]
        if proc.alive:
            self.trace(now, process_id, role.value, "activate", "")
            if role is ThreadRole.RECEIVER:
                self._receiver_pass(proc, now)
            elif role is ThreadRole.TRANSMITTER:
                self._transmitter_pass(proc, now)
            elif role is ThreadRole.WATCHDOG:
                trip = watchdog_check(proc, now, self.config.watchdog_timeout)
                if trip is not None:
                    proc.threads[ThreadRole.WATCHDOG].state = ThreadState.FAILED
                    stats = self.metrics.process(process_id)
                    stats.watchdog_trips += 1
                    self.trace(now, process_id, "watchdog", "trip", f"no progress for {trip.idle_for}")
                    self.kill(process_id, now, "watchdog")
                    return
            assert thread.period is not None
            self._schedule(now + thread.period, _EV_THREAD, (process_id, role))

    def _receiver_pass(self, proc: ProcessInstance, now: int) -> None:
        for ch in self.channels.values():
            if proc.id not in ch.readers:
                continue
            if isinstance(ch, MessageQueueRt):
                items, ch.items = ch.items, []
                for _, msg in items:
                    self.trace(now, proc.id, "receiver", "recv", f"{ch.channel.id} {msg.signal}")
                    self.post_mailbox(proc.id, msg, now)
            else:
                if ch.channel.source in self.scan_only_sources:
                    continue
                if ch.slot is not None:
                    self.trace(now, proc.id, "receiver", "sample", f"{ch.channel.id} v{ch.version}")
                    self.post_mailbox(proc.id, ch.slot, now)

    def _transmitter_pass(self, proc: ProcessInstance, now: int) -> None:
        for ch in self.channels.values():
            if ch.writer != proc.id or not isinstance(ch, SharedSegmentRt):
                continue
            period = ch.channel.period_ms
            if period is None:
                continue
            if now - ch.last_write >= period or ch.version == 0:
                beat = ActorMessage(
                    ch.channel.source, f"{proc.id}:{ch.version + 1}".encode(), 0
                )
                self.channel_send(ch.channel.id, beat, now)
                proc.last_heartbeat = now
        if proc.outbound:
            remaining: list[tuple[str, ActorMessage]] = []
            blocked: set[str] = set()
            for channel_id, msg in proc.outbound:
                if channel_id in blocked:
                    remaining.append((channel_id, msg))
                    continue
                if not self.channel_send(channel_id, msg, now):
                    blocked.add(channel_id)
                    remaining.append((channel_id, msg))
            proc.outbound = remaining

    def resolve_destination(self, proc: ProcessInstance, token: str) -> list[str]:
        """Map an emission destination to channel ids.

        `uc:<UseCase>` fans out to every channel the process currently
        writes for that use case; a raw channel id passes through.
        """
        if token.startswith("uc:"):
            source = token[3:]
            return [
                ch.channel.id
                for ch in self.channels.values()
                if ch.writer == proc.id and ch.channel.source == source
            ]
        return [token] if token in self.channels else []

    def _complete_dispatch(self, proc: ProcessInstance, active: _ActiveDispatch, now: int) -> None:
        for token, msg in active.emitted:
            for channel_id in self.resolve_destination(proc, token):
                proc.outbound.append((channel_id, msg))
        for msg in active.recalled:
            self.trace(now, proc.id, "processor", "recall", msg.signal)
            self.post_mailbox(proc.id, msg, now, recalled=True)
        stats = self.metrics.process(proc.id)
        stats.dispatches += 1
        proc.last_progress = now
        proc.active = None
        self.trace(
            now,
            proc.id,
            "processor",
            "complete",
            f"{active.machine_key}/{active.signal} d{active.dispatch_no}",
        )

    def _spend_ms(self, proc: ProcessInstance, now: int) -> None:
        a = proc.active
        assert a is not None
        if a.ms_left <= 0 and a.pending_actions:
            aid, cost = a.pending_actions.pop(0)
            a.ms_left = cost
            self.trace(
                now,
                proc.id,
                "processor",
                "action",
                f"{a.machine_key}/{a.signal}/{aid} d{a.dispatch_no}",
            )
        a.ms_left -= 1
        if a.ms_left <= 0 and not a.pending_actions:
            self._complete_dispatch(proc, a, now)

    def _pick_next(self, proc: ProcessInstance) -> _MailEntry | None:
        if not proc.mailbox:
            return None
        best = min(proc.mailbox, key=lambda e: (-e.msg.priority, e.lane, e.seq))
        proc.mailbox.remove(best)
        return best

    def _offer(self, proc: ProcessInstance, msg: ActorMessage, now: int) -> bool:
        """Dispatch one message; returns True when a timed dispatch started."""
        fire_key = None
        for key, machine in proc.machines.items():
            if select_transition(machine, msg) is not None:
                fire_key = key
                break
        if fire_key is not None:
            machine = proc.machines[fire_key]
            result = dispatch(machine, msg)
            proc.dispatch_counter += 1
            n = proc.dispatch_counter
            self.trace(
                now, proc.id, "processor", "dispatch",
                f"{fire_key}/{msg.signal} d{n} actions {len(result.actions_run)}",
            )
            active = _ActiveDispatch(
                machine_key=fire_key,
                signal=msg.signal,
                pending_actions=list(zip(result.actions_run, result.action_costs)),
                ms_left=0,
                emitted=result.emitted,
                recalled=result.recalled,
                dispatch_no=n,
            )
            if result.cost_ms <= 0:
                self._complete_dispatch(proc, active, now)
                return False
            proc.active = active
            return True
        for key, machine in proc.machines.items():
            context = state_context(machine)
            if any(msg.signal in machine.states[s].deferred_signals for s in context):
                dispatch(machine, msg)  # lands in the deferral buffer
                self.metrics.process(proc.id).deferrals += 1
                self.trace(now, proc.id, "processor", "defer", f"{key}/{msg.signal}")
                return False
        self.metrics.process(proc.id).discards += 1
        self.trace(now, proc.id, "processor", "discard", msg.signal)
        return False

    def _on_tick(self, now: int, process_id: str) -> None:
        proc = self.processes[process_id]
        proc.tick_scheduled = False
        if not proc.alive:
            return
        self._ticking = process_id
        try:
            if proc.active is not None:
                self._spend_ms(proc, now)
                return
            for _ in range(self.config.max_batch):
                entry = self._pick_next(proc)
                if entry is None:
                    return
                if self._offer(proc, entry.msg, now):
                    self._spend_ms(proc, now)
                    return
        finally:
            self._ticking = None
            self._wake_later(proc, now)

    def _wake_later(self, proc: ProcessInstance, now: int) -> None:
        if proc.alive and proc.has_work() and not proc.tick_scheduled:
            proc.tick_scheduled = True
            self._schedule(now + 1, _EV_TICK, (proc.id,))

    # -- run --

    def run(self, scenario: Scenario, horizon: int, seed: int = 0) -> tuple[SimTrace, Metrics]:
        if self.used:
            raise RuntimeError("SimWorld instances are single-use; instantiate a fresh one")
        if horizon <= 0:
            raise ValueError("horizon must be positive")
        self.used = True
        self.horizon = horizon
        self.rng = random.Random(seed)

        for f in scenario.faults:
            self._schedule(f.at, _EV_FAULT, (f.process,))
        for s in scenario.stimuli:
            self._schedule(s.at, _EV_STIMULUS, (s,))
        for proc in self.processes.values():
            for role in (ThreadRole.WATCHDOG, ThreadRole.RECEIVER, ThreadRole.TRANSMITTER):
                period = proc.threads[role].period
                assert period is not None
                self._schedule(period, _EV_THREAD, (proc.id, role))
        if self.failover is not None:
            # offset by one tick so scans observe the writes of the same period
            self._schedule(self.failover.scan_period + 1, _EV_SCAN, ())

        while self._heap:
            time, _, kind, payload = heapq.heappop(self._heap)
            if time > horizon:
                break
            self.now = time
            if kind == _EV_FAULT:
                self._on_fault(time, *payload)
            elif kind == _EV_STIMULUS:
                self._on_stimulus(time, *payload)
            elif kind == _EV_THREAD:
                self._on_thread(time, *payload)
            elif kind == _EV_SCAN:
                self._on_scan(time)
            elif kind == _EV_TICK:
                self._on_tick(time, *payload)

        return SimTrace(tuple(self.trace_rows)), self.metrics


def instantiate(
    plan: ProcessPlan,
    channels: list[IpcChannel],
    behaviors: dict[str, dict[str, StateMachine]],
    config: SimConfig | None = None,
    failover: FailoverConfig | None = None,
    scan_only_sources: frozenset[str] = frozenset(),
) -> SimWorld:
    """Materialize a plan: one four-thread process per node, channels wired."""
    config = config or SimConfig()
    processes: dict[str, ProcessInstance] = {}
    for node in plan.all_nodes():
        machines = behaviors.get(node.id, {})
        if not machines and not node.service and node.view.use_cases:
            raise MissingBehavior(node.id)
        threads = {
            ThreadRole.WATCHDOG: LogicalThread(
                ThreadRole.WATCHDOG, config.watchdog_priority, config.watchdog_period
            ),
            ThreadRole.RECEIVER: LogicalThread(
                ThreadRole.RECEIVER, config.receiver_priority, config.receiver_period
            ),
            ThreadRole.PROCESSOR: LogicalThread(ThreadRole.PROCESSOR, config.processor_priority),
            ThreadRole.TRANSMITTER: LogicalThread(
                ThreadRole.TRANSMITTER, config.transmitter_priority, config.transmitter_period
            ),
        }
        processes[node.id] = ProcessInstance(node, threads, dict(machines))
    return SimWorld(plan, channels, processes, config, failover, scan_only_sources)


def run(
    world: SimWorld, scenario: Scenario, horizon: int, seed: int = 0
) -> tuple[SimTrace, Metrics]:
    return world.run(scenario, horizon, seed)


# --- degradation verdict --------------------------------------------------------


@dataclass(frozen=True)
class DegradationReport:
    verdict: str  # "graceful" | "total"
    failed: tuple[str, ...]
    lost_links: tuple[tuple[str, str, str], ...]
    intact_links: tuple[tuple[str, str, str], ...]

    def to_text(self, metrics: Metrics | None = None) -> str:
        lines = [
            "report-format: 1",
            f"verdict: {self.verdict}",
            f"failed: {' '.join(self.failed) if self.failed else 'none'}",
            f"lost-links: {len(self.lost_links)}",
        ]
        for key in self.lost_links:
            suffix = ""
            if metrics is not None and key in metrics.links:
                s = metrics.links[key]
                suffix = f" sent {s.sent} delivered {s.delivered}"
            lines.append(f"lost: {key[0]} {key[1]} {key[2]}{suffix}")
        lines.append(f"intact-links: {len(self.intact_links)}")
        return "\n".join(lines) + "\n"


def degradation_report(metrics: Metrics, plan: ProcessPlan) -> DegradationReport:
    """Graceful iff every lossy link touches a failed process and survivors remain."""
    failed = []
    for _, pid, _ in metrics.faults:
        if pid not in failed:
            failed.append(pid)
    lost = tuple(sorted(k for k, s in metrics.links.items() if s.delivered < s.sent))
    intact = tuple(sorted(k for k, s in metrics.links.items() if s.delivered == s.sent))
    node_ids = [n.id for n in plan.all_nodes()]
    survivors = [n for n in node_ids if n not in failed]
    graceful = all(k[1] in failed or k[2] in failed for k in lost)
    if failed and not survivors:
        graceful = False
    return DegradationReport(
        "graceful" if graceful else "total", tuple(failed), lost, intact
    )
