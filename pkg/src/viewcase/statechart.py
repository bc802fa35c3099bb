"""Hierarchical state machines with run-to-completion dispatch.

A machine is a tree of states (nested OR-states, no orthogonal regions).
Messages are (signal, body, priority) tuples. Dispatch walks the state
context from the current leaf to the root and fires the first matching
transition (innermost precedence); the exit/transition/entry action
sequence runs atomically. Unmatched messages are discarded unless a state
in the current context defers the signal, in which case they wait in the
deferral buffer and are recalled, in arrival order, once a dispatch lands
in a context that no longer defers them.

Machines can be built three ways: directly from the dataclasses, through
:class:`MachineBuilder`, or from the line-oriented text notation accepted
by :func:`parse_machine`::

    machine Host
    state Top initial Idle
    state Idle parent Top
    state Busy parent Top defer SEND_REQ
    entry Busy start_timer
    trans Idle on SEND_REQ -> Busy do validate send
    trans Busy on DONE -> Idle
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Callable, Optional

Guard = Callable[["ActorMessage", dict], bool]


@dataclass(frozen=True)
class ActorMessage:
    signal: str
    body: object = b""
    priority: int = 0

    def __post_init__(self) -> None:
        if not self.signal:
            raise ValueError("signal must be non-empty")


@dataclass(frozen=True)
class Action:
    id: str
    fn: Optional[Callable[["ActionContext"], None]] = None
    cost_ms: int | float = 1


@dataclass(frozen=True)
class State:
    id: str
    parent: str | None = None
    initial_child: str | None = None
    entry_actions: tuple[Action, ...] = ()
    exit_actions: tuple[Action, ...] = ()
    deferred_signals: frozenset[str] = frozenset()


@dataclass(frozen=True)
class Transition:
    scope: str
    signal: str
    target: str
    actions: tuple[Action, ...] = ()
    guard: Guard | None = None


class AmbiguousTransition(Exception):
    def __init__(self, scope: str, signal: str):
        super().__init__(f"two transitions at scope {scope!r} match signal {signal!r}")
        self.scope = scope
        self.signal = signal


class ActionFailure(Exception):
    def __init__(self, action_id: str, cause: Exception):
        super().__init__(f"action {action_id!r} failed: {cause}")
        self.action_id = action_id
        self.cause = cause


@dataclass
class ActionContext:
    machine: "StateMachine"
    msg: ActorMessage
    emitted: list[tuple[str, ActorMessage]] = field(default_factory=list)

    @property
    def vars(self) -> dict:
        return self.machine.variables

    def emit(self, destination: str, msg: ActorMessage) -> None:
        self.emitted.append((destination, msg))


@dataclass(frozen=True)
class DispatchResult:
    fired: bool
    deferred: bool
    emitted: tuple[tuple[str, ActorMessage], ...] = ()
    actions_run: tuple[str, ...] = ()
    recalled: tuple[ActorMessage, ...] = ()
    cost_ms: int | float = 0
    action_costs: tuple[int | float, ...] = ()  # parallel to actions_run


class StateMachine:
    """Mutable machine instance; quiescent between dispatches."""

    def __init__(
        self,
        states: list[State] | tuple[State, ...],
        transitions: list[Transition] | tuple[Transition, ...],
        variables: dict | None = None,
        name: str = "",
    ):
        self.name = name
        self.states: dict[str, State] = {}
        for s in states:
            if s.id in self.states:
                raise ValueError(f"duplicate state {s.id!r}")
            self.states[s.id] = s
        self.transitions = tuple(transitions)
        self.variables: dict = dict(variables or {})
        self.deferral_buffer: list[ActorMessage] = []
        self._children: dict[str, list[str]] = {}
        roots = []
        for s in self.states.values():
            if s.parent is None:
                roots.append(s.id)
            else:
                if s.parent not in self.states:
                    raise ValueError(f"state {s.id!r} has unknown parent {s.parent!r}")
                self._children.setdefault(s.parent, []).append(s.id)
        if len(roots) != 1:
            raise ValueError(f"machine needs exactly one root state, found {roots}")
        self.root = roots[0]
        for sid, kids in self._children.items():
            s = self.states[sid]
            if s.initial_child is None:
                raise ValueError(f"composite state {sid!r} has no initial child")
            if s.initial_child not in kids:
                raise ValueError(
                    f"initial child {s.initial_child!r} is not a child of {sid!r}"
                )
        for t in self.transitions:
            for end in (t.scope, t.target):
                if end not in self.states:
                    raise ValueError(f"transition references unknown state {end!r}")
        self.current = self._descend(self.root)[-1] if self._children.get(self.root) else self.root

    def _descend(self, sid: str) -> list[str]:
        """Initial-child chain from sid down to a leaf, inclusive."""
        chain = [sid]
        while self._children.get(chain[-1]):
            chain.append(self.states[chain[-1]].initial_child)  # type: ignore[arg-type]
        return chain

    def is_leaf(self, sid: str) -> bool:
        return not self._children.get(sid)

    def ancestors(self, sid: str) -> list[str]:
        """sid and its ancestors, innermost first."""
        out = [sid]
        while self.states[out[-1]].parent is not None:
            out.append(self.states[out[-1]].parent)  # type: ignore[arg-type]
        return out

    def dispatch(self, msg: ActorMessage) -> DispatchResult:
        return dispatch(self, msg)


def state_context(machine: StateMachine) -> list[str]:
    """Active state chain, current leaf first, root last."""
    return machine.ancestors(machine.current)


def select_transition(machine: StateMachine, msg: ActorMessage) -> Transition | None:
    """Innermost-precedence lookup along the state context."""
    for sid in state_context(machine):
        matches = [
            t
            for t in machine.transitions
            if t.scope == sid
            and t.signal == msg.signal
            and (t.guard is None or t.guard(msg, machine.variables))
        ]
        if len(matches) > 1:
            raise AmbiguousTransition(sid, msg.signal)
        if matches:
            return matches[0]
    return None


def _lca(machine: StateMachine, a: str, b: str) -> str:
    a_chain = machine.ancestors(a)
    b_set = set(machine.ancestors(b))
    for sid in a_chain:
        if sid in b_set:
            return sid
    raise ValueError(f"states {a!r} and {b!r} share no ancestor")


def dispatch(machine: StateMachine, msg: ActorMessage) -> DispatchResult:
    """Run-to-completion dispatch of one message.

    Fires at most one transition; the full exit/transition/entry action
    sequence either completes or (on ActionFailure) leaves the machine in
    its pre-dispatch state.
    """
    transition = select_transition(machine, msg)
    if transition is None:
        context = state_context(machine)
        if any(msg.signal in machine.states[s].deferred_signals for s in context):
            machine.deferral_buffer.append(msg)
            return DispatchResult(fired=False, deferred=True)
        return DispatchResult(fired=False, deferred=False)

    lca = _lca(machine, transition.scope, transition.target)

    exit_states = []
    for sid in state_context(machine):
        if sid == lca:
            break
        exit_states.append(sid)

    entry_states = []
    cursor = transition.target
    while cursor != lca:
        entry_states.append(cursor)
        cursor = machine.states[cursor].parent  # type: ignore[assignment]
        if cursor is None:
            raise ValueError("target is not below the transition LCA")
    entry_states.reverse()
    descent = machine._descend(transition.target)[1:]
    entry_states.extend(descent)
    new_leaf = entry_states[-1] if entry_states else (
        transition.target if machine.is_leaf(transition.target) else machine.current
    )

    plan: list[Action] = []
    for sid in exit_states:
        plan.extend(machine.states[sid].exit_actions)
    plan.extend(transition.actions)
    for sid in entry_states:
        plan.extend(machine.states[sid].entry_actions)

    saved_current = machine.current
    saved_vars = copy.deepcopy(machine.variables)
    saved_buffer = list(machine.deferral_buffer)

    ctx = ActionContext(machine, msg)
    ran: list[str] = []
    try:
        for action in plan:
            if action.fn is not None:
                action.fn(ctx)
            ran.append(action.id)
    except Exception as exc:
        machine.current = saved_current
        machine.variables = saved_vars
        machine.deferral_buffer = saved_buffer
        failed = plan[len(ran)].id if len(ran) < len(plan) else "?"
        raise ActionFailure(failed, exc) from exc

    machine.current = new_leaf

    new_context = state_context(machine)
    still_deferred = lambda m: any(
        m.signal in machine.states[s].deferred_signals for s in new_context
    )
    recalled = tuple(m for m in machine.deferral_buffer if not still_deferred(m))
    machine.deferral_buffer = [m for m in machine.deferral_buffer if still_deferred(m)]

    return DispatchResult(
        fired=True,
        deferred=False,
        emitted=tuple(ctx.emitted),
        actions_run=tuple(ran),
        recalled=recalled,
        cost_ms=sum(a.cost_ms for a in plan),
        action_costs=tuple(a.cost_ms for a in plan),
    )


def mailbox_order(pending: list[ActorMessage]) -> list[ActorMessage]:
    """Descending priority, FIFO among equals (stable sort)."""
    return sorted(pending, key=lambda m: -m.priority)


class MachineBuilder:
    """Incremental machine construction; `build()` validates the tree."""

    def __init__(self, name: str = ""):
        self.name = name
        self._states: list[State] = []
        self._transitions: list[Transition] = []

    @staticmethod
    def _as_actions(actions) -> tuple[Action, ...]:
        out = []
        for a in actions:
            out.append(a if isinstance(a, Action) else Action(str(a)))
        return tuple(out)

    def state(
        self,
        sid: str,
        parent: str | None = None,
        initial: str | None = None,
        entry=(),
        exit=(),
        defer=(),
    ) -> "MachineBuilder":
        self._states.append(
            State(
                sid,
                parent,
                initial,
                self._as_actions(entry),
                self._as_actions(exit),
                frozenset(defer),
            )
        )
        return self

    def transition(
        self, scope: str, signal: str, target: str, actions=(), guard: Guard | None = None
    ) -> "MachineBuilder":
        self._transitions.append(
            Transition(scope, signal, target, self._as_actions(actions), guard)
        )
        return self

    def build(self, variables: dict | None = None) -> StateMachine:
        return StateMachine(self._states, self._transitions, variables, self.name)


def parse_machine(
    text: str,
    actions: dict[str, Action] | None = None,
    guards: dict[str, Guard] | None = None,
) -> StateMachine:
    """Parse the machine text notation; see the module docstring for shape."""
    actions = actions or {}
    guards = guards or {}
    name = ""
    states: dict[str, dict] = {}
    transitions: list[Transition] = []

    def fetch_action(aid: str) -> Action:
        return actions.get(aid, Action(aid))

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0]
        try:
            if kind == "machine":
                name = parts[1]
            elif kind == "state":
                sid = parts[1]
                spec = {"parent": None, "initial": None, "defer": frozenset()}
                i = 2
                while i < len(parts):
                    if parts[i] == "parent":
                        spec["parent"] = parts[i + 1]
                    elif parts[i] == "initial":
                        spec["initial"] = parts[i + 1]
                    elif parts[i] == "defer":
                        spec["defer"] = frozenset(parts[i + 1].split(","))
                    else:
                        raise ValueError(f"unexpected token {parts[i]!r}")
                    i += 2
                states[sid] = {**spec, "entry": (), "exit": ()}
            elif kind in ("entry", "exit"):
                sid = parts[1]
                states[sid][kind] = tuple(fetch_action(a) for a in parts[2:])
            elif kind == "trans":
                # trans <Scope> on <Signal> [if <guard>] -> <Target> [do <action>...]
                scope = parts[1]
                if parts[2] != "on":
                    raise ValueError("expected 'on'")
                signal = parts[3]
                i = 4
                guard = None
                if i < len(parts) and parts[i] == "if":
                    guard = guards[parts[i + 1]]
                    i += 2
                if parts[i] != "->":
                    raise ValueError("expected '->'")
                target = parts[i + 1]
                i += 2
                acts: tuple[Action, ...] = ()
                if i < len(parts):
                    if parts[i] != "do":
                        raise ValueError("expected 'do'")
                    acts = tuple(fetch_action(a) for a in parts[i + 1 :])
                transitions.append(Transition(scope, signal, target, acts, guard))
            else:
                raise ValueError(f"unknown statement {kind!r}")
        except (IndexError, KeyError, ValueError) as exc:
            raise ValueError(f"machine notation error at line {lineno}: {raw!r} ({exc})") from exc

    built = [
        State(
            sid,
            spec["parent"],
            spec["initial"],
            spec["entry"],
            spec["exit"],
            spec["defer"],
        )
        for sid, spec in states.items()
    ]
    return StateMachine(built, transitions, name=name)
