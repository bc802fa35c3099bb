"""Deterministic runtime simulation: scheduling, channels, watchdog, verdicts."""

import dataclasses

import pytest

from viewcase.engine import (
    FailoverRecord,
    FaultSpec,
    LinkStats,
    Metrics,
    MessageQueueRt,
    MissingBehavior,
    Scenario,
    ScenarioError,
    SimConfig,
    StimulusSpec,
    degradation_report,
    inject_fault,
    instantiate,
    parse_scenario,
    run,
)
from viewcase.ipc import assign_ipc, dependency_graph
from viewcase.model import parse_model
from viewcase.partition import MappingPolicy, Objective, build_plan
from viewcase.statechart import Action, ActorMessage, MachineBuilder

ASYNC_MODEL = """\
actor A multiplicity 1
actor B multiplicity 1
usecase U "Produce" codesize 100
usecase V "Consume" codesize 100
trigger A -> U
trigger B -> V
flow U -> B async size 32
"""

PERIODIC_MODEL = ASYNC_MODEL.replace("async size 32", "periodic 100 size 16")


def _producer_machine():
    b = MachineBuilder("producer")
    b.state("Top", initial="Idle")
    b.state("Idle", parent="Top")
    b.transition(
        "Idle", "POKE", "Idle",
        actions=[Action("emit", lambda ctx: ctx.emit("uc:U", ActorMessage("DATA", ctx.msg.body)))],
    )
    b.transition("Idle", "HIGH", "Idle", actions=[Action("h")])
    b.transition("Idle", "LOW", "Idle", actions=[Action("l")])
    b.transition("Idle", "STALL", "Idle", actions=[Action("hang", cost_ms=float("inf"))])
    return b.build()


def _consumer_machine(signals=("DATA",)):
    b = MachineBuilder("consumer")
    b.state("Top", initial="Idle")
    b.state("Idle", parent="Top")
    for sig in signals:
        b.transition(
            "Idle", sig, "Idle",
            actions=[Action("note", lambda ctx: ctx.vars.__setitem__("seen", ctx.vars.get("seen", 0) + 1))],
        )
    return b.build()


def _world(model_text=ASYNC_MODEL, consumer_signals=("DATA",), config=None):
    model = parse_model(model_text)
    plan = build_plan(model, MappingPolicy(Objective.FAULT_TOLERANCE))
    channels = assign_ipc(dependency_graph(plan, model))
    behaviors = {
        "A#0": {"U": _producer_machine()},
        "B#0": {"V": _consumer_machine(consumer_signals)},
    }
    return instantiate(plan, channels, behaviors, config=config), channels


# --- scenario grammar ----------------------------------------------------------


def test_parse_scenario_faults_and_stimuli():
    s = parse_scenario(
        "# a comment line\n"
        "fault kill LocalHost#0 at 1000\n"
        "stimulus PeerCI#3 RX_DATA at 120 every 300 priority 200 size 700  # trailing\n"
        "\n"
        "stimulus A#0 POKE at 5 every 0 priority 10 size 8\n"
    )
    assert s.faults == (FaultSpec("LocalHost#0", 1000),)
    assert s.stimuli == (
        StimulusSpec("PeerCI#3", "RX_DATA", 120, 300, 200, 700),
        StimulusSpec("A#0", "POKE", 5, 0, 10, 8),
    )


def test_parse_scenario_hash_in_process_id_is_not_a_comment():
    s = parse_scenario("fault kill B#0 at 42\n")
    assert s.faults[0].process == "B#0"


@pytest.mark.parametrize(
    "text,line",
    [
        ("fault stop A at 10", 1),
        ("fault kill A on 10", 1),
        ("stimulus A X at 1 priority 2 size 3", 1),
        ("fault kill A at ten", 1),
        ("fault kill A at 1\nnonsense", 2),
    ],
)
def test_parse_scenario_errors_carry_line_numbers(text, line):
    with pytest.raises(ScenarioError) as err:
        parse_scenario(text)
    assert err.value.line == line


def test_inject_fault_appends():
    base = parse_scenario("stimulus A POKE at 1 every 0 priority 1 size 1")
    s = inject_fault(base, "B#0", 500)
    assert s.faults == (FaultSpec("B#0", 500),)
    assert s.stimuli == base.stimuli


# --- trace format ----------------------------------------------------------------


def test_trace_is_five_field_tsv():
    world, _ = _world()
    trace, _ = run(world, parse_scenario("stimulus A#0 POKE at 10 every 100 priority 5 size 4"), 500)
    text = trace.to_text()
    assert text.endswith("\n")
    lines = text.splitlines()
    assert lines
    for line in lines:
        fields = line.split("\t")
        assert len(fields) == 5
        assert fields[0].isdigit()
    times = [int(line.split("\t")[0]) for line in lines]
    assert times == sorted(times)


def test_rows_of_filters_event_and_process():
    world, _ = _world()
    trace, _ = run(world, parse_scenario("stimulus A#0 POKE at 10 every 0 priority 5 size 4"), 300)
    stim = trace.rows_of("stimulus")
    assert len(stim) == 1 and stim[0].process == "A#0"
    assert trace.rows_of("stimulus", "B#0") == []


# --- thread scheduling ------------------------------------------------------------


def test_receiver_activations_follow_configured_period():
    cfg = SimConfig(receiver_period=100)
    world, _ = _world(config=cfg)
    trace, _ = run(world, Scenario(), 1000)
    activations = [
        r for r in trace.rows_of("activate", "B#0") if r.thread == "receiver"
    ]
    assert [r.time for r in activations] == [100 * k for k in range(1, 11)]


def test_deterministic_same_seed_same_bytes():
    runs = []
    for _ in range(2):
        world, _ = _world()
        trace, metrics = run(
            world, parse_scenario("stimulus A#0 POKE at 10 every 70 priority 5 size 64"), 2000, seed=7
        )
        runs.append((trace.to_text(), metrics.to_text()))
    assert runs[0] == runs[1]


# --- watchdog ------------------------------------------------------------------------


def test_watchdog_trips_on_stalled_dispatch():
    world, _ = _world()
    trace, metrics = run(
        world, parse_scenario("stimulus A#0 STALL at 100 every 0 priority 5 size 1"), 1000
    )
    trips = trace.rows_of("trip", "A#0")
    assert len(trips) == 1
    assert trips[0].time == 400  # stalled since 100, timeout 300
    assert metrics.process("A#0").watchdog_trips == 1
    assert (400, "A#0", "watchdog") in metrics.faults
    # the killed process does nothing afterwards
    assert all(r.time <= 400 for r in trace.rows if r.process == "A#0" and r.event != "stimulus")


def test_healthy_steady_traffic_never_trips():
    world, _ = _world()
    trace, metrics = run(
        world, parse_scenario("stimulus A#0 POKE at 10 every 50 priority 5 size 8"), 3000
    )
    assert trace.rows_of("trip") == []
    assert metrics.process("A#0").watchdog_trips == 0


# --- mailbox and dispatch order ---------------------------------------------------------


def test_higher_priority_dispatched_first():
    world, _ = _world()
    scenario = parse_scenario(
        "stimulus A#0 LOW at 100 every 0 priority 10 size 1\n"
        "stimulus A#0 HIGH at 100 every 0 priority 200 size 1\n"
    )
    trace, _ = run(world, scenario, 300)
    order = [r.detail.split("/")[1].split(" ")[0] for r in trace.rows_of("dispatch", "A#0")]
    assert order == ["HIGH", "LOW"]


def test_recalled_messages_precede_normal_arrivals_at_equal_priority():
    world, _ = _world()
    proc = world.processes["A#0"]
    world.post_mailbox("A#0", ActorMessage("LOW", b"n", 5), 0)
    world.post_mailbox("A#0", ActorMessage("HIGH", b"r", 5), 0, recalled=True)
    first = world._pick_next(proc)
    second = world._pick_next(proc)
    assert first.msg.body == b"r"  # recall lane wins the tie
    assert second.msg.body == b"n"


def test_fifo_within_equal_priority():
    world, _ = _world()
    proc = world.processes["A#0"]
    for body in (b"1", b"2", b"3"):
        world.post_mailbox("A#0", ActorMessage("LOW", body, 5), 0)
    drained = [world._pick_next(proc).msg.body for _ in range(3)]
    assert drained == [b"1", b"2", b"3"]


# --- channels ----------------------------------------------------------------------------


def test_message_queue_delivery_end_to_end():
    world, channels = _world()
    scenario = parse_scenario("stimulus A#0 POKE at 10 every 100 priority 5 size 16")
    trace, metrics = run(world, scenario, 1000)
    cid = "mq:A#0:B#0:U"
    assert any(c.id == cid for c in channels)
    stats = metrics.links[(cid, "A#0", "B#0")]
    assert stats.sent == stats.delivered > 0
    assert len(trace.rows_of("recv", "B#0")) == stats.delivered
    # consumer dispatched what it received
    assert metrics.process("B#0").dispatches >= stats.delivered


def test_queue_blocks_writer_when_full():
    world, channels = _world()
    cid = "mq:A#0:B#0:U"
    ch = world.channels[cid]
    assert isinstance(ch, MessageQueueRt)
    ch.channel = dataclasses.replace(ch.channel, capacity=2)
    proc = world.processes["A#0"]
    proc.outbound = [(cid, ActorMessage("DATA", bytes([i]), 5)) for i in range(4)]
    world._transmitter_pass(proc, 0)
    assert [m.body for _, m in proc.outbound] == [b"\x02", b"\x03"]  # head-of-line keeps order
    assert [m.body for _, m in ch.items] == [b"\x00", b"\x01"]
    # drain the queue, retry forwards the rest
    world._receiver_pass(world.processes["B#0"], 1)
    world._transmitter_pass(proc, 2)
    assert proc.outbound == []
    assert [m.body for _, m in ch.items] == [b"\x02", b"\x03"]


def test_send_to_dead_reader_counts_sent_only():
    world, _ = _world()
    scenario = parse_scenario(
        "stimulus A#0 POKE at 10 every 100 priority 5 size 16\nfault kill B#0 at 500"
    )
    trace, metrics = run(world, scenario, 1500)
    stats = metrics.links[("mq:A#0:B#0:U", "A#0", "B#0")]
    assert stats.sent > stats.delivered > 0
    undeliverable = [r for r in trace.rows_of("send") if "undeliverable" in r.detail]
    assert len(undeliverable) == stats.sent - stats.delivered


def test_shared_segment_keeps_only_latest_write():
    world, _ = _world(PERIODIC_MODEL, consumer_signals=("U",))
    cid = "shm:A#0:U"
    ch = world.channels[cid]
    world.channel_send(cid, ActorMessage("U", b"old", 0), 0)
    world.channel_send(cid, ActorMessage("U", b"new", 0), 1)
    assert ch.slot.body == b"new"
    assert ch.version == 2
    stats = world.metrics.links[(cid, "A#0", "B#0")]
    assert stats.sent == 2  # per-reader accounting on every write


def test_periodic_segment_written_by_transmitter_without_stimuli():
    world, _ = _world(PERIODIC_MODEL, consumer_signals=("U",))
    trace, metrics = run(world, Scenario(), 1000)
    sends = trace.rows_of("send", "A#0")
    assert sends and all("shm:A#0:U" in r.detail for r in sends)
    # period 100 over 1000 ms -> about ten refreshes, one per period
    assert 9 <= len(sends) <= 11
    samples = trace.rows_of("sample", "B#0")
    assert samples
    assert metrics.process("B#0").dispatches > 0


# --- kill isolation -------------------------------------------------------------------------


def test_killed_process_goes_silent():
    world, _ = _world()
    scenario = parse_scenario(
        "stimulus A#0 POKE at 10 every 50 priority 5 size 8\nfault kill A#0 at 500"
    )
    trace, metrics = run(world, scenario, 1500)
    after = [
        r
        for r in trace.rows
        if r.process == "A#0" and r.time > 500 and r.event not in ("stimulus",)
    ]
    assert after == []
    dropped = [r for r in trace.rows_of("stimulus", "A#0") if "dropped" in r.detail]
    assert dropped and all(r.time > 500 for r in dropped)
    assert (500, "A#0", "killed") in metrics.faults


# --- verdicts ------------------------------------------------------------------------------


def test_reader_fault_is_graceful_degradation():
    world, channels = _world()
    plan = world.plan
    scenario = parse_scenario(
        "stimulus A#0 POKE at 10 every 100 priority 5 size 16\nfault kill B#0 at 500"
    )
    _, metrics = run(world, scenario, 1500)
    report = degradation_report(metrics, plan)
    assert report.verdict == "graceful"
    assert report.failed == ("B#0",)
    assert report.lost_links == (("mq:A#0:B#0:U", "A#0", "B#0"),)
    text = report.to_text(metrics)
    assert "verdict: graceful" in text and "lost: mq:A#0:B#0:U" in text


def test_killing_every_process_is_total_loss():
    world, _ = _world()
    plan = world.plan
    scenario = parse_scenario(
        "stimulus A#0 POKE at 10 every 100 priority 5 size 16\n"
        "fault kill B#0 at 400\nfault kill A#0 at 600"
    )
    _, metrics = run(world, scenario, 1500)
    report = degradation_report(metrics, plan)
    assert report.verdict == "total"
    assert set(report.failed) == {"A#0", "B#0"}


def test_loss_not_incident_to_a_fault_is_total():
    metrics = Metrics()
    metrics.links[("mq:x", "P", "Q")] = LinkStats(sent=5, delivered=3)
    metrics.faults.append((100, "R", "killed"))
    world, _ = _world()
    report = degradation_report(metrics, world.plan)
    assert report.verdict == "total"


def test_no_faults_no_loss_is_graceful():
    world, _ = _world()
    _, metrics = run(world, parse_scenario("stimulus A#0 POKE at 10 every 100 priority 5 size 16"), 1000)
    report = degradation_report(metrics, world.plan)
    assert report.verdict == "graceful"
    assert report.failed == () and report.lost_links == ()


# --- metrics text ------------------------------------------------------------------------------


def test_metrics_to_text_sections_and_sorting():
    metrics = Metrics()
    metrics.link("mq:b", "W", "R").sent = 2
    metrics.link("mq:a", "W", "R").delivered = 1
    metrics.process("P").dispatches = 3
    metrics.faults.append((7, "P", "killed"))
    metrics.record_failover("M", "S", 100, 150)
    lines = metrics.to_text().splitlines()
    assert lines[0] == "metrics-format: 1"
    assert lines[1] == "links: 2"
    assert lines[2].startswith("link: mq:a") and lines[3].startswith("link: mq:b")
    assert "process: P dispatches 3 discards 0 deferrals 0 trips 0" in lines
    assert "fault: P at 7 cause killed" in lines
    assert "takeover: main M standby S detected 100 active 150" in lines
    assert metrics.failover == [FailoverRecord("M", "S", 100, 150)]


# --- lifecycle -----------------------------------------------------------------------------


def test_world_is_single_use():
    world, _ = _world()
    run(world, Scenario(), 100)
    with pytest.raises(RuntimeError):
        run(world, Scenario(), 100)


def test_horizon_must_be_positive():
    world, _ = _world()
    with pytest.raises(ValueError):
        run(world, Scenario(), 0)


def test_missing_behavior_is_reported_with_node_id():
    model = parse_model(ASYNC_MODEL)
    plan = build_plan(model, MappingPolicy(Objective.FAULT_TOLERANCE))
    channels = assign_ipc(dependency_graph(plan, model))
    with pytest.raises(MissingBehavior) as err:
        instantiate(plan, channels, {"A#0": {"U": _producer_machine()}})
    assert err.value.node_id == "B#0"


def test_one_shot_stimulus_fires_once():
    world, _ = _world()
    trace, _ = run(world, parse_scenario("stimulus A#0 POKE at 50 every 0 priority 5 size 4"), 1000)
    assert len(trace.rows_of("stimulus", "A#0")) == 1


def test_repeating_stimulus_fires_on_schedule():
    world, _ = _world()
    trace, _ = run(world, parse_scenario("stimulus A#0 POKE at 50 every 200 priority 5 size 4"), 1000)
    assert [r.time for r in trace.rows_of("stimulus", "A#0")] == [50, 250, 450, 650, 850]
