import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sfc_invariants import random_run, violations
from slicedrl.sfc_env import (
    FlowRecord, SfcEnvConfig, SfcRewardConfig, SfcSpec, SfcSystem, SfcTask, cpu_utilization,
    default_sfcs, flow_reward, observe_state, state_dim,
)
from slicedrl.traffic import Category, ConfigError, FlowTrace, default_flow_models, generate_flow_trace

A, B, C = Category.A, Category.B, Category.C


def test_default_sfcs():
    i, ii, iii = default_sfcs()
    assert (i.cpu_cost, ii.cpu_cost, iii.cpu_cost) == (2.0, 1.5, 1.0)
    assert (i.processing_latency, ii.processing_latency, iii.processing_latency) == (0.010, 0.015, 0.020)
    assert i.priority[A] < i.priority[B] == i.priority[C]
    assert ii.priority[A] == ii.priority[B] < ii.priority[C]
    assert len(set(iii.priority)) == 1


def test_flow_reward_examples():
    cfg = SfcRewardConfig()
    f = FlowRecord(0, A, 0.0, 0, 0.0, 0.010)
    assert flow_reward(f, cfg) == pytest.approx(-0.030)
    g = FlowRecord(1, C, 0.0, 2, 0.005, 0.020)
    assert flow_reward(g, cfg) == pytest.approx(-0.025)
    eq = SfcRewardConfig((1.0, 1.0, 1.0))
    assert flow_reward(g, eq) == pytest.approx(-g.sojourn)
    with pytest.raises(ValueError):
        flow_reward(FlowRecord(2, A, 0.0), cfg)
    with pytest.raises(ConfigError):
        SfcRewardConfig((1.0, 2.0, 3.0))


def test_priority_on_sfc_one():
    s = SfcSystem()
    s.assign_flow(FlowRecord(0, C, 0.000), 0)  # starts at once
    s.assign_flow(FlowRecord(1, B, 0.001), 0)
    s.assign_flow(FlowRecord(2, C, 0.002), 0)
    s.assign_flow(FlowRecord(3, A, 0.003), 0)
    s.finish()
    starts = {f.index: f.start_time for f in s.flows}
    assert starts[0] == 0.0
    assert starts[3] == pytest.approx(0.010)  # A jumps the queue
    assert starts[1] == pytest.approx(0.020)  # then B and C in arrival order
    assert starts[2] == pytest.approx(0.030)


def test_fifo_on_sfc_three():
    s = SfcSystem()
    for i, cat in enumerate((C, A, B)):
        s.assign_flow(FlowRecord(i, cat, 0.001 * i), 2)
    s.finish()
    assert [f.start_time for f in sorted(s.flows, key=lambda f: f.index)] == pytest.approx([0.0, 0.02, 0.04])


def test_arrival_at_completion_instant_is_considered():
    s = SfcSystem()
    s.assign_flow(FlowRecord(0, C, 0.0), 0)
    s.assign_flow(FlowRecord(1, C, 0.005), 0)
    s.assign_flow(FlowRecord(2, A, 0.010), 0)  # arrives as flow 0 completes
    s.finish()
    assert s.flows[2].start_time == pytest.approx(0.010)
    assert s.flows[1].start_time == pytest.approx(0.020)


def test_projected_sojourn_examples():
    s = SfcSystem()
    assert s.projected_sojourns(A, 0.0) == pytest.approx([0.010, 0.015, 0.020])
    for i in range(4):
        s.assign_flow(FlowRecord(i, C, 0.0), 0)
    # one in service (10 ms left) and three queued ahead of a C flow
    assert s.projected_sojourns(C, 0.0)[0] == pytest.approx(0.010 + 3 * 0.010 + 0.010)
    # an A flow only waits for the residual service
    assert s.projected_sojourns(A, 0.0)[0] == pytest.approx(0.020)


def test_cpu_utilization_examples():
    specs = default_sfcs()
    costs = [x.cpu_cost for x in specs]
    assert cpu_utilization([[(0.0, 1.0)], [], []], costs, 0.0, 1.0) == pytest.approx(2.0)
    assert cpu_utilization([[], [], []], costs, 0.0, 1.0) == 0.0
    assert cpu_utilization([[], [(0.0, 0.5)], []], costs, 0.0, 1.0) == pytest.approx(0.75)
    with pytest.raises(ValueError):
        cpu_utilization([[], [], []], costs, 1.0, 1.0)


def test_cpu_budget_blocks_coupled_starts():
    s = SfcSystem(cpu_budget=2.5)
    s.assign_flow(FlowRecord(0, A, 0.0), 0)   # 2 CPUs busy until 10 ms
    s.assign_flow(FlowRecord(1, A, 0.001), 1)  # would need 3.5 CPUs
    s.finish()
    assert s.flows[1].start_time == pytest.approx(0.010)
    with pytest.raises(ConfigError):
        SfcSystem(cpu_budget=1.0)


def test_assignment_errors():
    s = SfcSystem()
    with pytest.raises(ValueError):
        s.assign_flow(FlowRecord(0, A, 0.0), 3)
    with pytest.raises(ValueError):
        s.assign_flow(FlowRecord(0, A, 1.0), 0, now=0.5)
    with pytest.raises(ConfigError):
        SfcSpec("X", 0.0, 0.01, (0, 0, 0))


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_discipline_invariants_random(seed):
    system = random_run(np.random.default_rng(seed))
    assert violations(system.flows, system.specs) == []
    util = cpu_utilization(system.busy_logs(), [x.cpu_cost for x in system.specs], 0.0,
                           max(f.completion_time for f in system.flows))
    assert 0.0 <= util <= 4.5 + 1e-9


def test_checker_catches_broken_schedules():
    specs = default_sfcs()
    overlap = [FlowRecord(0, A, 0.0, 0, 0.0, 0.010), FlowRecord(1, A, 0.0, 0, 0.005, 0.010)]
    assert any("overlap" in v for v in violations(overlap, specs))
    idle = [FlowRecord(0, A, 0.0, 0, 0.002, 0.010)]
    assert any("idle" in v for v in violations(idle, specs))
    # the C flow arriving at 2 ms starts at 10 ms while the A flow from 1 ms waits
    inverted = [FlowRecord(0, A, 0.001, 0, 0.020, 0.010), FlowRecord(1, C, 0.0, 0, 0.0, 0.010),
                FlowRecord(2, C, 0.002, 0, 0.010, 0.010)]
    assert any("waited" in v for v in violations(inverted, specs))


# --- state encoding and agent-facing task -------------------------------------------


def test_state_cold_start_and_dim():
    s = observe_state([[], [], []], int(B), 0.0)
    assert s.shape == (state_dim(),) == (63,)
    assert np.all(s[:60].reshape(15, 4)[:, 3] == 1.0) and np.all(s[:60].reshape(15, 4)[:, :3] == 0.0)
    assert list(s[60:]) == [0.0, 1.0, 0.0]


def test_state_ages_clipped_and_deterministic():
    hist = [[(0, 0.95), (2, 0.5)], [], [(1, 0.99)]]
    s = observe_state(hist, 0, 1.0)
    assert list(s[0:4]) == pytest.approx([1.0, 0.0, 0.0, 0.5])
    assert list(s[4:8]) == pytest.approx([0.0, 0.0, 1.0, 1.0])
    assert list(s[40:44]) == pytest.approx([0.0, 1.0, 0.0, 0.1])
    assert np.array_equal(s, observe_state(hist, 0, 1.0))


def test_task_defers_rewards_until_service():
    trace = FlowTrace(np.array([0.0, 0.001, 0.002]), np.array([int(C), int(C), int(A)]))
    task = SfcTask(trace)
    assert task.observe().shape == (63,)
    _, r, done = task.step(0)
    assert r is None and not done
    assert task.resolved_rewards() == [(0, pytest.approx(-0.010))]
    task.step(0)
    assert task.resolved_rewards() == []
    _, _, done = task.step(0)
    assert done
    got = dict(task.resolved_rewards())
    assert got[2] == pytest.approx(-3 * 0.018)  # A waits 8 ms then 10 ms service
    assert got[1] == pytest.approx(-(0.019 + 0.010))


def test_replay_is_deterministic():
    trace = generate_flow_trace(default_flow_models(), 300, np.random.default_rng(1))
    choose = np.random.default_rng(2).integers(0, 3, 300)

    def replay():
        task = SfcTask(trace, SfcEnvConfig())
        for a in choose:
            task.step(int(a))
        return [(f.index, f.assigned_sfc, f.start_time) for f in task.system.flows]
    assert replay() == replay()
