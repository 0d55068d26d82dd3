import dataclasses
import json

import numpy as np
import pytest

from paclab.harness import (DiagnosticUnavailable, RunConfig, aggregate,
                            clipped_pseudo_regret_step, run, scaling_slope, sweep)
from paclab.mdp import InvalidArgument, optimal_values

from conftest import one_state, two_state_chain

RAND5 = "random:S=5,A=2,b=3,seed=7"


def cfg(**kw):
    base = dict(env=RAND5, gamma=0.7, epsilon=0.2, p=0.05, steps=5000, seed=1,
                bonus_scale=0.1)
    base.update(kw)
    return RunConfig(**base)


def test_single_state_never_suboptimal():
    res = run(RunConfig(env="unused", gamma=0.5, epsilon=0.1, steps=1000), mdp=one_state())
    assert res.sample_complexity == 0
    assert res.final_policy_gap == pytest.approx(0.0, abs=1e-9)


def test_epsilon_above_value_scale_gives_zero():
    mdp = two_state_chain(0.5)
    v_star, _ = optimal_values(mdp)
    res = run(RunConfig(env="unused", gamma=0.5, epsilon=2.0, steps=500), mdp=mdp)
    assert v_star.max() <= 2.0
    assert res.sample_complexity == 0


def test_cached_matches_recompute_every_step():
    c = cfg(steps=3000)
    fast = run(c, trace=True)
    slow = run(c, trace=True, recompute_every_step=True)
    assert fast.sample_complexity == slow.sample_complexity
    assert [row[:7] for row in fast.trace] == [row[:7] for row in slow.trace]
    assert fast.clipped_pseudo_regret == pytest.approx(slow.clipped_pseudo_regret, abs=1e-9)
    assert fast.policy_evaluations <= slow.policy_evaluations


@pytest.mark.parametrize("agent", ["multistage", "advantage", "model_based", "vanilla_q"])
def test_deterministic(agent):
    c = cfg(agent=agent, steps=3000)
    assert run(c).to_json(timestamp=False) == run(c).to_json(timestamp=False)


def test_timestamp_is_isolated():
    res = run(cfg(steps=100))
    with_ts = res.to_dict()
    without = res.to_dict(timestamp=False)
    assert set(with_ts) - set(without) == {"timestamp"}
    assert set(with_ts["timestamp"]) == {"utc", "wall_time"}


def test_suboptimal_flags_monotone_in_epsilon():
    # the trajectory does not depend on epsilon once the schedule is fixed, so
    # compare flags recomputed from one trace at several thresholds
    res = run(cfg(steps=4000), trace=True)
    gaps = np.array([row[7] for row in res.trace])
    counts = [int(np.sum(gaps > e)) for e in (0.05, 0.1, 0.2, 0.4)]
    assert counts == sorted(counts, reverse=True)
    assert counts[2] == res.sample_complexity


def test_budget_accounting():
    res = run(cfg(steps=2500, window=1000))
    assert res.steps == 2500
    assert len(res.window_counts) == 3
    assert sum(res.window_counts) == res.sample_complexity
    assert res.tail_suboptimal <= min(250, res.sample_complexity)


def test_zero_budget():
    res = run(cfg(steps=0))
    assert res.sample_complexity == 0 and res.window_counts == []
    assert res.final_window_states == []


def test_update_counts_match_events():
    seen = {}

    def monitor(agent, event, t):
        seen[event.kind.value] = seen.get(event.kind.value, 0) + 1
    res = run(cfg(steps=3000), monitor=monitor)
    assert {k: v for k, v in res.update_counts.items() if v} == seen


def test_trace_csv():
    res = run(cfg(steps=20), trace=True)
    lines = res.trace_csv().splitlines()
    assert lines[0] == "step,state,action,reward,update_kind,suboptimal,cum_suboptimal"
    assert len(lines) == 21
    assert lines[-1].split(",")[-1] == str(res.sample_complexity)


def test_oracle_tolerance_guard():
    with pytest.raises(InvalidArgument):
        cfg(oracle_tol=0.01)


def test_config_round_trip():
    c = cfg(cap_n0=None)
    assert RunConfig.from_dict(json.loads(json.dumps(c.to_dict()))) == c
    with pytest.raises(InvalidArgument):
        RunConfig.from_dict({**c.to_dict(), "colour": 1})


class TestClippedStep:
    def test_below_threshold_vanishes(self):
        mdp = one_state(1.0, 0.5)
        # phi = V - (r + gamma V) = 2.01 - 2.005 = 0.005 < eps/(8H) = 0.1/8
        v = np.array([2.01])
        assert clipped_pseudo_regret_step(mdp, v, np.array([0]), 0, 0.1, 1) == 0.0

    def test_above_threshold_kept(self):
        mdp = one_state(1.0, 0.5)
        v = np.array([3.0])
        assert clipped_pseudo_regret_step(mdp, v, np.array([0]), 0, 0.1, 1) == pytest.approx(0.5)


def test_sweep_single_equals_run():
    base = cfg(steps=2000)
    out = sweep(base, [0.2], [1])
    assert list(out) == [(0.2, 1)]
    assert out[(0.2, 1)].to_json(timestamp=False) == run(base).to_json(timestamp=False)


def test_sweep_parallel_equals_serial():
    base = cfg(steps=1000)
    serial = sweep(base, [0.2, 0.4], [0, 1])
    parallel = sweep(base, [0.2, 0.4], [0, 1], jobs=2)
    assert {k: v.sample_complexity for k, v in serial.items()} == \
        {k: v.sample_complexity for k, v in parallel.items()}


def test_aggregate():
    rows = aggregate([(0.1, 0, 10), (0.1, 1, 20), (0.2, 0, 4)])
    assert rows == [{"epsilon": 0.1, "runs": 2, "mean": 15.0, "std": 5.0},
                    {"epsilon": 0.2, "runs": 1, "mean": 4.0, "std": 0.0}]


class TestScalingSlope:
    def test_exact_power_law(self):
        table = {e: 3.0 / e**2 for e in (0.1, 0.2, 0.4)}
        assert scaling_slope(table) == pytest.approx(2.0)

    def test_constant(self):
        assert scaling_slope({0.1: 7, 0.2: 7, 0.4: 7}) == pytest.approx(0.0, abs=1e-12)

    def test_needs_three_points(self):
        with pytest.raises(DiagnosticUnavailable):
            scaling_slope({0.1: 7, 0.2: 7})

    def test_zero_counts(self):
        with pytest.raises(DiagnosticUnavailable):
            scaling_slope({0.1: 7, 0.2: 0, 0.4: 1})


def test_riverswim_regression():
    res = run(RunConfig(env="riverswim:n=6", gamma=0.95, epsilon=1.0, steps=50_000,
                        seed=0, bonus_scale=0.01))
    assert res.final_policy == [1] * 6
    # frozen from a reference run; guards against silent behaviour changes
    assert res.sample_complexity == 7307
