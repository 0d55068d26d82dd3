"""Run agents against environments and count epsilon-suboptimal steps exactly.

A step t is suboptimal when ``V*(s_t) - V^{pi_t}(s_t) > epsilon`` where
``pi_t`` is the agent's greedy policy before it observes the transition. The
harness knows the true MDP, so ``V^{pi_t}`` is an exact policy evaluation.
It is only recomputed when an update actually moved a Q entry, and evaluations
are memoised per policy.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator

import numpy as np

from . import __version__
from .agents import SCHEDULE_VARIANT, EventKind, UpdateEvent, make_agent, BERNSTEIN_LAST_TERM
from .envs import EnvInstance, make_mdp
from .mdp import (InvalidArgument, TabularMdp, clip, optimal_values, policy_evaluation,
                  pseudo_regret)
from .schedule import DEFAULT_CAP_N0, DEFAULT_CAP_N1, ScheduleParams, build_schedule

SCHEMA = "v1"
DEFAULT_WINDOW = 10_000


class DiagnosticUnavailable(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    env: str
    agent: str = "multistage"
    gamma: float = 0.9
    epsilon: float = 0.1
    p: float = 0.05
    steps: int = 100_000
    seed: int = 0
    bonus_scale: float = 1.0
    c1: float = 1.0
    c10: float = 1.0
    cap_n0: int | None = DEFAULT_CAP_N0
    cap_n1: int | None = DEFAULT_CAP_N1
    last_term: float = BERNSTEIN_LAST_TERM
    oracle_tol: float = 1e-10
    window: int = DEFAULT_WINDOW
    diagnostics: bool = True

    def __post_init__(self):
        if self.steps < 0:
            raise InvalidArgument("steps must be non-negative")
        if not 0.0 < self.gamma < 1.0:
            raise InvalidArgument(f"gamma must be in (0, 1), got {self.gamma}")
        if not 0.0 < self.epsilon <= 1.0 / (1.0 - self.gamma):
            raise InvalidArgument(f"epsilon must be in (0, 1/(1-gamma)], got {self.epsilon}")
        if not 0.0 < self.oracle_tol <= self.epsilon / 100:
            raise InvalidArgument("oracle_tol must be positive and at most epsilon/100")
        if self.window < 1:
            raise InvalidArgument("window must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise InvalidArgument(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def schedule_params(self, mdp: TabularMdp) -> ScheduleParams:
        variant = SCHEDULE_VARIANT.get(self.agent)
        if variant is None:
            raise InvalidArgument(f"unknown agent {self.agent!r}")
        return ScheduleParams(self.gamma, self.epsilon, self.p, mdp.num_states,
                              mdp.num_actions, variant, self.c1, self.c10,
                              self.cap_n0, self.cap_n1)


@dataclass
class RunResult:
    config: RunConfig
    sample_complexity: int = 0
    steps: int = 0
    window_counts: list[int] = field(default_factory=list)
    tail_suboptimal: int = 0
    update_counts: dict[str, int] = field(default_factory=dict)
    policy_evaluations: int = 0
    final_sup_error: float = 0.0
    final_policy_gap: float = 0.0
    final_policy: list[int] = field(default_factory=list)
    final_values: list[float] = field(default_factory=list)
    clipped_pseudo_regret: float = 0.0
    final_window_states: list[int] = field(default_factory=list)
    final_window_clipped_max: float = 0.0
    wall_time: float = 0.0
    trace: list[tuple] | None = None

    def to_dict(self, timestamp: bool = True) -> dict:
        out = {
            "schema": SCHEMA,
            "version": __version__,
            "config": self.config.to_dict(),
            "sample_complexity": self.sample_complexity,
            "steps": self.steps,
            "window": self.config.window,
            "window_counts": self.window_counts,
            "tail_suboptimal": self.tail_suboptimal,
            "update_counts": self.update_counts,
            "policy_evaluations": self.policy_evaluations,
            "final_sup_error": self.final_sup_error,
            "final_policy_gap": self.final_policy_gap,
            "final_policy": self.final_policy,
            "final_values": self.final_values,
            "clipped_pseudo_regret": self.clipped_pseudo_regret,
            "final_window_states": self.final_window_states,
            "final_window_clipped_max": self.final_window_clipped_max,
        }
        # the only non-deterministic content lives under one key
        if timestamp:
            out["timestamp"] = {"utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
                                "wall_time": self.wall_time}
        return out

    def to_json(self, timestamp: bool = True) -> str:
        return json.dumps(self.to_dict(timestamp), indent=2, sort_keys=True)

    def trace_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["step", "state", "action", "reward", "update_kind",
                         "suboptimal", "cum_suboptimal"])
        if self.trace is not None:
            for row in self.trace:
                writer.writerow(row[:7])
        else:
            w = self.config.window
            cum = 0
            for k, count in enumerate(self.window_counts):
                cum += count
                writer.writerow([min((k + 1) * w, self.steps), "", "", "", "", count, cum])
        return buf.getvalue()


def clipped_pseudo_regret_step(mdp: TabularMdp, v, pi, s: int, epsilon: float, H: int) -> float:
    """clip(phi(s), epsilon / (8H)) for the pseudo-regret phi of (v, pi)."""
    return clip(float(pseudo_regret(mdp, v, pi)[s]), epsilon / (8 * H))


Monitor = Callable[[object, UpdateEvent, int], None]


def run(config: RunConfig, monitor: Monitor | None = None, trace: bool = False,
        recompute_every_step: bool = False, mdp: TabularMdp | None = None) -> RunResult:
    """Drive one agent for ``config.steps`` steps and measure its sample complexity.

    ``monitor(agent, event, t)`` is called after every step whose event fired.
    ``recompute_every_step`` bypasses the policy-evaluation cache (shadow
    checking only). ``trace`` keeps one row per step, with the value gap
    ``V*(s_t) - V^{pi_t}(s_t)`` as an eighth column.
    """
    start = time.perf_counter()
    if mdp is None:
        mdp = make_mdp(config.env, config.gamma)
    elif mdp.discount != config.gamma:
        mdp = mdp.with_discount(config.gamma)
    tol = config.oracle_tol
    eps = config.epsilon
    v_star, _ = optimal_values(mdp, tol)
    schedule = build_schedule(config.schedule_params(mdp))
    agent = make_agent(config.agent, mdp.num_states, mdp.num_actions, config.gamma,
                       schedule, config.bonus_scale, config.last_term)
    env = EnvInstance(mdp, config.seed)
    threshold = eps / (8 * schedule.H)
    result = RunResult(config=config, trace=[] if trace else None)

    evals: dict[tuple, np.ndarray] = {}

    def evaluate():
        pi = agent.greedy()
        key = tuple(pi.tolist())
        v_pi = evals.get(key) if not recompute_every_step else None
        if v_pi is None:
            v_pi = policy_evaluation(mdp, pi, tol)
            evals[key] = v_pi
            result.policy_evaluations += 1
        gap = (v_star - v_pi).tolist()
        if config.diagnostics:
            phi = pseudo_regret(mdp, agent.v_table(), pi)
            clipped = [clip(x, threshold) for x in phi.tolist()]
        else:
            clipped = [0.0] * mdp.num_states
        return pi, v_pi, gap, clipped

    pi, v_pi, gap, clipped = evaluate()
    steps = config.steps
    window = config.window
    tail_start = steps - steps // 10
    last_window_start = max(0, steps - window)
    window_states: set[int] = set()
    counts = {kind.value: 0 for kind in EventKind if kind is not EventKind.NONE}
    cum = 0
    cpr = 0.0
    window_count = 0
    for t in range(steps):
        if recompute_every_step and t:
            pi, v_pi, gap, clipped = evaluate()
        s = env.current_state
        a = agent.act(s)
        gap_s = gap[s]
        sub = gap_s > eps
        if sub:
            cum += 1
            window_count += 1
            if t >= tail_start:
                result.tail_suboptimal += 1
        cpr += clipped[s]
        if t >= last_window_start:
            window_states.add(s)
        r, s_next = env.step(a)
        event = agent.observe(s, a, r, s_next)
        kind = event.kind
        if kind is not EventKind.NONE:
            counts[kind.value] += 1
            if monitor is not None:
                monitor(agent, event, t)
            if event.changed and not recompute_every_step:
                pi, v_pi, gap, clipped = evaluate()
        if trace:
            result.trace.append((t + 1, s, a, r, kind.value, int(sub), cum, gap_s))
        if (t + 1) % window == 0 or t + 1 == steps:
            result.window_counts.append(window_count)
            window_count = 0

    if recompute_every_step:
        pi, v_pi, gap, clipped = evaluate()
    result.steps = steps
    result.sample_complexity = cum
    result.update_counts = counts
    result.clipped_pseudo_regret = cpr
    v_agent = agent.v_table()
    result.final_sup_error = float(np.max(np.abs(v_agent - v_star)))
    result.final_policy_gap = float(np.max(v_star - v_pi))
    result.final_policy = pi.tolist()
    result.final_values = v_agent.tolist()
    result.final_window_states = sorted(window_states)
    if window_states:
        phi = pseudo_regret(mdp, v_agent, pi)
        result.final_window_clipped_max = max(clip(float(phi[s]), threshold)
                                              for s in window_states)
    result.wall_time = time.perf_counter() - start
    return result


def _run_key(config: RunConfig) -> tuple[tuple[float, int], RunResult]:
    return (config.epsilon, config.seed), run(config)


def iter_sweep(base: RunConfig, epsilons: Iterable[float], seeds: Iterable[int],
               jobs: int = 1) -> Iterator[tuple[tuple[float, int], RunResult]]:
    """Yield ((epsilon, seed), RunResult) as runs complete."""
    epsilons, seeds = list(epsilons), list(seeds)
    if not epsilons:
        raise InvalidArgument("epsilon list must be non-empty")
    configs = [dataclasses.replace(base, epsilon=e, seed=s,
                                   oracle_tol=min(base.oracle_tol, e / 100))
               for e in epsilons for s in seeds]
    if jobs <= 1:
        for cfg in configs:
            yield _run_key(cfg)
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_key, cfg) for cfg in configs]
        for fut in as_completed(futures):
            yield fut.result()


def sweep(base: RunConfig, epsilons: Iterable[float], seeds: Iterable[int],
          jobs: int = 1) -> dict[tuple[float, int], RunResult]:
    """All (epsilon, seed) runs keyed by (epsilon, seed)."""
    return dict(sorted(iter_sweep(base, epsilons, seeds, jobs)))


def aggregate(results: dict[tuple[float, int], RunResult] | Iterable[tuple[float, int, int]]):
    """Per-epsilon mean and standard deviation of sample complexity, sorted by epsilon."""
    if isinstance(results, dict):
        rows = [(e, s, r.sample_complexity) for (e, s), r in results.items()]
    else:
        rows = list(results)
    by_eps: dict[float, list[int]] = {}
    for e, _, count in rows:
        by_eps.setdefault(e, []).append(count)
    return [{"epsilon": e, "runs": len(c), "mean": float(np.mean(c)), "std": float(np.std(c))}
            for e, c in sorted(by_eps.items())]


def scaling_slope(table) -> float:
    """Least-squares slope of log(mean count) against log(1/epsilon).

    ``table`` is either :func:`aggregate` output or a mapping epsilon -> count.
    """
    if isinstance(table, dict):
        pairs = sorted(table.items())
    else:
        pairs = [(row["epsilon"], row["mean"]) for row in table]
    if len({e for e, _ in pairs}) < 3 or len(pairs) != len({e for e, _ in pairs}):
        raise DiagnosticUnavailable("need at least 3 distinct epsilon values")
    if any(c <= 0 for _, c in pairs):
        raise DiagnosticUnavailable("zero counts make the log-log slope undefined")
    x = np.log([1.0 / e for e, _ in pairs])
    y = np.log([c for _, c in pairs])
    slope, _ = np.polyfit(x, y, 1)
    return float(slope)

