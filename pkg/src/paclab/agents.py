"""Model-free multi-stage optimistic Q-learners and two baselines.

Every agent exposes ``act(s) -> a`` and ``observe(s, a, reward, s_next) ->
UpdateEvent``. Per-(s, a) statistics live in flat Python lists indexed by
``s * A + a``; element access on lists is several times cheaper than on numpy
arrays, and the step loop is the hot path of every experiment.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mdp import InvalidArgument
from .schedule import StageSchedule, Variant

BERNSTEIN_LAST_TERM = 4.0


class EventKind(str, enum.Enum):
    NONE = "none"
    TYPE_ONE = "type1"
    TYPE_TWO = "type2"
    BOTH = "both"
    REFERENCE_SET = "reference"
    # baselines
    REPLAN = "replan"
    STEP = "step"


@dataclass(frozen=True, slots=True)
class UpdateEvent:
    kind: EventKind
    state: int
    action: int
    new_q: float
    old_q: float
    bonus_used: float = 0.0
    reference_set: bool = False

    @property
    def changed(self) -> bool:
        """Whether any Q entry moved (baseline events always report True)."""
        return self.new_q != self.old_q or self.kind in (EventKind.REPLAN, EventKind.STEP)

    @property
    def fired(self) -> bool:
        return self.kind is not EventKind.NONE


def hoeffding_bonus(n_stage: int, H: int, iota: float, scale: float, gamma: float) -> float:
    """min(scale * 2 sqrt(H^2 iota / n), 1 / (1 - gamma)); n = 0 gives the cap."""
    cap = 1.0 / (1.0 - gamma)
    if n_stage < 0:
        raise InvalidArgument("negative stage count")
    if n_stage == 0:
        return cap
    return min(scale * 2.0 * math.sqrt(H * H * iota / n_stage), cap)


def bernstein_bonus(mu_check: float, sigma_check: float, n_check: int,
                    mu_ref: float, sigma_ref: float, n_total: int,
                    H: int, iota: float, scale: float, gamma: float,
                    last_term: float = BERNSTEIN_LAST_TERM) -> float:
    """Variance-aware type-I bonus using the stage advantage and lifetime reference statistics.

    Both empirical variances are floored at zero before the square root. ``scale``
    multiplies the whole expression before the cap at 1 / (1 - gamma).
    """
    if n_check < 0 or n_total < 0:
        raise InvalidArgument("negative counts")
    cap = 1.0 / (1.0 - gamma)
    if n_check == 0 or n_total == 0:
        return cap
    if n_total < n_check:
        raise InvalidArgument(f"total count {n_total} below stage count {n_check}")
    var_adv = max(sigma_check / n_check - (mu_check / n_check) ** 2, 0.0)
    var_ref = max(sigma_ref / n_total - (mu_ref / n_total) ** 2, 0.0)
    b = (2.0 * math.sqrt(2.0) * (math.sqrt(var_adv / n_check * iota)
                                 + math.sqrt(var_ref / n_total * iota))
         + 7.0 * (H * iota ** 0.75 / n_total ** 0.75 + H * iota ** 0.75 / n_check ** 0.75)
         + last_term * (H * iota / n_total + H * iota / n_check))
    return min(scale * b, cap)


class _TabularAgent:
    """Shared greedy action selection over a flat Q list."""

    num_states: int
    num_actions: int
    gamma: float

    def act(self, s: int) -> int:
        A = self.num_actions
        base = s * A
        Q = self.Q
        best, best_q = 0, Q[base]
        for a in range(1, A):
            if Q[base + a] > best_q:
                best, best_q = a, Q[base + a]
        return best

    def greedy(self) -> np.ndarray:
        return np.array([self.act(s) for s in range(self.num_states)], dtype=np.int64)

    def q_table(self) -> np.ndarray:
        return np.array(self.Q).reshape(self.num_states, self.num_actions)

    def v_table(self) -> np.ndarray:
        return np.array(self.V)

    def _check(self, s, a, s_next):
        S, A = self.num_states, self.num_actions
        if not (0 <= s < S and 0 <= a < A and 0 <= s_next < S):
            raise InvalidArgument(f"invalid transition ({s}, {a}, {s_next})")

    def snapshot(self) -> dict:
        out = {"agent": self.name, "steps": self.steps}
        for key in self._tables:
            out[key] = list(getattr(self, key))
        return out

    def restore(self, snap: dict) -> None:
        if snap.get("agent") != self.name:
            raise InvalidArgument(f"snapshot is for {snap.get('agent')!r}, not {self.name!r}")
        self.steps = int(snap["steps"])
        for key in self._tables:
            current = getattr(self, key)
            values = snap[key]
            if len(values) != len(current):
                raise InvalidArgument(f"snapshot table {key} has the wrong size")
            kind = type(current[0]) if current else float
            setattr(self, key, [kind(x) for x in values])


class MultiStageAgent(_TabularAgent):
    """Optimistic Q-learning with type-I/type-II stage-triggered updates and Hoeffding bonuses."""

    name = "multistage"
    _tables = ("Q", "V", "N", "N_check", "N_bar", "mu_check", "mu_bar", "r",
               "next1", "stage1", "next2", "stage2")

    def __init__(self, num_states: int, num_actions: int, gamma: float,
                 schedule: StageSchedule, bonus_scale: float = 1.0):
        if bonus_scale < 0:
            raise InvalidArgument("bonus_scale must be non-negative")
        if not 0.0 < gamma < 1.0:
            raise InvalidArgument(f"gamma must be in (0, 1), got {gamma}")
        self.num_states, self.num_actions = num_states, num_actions
        self.gamma = gamma
        self.schedule = schedule
        self.bonus_scale = bonus_scale
        self.v_max = 1.0 / (1.0 - gamma)
        SA = num_states * num_actions
        self.Q = [self.v_max] * SA
        self.V = [self.v_max] * num_states
        self.N = [0] * SA
        self.N_check = [0] * SA
        self.N_bar = [0] * SA
        self.mu_check = [0.0] * SA
        self.mu_bar = [0.0] * SA
        self.r = [0.0] * SA
        # cached ends of the current stages, so triggers are O(1) per step
        first1 = min(schedule.type1_length(1), schedule.N0)
        self.next1 = [first1] * SA
        self.stage1 = [1] * SA
        self.next2 = [schedule.type2_length(1)] * SA
        self.stage2 = [1] * SA
        self.steps = 0

    @property
    def N0(self) -> int:
        return self.schedule.N0

    def _refresh_v(self, s: int) -> None:
        base = s * self.num_actions
        self.V[s] = max(self.Q[base:base + self.num_actions])

    def _advance_type1(self, i: int) -> None:
        j = self.stage1[i] + 1
        self.stage1[i] = j
        self.next1[i] = min(self.next1[i] + self.schedule.type1_length(j), self.schedule.N0)

    def _advance_type2(self, i: int) -> None:
        j = self.stage2[i] + 1
        self.stage2[i] = j
        self.next2[i] += self.schedule.type2_length(j)

    def _type1_update(self, s, i, r):
        n = self.N_check[i]
        sched = self.schedule
        b = hoeffding_bonus(n, sched.H, sched.iota, self.bonus_scale, self.gamma)
        target = r + self.gamma * (self.mu_check[i] / n) + b
        self.N_check[i] = 0
        self.mu_check[i] = 0.0
        return target, b

    def _type2_update(self, s, i, r):
        n = self.N_bar[i]
        sched = self.schedule
        b = hoeffding_bonus(n, sched.H, sched.iota, self.bonus_scale, self.gamma)
        target = r + self.gamma * (self.mu_bar[i] / n) + b
        self.N_bar[i] = 0
        self.mu_bar[i] = 0.0
        return target, b

    def _accumulate(self, i: int, s_next: int) -> None:
        v_next = self.V[s_next]
        self.N_check[i] += 1
        self.mu_check[i] += v_next
        self.N_bar[i] += 1
        self.mu_bar[i] += v_next

    def observe(self, s: int, a: int, reward: float, s_next: int) -> UpdateEvent:
        self._check(s, a, s_next)
        self.steps += 1
        i = s * self.num_actions + a
        n = self.N[i] + 1
        self.N[i] = n
        old_q = self.Q[i]
        if n > self.schedule.N0:
            if self._after_updates(s):
                return UpdateEvent(EventKind.REFERENCE_SET, s, a, old_q, old_q, 0.0, True)
            return UpdateEvent(EventKind.NONE, s, a, old_q, old_q)
        self.r[i] = reward
        self._accumulate(i, s_next)

        kind = EventKind.NONE
        bonus = 0.0
        if n == self.next1[i]:
            target, bonus = self._type1_update(s, i, reward)
            self.Q[i] = min(max(target, 0.0), self.Q[i])
            self._refresh_v(s)
            if n < self.schedule.N0:
                self._advance_type1(i)
            kind = EventKind.TYPE_ONE
        if n == self.next2[i]:
            target, bonus = self._type2_update(s, i, reward)
            self.Q[i] = min(max(target, 0.0), self.Q[i])
            self._refresh_v(s)
            self._advance_type2(i)
            kind = EventKind.BOTH if kind is EventKind.TYPE_ONE else EventKind.TYPE_TWO
        ref = self._after_updates(s)
        if ref and kind is EventKind.NONE:
            kind = EventKind.REFERENCE_SET
        return UpdateEvent(kind, s, a, self.Q[i], old_q, bonus, ref)

    def _after_updates(self, s: int) -> bool:
        return False

    def memory_shapes(self) -> dict[str, int]:
        return {key: len(getattr(self, key)) for key in self._tables}


class AdvantageAgent(MultiStageAgent):
    """Multi-stage learner with a reference value function and a Bernstein-style type-I bonus.

    Type-I targets estimate ``P V`` as the stage mean of ``V - V_ref`` plus the
    lifetime mean of ``V_ref``. ``V_ref(s)`` is frozen to ``V(s)`` the first
    time state ``s`` has been visited ``N1`` times.
    """

    name = "advantage"
    _tables = MultiStageAgent._tables + ("V_ref", "mu_ref", "sigma_ref", "sigma_check",
                                         "state_visits", "ref_set")

    def __init__(self, num_states: int, num_actions: int, gamma: float,
                 schedule: StageSchedule, bonus_scale: float = 1.0,
                 last_term: float = BERNSTEIN_LAST_TERM):
        super().__init__(num_states, num_actions, gamma, schedule, bonus_scale)
        SA = num_states * num_actions
        self.last_term = last_term
        self.V_ref = [self.v_max] * num_states
        self.mu_ref = [0.0] * SA
        self.sigma_ref = [0.0] * SA
        self.sigma_check = [0.0] * SA
        self.state_visits = [0] * num_states
        self.ref_set = [False] * num_states

    def _accumulate(self, i: int, s_next: int) -> None:
        v_next = self.V[s_next]
        ref = self.V_ref[s_next]
        adv = v_next - ref
        self.N_check[i] += 1
        self.mu_check[i] += adv
        self.sigma_check[i] += adv * adv
        self.mu_ref[i] += ref
        self.sigma_ref[i] += ref * ref
        self.N_bar[i] += 1
        self.mu_bar[i] += v_next

    def _type1_update(self, s, i, r):
        n_check = self.N_check[i]
        n = self.N[i]
        sched = self.schedule
        b = bernstein_bonus(self.mu_check[i], self.sigma_check[i], n_check,
                            self.mu_ref[i], self.sigma_ref[i], n,
                            sched.H, sched.iota, self.bonus_scale, self.gamma, self.last_term)
        target = r + self.gamma * (self.mu_check[i] / n_check + self.mu_ref[i] / n + b)
        self.N_check[i] = 0
        self.mu_check[i] = 0.0
        self.sigma_check[i] = 0.0
        return target, b

    def _type2_update(self, s, i, r):
        n = self.N_bar[i]
        sched = self.schedule
        b = hoeffding_bonus(n, sched.H, sched.iota, self.bonus_scale, self.gamma)
        target = r + self.gamma * (self.mu_bar[i] / n + b)
        self.N_bar[i] = 0
        self.mu_bar[i] = 0.0
        return target, b

    def observe(self, s: int, a: int, reward: float, s_next: int) -> UpdateEvent:
        self.state_visits[s] += 1
        return super().observe(s, a, reward, s_next)

    def _after_updates(self, s: int) -> bool:
        if not self.ref_set[s] and self.state_visits[s] >= self.schedule.N1:
            self.V_ref[s] = self.V[s]
            self.ref_set[s] = True
            return True
        return False


class ModelBasedAgent(_TabularAgent):
    """Empirical-model value iteration with a count-based optimism bonus.

    Stores full transition counts, i.e. O(S^2 A) memory, as the contrast to the
    O(SA) learners. Unvisited pairs plan with reward 1 forever, i.e. value
    1 / (1 - gamma). Replans whenever a pair's visit count hits a type-II
    stage boundary of ``schedule`` (or a power of two without one).
    """

    name = "model_based"
    _tables = ("Q", "V", "N", "counts", "r", "_next", "_stage")

    def __init__(self, num_states: int, num_actions: int, gamma: float,
                 optimism: float = 1.0, schedule: StageSchedule | None = None,
                 tol: float = 1e-8):
        self.num_states, self.num_actions = num_states, num_actions
        self.gamma = gamma
        self.optimism = optimism
        self.schedule = schedule
        self.tol = tol
        self.v_max = 1.0 / (1.0 - gamma)
        SA = num_states * num_actions
        self.Q = [self.v_max] * SA
        self.V = [self.v_max] * num_states
        self.N = [0] * SA
        self.counts = [0] * (SA * num_states)
        self.r = [1.0] * SA
        self._next = [self._first_boundary()] * SA
        self._stage = [1] * SA
        self.steps = 0

    def _first_boundary(self) -> int:
        return self.schedule.type2_length(1) if self.schedule is not None else 1

    def _advance(self, i: int) -> None:
        if self.schedule is None:
            self._next[i] *= 2
        else:
            self._stage[i] += 1
            self._next[i] += self.schedule.type2_length(self._stage[i])

    def model(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        S, A = self.num_states, self.num_actions
        counts = np.array(self.counts, dtype=np.float64).reshape(S, A, S)
        n = np.array(self.N, dtype=np.float64).reshape(S, A)
        P_hat = np.divide(counts, n[:, :, None], out=np.zeros_like(counts),
                          where=n[:, :, None] > 0)
        return P_hat, np.array(self.r).reshape(S, A), n

    def plan(self) -> None:
        P_hat, r_hat, n = self.model()
        visited = n > 0
        bonus = np.where(visited, self.optimism / np.sqrt(np.maximum(n, 1.0)), 0.0)
        v = np.array(self.V)
        stop = self.tol * (1.0 - self.gamma) / (2.0 * self.gamma)
        while True:
            q = np.where(visited, r_hat + self.gamma * (P_hat @ v) + bonus, self.v_max)
            q = np.minimum(q, self.v_max)
            v_new = q.max(axis=1)
            delta = np.max(np.abs(v_new - v))
            v = v_new
            if delta <= stop:
                break
        self.Q = q.ravel().tolist()
        self.V = v.tolist()

    def observe(self, s: int, a: int, reward: float, s_next: int) -> UpdateEvent:
        self._check(s, a, s_next)
        self.steps += 1
        i = s * self.num_actions + a
        self.N[i] += 1
        self.counts[i * self.num_states + s_next] += 1
        self.r[i] = reward
        old_q = self.Q[i]
        if self.N[i] == self._next[i]:
            self._advance(i)
            self.plan()
            return UpdateEvent(EventKind.REPLAN, s, a, self.Q[i], old_q)
        return UpdateEvent(EventKind.NONE, s, a, old_q, old_q)


def inverse_count(k: int) -> float:
    return 1.0 / k


class VanillaQAgent(_TabularAgent):
    """Optimistically initialised one-step Q-learning with step size ``lr(count)``."""

    name = "vanilla_q"
    _tables = ("Q", "V", "N")

    def __init__(self, num_states: int, num_actions: int, gamma: float,
                 learning_rate: Callable[[int], float] = inverse_count):
        self.num_states, self.num_actions = num_states, num_actions
        self.gamma = gamma
        self.learning_rate = learning_rate
        self.v_max = 1.0 / (1.0 - gamma)
        self.Q = [self.v_max] * (num_states * num_actions)
        self.V = [self.v_max] * num_states
        self.N = [0] * (num_states * num_actions)
        self.steps = 0

    def observe(self, s: int, a: int, reward: float, s_next: int) -> UpdateEvent:
        self._check(s, a, s_next)
        self.steps += 1
        i = s * self.num_actions + a
        self.N[i] += 1
        alpha = self.learning_rate(self.N[i])
        old_q = self.Q[i]
        self.Q[i] = old_q + alpha * (reward + self.gamma * self.V[s_next] - old_q)
        base = s * self.num_actions
        self.V[s] = max(self.Q[base:base + self.num_actions])
        return UpdateEvent(EventKind.STEP, s, a, self.Q[i], old_q)


def make_agent(variant: str, num_states: int, num_actions: int, gamma: float,
               schedule: StageSchedule | None = None, bonus_scale: float = 1.0,
               last_term: float = BERNSTEIN_LAST_TERM):
    """Construct an agent by name: multistage, advantage, model_based or vanilla_q."""
    if variant == "multistage":
        return MultiStageAgent(num_states, num_actions, gamma, schedule, bonus_scale)
    if variant == "advantage":
        return AdvantageAgent(num_states, num_actions, gamma, schedule, bonus_scale, last_term)
    if variant == "model_based":
        return ModelBasedAgent(num_states, num_actions, gamma, bonus_scale, schedule)
    if variant == "vanilla_q":
        return VanillaQAgent(num_states, num_actions, gamma)
    raise InvalidArgument(f"unknown agent {variant!r}; choose multistage, advantage, "
                          "model_based or vanilla_q")


AGENTS = ("multistage", "advantage", "model_based", "vanilla_q")
SCHEDULE_VARIANT = {"multistage": Variant.MULTISTAGE, "advantage": Variant.ADVANTAGE,
                    "model_based": Variant.MULTISTAGE, "vanilla_q": Variant.MULTISTAGE}
