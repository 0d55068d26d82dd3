"""Tabular discounted MDPs and exact solvers.

Everything here is a pure function of its inputs. Value functions are plain
1-D numpy arrays of length S, Q-functions are (S, A) arrays and policies are
integer arrays of length S.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

ROW_TOL = 1e-12
RENORMALIZE_TOL = 1e-9
VALUE_SLACK = 1e-9


class InvalidArgument(ValueError):
    """Raised for out-of-range or mis-shaped inputs."""


@dataclass(frozen=True)
class TabularMdp:
    """The ground-truth model <S, A, P, r, gamma>.

    ``transitions[s, a]`` is a distribution over next states and
    ``rewards[s, a]`` lies in [0, 1]. Rows within 1e-9 of summing to one are
    renormalized at construction; anything further off is rejected.
    """

    transitions: np.ndarray
    rewards: np.ndarray
    discount: float

    def __post_init__(self):
        P = np.array(self.transitions, dtype=np.float64)
        r = np.array(self.rewards, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise InvalidArgument(f"transitions must have shape (S, A, S), got {P.shape}")
        if r.shape != P.shape[:2]:
            raise InvalidArgument(f"rewards shape {r.shape} does not match transitions {P.shape[:2]}")
        if P.shape[0] < 1 or P.shape[1] < 1:
            raise InvalidArgument("need at least one state and one action")
        if not np.all(np.isfinite(P)) or np.any(P < 0):
            raise InvalidArgument("transition probabilities must be finite and non-negative")
        sums = P.sum(axis=2)
        if np.any(np.abs(sums - 1.0) > RENORMALIZE_TOL):
            bad = np.argwhere(np.abs(sums - 1.0) > RENORMALIZE_TOL)[0]
            raise InvalidArgument(
                f"row P[{bad[0]}][{bad[1]}] sums to {sums[tuple(bad)]!r}, not 1")
        if np.any(sums != 1.0):
            P = P / sums[:, :, None]
        if not np.all(np.isfinite(r)) or np.any(r < 0) or np.any(r > 1):
            raise InvalidArgument("rewards must lie in [0, 1]")
        gamma = float(self.discount)
        if not 0.0 < gamma < 1.0:
            raise InvalidArgument(f"discount must be in (0, 1), got {gamma}")
        P.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "rewards", r)
        object.__setattr__(self, "discount", gamma)

    @property
    def num_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transitions.shape[1]

    @property
    def v_max(self) -> float:
        return 1.0 / (1.0 - self.discount)

    def with_discount(self, discount: float) -> "TabularMdp":
        return TabularMdp(self.transitions, self.rewards, discount)

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "discount": self.discount,
            "rewards": self.rewards.tolist(),
            "transitions": self.transitions.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TabularMdp":
        try:
            mdp = cls(np.asarray(data["transitions"], dtype=np.float64),
                      np.asarray(data["rewards"], dtype=np.float64),
                      data["discount"])
        except (KeyError, TypeError) as exc:
            raise InvalidArgument(f"malformed MDP document: {exc}") from exc
        except ValueError as exc:
            if isinstance(exc, InvalidArgument):
                raise
            raise InvalidArgument(f"malformed MDP document: {exc}") from exc
        if (data.get("num_states", mdp.num_states) != mdp.num_states
                or data.get("num_actions", mdp.num_actions) != mdp.num_actions):
            raise InvalidArgument("num_states/num_actions disagree with the tables")
        return mdp

    def to_json(self) -> str:
        # repr() of a Python float is the shortest string that round-trips
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "TabularMdp":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidArgument(f"malformed MDP JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise InvalidArgument("MDP JSON must be an object")
        return cls.from_dict(data)

    def save(self, path):
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "TabularMdp":
        return cls.from_json(Path(path).read_text(encoding="utf-8"))


def clip(x: float, threshold: float) -> float:
    """Return ``x`` if ``x >= threshold`` else 0."""
    if not (math.isfinite(x) and math.isfinite(threshold)):
        raise InvalidArgument(f"clip needs finite inputs, got ({x}, {threshold})")
    return x if x >= threshold else 0.0


def _check_values(mdp: TabularMdp, v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (mdp.num_states,):
        raise InvalidArgument(f"value vector has shape {v.shape}, expected ({mdp.num_states},)")
    return v


def _check_policy(mdp: TabularMdp, pi) -> np.ndarray:
    pi = np.asarray(pi)
    if pi.shape != (mdp.num_states,):
        raise InvalidArgument(f"policy has shape {pi.shape}, expected ({mdp.num_states},)")
    if not np.issubdtype(pi.dtype, np.integer):
        raise InvalidArgument("policy entries must be integers")
    if np.any(pi < 0) or np.any(pi >= mdp.num_actions):
        raise InvalidArgument("policy contains an invalid action index")
    return pi.astype(np.int64)


def q_backup(mdp: TabularMdp, v) -> np.ndarray:
    """Q(s,a) = r(s,a) + gamma * P_{s,a} . v"""
    v = _check_values(mdp, v)
    return mdp.rewards + mdp.discount * (mdp.transitions @ v)


def bellman_optimality_backup(mdp: TabularMdp, v) -> np.ndarray:
    return q_backup(mdp, v).max(axis=1)


def optimal_values(mdp: TabularMdp, tol: float = 1e-10) -> tuple[np.ndarray, np.ndarray]:
    """Value iteration returning (V*, Q*) with sup-norm error at most ``tol``.

    Iterates until successive iterates differ by at most
    ``tol * (1 - gamma) / (2 * gamma)``.
    """
    if not tol > 0:
        raise InvalidArgument(f"tol must be positive, got {tol}")
    gamma = mdp.discount
    stop = tol * (1.0 - gamma) / (2.0 * gamma)
    v = np.zeros(mdp.num_states)
    while True:
        q = q_backup(mdp, v)
        v_new = q.max(axis=1)
        delta = np.max(np.abs(v_new - v))
        v = v_new
        if delta <= stop:
            break
    q = q_backup(mdp, v)
    return q.max(axis=1), q


def greedy_policy(q) -> np.ndarray:
    """argmax over actions; np.argmax already breaks ties toward the lowest index."""
    return np.argmax(np.asarray(q), axis=1).astype(np.int64)


def policy_evaluation(mdp: TabularMdp, pi, tol: float = 1e-10) -> np.ndarray:
    """Exact V^pi by solving (I - gamma P_pi) V = r_pi."""
    if not tol > 0:
        raise InvalidArgument(f"tol must be positive, got {tol}")
    pi = _check_policy(mdp, pi)
    states = np.arange(mdp.num_states)
    P_pi = mdp.transitions[states, pi]
    r_pi = mdp.rewards[states, pi]
    A = np.eye(mdp.num_states) - mdp.discount * P_pi
    v = np.linalg.solve(A, r_pi)
    # one refinement step against round-off in ill-conditioned (gamma ~ 1) systems
    v = v + np.linalg.solve(A, r_pi - A @ v)
    return np.clip(v, 0.0, mdp.v_max)


def pseudo_regret(mdp: TabularMdp, v, pi) -> np.ndarray:
    """phi(s) = v(s) - (r(s, pi(s)) + gamma P_{s, pi(s)} v)."""
    v = _check_values(mdp, v)
    pi = _check_policy(mdp, pi)
    states = np.arange(mdp.num_states)
    return v - (mdp.rewards[states, pi] + mdp.discount * (mdp.transitions[states, pi] @ v))


def rollout_values(mdp: TabularMdp, pi, num_rollouts: int, horizon: int,
                   rng: np.random.Generator) -> np.ndarray:
    """Monte-Carlo estimate of V^pi from every start state with truncated rollouts.

    Independent of :func:`policy_evaluation`; used as a cross-check.
    """
    pi = _check_policy(mdp, pi)
    S = mdp.num_states
    cdf = np.cumsum(mdp.transitions[np.arange(S), pi], axis=1)
    cdf[:, -1] = 1.0
    r_pi = mdp.rewards[np.arange(S), pi]
    out = np.empty(S)
    for start in range(S):
        states = np.full(num_rollouts, start)
        total = np.zeros(num_rollouts)
        discount = 1.0
        for _ in range(horizon):
            total += discount * r_pi[states]
            discount *= mdp.discount
            u = rng.random(num_rollouts)
            states = (u[:, None] >= cdf[states]).sum(axis=1)
        out[start] = total.mean()
    return out
