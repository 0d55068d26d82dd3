"""Benchmark MDP generators and the seeded step interface.

Randomness: every run owns one PCG64 stream derived from
``SeedSequence(seed, spawn_key=(ENV_STREAM,))``. ``step`` consumes exactly one
uniform double per call and samples the next state by inverse CDF over the
stored transition row, so a trace is fixed by (spec, seed, actions).
"""

from __future__ import annotations

import bisect
import re

import numpy as np

from .mdp import InvalidArgument, TabularMdp

ENV_STREAM = 0
_BLOCK = 4096

RIVER_ADVANCE = 0.35
RIVER_STAY = 0.6
RIVER_REGRESS = 0.05
RIVER_RIGHT_REWARD = 1.0
RIVER_LEFT_REWARD = 5.0 / 1000.0
LEFT, RIGHT = 0, 1


def make_stream(seed: int, stream: int = ENV_STREAM) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(stream,))))


class EnvInstance:
    """One infinite trajectory through ``mdp`` starting at ``initial_state``."""

    def __init__(self, mdp: TabularMdp, seed: int, initial_state: int = 0):
        if not 0 <= initial_state < mdp.num_states:
            raise InvalidArgument(f"initial state {initial_state} out of range")
        self.mdp = mdp
        self.initial_state = initial_state
        self.current_state = initial_state
        self.rng = make_stream(seed)
        cdf = np.cumsum(mdp.transitions, axis=2)
        cdf[:, :, -1] = 1.0
        self._cdf = [[row.tolist() for row in per_state] for per_state in cdf]
        self._rewards = mdp.rewards.tolist()
        self._buf: list[float] = []
        self._pos = 0

    def uniform(self) -> float:
        if self._pos == len(self._buf):
            self._buf = self.rng.random(_BLOCK).tolist()
            self._pos = 0
        u = self._buf[self._pos]
        self._pos += 1
        return u

    def step(self, a: int) -> tuple[float, int]:
        s = self.current_state
        if not 0 <= a < self.mdp.num_actions:
            raise InvalidArgument(f"invalid action {a}")
        s_next = bisect.bisect_right(self._cdf[s][a], self.uniform())
        self.current_state = s_next
        return self._rewards[s][a], s_next


def random_mdp(S: int, A: int, branching: int, seed: int, discount: float = 0.9) -> TabularMdp:
    """Rows with ``branching`` uniformly chosen successors and Dirichlet(1) weights."""
    if S < 1 or A < 1:
        raise InvalidArgument("S and A must be positive")
    if not 1 <= branching <= S:
        raise InvalidArgument(f"branching must be in [1, S={S}], got {branching}")
    rng = np.random.Generator(np.random.PCG64(seed))
    rewards = rng.random((S, A))
    P = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            support = rng.choice(S, size=branching, replace=False)
            P[s, a, support] = rng.dirichlet(np.ones(branching))
    return TabularMdp(P, rewards, discount)


def riverswim(n: int, discount: float = 0.95) -> TabularMdp:
    """The RiverSwim chain; action 0 swims left, action 1 swims right.

    Left always succeeds. Right advances w.p. 0.35, stays 0.6 and drifts back
    0.05 in the interior; at the ends the blocked mass stays put. Rewards are
    1 for right at the right end and 0.005 for left at the left end.
    """
    if n < 2:
        raise InvalidArgument(f"riverswim needs n >= 2, got {n}")
    P = np.zeros((n, 2, n))
    r = np.zeros((n, 2))
    for s in range(n):
        P[s, LEFT, max(s - 1, 0)] = 1.0
        P[s, RIGHT, min(s + 1, n - 1)] += RIVER_ADVANCE
        P[s, RIGHT, s] += RIVER_STAY
        P[s, RIGHT, max(s - 1, 0)] += RIVER_REGRESS
    r[0, LEFT] = RIVER_LEFT_REWARD
    r[n - 1, RIGHT] = RIVER_RIGHT_REWARD
    return TabularMdp(P, r, discount)


def hard_chain(n: int, slip: float, num_actions: int = 2, discount: float = 0.9) -> TabularMdp:
    """Needle-in-a-haystack chain.

    In state s only action ``s % A`` advances (slipping back one state w.p.
    ``slip``); every other action resets to state 0. The advancing action at
    the last state stays there and pays reward 1; all other rewards are 0.
    """
    if n < 2:
        raise InvalidArgument(f"chain needs n >= 2, got {n}")
    if not 0.0 <= slip < 0.5:
        raise InvalidArgument(f"slip must be in [0, 0.5), got {slip}")
    if num_actions < 1:
        raise InvalidArgument("need at least one action")
    P = np.zeros((n, num_actions, n))
    r = np.zeros((n, num_actions))
    for s in range(n):
        good = s % num_actions
        for a in range(num_actions):
            if a != good:
                P[s, a, 0] = 1.0
        P[s, good, min(s + 1, n - 1)] += 1.0 - slip
        P[s, good, max(s - 1, 0)] += slip
    r[n - 1, (n - 1) % num_actions] = 1.0
    return TabularMdp(P, r, discount)


_GRAMMAR = ('valid env specs: "riverswim:n=<int>", "random:S=<int>,A=<int>,b=<int>,seed=<int>", '
            '"chain:n=<int>,slip=<float>[,A=<int>]", "file:<path.json>"')
_KINDS = {
    "riverswim": {"n": int},
    "random": {"S": int, "A": int, "b": int, "seed": int},
    "chain": {"n": int, "slip": float, "A": int},
}
_REQUIRED = {"riverswim": {"n"}, "random": {"S", "A", "b", "seed"}, "chain": {"n", "slip"}}


def parse_env_spec(spec: str) -> tuple[str, dict]:
    m = re.fullmatch(r"\s*(\w+)\s*(?::(.*))?", spec)
    if not m:
        raise InvalidArgument(f"cannot parse env spec {spec!r}; {_GRAMMAR}")
    kind, rest = m.group(1), m.group(2) or ""
    if kind == "file":
        if not rest:
            raise InvalidArgument(f"file spec needs a path; {_GRAMMAR}")
        return kind, {"path": rest}
    if kind not in _KINDS:
        raise InvalidArgument(f"unknown env kind {kind!r}; {_GRAMMAR}")
    params = {}
    for item in filter(None, (x.strip() for x in rest.split(","))):
        key, sep, value = item.partition("=")
        key = key.strip()
        if not sep or key not in _KINDS[kind]:
            raise InvalidArgument(f"bad parameter {item!r} for {kind}; {_GRAMMAR}")
        try:
            params[key] = _KINDS[kind][key](value.strip())
        except ValueError:
            raise InvalidArgument(f"bad value in {item!r}; {_GRAMMAR}") from None
    missing = _REQUIRED[kind] - params.keys()
    if missing:
        raise InvalidArgument(f"{kind} spec is missing {sorted(missing)}; {_GRAMMAR}")
    return kind, params


def make_mdp(spec: str, discount: float) -> TabularMdp:
    """Build the MDP named by ``spec`` with discount ``discount``.

    Initial state is always 0: the left end of the chains, state 0 of random MDPs.
    """
    kind, params = parse_env_spec(spec)
    if kind == "riverswim":
        return riverswim(params["n"], discount)
    if kind == "random":
        return random_mdp(params["S"], params["A"], params["b"], params["seed"], discount)
    if kind == "chain":
        return hard_chain(params["n"], params["slip"], params.get("A", 2), discount)
    return TabularMdp.load(params["path"]).with_discount(discount)
