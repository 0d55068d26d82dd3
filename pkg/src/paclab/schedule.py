"""Stage schedules for the multi-stage optimistic Q-learners.

Visits to every (s, a) pair are cut into two interleaved sequences of stages.
Type-I stage ``j`` has length ``d[ceil(j / B)]`` and type-II stage ``j`` has
length ``d[j]``, where ``d_1 = H`` and ``d_{j+1} = floor((1 + 1/H) d_j)``. An
update fires when a stage ends. Updates stop after ``N0`` visits.

All stage arithmetic uses Python integers, so the uncapped theoretical
constants (which can be astronomically large) are representable; only
:func:`make_schedule` refuses values beyond the 64-bit range.
"""

from __future__ import annotations

import bisect
import enum
import math
from dataclasses import dataclass, field

from .mdp import InvalidArgument

INT64_MAX = 2**63 - 1
DEFAULT_CAP_N0 = 10**6
DEFAULT_CAP_N1 = 10**4
# guards ceil() against ln(32)/ln(2) evaluating to 5.000000000000001
_CEIL_SLACK = 1e-9


class Variant(str, enum.Enum):
    MULTISTAGE = "multistage"
    ADVANTAGE = "advantage"


class ScheduleOverflow(OverflowError):
    pass


def horizon(gamma: float, epsilon: float) -> int:
    """ceil(max(ln(8 / ((1 - gamma) eps)) / ln(1 / gamma), 1 / (1 - gamma)))."""
    if not 0.0 < gamma < 1.0:
        raise InvalidArgument(f"gamma must be in (0, 1), got {gamma}")
    if not 0.0 < epsilon <= 1.0 / (1.0 - gamma):
        raise InvalidArgument(f"epsilon must be in (0, 1/(1-gamma)], got {epsilon}")
    x = max(math.log(8.0 / ((1.0 - gamma) * epsilon)) / math.log(1.0 / gamma),
            1.0 / (1.0 - gamma))
    return max(1, math.ceil(x - _CEIL_SLACK))


def iota(p: float) -> float:
    """ln(2 / p)."""
    if not 0.0 < p < 1.0:
        raise InvalidArgument(f"failure probability must be in (0, 1), got {p}")
    return math.log(2.0 / p)


def d_sequence(H: int, count: int) -> list[int]:
    if H < 1:
        raise InvalidArgument(f"H must be >= 1, got {H}")
    d = [H]
    while len(d) < count:
        d.append(d[-1] + d[-1] // H)  # floor((1 + 1/H) d) without float error
    return d[:count]


_D_CACHE: dict[int, list[int]] = {}


def _d_extended(H: int, k: int) -> int:
    d = _D_CACHE.setdefault(H, [H])
    while len(d) < k:
        d.append(d[-1] + d[-1] // H)
    return d[k - 1]


@dataclass(frozen=True)
class ScheduleParams:
    gamma: float
    epsilon: float
    p: float
    num_states: int
    num_actions: int
    variant: Variant = Variant.MULTISTAGE
    c1: float = 1.0
    c10: float = 1.0
    cap_n0: int | None = DEFAULT_CAP_N0
    cap_n1: int | None = DEFAULT_CAP_N1

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if not 0.0 < self.gamma < 1.0:
            raise InvalidArgument(f"gamma must be in (0, 1), got {self.gamma}")
        if not 0.0 < self.epsilon <= 1.0 / (1.0 - self.gamma):
            raise InvalidArgument(f"epsilon must be in (0, 1/(1-gamma)], got {self.epsilon}")
        if not 0.0 < self.p < 1.0:
            raise InvalidArgument(f"p must be in (0, 1), got {self.p}")
        if self.num_states < 1 or self.num_actions < 1:
            raise InvalidArgument("num_states and num_actions must be positive")
        if not (self.c1 > 0 and self.c10 > 0):
            raise InvalidArgument("c1 and c10 must be positive")
        for name in ("cap_n0", "cap_n1"):
            cap = getattr(self, name)
            if cap is not None and cap < 1:
                raise InvalidArgument(f"{name} must be a positive integer")


@dataclass(frozen=True)
class StageSchedule:
    """Immutable schedule constants plus O(1)/O(log) stage lookups.

    ``B`` is stored as a float for reporting; stage arithmetic goes through
    :meth:`ceil_div_b`, which is exact for both B = sqrt(H) and B = H^3.
    """

    H: int
    B: float
    iota: float
    N0: int
    N1: int
    variant: Variant
    d: tuple[int, ...]
    J_check: int
    J_bar: int
    # type-I stages with equal ceil(j/B) form one group: group k holds
    # floor(kB) - floor((k-1)B) stages of length d_k.
    _group_ends: tuple[int, ...] = field(repr=False, default=())
    _bar_ends: tuple[int, ...] = field(repr=False, default=())

    # -- exact B arithmetic --------------------------------------------------
    def floor_mul_b(self, k: int) -> int:
        """floor(k * B)."""
        if self.variant is Variant.ADVANTAGE:
            return k * self.H**3
        return math.isqrt(k * k * self.H)

    def ceil_div_b(self, j: int) -> int:
        """ceil(j / B)."""
        if self.variant is Variant.ADVANTAGE:
            return -(-j // self.H**3)
        m = -(-(j * j) // self.H)  # smallest integer k^2 may take
        k = math.isqrt(m)
        return k if k * k >= m else k + 1

    # -- stage lengths -------------------------------------------------------
    def d_at(self, k: int) -> int:
        """d_k, 1-indexed."""
        if k <= len(self.d):
            return self.d[k - 1]
        return _d_extended(self.H, k)

    def type1_length(self, j: int) -> int:
        """Untruncated length of type-I stage j."""
        return self.d_at(self.ceil_div_b(j))

    def type2_length(self, j: int) -> int:
        return self.d_at(j)

    # -- lookups -------------------------------------------------------------
    def type1_stage_index(self, n: int) -> tuple[int, bool]:
        """(j, n is the last visit of type-I stage j) for visit count n."""
        if not 1 <= n <= self.N0:
            raise InvalidArgument(f"visit count {n} outside [1, {self.N0}]")
        k = bisect.bisect_left(self._group_ends, n) + 1
        start = self._group_ends[k - 2] if k >= 2 else 0
        dk = self.d[k - 1]
        offset = n - start
        j = self.floor_mul_b(k - 1) + -(-offset // dk)
        return j, (offset % dk == 0 or n == self.N0)

    def type2_stage_index(self, n: int) -> tuple[int, bool]:
        if not 1 <= n <= self.N0:
            raise InvalidArgument(f"visit count {n} outside [1, {self.N0}]")
        j = bisect.bisect_left(self._bar_ends, n) + 1
        return j, self._bar_ends[j - 1] == n

    def type1_boundaries(self, limit: int | None = None) -> list[int]:
        """Partial sums of the (truncated) type-I lengths, optionally only the first ``limit``."""
        out, total, j = [], 0, 0
        while total < self.N0 and (limit is None or len(out) < limit):
            j += 1
            total = min(total + self.type1_length(j), self.N0)
            out.append(total)
        return out

    def type2_boundaries(self, limit: int | None = None) -> list[int]:
        """Partial sums of d_j for j <= J_bar (the last may exceed N0)."""
        ends = list(self._bar_ends[: self.J_bar])
        return ends if limit is None else ends[:limit]

    def dump(self, count: int = 50) -> dict:
        return {
            "variant": self.variant.value,
            "H": self.H,
            "B": self.B,
            "iota": self.iota,
            "N0": self.N0,
            "N1": self.N1,
            "J_check": self.J_check,
            "J_bar": self.J_bar,
            "d": list(self.d[:count]) if len(self.d) >= count else d_sequence(self.H, count),
            "L_check": self.type1_boundaries(count),
            "L_bar": self.type2_boundaries(count),
        }


def n0_formula(S: int, A: int, H: int, epsilon: float, iota_: float, c1: float) -> int:
    """ceil(c1 S^3 A H^5 ln(4 H^2 S / eps) iota / eps^2)."""
    return math.ceil(c1 * S**3 * A * H**5 * math.log(4 * H * H * S / epsilon) * iota_
                     / epsilon**2)


def n1_formula(S: int, A: int, H: int, B: float, epsilon: float, iota_: float,
               c10: float) -> int:
    """ceil(c10 S A H^5 B ln(4H / eps) iota)."""
    return math.ceil(c10 * S * A * H**5 * B * math.log(4 * H / epsilon) * iota_)


def build_schedule(params: ScheduleParams) -> StageSchedule:
    """Derive H, B, iota, N0, N1 from ``params`` and precompute the stage tables."""
    H = horizon(params.gamma, params.epsilon)
    io = iota(params.p)
    B = float(H**3) if params.variant is Variant.ADVANTAGE else math.sqrt(H)
    S, A, eps = params.num_states, params.num_actions, params.epsilon
    N0 = n0_formula(S, A, H, eps, io, params.c1)
    if params.cap_n0 is not None:
        N0 = min(N0, int(params.cap_n0))
    N1 = n1_formula(S, A, H, B, eps, io, params.c10)
    if params.cap_n1 is not None:
        N1 = min(N1, int(params.cap_n1))
    return make_schedule(H, params.variant, N0, N1, io)


def make_schedule(H: int, variant: Variant | str, N0: int, N1: int = DEFAULT_CAP_N1,
                  iota_: float = 1.0) -> StageSchedule:
    """Schedule from explicit constants; B is sqrt(H) or H^3 according to ``variant``."""
    variant = Variant(variant)
    if H < 1:
        raise InvalidArgument(f"H must be >= 1, got {H}")
    for name, value in (("N0", N0), ("N1", N1)):
        if value > INT64_MAX:
            raise ScheduleOverflow(f"{name} = {value:.3e} exceeds the 64-bit range; set a cap")
    N0, N1 = max(int(N0), 1), max(int(N1), 1)
    B = float(H**3) if variant is Variant.ADVANTAGE else math.sqrt(H)

    # d and the type-II partial sums, up to the first sum exceeding N0
    d = [H]
    bar_ends = [H]
    while bar_ends[-1] < N0:
        d.append(d[-1] + d[-1] // H)
        bar_ends.append(bar_ends[-1] + d[-1])
    # J_bar = max{j : sum_{i<j} e_bar_i <= N0}
    J_bar = 1 + sum(1 for e in bar_ends if e <= N0)
    if len(d) < J_bar:
        d.append(d[-1] + d[-1] // H)
        bar_ends.append(bar_ends[-1] + d[-1])

    sched = StageSchedule(H=H, B=B, iota=iota_, N0=N0, N1=N1, variant=variant,
                          d=tuple(d), J_check=0, J_bar=J_bar,
                          _bar_ends=tuple(bar_ends))
    group_ends = []
    total, k = 0, 0
    while total < N0:
        k += 1
        count = sched.floor_mul_b(k) - sched.floor_mul_b(k - 1)
        total += count * sched.d_at(k)
        group_ends.append(total)
    object.__setattr__(sched, "_group_ends", tuple(group_ends))
    object.__setattr__(sched, "J_check", sched.type1_stage_index(N0)[0])
    return sched
