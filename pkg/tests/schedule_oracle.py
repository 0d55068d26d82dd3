"""Brute-force stage tables, independent of paclab.schedule's integer tricks."""

import math
from decimal import Decimal, getcontext, ROUND_CEILING
from fractions import Fraction

getcontext().prec = 60


def d_table(H, count):
    d = [H]
    while len(d) < count:
        d.append(math.floor(Fraction(d[-1]) * (1 + Fraction(1, H))))
    return d


def ceil_j_over_b(j, H, variant):
    B = Decimal(H) ** 3 if variant == "advantage" else Decimal(H).sqrt()
    return int((Decimal(j) / B).to_integral_value(rounding=ROUND_CEILING))


def enumerate_stages(H, variant, N0, kind):
    """Per-visit (stage index, is-last-visit) for n = 1..N0 by walking stages."""
    d = d_table(H, 64)
    index, boundary = [0] * (N0 + 1), [False] * (N0 + 1)
    n, j = 0, 0
    while n < N0:
        j += 1
        k = ceil_j_over_b(j, H, variant) if kind == 1 else j
        while k > len(d):
            d = d_table(H, 2 * len(d))
        length = d[k - 1]
        end = n + length
        if kind == 1:
            end = min(end, N0)  # truncate the last type-I stage at N0
        for m in range(n + 1, min(end, N0) + 1):
            index[m] = j
        if end <= N0:
            boundary[end] = True
        n = end
    return index, boundary
