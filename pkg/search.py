"""
Golden-section search
One-dimensional search used for the spatial parameters, Box-Cox lambda and GWR bandwidths
"""

import math
from dataclasses import dataclass, field

INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class SearchResult:
    x: float
    value: float
    iterations: int
    trace: list = field(default_factory=list)

    def at_boundary(self, lower, upper, tol):
        return abs(self.x - lower) <= tol or abs(self.x - upper) <= tol


def golden_section(func, lower, upper, tol, maximize=True, integer=False, max_iter=500):
    """
    Search [lower, upper] for the optimum of a unimodal function.

    With integer=True the trial points are rounded and the search finishes with
    an exhaustive scan of the (at most three) integers left in the bracket.
    Evaluations are cached, so each trial point is computed once. NaN scores
    count as the worst possible value.
    """
    if upper < lower:
        raise ValueError(f"empty search interval [{lower}, {upper}]")

    sign = 1.0 if maximize else -1.0
    cache = {}

    def score(x):
        if x not in cache:
            v = float(func(x))
            cache[x] = -math.inf if math.isnan(v) else sign * v
        return cache[x]

    a, c = float(lower), float(upper)
    if integer:
        a, c = float(math.ceil(a)), float(math.floor(c))
        stop = 2.0
    else:
        stop = max(float(tol), 0.0)

    iterations = 0
    b = c - INVPHI * (c - a)
    d = a + INVPHI * (c - a)
    if integer:
        b, d = float(round(b)), float(round(d))
    while (c - a) > stop and iterations < max_iter:
        iterations += 1
        if integer and b >= d:
            break
        if score(b) >= score(d):
            c = d
        else:
            a = b
        b = c - INVPHI * (c - a)
        d = a + INVPHI * (c - a)
        if integer:
            b, d = float(round(b)), float(round(d))

    if integer:
        candidates = [float(v) for v in range(int(a), int(c) + 1)]
    else:
        candidates = [(a + c) / 2.0]
    # the best point seen anywhere wins, trial points included
    for x in candidates:
        score(x)
    best = max(cache, key=lambda x: (cache[x], -x))

    trace = [(x, sign * v) for x, v in sorted(cache.items())]
    return SearchResult(x=best, value=sign * cache[best], iterations=iterations, trace=trace)
