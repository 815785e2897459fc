"""Brute-force reference implementations, written without numpy."""

import math


def quantile(sorted_values, q):
    pos = q * (len(sorted_values) - 1)
    lo = math.floor(pos)
    hi = min(lo + 1, len(sorted_values) - 1)
    frac = pos - lo
    return sorted_values[lo] + (sorted_values[hi] - sorted_values[lo]) * frac


def stats(values):
    v = [float(x) for x in values]
    n = len(v)
    s = sorted(v)
    mean = math.fsum(v) / n
    return {
        "mean": mean,
        "median": quantile(s, 0.5),
        "std": math.sqrt(math.fsum((x - mean) ** 2 for x in v) / n),
        "max": s[-1],
        "min": s[0],
        "iqr": quantile(s, 0.75) - quantile(s, 0.25),
        "rms": math.sqrt(math.fsum(x * x for x in v) / n),
    }


def pearson(x, y):
    n = len(x)
    mx = math.fsum(x) / n
    my = math.fsum(y) / n
    sxy = math.fsum((a - mx) * (b - my) for a, b in zip(x, y))
    sxx = math.fsum((a - mx) ** 2 for a in x)
    syy = math.fsum((b - my) ** 2 for b in y)
    return sxy / math.sqrt(sxx * syy)


def rel_close(a, b, rel, scale=0.0):
    return abs(a - b) <= rel * max(abs(a), abs(b), scale)
