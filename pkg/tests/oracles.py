"""Brute-force reference implementations in plain Python.

Nothing here calls into ddcs_eval; sums run left to right so that values can
be compared exactly with the package's canonical distance kernel.
"""

import math


def _seq(terms):
    terms = list(terms)
    s = terms[0]
    for t in terms[1:]:
        s = s + t
    return s


def dist(a, b, metric="euclidean"):
    a = [float(x) for x in a]
    b = [float(x) for x in b]
    if metric == "cosine_distance":
        dot = _seq(x * y for x, y in zip(a, b))
        na = _seq(x * x for x in a)
        nb = _seq(y * y for y in b)
        return min(max(1.0 - dot / math.sqrt(na * nb), 0.0), 2.0)
    sq = _seq((x - y) * (x - y) for x, y in zip(a, b))
    return math.sqrt(sq) if metric == "euclidean" else sq


def full_matrix(rec, tar, metric="euclidean"):
    return [[dist(r, t, metric) for t in tar] for r in rec]


def nearest(rec, tar, metric="euclidean"):
    out = []
    for row in full_matrix(rec, tar, metric):
        best = 0
        for i, d in enumerate(row):
            if d < row[best]:
                best = i
        out.append((best, row[best]))
    return out


def ddcs(rec, tar, c=1.0, metric="euclidean"):
    sets = [[] for _ in tar]
    for i, d in nearest(rec, tar, metric):
        sets[i].append(d)
    avg_total = best_total = 0.0
    for s in sets:
        if s:
            avg_total += 1.0 / (sum(s) / len(s) + c)
            best_total += 1.0 / (min(s) + c)
    n = len(tar)
    return avg_total / n, best_total / n, sum(1 for s in sets if s) / n


def coverage(rec, tar, k, metric="euclidean"):
    covered = 0
    for i, t in enumerate(tar):
        others = sorted(dist(t, u, metric) for j, u in enumerate(tar) if j != i)
        radius = others[k - 1]
        if any(dist(t, r, metric) <= radius for r in rec):
            covered += 1
    return covered / len(tar)


def mean_cov(rows):
    n = len(rows)
    d = len(rows[0])
    mu = [sum(r[j] for r in rows) / n for j in range(d)]
    cov = [[sum((r[a] - mu[a]) * (r[b] - mu[b]) for r in rows) / (n - 1) for b in range(d)] for a in range(d)]
    return mu, cov


def central_diff_grad(f, x, h=1e-6):
    """Gradient of scalar f at array x (any shape) by central differences."""
    import numpy as np

    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_err(a, b):
    import numpy as np

    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))
