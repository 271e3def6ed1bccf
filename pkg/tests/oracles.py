"""Independent pure-Python reference computations used by the tests."""

import math


def mean(xs):
    return math.fsum(xs) / len(xs)


def central_moment(xs, k):
    m = mean(xs)
    return math.fsum((x - m) ** k for x in xs) / len(xs)


def channel_features(xs):
    """(mean, variance, max, min, skewness, kurtosis, energy, zcr) by direct loops."""
    n = len(xs)
    m = mean(xs)
    m2 = central_moment(xs, 2)
    m3 = central_moment(xs, 3)
    m4 = central_moment(xs, 4)
    flat = m2 <= (64 * 2.220446049250313e-16 * max(abs(x) for x in xs)) ** 2
    skew = 0.0 if flat else m3 / m2**1.5
    kurt = 0.0 if flat else m4 / m2**2 - 3.0
    energy = math.fsum(x * x for x in xs) / n
    crossings = 0
    for a, b in zip(xs, xs[1:]):
        if (a - m >= 0) != (b - m >= 0):
            crossings += 1
    zcr = 0.0 if flat else crossings / (n - 1)
    return {
        "mean": m,
        "variance": m2,
        "max": max(xs),
        "min": min(xs),
        "skewness": skew,
        "kurtosis": kurt,
        "energy": energy,
        "zcr": zcr,
    }


def sma(ax, ay, az):
    return math.fsum(abs(v) for v in ax + ay + az) / len(ax)


def brute_mean(vectors):
    k = len(vectors[0])
    return [math.fsum(v[i] for v in vectors) / len(vectors) for i in range(k)]


def gini(counts):
    total = sum(counts)
    return 1.0 - sum((c / total) ** 2 for c in counts)


def best_split_exhaustive(rows, labels, n_classes):
    """Lowest weighted gini over every feature and midpoint; ties -> lowest feature, threshold."""
    best = None
    n = len(rows)
    for f in range(len(rows[0])):
        values = sorted(set(r[f] for r in rows))
        for lo, hi in zip(values, values[1:]):
            thr = lo + (hi - lo) / 2.0
            left = [0] * n_classes
            right = [0] * n_classes
            for r, y in zip(rows, labels):
                (left if r[f] <= thr else right)[y] += 1
            nl, nr = sum(left), sum(right)
            imp = (nl * gini(left) + nr * gini(right)) / n
            if best is None or imp < best[0] - 1e-12:
                best = (imp, f, thr)
    return best


def point_segment_distance(p, a, b):
    """Euclidean distance from ``p`` to segment ``ab``."""
    ab = [bi - ai for ai, bi in zip(a, b)]
    ap = [pi - ai for ai, pi in zip(a, p)]
    denom = math.fsum(v * v for v in ab)
    t = 0.0 if denom == 0 else max(0.0, min(1.0, math.fsum(x * y for x, y in zip(ap, ab)) / denom))
    return math.sqrt(math.fsum((pi - (ai + t * d)) ** 2 for pi, ai, d in zip(p, a, ab)))
