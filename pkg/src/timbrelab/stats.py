"""Correlation machinery: Spearman screening, Pearson significance
tests, the descriptor-vs-dimension table, and feature agglomeration.

Two-tailed Pearson p-values use the exact Student-t tail computed via
the regularized incomplete beta function (continued fraction).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

COLLINEARITY_THRESHOLD = 0.8
STAR_LEVELS = ((0.01, "**"), (0.05, "*"))


def average_ranks(values) -> np.ndarray:
    """Ranks 1..n with ties sharing the mean rank."""
    arr = np.asarray(values, dtype=np.float64)
    order = np.argsort(arr, kind="stable")
    ranks = np.empty(len(arr))
    sorted_vals = arr[order]
    i = 0
    while i < len(arr):
        j = i
        while j + 1 < len(arr) and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2 + 1
        i = j + 1
    return ranks


def _pearson_r(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    var_x = (xc ** 2).sum()
    var_y = (yc ** 2).sum()
    if var_x == 0 or var_y == 0:
        raise ConfigurationError("correlation is undefined for constant input")
    return float((xc * yc).sum() / math.sqrt(var_x * var_y))


def spearman(x, y) -> float:
    """Pearson correlation of average-ranked values."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ConfigurationError("inputs must be equal-length vectors")
    if len(x) < 3:
        raise ConfigurationError("need at least 3 observations")
    return _pearson_r(average_ranks(x), average_ranks(y))


def _beta_cont_fraction(a: float, b: float, x: float,
                        tol: float = 1e-15, max_iter: int = 500) -> float:
    """Continued-fraction kernel for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) to ~1e-14 absolute accuracy."""
    if a <= 0 or b <= 0:
        raise ConfigurationError("beta parameters must be positive")
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _beta_cont_fraction(a, b, x) / a
    return 1.0 - front * _beta_cont_fraction(b, a, 1.0 - x) / b


def student_t_two_tailed_p(t: float, df: int) -> float:
    """P(|T_df| >= t) for the Student t distribution."""
    if df < 1:
        raise ConfigurationError("degrees of freedom must be >= 1")
    t = abs(t)
    return regularized_incomplete_beta(df / 2.0, 0.5, df / (df + t * t))


def p_value_for_r(r: float, n: int) -> float:
    """Two-tailed significance of a sample Pearson r at sample size n."""
    if n < 3:
        raise ConfigurationError("need at least 3 observations")
    r = max(-1.0, min(1.0, r))
    if 1.0 - r * r <= 0.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return student_t_two_tailed_p(t, n - 2)


def pearson_test(x, y) -> tuple[float, float]:
    """Sample Pearson r and its two-tailed t-test p-value."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ConfigurationError("inputs must be equal-length vectors")
    if len(x) < 3:
        raise ConfigurationError("need at least 3 observations")
    r = _pearson_r(x, y)
    return r, p_value_for_r(r, len(x))


def stars_for_p(p: float) -> str:
    for threshold, mark in STAR_LEVELS:
        if p < threshold:
            return mark
    return ""


def collinearity_filter(features: dict[str, np.ndarray],
                        threshold: float = COLLINEARITY_THRESHOLD,
                        priority: list[str] | None = None) -> list[str]:
    """Greedy collinearity screen in priority order.

    A feature is kept iff its absolute Spearman correlation with every
    already-kept feature stays at or below the threshold. Priority
    entries naming absent features are ignored, but every present
    feature must appear in the priority list.
    """
    if len(features) < 2:
        raise ConfigurationError("need at least 2 features")
    if priority is None:
        priority = list(features)
    missing = set(features) - set(priority)
    if missing:
        raise ConfigurationError(f"priority list does not cover features: {sorted(missing)}")
    kept: list[str] = []
    for name in priority:
        if name not in features:
            continue
        if all(abs(spearman(features[name], features[k])) <= threshold for k in kept):
            kept.append(name)
    return kept


@dataclass
class CorrelationReport:
    rows: list[str]
    dims: list[int]
    r: np.ndarray       # (features, dims)
    p: np.ndarray
    stars: list[list[str]]


def correlation_table(coords: np.ndarray, features: dict[str, np.ndarray]) -> CorrelationReport:
    """Pearson r (with significance marks) of every descriptor against
    every embedding dimension."""
    coords = np.asarray(coords, dtype=np.float64)
    n, d = coords.shape
    rows = list(features)
    r = np.zeros((len(rows), d))
    p = np.zeros((len(rows), d))
    for i, name in enumerate(rows):
        column = np.asarray(features[name], dtype=np.float64)
        if len(column) != n:
            raise ConfigurationError(f"feature {name!r} has {len(column)} values, expected {n}")
        for j in range(d):
            r[i, j], p[i, j] = pearson_test(column, coords[:, j])
    stars = [[stars_for_p(p[i, j]) for j in range(d)] for i in range(len(rows))]
    return CorrelationReport(rows, list(range(1, d + 1)), r, p, stars)


@dataclass
class Dendrogram:
    """Binary merge tree; leaves carry a name, merges carry their height."""

    height: float
    name: str | None = None
    left: "Dendrogram | None" = None
    right: "Dendrogram | None" = None
    members: tuple[str, ...] = ()

    @property
    def is_leaf(self) -> bool:
        return self.name is not None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"leaf": self.name}
        return {"height": self.height,
                "left": self.left.to_dict(), "right": self.right.to_dict()}

    def merge_heights(self) -> list[float]:
        if self.is_leaf:
            return []
        return self.left.merge_heights() + self.right.merge_heights() + [self.height]


def feature_agglomeration(features: dict[str, np.ndarray]) -> Dendrogram:
    """Average-linkage clustering of features under 1 - |Spearman r|.

    Tie-break between equally distant candidate merges is the
    lexicographic pair of cluster names (a cluster is named after its
    smallest member).
    """
    names = list(features)
    if len(names) < 2:
        raise ConfigurationError("need at least 2 features")
    index = {name: k for k, name in enumerate(names)}
    leaf_dist = np.zeros((len(names), len(names)))
    for i, a in enumerate(names):
        for j in range(i + 1, len(names)):
            dist = 1.0 - abs(spearman(features[a], features[names[j]]))
            leaf_dist[i, j] = leaf_dist[j, i] = dist

    clusters = [Dendrogram(0.0, name=name, members=(name,)) for name in names]
    while len(clusters) > 1:
        best = None
        for i in range(len(clusters)):
            for j in range(i + 1, len(clusters)):
                pair_dists = [leaf_dist[index[a], index[b]]
                              for a in clusters[i].members for b in clusters[j].members]
                avg = sum(pair_dists) / len(pair_dists)
                key = (avg, *sorted((clusters[i].members[0], clusters[j].members[0])))
                if best is None or key < best[0]:
                    best = (key, i, j, avg)
        _, i, j, height = best
        a, b = clusters[i], clusters[j]
        if b.members[0] < a.members[0]:
            a, b = b, a
        merged = Dendrogram(height, left=a, right=b,
                            members=tuple(sorted(a.members + b.members)))
        clusters = [c for k, c in enumerate(clusters) if k not in (i, j)] + [merged]
    return clusters[0]
