"""Non-metric multidimensional scaling (Kruskal stress-1 minimization).

Pipeline per restart: monotone (isotonic) regression of embedded
distances against the dissimilarity order, then a gradient step on
stress-1 with an adaptive step length (halved on stress increase, grown
5% on decrease), recentering after every step. Restart 0 warm-starts
from classical (Torgerson) scaling; the remaining restarts use seeded
random configurations. The best restart wins.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError

STRESS_FLOOR = 1e-10   # stress this small is a perfect fit; stop optimizing
STEP_UNDERFLOW = 1e-14


@dataclass
class MdsConfig:
    dims: int
    max_iters: int = 500
    stress_tol: float = 1e-7      # relative stress improvement below this stops
    restarts: int = 20
    seed: int = 0
    r_squared_mode: str = "dissimilarities"  # or "distances"

    def validate(self, n: int) -> None:
        if not 1 <= self.dims < n:
            raise ConfigurationError(f"dims must satisfy 1 <= dims < n={n}, got {self.dims}")
        if self.restarts < 1:
            raise ConfigurationError("restarts must be >= 1")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if self.r_squared_mode not in ("dissimilarities", "distances"):
            raise ConfigurationError(f"unknown r_squared_mode {self.r_squared_mode!r}")


@dataclass
class MdsSolution:
    coords: np.ndarray            # (n, dims), column means zero
    stress1: float
    r_squared: float
    disparities: np.ndarray = field(repr=False)  # upper-triangle pair order
    iterations_used: int = 0
    restart_index: int = 0


@dataclass
class ScreePoint:
    dims: int
    stress1: float
    r_squared: float


def _as_matrix(D) -> np.ndarray:
    values = D.values if hasattr(D, "values") else D
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ConfigurationError("dissimilarity matrix must be square")
    if not np.allclose(values, values.T, atol=1e-9):
        raise ConfigurationError("dissimilarity matrix must be symmetric")
    if not np.allclose(np.diag(values), 0.0, atol=1e-9):
        raise ConfigurationError("dissimilarity matrix must have a zero diagonal")
    return values


def jacobi_eigh(matrix: np.ndarray, tol: float = 1e-12,
                max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition of a symmetric matrix.

    Sweeps until the off-diagonal Frobenius norm falls below tol.
    Returns eigenvalues in descending order with matching eigenvectors
    as columns.
    """
    a = np.array(matrix, dtype=np.float64)
    n = a.shape[0]
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = math.sqrt(2.0 * (np.triu(a, 1) ** 2).sum())
        if off < tol:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.hypot(theta, 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot_p, rot_q = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * rot_p - s * rot_q
                a[:, q] = s * rot_p + c * rot_q
                rot_p, rot_q = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rot_p - s * rot_q
                a[q, :] = s * rot_p + c * rot_q
                a[p, q] = a[q, p] = 0.0
                rot_p, rot_q = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * rot_p - s * rot_q
                v[:, q] = s * rot_p + c * rot_q
    evals = np.diag(a).copy()
    order = np.argsort(evals)[::-1]
    return evals[order], v[:, order]


def classical_mds(D, dims: int) -> np.ndarray:
    """Torgerson scaling: double-center the squared dissimilarities and embed."""
    values = _as_matrix(D)
    n = values.shape[0]
    if dims >= n:
        raise ConfigurationError(f"dims must be < n={n}, got {dims}")
    centering = np.eye(n) - np.ones((n, n)) / n
    b = -0.5 * centering @ (values ** 2) @ centering
    evals, evecs = jacobi_eigh(b)
    scale = np.sqrt(np.maximum(evals[:dims], 0.0))
    return evecs[:, :dims] * scale


def _pav_kernel(y: np.ndarray) -> np.ndarray:
    """Least-squares non-decreasing fit by pool-adjacent-violators."""
    n = y.shape[0]
    means = np.empty(n)
    counts = np.empty(n, dtype=np.int64)
    top = 0
    for i in range(n):
        means[top] = y[i]
        counts[top] = 1
        top += 1
        while top > 1 and means[top - 2] > means[top - 1]:
            c1 = counts[top - 2]
            c2 = counts[top - 1]
            means[top - 2] = (means[top - 2] * c1 + means[top - 1] * c2) / (c1 + c2)
            counts[top - 2] = c1 + c2
            top -= 1
    out = np.empty(n)
    pos = 0
    for block in range(top):
        for _ in range(counts[block]):
            out[pos] = means[block]
            pos += 1
    return out


try:  # jit keeps the hot loop fast; plain Python is the functional fallback
    from numba import njit
    _pav = njit(cache=True)(_pav_kernel)
except ImportError:  # pragma: no cover
    _pav = _pav_kernel


def isotonic_fit(dissims, distances) -> np.ndarray:
    """Monotone regression of distances onto the dissimilarity order.

    Ties in the dissimilarities follow Kruskal's primary approach: within
    a tie block the current distances are sorted ascending, so the block
    imposes no constraint of its own.
    """
    x = np.asarray(dissims, dtype=np.float64)
    y = np.asarray(distances, dtype=np.float64)
    if x.size == 0:
        raise ConfigurationError("isotonic_fit needs at least one pair")
    if x.shape != y.shape:
        raise ConfigurationError("dissimilarities and distances must have equal length")
    order = np.lexsort((y, x))
    fitted = _pav(y[order])
    out = np.empty_like(y)
    out[order] = fitted
    return out


def stress1(distances, disparities) -> float:
    d = np.asarray(distances, dtype=np.float64)
    dhat = np.asarray(disparities, dtype=np.float64)
    if d.shape != dhat.shape:
        raise ConfigurationError("distances and disparities must have equal length")
    denom = (d ** 2).sum()
    if denom == 0:
        raise ConfigurationError("stress-1 undefined: all distances are zero")
    return math.sqrt(((d - dhat) ** 2).sum() / denom)


class _StressProblem:
    """Condensed-pair stress evaluation with precomputed tie structure."""

    def __init__(self, values: np.ndarray):
        n = values.shape[0]
        self.ia, self.ib = np.triu_indices(n, 1)
        self.dissims = values[self.ia, self.ib]
        self.order = np.argsort(self.dissims, kind="stable")
        sorted_dissims = self.dissims[self.order]
        boundaries = np.flatnonzero(np.diff(sorted_dissims) != 0) + 1
        self.blocks = [b for b in np.split(np.arange(len(self.order)), boundaries)
                       if len(b) > 1]

    def distances(self, coords: np.ndarray) -> np.ndarray:
        diff = coords[self.ia] - coords[self.ib]
        return np.sqrt((diff ** 2).sum(axis=1))

    def disparities(self, dist: np.ndarray) -> np.ndarray:
        order = self.order
        if self.blocks:
            order = order.copy()
            for block in self.blocks:
                segment = order[block]
                order[block] = segment[np.argsort(dist[segment], kind="stable")]
        fitted = _pav(dist[order])
        out = np.empty_like(dist)
        out[order] = fitted
        return out

    def evaluate(self, coords: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
        dist = self.distances(coords)
        denom = (dist ** 2).sum()
        if denom == 0:
            return dist, np.zeros_like(dist), math.inf
        disp = self.disparities(dist)
        return dist, disp, math.sqrt(((dist - disp) ** 2).sum() / denom)

    def gradient(self, coords, dist, disp, stress) -> np.ndarray:
        """d(stress-1)/d(coords) at fixed disparities."""
        num = ((dist - disp) ** 2).sum()
        den = (dist ** 2).sum()
        with np.errstate(divide="ignore", invalid="ignore"):
            dsd = ((dist - disp) - (num / den) * dist) / (stress * den)
            w = np.where(dist > 0, dsd / dist, 0.0)
        n = coords.shape[0]
        weights = np.zeros((n, n))
        weights[self.ia, self.ib] = w
        weights += weights.T
        return weights.sum(axis=1)[:, None] * coords - weights @ coords


def fit_single(D, initial_coords: np.ndarray, cfg: MdsConfig,
               trace: list[float] | None = None) -> tuple[np.ndarray, float, np.ndarray, int]:
    """One descent from a given configuration; returns (coords, stress, disparities, iters)."""
    values = _as_matrix(D)
    problem = _StressProblem(values)
    coords = np.asarray(initial_coords, dtype=np.float64).copy()
    coords -= coords.mean(axis=0)
    dist, disp, stress = problem.evaluate(coords)
    if trace is not None:
        trace.append(stress)
    step = 0.2 * float(dist.mean()) if dist.mean() > 0 else 1.0
    iterations = 0
    while iterations < cfg.max_iters and stress > STRESS_FLOOR and math.isfinite(stress):
        grad = problem.gradient(coords, dist, disp, stress)
        grad_norm = float(np.sqrt((grad ** 2).sum()))
        if grad_norm == 0:
            break
        direction = grad / grad_norm
        while True:
            candidate = coords - step * direction
            candidate -= candidate.mean(axis=0)
            c_dist, c_disp, c_stress = problem.evaluate(candidate)
            if c_stress <= stress:
                break
            step *= 0.5
            if step < STEP_UNDERFLOW:
                break
        if step < STEP_UNDERFLOW:
            break
        improvement = (stress - c_stress) / stress if stress > 0 else 0.0
        coords, dist, disp, stress = candidate, c_dist, c_disp, c_stress
        iterations += 1
        step *= 1.05
        if trace is not None:
            trace.append(stress)
        if improvement < cfg.stress_tol:
            break
    return coords, stress, disp, iterations


def _pearson_r(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt((xc ** 2).sum() * (yc ** 2).sum())
    if denom == 0:
        return 0.0
    return max(-1.0, min(1.0, float((xc * yc).sum() / denom)))


def nmds_fit(D, cfg: MdsConfig) -> MdsSolution:
    """Best-of-restarts Kruskal scaling of a dissimilarity matrix."""
    values = _as_matrix(D)
    n = values.shape[0]
    cfg.validate(n)
    problem_dissims = values[np.triu_indices(n, 1)]
    if np.all(problem_dissims == 0):
        raise ConfigurationError("degenerate dissimilarity matrix: all pairs are zero")
    rng = np.random.default_rng(cfg.seed)
    best: tuple[np.ndarray, float, np.ndarray, int, int] | None = None
    for restart in range(cfg.restarts):
        if restart == 0:
            init = classical_mds(values, cfg.dims)
        else:
            init = rng.standard_normal((n, cfg.dims))
        coords, stress, disp, iters = fit_single(values, init, cfg)
        if best is None or stress < best[1]:
            best = (coords, stress, disp, iters, restart)
    coords, stress, disp, iters, restart = best
    if cfg.r_squared_mode == "dissimilarities":
        r = _pearson_r(problem_dissims, disp)
    else:
        problem = _StressProblem(values)
        r = _pearson_r(disp, problem.distances(coords))
    return MdsSolution(coords=coords, stress1=stress, r_squared=r * r,
                       disparities=disp, iterations_used=iters, restart_index=restart)


def scree(D, max_dims: int, cfg: MdsConfig) -> list[ScreePoint]:
    """nmds_fit at every dimensionality 1..max_dims."""
    values = _as_matrix(D)
    if max_dims >= values.shape[0]:
        raise ConfigurationError("max_dims must be < n")
    points = []
    for dims in range(1, max_dims + 1):
        solution = nmds_fit(values, replace(cfg, dims=dims))
        points.append(ScreePoint(dims, solution.stress1, solution.r_squared))
    return points


def procrustes_align(target: np.ndarray, moving: np.ndarray) -> tuple[np.ndarray, float]:
    """Optimal translation + orthogonal transform + isotropic scale of
    `moving` onto `target`; returns the aligned copy and the residual
    normalized by the centered Frobenius norm of the target."""
    x = np.asarray(target, dtype=np.float64)
    y = np.asarray(moving, dtype=np.float64)
    if x.shape != y.shape:
        raise ConfigurationError("configurations must have matching shapes")
    if x.shape[0] < 2:
        raise ConfigurationError("need at least 2 points")
    mu_x = x.mean(axis=0)
    mu_y = y.mean(axis=0)
    xc = x - mu_x
    yc = y - mu_y
    u, sv, vt = np.linalg.svd(yc.T @ xc)
    rotation = u @ vt
    norm_y2 = (yc ** 2).sum()
    scale = sv.sum() / norm_y2 if norm_y2 > 0 else 0.0
    mapped = scale * (yc @ rotation)
    aligned = mapped + mu_x
    norm_x = math.sqrt((xc ** 2).sum())
    residual = math.sqrt(((xc - mapped) ** 2).sum()) / norm_x if norm_x > 0 else 0.0
    return aligned, residual
