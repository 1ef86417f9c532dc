"""Shared nonlinear least-squares machinery and brute-force verification oracles.

The iterative solver is a damped Gauss-Newton (Levenberg-style) loop: every
iteration first attempts the pure Gauss-Newton step, and only when that step
is rejected or the normal equations are singular does it fall back to a
damping ladder (damping multiplied by 10 on rejected steps, divided by 10 on
accepted ones). Accepted squared-residual norms never increase.

grid_search is the independent oracle: an exhaustive lattice scan with a
deterministic lexicographic tie-break. It never shares the iterative path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import BudgetExceeded, NoConvergence, ValidationError
from .geometry import Point

__all__ = [
    "SolverOptions",
    "SolveResult",
    "gauss_newton",
    "finite_difference_jacobian",
    "grid_search",
]

_DAMPING_MAX = 1e15
_DAMPING_MIN = 1e-15
_GRID_CHUNK = 1 << 18


@dataclass(frozen=True)
class SolverOptions:
    """Tunables for the damped Gauss-Newton loop and multi-start drivers."""

    max_iterations: int = 100
    step_tolerance: float = 1e-10       # meters
    residual_tolerance: float = 1e-12   # change in squared residual, meters^2
    damping_initial: float = 1e-3
    multistart_count: int = 9

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be >= 1", field="max_iterations")
        for name in ("step_tolerance", "residual_tolerance", "damping_initial"):
            if not getattr(self, name) > 0.0:
                raise ValidationError(f"{name} must be positive", field=name)
        if self.multistart_count < 1:
            raise ValidationError("multistart_count must be >= 1", field="multistart_count")


@dataclass(frozen=True)
class SolveResult:
    """Outcome of a solve: primary estimate plus every candidate found.

    candidates are (point, residual_norm) pairs sorted ascending by residual
    norm, then lexicographically by coordinates. The estimate always carries
    the minimal residual norm among them (ties may be broken by op-specific
    conventions, e.g. proximity to the receiver centroid).
    """

    estimate: Point
    candidates: tuple[tuple[Point, float], ...]
    residual_norm: float
    iterations: int
    converged: bool
    flags: frozenset[str] = frozenset()


def order_candidates(cands: Sequence[tuple[Point, float]]) -> tuple[tuple[Point, float], ...]:
    """Sort candidates by residual norm, then lexicographically by coordinates."""
    return tuple(sorted(cands, key=lambda c: (c[1], c[0].x, c[0].y, c[0].z)))


def _solve_step(JtJ: np.ndarray, g: np.ndarray, lam: float) -> np.ndarray | None:
    A = JtJ if lam == 0.0 else JtJ + lam * np.eye(JtJ.shape[0])
    try:
        step = np.linalg.solve(A, -g)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(step)):
        return None
    return step


def gauss_newton_raw(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    jacobian_fn: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    opts: SolverOptions | None = None,
) -> tuple[np.ndarray, float, int, bool]:
    """Array-level damped Gauss-Newton. Returns (x, residual_norm, iterations, converged).

    Never raises on non-convergence; the returned x is the best accepted
    iterate (the accepted objective is monotone non-increasing, so the last
    accepted iterate is the best).
    """
    opts = opts or SolverOptions()
    x = np.asarray(x0, dtype=float).copy()
    r = np.asarray(residual_fn(x), dtype=float)
    f = float(r @ r)
    lam_memory = opts.damping_initial
    iterations = 0
    converged = False

    for iterations in range(1, opts.max_iterations + 1):
        J = np.asarray(jacobian_fn(x), dtype=float)
        g = J.T @ r
        JtJ = J.T @ J

        # Pure Gauss-Newton first; damping ladder only if it fails.
        accepted = False
        lam = 0.0
        while True:
            step = _solve_step(JtJ, g, lam)
            if step is not None:
                x_new = x + step
                r_new = np.asarray(residual_fn(x_new), dtype=float)
                f_new = float(r_new @ r_new)
                if np.isfinite(f_new) and f_new <= f:
                    accepted = True
                    break
            lam = lam_memory if lam == 0.0 else lam * 10.0
            if lam > _DAMPING_MAX:
                break
        if not accepted:
            break
        lam_memory = max((lam_memory if lam == 0.0 else lam) / 10.0, _DAMPING_MIN)

        step_norm = float(np.linalg.norm(step))
        improvement = f - f_new
        x, r, f = x_new, r_new, f_new
        if step_norm < opts.step_tolerance or improvement < opts.residual_tolerance:
            converged = True
            break

    return x, math.sqrt(f), iterations, converged


def _as_vector(init) -> np.ndarray:
    if isinstance(init, Point):
        return np.array(init.coords, dtype=float)
    return np.asarray(init, dtype=float).ravel()


def gauss_newton(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    jacobian_fn: Callable[[np.ndarray], np.ndarray],
    init,
    opts: SolverOptions | None = None,
) -> SolveResult:
    """Minimize the squared residual norm from a single starting point.

    residual_fn and jacobian_fn take a coordinate vector of length 2 or 3
    (the solved dimension) and return the residual vector / its Jacobian.
    init may be a Point or an array. Raises NoConvergence (with the best
    iterate attached) when the iteration budget runs out.
    """
    x0 = _as_vector(init)
    x, norm, iterations, converged = gauss_newton_raw(residual_fn, jacobian_fn, x0, opts)
    estimate = Point.from_array(x, dim=len(x))
    result = SolveResult(
        estimate=estimate,
        candidates=((estimate, norm),),
        residual_norm=norm,
        iterations=iterations,
        converged=converged,
    )
    if not converged:
        raise NoConvergence(
            f"no convergence after {iterations} iterations (residual norm {norm:.3e})",
            best=result,
        )
    return result


def finite_difference_jacobian(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    q,
    h: float,
) -> np.ndarray:
    """Central-difference Jacobian: entry (i, k) = (r_i(q + h e_k) - r_i(q - h e_k)) / 2h."""
    if not h > 0.0:
        raise ValueError("step h must be positive")
    x = _as_vector(q)
    n = len(x)
    base = np.asarray(residual_fn(x), dtype=float)
    J = np.empty((base.size, n))
    for k in range(n):
        e = np.zeros(n)
        e[k] = h
        hi = np.asarray(residual_fn(x + e), dtype=float)
        lo = np.asarray(residual_fn(x - e), dtype=float)
        J[:, k] = (hi - lo) / (2.0 * h)
    return J


def grid_search(
    objective: Callable[[np.ndarray], np.ndarray],
    bounds: Sequence[tuple[float, float]],
    resolution: float,
    node_budget: int = 50_000_000,
) -> tuple[Point, float]:
    """Exhaustive lattice minimization; the independent brute-force oracle.

    objective receives an (N, dim) array of lattice nodes and must return the
    (N,) objective values. The lattice spans each (lo, hi) bound at the given
    resolution, nodes at lo + k * resolution. Ties go to the lexicographically
    smallest node. Raises BudgetExceeded when the lattice is larger than
    node_budget nodes.
    """
    if not resolution > 0.0:
        raise ValueError("resolution must be positive")
    if not bounds:
        raise ValueError("bounds must be non-empty")
    dim = len(bounds)
    if dim not in (2, 3):
        raise ValueError(f"bounds must cover 2 or 3 dimensions, got {dim}")

    los = np.array([float(lo) for lo, _ in bounds])
    his = np.array([float(hi) for _, hi in bounds])
    if np.any(his < los):
        raise ValueError("each bound needs lo <= hi")
    counts = (np.floor((his - los) / resolution + 1e-9) + 1).astype(np.int64)
    total = int(np.prod(counts))
    if total > node_budget:
        raise BudgetExceeded(f"lattice has {total} nodes, budget is {node_budget}")

    best_val = math.inf
    best_node: np.ndarray | None = None
    strides = np.ones(dim, dtype=np.int64)
    for k in range(dim - 2, -1, -1):
        strides[k] = strides[k + 1] * counts[k + 1]

    for start in range(0, total, _GRID_CHUNK):
        idx = np.arange(start, min(start + _GRID_CHUNK, total), dtype=np.int64)
        points = np.empty((idx.size, dim))
        rem = idx
        for k in range(dim):
            points[:, k] = los[k] + (rem // strides[k]) * resolution
            rem = rem % strides[k]
        values = np.asarray(objective(points), dtype=float)
        pos = int(np.argmin(values))  # first occurrence: lexicographic within chunk
        if values[pos] < best_val:    # strict: earlier chunks win ties
            best_val = float(values[pos])
            best_node = points[pos].copy()

    assert best_node is not None
    return Point.from_array(best_node, dim=dim), best_val
