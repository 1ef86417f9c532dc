"""Hyperbolic emitter localization from arrival-time differences.

Sign convention, fixed throughout: delta_t = t_ref - t_other and
delta_d = c * delta_t. Flipping it silently mirrors solutions, so every
consumer of RangeDifferenceSet relies on this one.

With three receivers the two hyperbola branches may intersect twice; both
intersections satisfy the measurements exactly, so the solvers return every
minimizer found and callers pick from the candidate list when the primary
estimate's tie-break (closer to the receiver centroid) is not what they want.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Sequence

import numpy as np

from . import _kernels
from .errors import (
    DegenerateDirection,
    DimensionError,
    GeometryDegenerate,
    InsufficientReceivers,
    NoConvergence,
)
from .geometry import DirectionVector, Point, average_direction, direction_unit
from .simulate import ArrivalSet
from .solver import SolveResult, SolverOptions, gauss_newton_raw, order_candidates

__all__ = [
    "RangeDelta",
    "RangeDifferenceSet",
    "arrival_deltas",
    "hyperbolic_residuals",
    "hyperbolic_jacobian",
    "hyperbolic_objective",
    "locate_emitter_2d",
    "locate_emitter_3d",
    "combined_direction",
]

_ANCHOR_GUARD = 1e-9   # evaluation this close to an anchor is nudged along +x
_DEDUP_TOL = 1e-6      # meters between distinct minimizers
_TIE_EPS = 1e-9        # residual norms within this are "tied"
_RUNAWAY_DIAMS = 1e6   # iterates beyond this many triangle diameters are divergent


class RangeDelta(NamedTuple):
    other_index: int
    delta_t: float   # seconds, t_ref - t_other
    delta_d: float   # meters, c * delta_t


@dataclass(frozen=True)
class RangeDifferenceSet:
    """Arrival-time and range differences of every receiver against a reference."""

    reference_index: int
    deltas: tuple[RangeDelta, ...]

    def __post_init__(self):
        object.__setattr__(
            self, "deltas",
            tuple(RangeDelta(int(d[0]), float(d[1]), float(d[2])) for d in self.deltas))
        others = [d.other_index for d in self.deltas]
        if self.reference_index in others:
            raise ValueError("reference receiver cannot appear as 'other'")
        if len(set(others)) != len(others):
            raise ValueError("duplicate receiver in range differences")
        for d in self.deltas:
            if not (math.isfinite(d.delta_t) and math.isfinite(d.delta_d)):
                raise ValueError("non-finite range difference")

    @classmethod
    def from_range_differences(cls, reference_index: int,
                               pairs: Sequence[tuple[int, float]],
                               c: float) -> "RangeDifferenceSet":
        """Build from (other_index, delta_d meters) pairs, deriving delta_t = delta_d / c."""
        return cls(reference_index,
                   tuple(RangeDelta(i, dd / c, dd) for i, dd in pairs))


def arrival_deltas(arrivals: ArrivalSet, emitter_index: int,
                   reference_index: int, c: float) -> RangeDifferenceSet:
    """Differences of arrival times against the reference receiver, for one emitter.

    delta_t = t_ref - t_other; delta_d = c * delta_t. A constant shift of all
    arrival times (e.g. an unknown emission time) cancels exactly.
    """
    n_receivers = arrivals.times.shape[0]
    if n_receivers < 2:
        raise InsufficientReceivers("need at least 2 receivers for arrival differences")
    t = arrivals.times[:, emitter_index]
    t_ref = t[reference_index]
    deltas = []
    for k in range(n_receivers):
        if k == reference_index:
            continue
        dt = t_ref - t[k]
        deltas.append(RangeDelta(k, dt, c * dt))
    return RangeDifferenceSet(reference_index, tuple(deltas))


def _ordered_receivers(receivers: Sequence[Point],
                       rd: RangeDifferenceSet) -> tuple[np.ndarray, np.ndarray, int]:
    """Receiver coordinates with the reference first, plus aligned delta_d array."""
    dim = receivers[0].dim
    if any(p.dim != dim for p in receivers):
        raise DimensionError("receivers must share one dimension")
    n = len(receivers)
    if not (0 <= rd.reference_index < n):
        raise IndexError(f"reference index {rd.reference_index} out of range")
    for d in rd.deltas:
        if not (0 <= d.other_index < n):
            raise IndexError(f"receiver index {d.other_index} out of range")
    rows = [receivers[rd.reference_index].coords]
    rows += [receivers[d.other_index].coords for d in rd.deltas]
    return np.array(rows, dtype=float), np.array([d.delta_d for d in rd.deltas]), dim


def hyperbolic_residuals(receivers: Sequence[Point], rd: RangeDifferenceSet,
                         p: Point) -> np.ndarray:
    """One residual per pair: |p - r_ref| - |p - r_k| - delta_d_k (meters).

    The zero vector means p lies on every hyperbola (2D) / hyperboloid (3D).
    """
    recv, deltas, dim = _ordered_receivers(receivers, rd)
    if p.dim != dim:
        raise DimensionError(f"dimension mismatch: point {p.dim}D, receivers {dim}D")
    x = np.array(p.coords)
    d_ref = float(np.linalg.norm(x - recv[0]))
    return np.array([d_ref - float(np.linalg.norm(x - recv[k + 1])) - deltas[k]
                     for k in range(len(deltas))])


def _unit_rows(x: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """Unit vectors from each anchor toward x, nudging x off coincident anchors."""
    diff = x - anchors
    norms = np.linalg.norm(diff, axis=1)
    if np.any(norms < _ANCHOR_GUARD):
        nudged = x.copy()
        nudged[0] += _ANCHOR_GUARD
        diff = nudged - anchors
        norms = np.linalg.norm(diff, axis=1)
    return diff / norms[:, None]


def hyperbolic_jacobian(receivers: Sequence[Point], rd: RangeDifferenceSet,
                        p: Point) -> np.ndarray:
    """Analytic Jacobian of hyperbolic_residuals w.r.t. the point coordinates.

    Row k is the difference of unit vectors toward p from the reference and
    from receiver k. Points within 1e-9 m of a receiver are nudged along +x
    before differentiation (the unit vector is undefined at an anchor).
    """
    recv, deltas, dim = _ordered_receivers(receivers, rd)
    if p.dim != dim:
        raise DimensionError(f"dimension mismatch: point {p.dim}D, receivers {dim}D")
    units = _unit_rows(np.array(p.coords), recv)
    return np.array([units[0] - units[k + 1] for k in range(len(deltas))])


def hyperbolic_objective(receivers: Sequence[Point],
                         rd: RangeDifferenceSet) -> Callable[[np.ndarray], np.ndarray]:
    """Vectorized sum-of-squared-residuals objective for grid_search oracles.

    The returned callable maps an (N, dim) array of trial points to (N,) values.
    """
    recv, deltas, _dim = _ordered_receivers(receivers, rd)

    def objective(points: np.ndarray) -> np.ndarray:
        return _kernels.sum_sq_tdoa_residuals(points, recv, deltas)

    return objective


def _closures(recv: np.ndarray, deltas: np.ndarray, fixed_z: float | None):
    """Residual/Jacobian callables over the solver's unknown vector.

    With fixed_z set, recv is (m, 3) and the unknowns are (x, y) on that
    plane; otherwise the unknowns match the receiver coordinates directly.
    """
    if fixed_z is None:
        def residual(x: np.ndarray) -> np.ndarray:
            d = np.linalg.norm(x - recv, axis=1)
            return d[0] - d[1:] - deltas

        def jacobian(x: np.ndarray) -> np.ndarray:
            units = _unit_rows(x, recv)
            return units[0] - units[1:]
    else:
        def residual(x: np.ndarray) -> np.ndarray:
            p = np.array([x[0], x[1], fixed_z])
            d = np.linalg.norm(p - recv, axis=1)
            return d[0] - d[1:] - deltas

        def jacobian(x: np.ndarray) -> np.ndarray:
            p = np.array([x[0], x[1], fixed_z])
            units = _unit_rows(p, recv)
            return (units[0] - units[1:])[:, :2]

    return residual, jacobian


def _check_triangle(recv: np.ndarray) -> float:
    """Non-collinearity check; returns the triangle diameter (max pairwise distance)."""
    diffs = [recv[1] - recv[0], recv[2] - recv[0], recv[2] - recv[1]]
    diam = max(float(np.linalg.norm(d)) for d in diffs)
    v1, v2 = diffs[0], diffs[1]
    if recv.shape[1] == 2:
        area2 = abs(float(v1[0] * v2[1] - v1[1] * v2[0]))
    else:
        area2 = float(np.linalg.norm(np.cross(v1, v2)))
    if diam == 0.0 or area2 <= 1e-12 * diam * diam:
        raise GeometryDegenerate("receivers are collinear (or coincident)")
    return diam


def _ring_starts(center: np.ndarray, radius: float, count: int) -> list[np.ndarray]:
    """The centroid plus count-1 starts evenly spaced on a circle around it."""
    starts = [center.copy()]
    n_ring = max(count - 1, 0)
    for k in range(n_ring):
        angle = 2.0 * math.pi * k / n_ring
        offset = np.zeros_like(center)
        offset[0] = radius * math.cos(angle)
        offset[1] = radius * math.sin(angle)
        starts.append(center + offset)
    return starts


def _multistart(residual, jacobian, starts, opts: SolverOptions, runaway: float,
                center: np.ndarray):
    """Run every start, split converged minimizers from the best failed iterate.

    The hyperbolic objective plateaus toward the branch asymptotes, so the
    residual-change criterion can fire on iterates that ran off to enormous
    coordinates; anything beyond the runaway radius is treated as a failed
    run, not a minimizer.
    """
    converged_runs = []
    best_failed = None
    for s in starts:
        x, norm, iters, ok = gauss_newton_raw(residual, jacobian, s, opts)
        if ok and float(np.linalg.norm(x - center)) <= runaway:
            converged_runs.append((x, norm, iters))
        elif best_failed is None or norm < best_failed[1]:
            best_failed = (x, norm, iters)
    return converged_runs, best_failed


def _dedup(runs) -> list[tuple[np.ndarray, float, int]]:
    """Collapse minimizers closer than the dedup tolerance, keeping the best norm."""
    runs = sorted(runs, key=lambda r: (r[1], tuple(r[0])))
    kept: list[tuple[np.ndarray, float, int]] = []
    for x, norm, iters in runs:
        if any(np.linalg.norm(x - kx) < _DEDUP_TOL for kx, *_rest in kept):
            continue
        kept.append((x, norm, iters))
    return kept


def _polish(residual, jacobian, x: np.ndarray,
            max_steps: int = 8) -> tuple[np.ndarray, float]:
    """Drive a converged iterate to the residual floor with pure Newton steps.

    Near-tangent branch crossings leave the default stopping rules satisfied
    while the root is still ~1e-2 m away; a few undamped steps accepted only
    on strict improvement pin it to machine precision.
    """
    r = residual(x)
    f = float(r @ r)
    for _ in range(max_steps):
        J = jacobian(x)
        try:
            step = np.linalg.solve(J.T @ J, -(J.T @ r))
        except np.linalg.LinAlgError:
            break
        if not np.all(np.isfinite(step)):
            break
        x_new = x + step
        r_new = residual(x_new)
        f_new = float(r_new @ r_new)
        if not (np.isfinite(f_new) and f_new < f):
            break
        x, r, f = x_new, r_new, f_new
    return x, math.sqrt(f)


def _far_field_starts(recv: np.ndarray, deltas: np.ndarray, center: np.ndarray,
                      diam: float) -> list[np.ndarray]:
    """Seed starts along directions where the far-field residuals vanish.

    A root far outside the array satisfies (r_k - r_ref) . u ~ delta_k for its
    bearing u, so a dense 1D bearing scan locates candidate directions; the
    ring starts alone routinely miss such distant roots. Uses the first two
    receiver coordinates (the solved plane).
    """
    thetas = np.linspace(0.0, 2.0 * np.pi, 721)[:-1]
    u = np.stack([np.cos(thetas), np.sin(thetas)], axis=1)
    baseline = recv[1:, :2] - recv[0, :2]
    g = u @ baseline.T - deltas
    score = (g * g).sum(axis=1)
    prev = np.roll(score, 1)
    nxt = np.roll(score, -1)
    minima = np.where((score <= prev) & (score < nxt))[0]
    best = minima[np.argsort(score[minima])][:3]
    starts = []
    for idx in best:
        direction = u[idx]
        for radius in (3.0, 10.0, 30.0):
            starts.append(center + radius * diam * direction)
    return starts


def _companion_starts(runs: list[tuple[np.ndarray, float, int]], jacobian,
                      diam: float) -> list[np.ndarray]:
    """Extra starts along the locally flat direction of the best minimizers.

    When the two branches cross near-tangentially their two intersections sit
    close together and share one basin boundary; ring starts then all fall
    into the same root. Stepping off a found root along the smallest-curvature
    direction of J^T J lands past the ridge so the companion gets found too.
    Only meaningful for the square 2-unknown solves.
    """
    best_norm = min(r[1] for r in runs)
    starts = []
    for x_star, norm, _ in runs:
        if norm > best_norm + _DEDUP_TOL:
            continue
        J = jacobian(x_star)
        _w, V = np.linalg.eigh(J.T @ J)
        flat = V[:, 0]
        for scale in (1e-3, 1e-2, 1e-1, 1.0, 10.0):
            step = scale * diam * flat
            starts.append(x_star + step)
            starts.append(x_star - step)
    return starts


def _pick_estimate(cands: list[tuple[Point, float, int]],
                   centroid: np.ndarray) -> tuple[Point, float, int]:
    """Lowest residual norm wins; ties go to the candidate nearest the centroid."""
    best_norm = min(c[1] for c in cands)
    tied = [c for c in cands if c[1] <= best_norm + _TIE_EPS]
    return min(tied, key=lambda c: (float(np.linalg.norm(c[0].array - centroid)),
                                    c[0].x, c[0].y, c[0].z))


def _locate(recv: np.ndarray, deltas: np.ndarray, fixed_z: float | None,
            to_point, start_center: np.ndarray, diam: float,
            centroid3: np.ndarray, opts: SolverOptions,
            flags: frozenset[str]) -> SolveResult:
    residual, jacobian = _closures(recv, deltas, fixed_z)
    starts = _ring_starts(start_center, diam, opts.multistart_count)
    if len(start_center) == 2:
        starts += _far_field_starts(recv, deltas, start_center, diam)
    runaway = _RUNAWAY_DIAMS * diam
    runs, best_failed = _multistart(residual, jacobian, starts, opts, runaway,
                                    start_center)
    if not runs:
        assert best_failed is not None
        x, norm, iters = best_failed
        p = to_point(x)
        best = SolveResult(estimate=p, candidates=((p, norm),), residual_norm=norm,
                           iterations=iters, converged=False, flags=flags)
        raise NoConvergence("no start converged", best=best)
    runs = [(*_polish(residual, jacobian, x), iters) for x, _norm, iters in runs]
    deduped = _dedup(runs)
    if len(start_center) == 2:
        extra = _companion_starts(deduped, jacobian, diam)
        more, _ = _multistart(residual, jacobian, extra, opts, runaway, start_center)
        more = [(*_polish(residual, jacobian, x), iters) for x, _norm, iters in more]
        deduped = _dedup(deduped + more)
    cands = [(to_point(x), norm, iters) for x, norm, iters in deduped]
    estimate, norm, iters = _pick_estimate(cands, centroid3)
    return SolveResult(
        estimate=estimate,
        candidates=order_candidates([(p, n) for p, n, _ in cands]),
        residual_norm=norm,
        iterations=iters,
        converged=True,
        flags=flags,
    )


def locate_emitter_2d(receivers: Sequence[Point], rd: RangeDifferenceSet,
                      opts: SolverOptions | None = None) -> SolveResult:
    """Solve the two-hyperbola system for a 2D emitter position.

    Multi-start damped Gauss-Newton from the receiver centroid plus a ring of
    starts one triangle diameter out; all converged minimizers come back as
    candidates (deduplicated at 1e-6 m), since the two branches may cross at
    two points that both reproduce the measured differences.
    """
    opts = opts or SolverOptions()
    if len(receivers) != 3:
        raise ValueError(f"locate_emitter_2d needs exactly 3 receivers, got {len(receivers)}")
    recv, deltas, dim = _ordered_receivers(receivers, rd)
    if dim != 2:
        raise DimensionError("locate_emitter_2d needs 2D receivers")
    if len(deltas) != 2:
        raise ValueError("need range differences for exactly 2 receiver pairs")
    diam = _check_triangle(recv)
    centroid = recv.mean(axis=0)
    centroid3 = np.array([centroid[0], centroid[1], 0.0])
    return _locate(recv, deltas, None, lambda x: Point.of(x[0], x[1]),
                   centroid, diam, centroid3, opts, frozenset())


def locate_emitter_3d(receivers: Sequence[Point], rd: RangeDifferenceSet,
                      emitter_plane_z: float | None = 0.0,
                      opts: SolverOptions | None = None) -> SolveResult:
    """Minimize the two squared hyperboloid residuals for a 3D emitter.

    Three receivers give two equations; with emitter_plane_z set (default 0,
    the ground-emitter closure) z is pinned and the solve is 2-in-2. With
    None the solve runs over (x, y, z) and the result carries the
    under_determined flag: a 1-parameter family fits the data and only the
    minimizer reached from the starts is returned.
    """
    opts = opts or SolverOptions()
    if len(receivers) != 3:
        raise ValueError(f"locate_emitter_3d needs exactly 3 receivers, got {len(receivers)}")
    recv, deltas, dim = _ordered_receivers(receivers, rd)
    if dim != 3:
        raise DimensionError("locate_emitter_3d needs 3D receivers")
    if len(deltas) != 2:
        raise ValueError("need range differences for exactly 2 receiver pairs")
    diam = _check_triangle(recv)
    centroid = recv.mean(axis=0)
    if emitter_plane_z is None:
        return _locate(recv, deltas, None, lambda x: Point.of(x[0], x[1], x[2]),
                       centroid, diam, centroid, opts, frozenset({"under_determined"}))
    z = float(emitter_plane_z)
    return _locate(recv, deltas, z, lambda x: Point.of(x[0], x[1], z),
                   centroid[:2], diam, centroid, opts, frozenset())


def combined_direction(receivers: Sequence[Point], emitter: Point) -> DirectionVector:
    """Average of the per-receiver unit vectors toward the emitter.

    Exactly the composition of direction_unit and average_direction; the
    result is generally shorter than unit length (renormalize separately if
    a unit heading is needed). Raises DegenerateDirection when the emitter
    coincides with a receiver.
    """
    if not receivers:
        raise DegenerateDirection("no receivers to take directions from")
    return average_direction([direction_unit(r, emitter) for r in receivers])
