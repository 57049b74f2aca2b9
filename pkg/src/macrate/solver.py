"""Gradient projection with approximate projection, and greedy-policy oracles."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Optional, Sequence

import numpy as np

from numba import njit

from .capacity import FEAS_TOL, SubsetPolytope, _approx_project_inplace, subset_mask
from .errors import DomainError, NonConvergenceError
from .utility import UtilityModel

log = logging.getLogger(__name__)

ORACLE_WINDOW = 200
ORACLE_MAX_ITER = 10**6
ORACLE_TOL = 1e-6
# initial stepsize as a fraction of f(full set) / |w|; larger values make the
# early iterates overshoot long enough to trip the window rule prematurely
ORACLE_STEP_SCALE = 0.2


@dataclass(frozen=True)
class StepsizeRule:
    """Constant ``alpha0`` or diminishing ``alpha0 / sqrt(j + 1)``."""

    kind: str
    alpha0: float

    def __post_init__(self):
        if self.kind not in ("constant", "diminishing"):
            raise DomainError(f"unknown stepsize kind {self.kind!r}")
        if not (math.isfinite(self.alpha0) and self.alpha0 > 0):
            raise DomainError(f"alpha0 must be positive, got {self.alpha0}")

    def __call__(self, j: int) -> float:
        if self.kind == "constant":
            return self.alpha0
        return self.alpha0 / math.sqrt(j + 1)


@dataclass
class SolveReport:
    best: np.ndarray
    best_value: float
    iterations: int
    best_index: int = 0
    trail: Optional[list] = field(default=None, repr=False)
    start: Optional[np.ndarray] = field(default=None, repr=False)


def gp_step(region: SubsetPolytope, u: UtilityModel, r, alpha: float) -> np.ndarray:
    """One iteration ``P~(r + alpha * g)`` with ``g`` a subgradient of ``u`` at ``r``."""
    if not alpha >= 0:
        raise DomainError(f"stepsize must be nonnegative, got {alpha}")
    r = np.asarray(r, dtype=float)
    if not region.contains(r, FEAS_TOL):
        raise DomainError("gradient step must start from a feasible rate vector")
    return region.approximate_project(np.maximum(r, 0.0) + alpha * u.subgradient(np.maximum(r, 0.0)))


def linear_greedy(region: SubsetPolytope, weights: Sequence[float]) -> np.ndarray:
    """Maximise ``w . R`` over a polymatroid: chain vertex by decreasing weight."""
    w = np.asarray(weights, dtype=float)
    if w.shape != (region.m,) or w.min() < 0:
        raise DomainError(f"weights must be {region.m} nonnegative numbers")
    # stable sort on -w keeps index order among ties
    order = np.argsort(-w, kind="stable")
    return region.dominant_face_vertex(order)


def greedy_oracle(
    region: SubsetPolytope,
    u: UtilityModel,
    tol: float = ORACLE_TOL,
    alpha0: float | None = None,
    window: int = ORACLE_WINDOW,
    max_iter: int = ORACLE_MAX_ITER,
) -> SolveReport:
    """Utility maximiser over ``region`` used as the greedy-policy reference.

    Weighted-log: gradient projection from the origin with stepsizes
    ``alpha0 / sqrt(j + 1)``, keeping the best iterate, until the best value
    gains less than ``tol`` over ``window`` iterations.  Weighted-linear: the
    polymatroid greedy vertex.
    """
    if u.m != region.m:
        raise DomainError("utility and region disagree on the number of users")
    if u.family == "weighted-linear":
        best = linear_greedy(region, u.weights)
        return SolveReport(best=best, best_value=u.value(best), iterations=0)
    if not tol > 0:
        raise DomainError(f"tol must be positive, got {tol}")
    w = u.w
    if alpha0 is None:
        alpha0 = ORACLE_STEP_SCALE * max(float(region.bounds[-1]), 1e-12) / float(np.linalg.norm(w))
    rule = StepsizeRule("diminishing", alpha0)
    project = region._project_unchecked
    r = np.zeros(region.m)
    best, best_value, best_index = r.copy(), 0.0, 0
    history = np.empty(max_iter + 1)
    history[0] = best_value
    for j in range(max_iter):
        r = project(r + rule(j) * (w / (1.0 + r)))
        value = float(w @ np.log1p(r))
        if value > best_value:
            best, best_value, best_index = r, value, j + 1
        history[j + 1] = best_value
        if j + 1 >= window and best_value - history[j + 1 - window] < tol:
            return SolveReport(best=best, best_value=best_value, iterations=j + 1, best_index=best_index)
    raise NonConvergenceError(f"greedy oracle did not settle within {max_iter} iterations")


def nb_block(
    region: SubsetPolytope,
    u: UtilityModel,
    r0,
    alpha: float,
    k: int,
    keep_trail: bool = False,
) -> SolveReport:
    """Run ``k`` constant-stepsize iterations and keep the best visited iterate.

    The starting point is first projected onto ``region``; it counts as
    iterate 0 and takes part in the argmax (earliest iterate wins ties).
    """
    if k < 0:
        raise DomainError(f"iteration count must be nonnegative, got {k}")
    if not alpha > 0:
        raise DomainError(f"stepsize must be positive, got {alpha}")
    start = region.approximate_project(r0)
    trail = np.empty((k + 1, region.m)) if keep_trail else np.empty((0, region.m))
    best, best_value, best_index, ok = _block_kernel(
        start, u.w, u.family == "weighted-log", float(alpha), int(k),
        region._members, region.bounds, region.sizes, 4 * region.bounds.size + 16, trail,
    )
    if not ok:
        raise NonConvergenceError("approximate projection exceeded its step cap")
    return SolveReport(
        best=best + 0.0, best_value=float(best_value), iterations=k, best_index=int(best_index),
        trail=list(trail) if keep_trail else None, start=start,
    )


@njit(cache=True)
def _utility(r, w, log_family):
    s = 0.0
    for i in range(r.size):
        s += w[i] * (math.log1p(r[i]) if log_family else r[i])
    return s


@njit(cache=True)
def _block_kernel(start, w, log_family, alpha, k, members, bounds, sizes, max_steps, trail):
    m = start.size
    r = start.copy()
    best = start.copy()
    best_value = _utility(start, w, log_family)
    best_index = 0
    keep = trail.shape[0] > 0
    if keep:
        trail[0] = start
    for j in range(k):
        for i in range(m):
            r[i] += alpha * (w[i] / (1.0 + r[i]) if log_family else w[i])
        if not _approx_project_inplace(r, members, bounds, sizes, max_steps):
            return best, best_value, best_index, False
        value = _utility(r, w, log_family)
        # strict comparison: the earliest iterate wins ties
        if value > best_value:
            best[:] = r
            best_value = value
            best_index = j + 1
        if keep:
            trail[j + 1] = r
    return best, best_value, best_index, True


def decomposition_greedy(region: SubsetPolytope, u: UtilityModel) -> np.ndarray:
    """Exact maximiser of a separable utility over a polymatroid.

    Decomposition algorithm: solve on the full-set hyperplane, find the
    largest subset whose constraint that solution violates most, then recurse
    on the restriction to that subset and on the contraction by it.
    Enumerates subsets, so intended for small ``M``.
    """
    if u.family == "weighted-linear":
        return linear_greedy(region, u.weights)
    w = u.w
    x = np.zeros(region.m)

    def f(mask: int) -> float:
        return 0.0 if mask == 0 else float(region.bounds[mask - 1])

    def solve(users: tuple[int, ...], contracted: int) -> None:
        base = f(contracted)
        ground = subset_mask(users) | contracted
        total = f(ground) - base
        wsum = float(w[list(users)].sum())
        trial = {i: w[i] * (total + len(users)) / wsum - 1.0 for i in users}
        worst, worst_set = -1e-14, None
        for size in range(len(users) - 1, 0, -1):
            for subset in combinations(users, size):
                gap = f(subset_mask(subset) | contracted) - base - sum(trial[i] for i in subset)
                if gap < worst - 1e-15:
                    worst, worst_set = gap, subset
        if worst_set is None:
            for i in users:
                x[i] = trial[i]
            return
        rest = tuple(i for i in users if i not in worst_set)
        solve(worst_set, contracted)
        solve(rest, contracted | subset_mask(worst_set))

    solve(tuple(range(region.m)), 0)
    return np.maximum(x, 0.0)
