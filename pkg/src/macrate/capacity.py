"""Gaussian multiple-access capacity regions as polymatroids.

A region over ``M`` users is the polytope

    { R >= 0 : sum_{i in S} R_i <= f(S) for every nonempty S }

with ``f(S) = C(sum_{i in S} H_i P_i, N0)`` in nats.  Subsets are encoded as
integer bitmasks: bit ``i`` set means user ``i`` (0-based) is in the subset.
Every constraint array in this module is indexed by ``mask - 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np
from numba import njit

from .errors import DomainError, NonConvergenceError

MAX_USERS = 20
FEAS_TOL = 1e-9

# Hyperplane projections below this excess are rounding noise; re-projecting
# them can stall because the correction falls under one ulp.
_SCAN_EPS = 1e-13


def awgn_capacity(power: float, noise: float) -> float:
    """Shannon capacity ``0.5 * ln(1 + power / noise)`` in nats."""
    if not (math.isfinite(power) and math.isfinite(noise)):
        raise DomainError(f"non-finite input: power={power}, noise={noise}")
    if power < 0:
        raise DomainError(f"power must be nonnegative, got {power}")
    if noise <= 0:
        raise DomainError(f"noise must be positive, got {noise}")
    return 0.5 * math.log1p(power / noise)


def subset_mask(users: Iterable[int]) -> int:
    mask = 0
    for i in users:
        mask |= 1 << int(i)
    return mask


def subset_users(mask: int) -> tuple[int, ...]:
    return tuple(i for i in range(mask.bit_length()) if mask >> i & 1)


@lru_cache(maxsize=None)
def subset_incidence(m: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(masks, incidence, sizes)`` for all nonempty subsets of ``m`` users.

    ``incidence[k, i]`` is 1.0 when user ``i`` belongs to subset ``masks[k]``.
    """
    if not 1 <= m <= MAX_USERS:
        raise DomainError(f"user count must lie in [1, {MAX_USERS}], got {m}")
    masks = np.arange(1, 1 << m, dtype=np.int64)
    incidence = ((masks[:, None] >> np.arange(m)) & 1).astype(float)
    sizes = incidence.sum(axis=1)
    for arr in (masks, incidence, sizes):
        arr.setflags(write=False)
    return masks, incidence, sizes


@dataclass(frozen=True)
class PowerProfile:
    """Fixed transmit powers and receiver noise variance (linear scale)."""

    powers: tuple[float, ...]
    noise: float = 1.0

    def __post_init__(self):
        powers = tuple(float(p) for p in self.powers)
        object.__setattr__(self, "powers", powers)
        object.__setattr__(self, "noise", float(self.noise))
        if not powers:
            raise DomainError("at least one user is required")
        if any(not math.isfinite(p) or p <= 0 for p in powers):
            raise DomainError(f"powers must be positive and finite, got {powers}")
        if not math.isfinite(self.noise) or self.noise <= 0:
            raise DomainError(f"noise must be positive, got {self.noise}")

    @property
    def m(self) -> int:
        return len(self.powers)

    @property
    def power_array(self) -> np.ndarray:
        return np.asarray(self.powers, dtype=float)


class SubsetPolytope:
    """Polytope ``{x >= 0 : x(S) <= bounds[S] for all nonempty S}``.

    This is the constraint system shared by capacity regions and their
    expansions.  Instances are immutable.
    """

    def __init__(self, bounds: Sequence[float], m: int | None = None):
        bounds = np.array(bounds, dtype=float)
        if m is None:
            m = int(round(math.log2(bounds.size + 1)))
        masks, incidence, sizes = subset_incidence(m)
        if bounds.shape != masks.shape:
            raise DomainError(
                f"expected {masks.size} subset bounds for {m} users, got {bounds.size}"
            )
        if not np.all(np.isfinite(bounds)):
            raise DomainError("subset bounds must be finite")
        bounds.setflags(write=False)
        self._m = m
        self.masks = masks
        self.incidence = incidence
        self.sizes = sizes
        self.bounds = bounds
        self._members = incidence.astype(np.bool_)

    @property
    def m(self) -> int:
        return self._m

    def bound(self, mask: int) -> float:
        if not 1 <= mask < 1 << self._m:
            raise DomainError(f"subset mask {mask} outside [1, {(1 << self._m) - 1}]")
        return float(self.bounds[mask - 1])

    def excess(self, r) -> np.ndarray:
        """``r(S) - bound(S)`` for every subset, indexed by ``mask - 1``."""
        return self.incidence @ np.asarray(r, dtype=float) - self.bounds

    def violations(self, r, tol: float = 0.0) -> list[tuple[int, float]]:
        """Subsets whose constraint is exceeded by more than ``tol``.

        Sorted by decreasing violation; ties keep increasing mask order.
        """
        if tol < 0:
            raise DomainError(f"tol must be nonnegative, got {tol}")
        excess = self.excess(r)
        hits = np.flatnonzero(excess > tol)
        order = sorted(hits, key=lambda k: (-excess[k], k))
        return [(int(self.masks[k]), float(excess[k])) for k in order]

    def contains(self, r, tol: float = FEAS_TOL) -> bool:
        r = np.asarray(r, dtype=float)
        return bool(r.min() >= -tol and self.excess(r).max() <= tol)

    def expand(self, delta: float) -> "SubsetPolytope":
        """Relax every subset constraint by ``delta`` (orthant unchanged)."""
        if not math.isfinite(delta) or delta < 0:
            raise DomainError(f"expansion must be nonnegative, got {delta}")
        return SubsetPolytope(self.bounds + delta, self._m)

    def dominant_face_vertex(self, order: Sequence[int]) -> np.ndarray:
        """Vertex generated by the chain of prefixes of ``order`` (0-based users)."""
        order = [int(i) for i in order]
        if sorted(order) != list(range(self._m)):
            raise DomainError(f"{order} is not a permutation of users 0..{self._m - 1}")
        r = np.zeros(self._m)
        prefix, prev = 0, 0.0
        for i in order:
            prefix |= 1 << i
            cur = float(self.bounds[prefix - 1])
            r[i] = cur - prev
            prev = cur
        return r

    def approximate_project(self, y, max_steps: int | None = None) -> np.ndarray:
        """Sequential projection onto the hyperplanes of violated constraints.

        The most violated constraint (lowest mask on ties) is projected first
        and the constraint set is re-scanned after every projection.  Once no
        subset constraint is violated, negative coordinates are clamped to zero
        and the scan repeats.  The result is feasible within ``FEAS_TOL`` and no
        farther from any feasible point than ``y`` was.
        """
        x = np.array(y, dtype=float)
        if x.shape != (self._m,):
            raise DomainError(f"expected a point with {self._m} coordinates, got {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DomainError("point must be finite")
        if max_steps is None:
            max_steps = 4 * self.bounds.size + 16
        ok = _approx_project_inplace(x, self._members, self.bounds, self.sizes, max_steps)
        if not ok:
            raise NonConvergenceError(f"approximate projection exceeded {max_steps} steps")
        return x + 0.0  # normalises -0.0

    def _project_unchecked(self, y: np.ndarray) -> np.ndarray:
        # hot path for iterative solvers: y is a fresh float array of length M
        if not _approx_project_inplace(y, self._members, self.bounds, self.sizes, 4 * self.bounds.size + 16):
            raise NonConvergenceError("approximate projection exceeded its step cap")
        return y

    def exact_project(self, y, tol: float = 1e-10, max_cycles: int = 10**6) -> np.ndarray:
        """Euclidean projection by Dykstra's alternating projections.

        Accepts one point or a ``(n, M)`` batch.  Meant as a test oracle for
        small ``M``: each cycle visits all ``2^M - 1`` half-spaces and the
        orthant.
        """
        return dykstra_project(self, y, tol=tol, max_cycles=max_cycles)


class GaussianMacRegion(SubsetPolytope):
    """Instantaneous capacity region for fixed powers and channel gains."""

    def __init__(self, profile: PowerProfile, gains):
        gains = np.array(gains, dtype=float)
        if gains.shape != (profile.m,):
            raise DomainError(
                f"{gains.size} channel gains given for {profile.m} users"
            )
        if not np.all(np.isfinite(gains)) or gains.min() < 0:
            raise DomainError(f"channel gains must be finite and nonnegative: {gains}")
        gains.setflags(write=False)
        self.profile = profile
        self.gains = gains
        _, incidence, _ = subset_incidence(profile.m)
        received = incidence @ (gains * profile.power_array)
        super().__init__(0.5 * np.log1p(received / profile.noise), profile.m)

    def rank(self, mask: int) -> float:
        if mask == 0:
            raise DomainError("rank of the empty subset is not a constraint")
        return self.bound(mask)

    def __repr__(self):
        return f"GaussianMacRegion(gains={self.gains.tolist()}, profile={self.profile})"


def rank(region: SubsetPolytope, users: Iterable[int]) -> float:
    mask = subset_mask(users)
    if mask == 0:
        raise DomainError("subset must be nonempty")
    return region.bound(mask)


def region_distance(a: SubsetPolytope, b: SubsetPolytope) -> float:
    """Smallest uniform relaxation under which each region contains the other.

    For polymatroids sharing the subset normals this is the largest absolute
    difference between corresponding subset bounds.
    """
    if a.m != b.m:
        raise DomainError(f"regions have different user counts ({a.m} vs {b.m})")
    if isinstance(a, GaussianMacRegion) and isinstance(b, GaussianMacRegion):
        if a.profile != b.profile:
            raise DomainError("regions must share a power profile")
    return float(np.max(np.abs(a.bounds - b.bounds)))


def expansion_face_witness(
    region: SubsetPolytope, delta: float, vertex, order: Sequence[int], tol: float = 1e-9
) -> np.ndarray:
    """Map a chain vertex of ``region.expand(delta)`` back onto ``region``'s dominant face.

    The first user of the chain loses ``delta``; every other coordinate is
    kept.  The result is the chain vertex of the original region for the same
    order, exactly ``delta`` away from ``vertex``.
    """
    expected = region.expand(delta).dominant_face_vertex(order)
    vertex = np.asarray(vertex, dtype=float)
    if vertex.shape != expected.shape or np.max(np.abs(vertex - expected)) > tol:
        raise DomainError("point is not the expanded-face vertex of the given chain order")
    witness = vertex.copy()
    witness[int(order[0])] -= delta
    return witness


def dykstra_project(
    system: SubsetPolytope, y, tol: float = 1e-10, max_cycles: int = 10**6
) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    pts = np.atleast_2d(y)
    if pts.shape[1] != system.m:
        raise DomainError(f"expected points with {system.m} coordinates")
    if not np.all(np.isfinite(pts)):
        raise DomainError("points must be finite")
    out = np.empty_like(pts)
    members = system.incidence.astype(np.bool_)
    for n, point in enumerate(pts):
        x, ok = _dykstra_point(point, members, system.bounds, system.sizes, tol, max_cycles)
        if not ok:
            raise NonConvergenceError(
                f"Dykstra projection did not settle within {max_cycles} cycles"
            )
        out[n] = x + 0.0
    return out[0] if single else out


@njit(cache=True)
def _approx_project_inplace(x, members, bounds, sizes, max_steps):
    m = x.size
    n_sets = bounds.size
    for _ in range(max_steps):
        best, best_k = _SCAN_EPS, -1
        for k in range(n_sets):
            s = 0.0
            for i in range(m):
                if members[k, i]:
                    s += x[i]
            e = s - bounds[k]
            if e > best:
                best, best_k = e, k
        if best_k >= 0:
            d = best / sizes[best_k]
            for i in range(m):
                if members[best_k, i]:
                    x[i] -= d
            continue
        clamped = False
        for i in range(m):
            if x[i] < 0.0:
                x[i] = 0.0
                clamped = True
        if not clamped:
            return True
    return False


@njit(cache=True)
def _dykstra_point(y, members, bounds, sizes, tol, max_cycles):
    m = y.size
    n_sets = bounds.size
    x = y.copy()
    prev = np.empty(m)
    # Half-space corrections are multiples of the subset indicator, so one
    # scalar per set suffices; the orthant keeps a full vector.
    shift = np.zeros(n_sets)
    orth = np.zeros(m)
    for _ in range(max_cycles):
        prev[:] = x
        change = 0.0
        for k in range(n_sets):
            s = 0.0
            for i in range(m):
                if members[k, i]:
                    s += x[i]
            z_excess = s + shift[k] * sizes[k] - bounds[k]
            new_shift = z_excess / sizes[k] if z_excess > 0.0 else 0.0
            d = shift[k] - new_shift
            if d != 0.0:
                for i in range(m):
                    if members[k, i]:
                        x[i] += d
                change += d * d * sizes[k]
            shift[k] = new_shift
        for i in range(m):
            z = x[i] + orth[i]
            xi = z if z > 0.0 else 0.0
            d = z - xi - orth[i]
            change += d * d
            orth[i] = z - xi
            x[i] = xi
        for i in range(m):
            change += (x[i] - prev[i]) ** 2
        # The iterate alone can stand still for a whole cycle while the
        # corrections are still moving, so both must settle.
        if np.sqrt(change) < tol:
            return x, True
    return x, False
