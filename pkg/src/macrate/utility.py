"""Concave rate utilities with the constants the tracking bounds consume."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .capacity import awgn_capacity
from .errors import AssumptionError, DomainError

FAMILIES = ("weighted-log", "weighted-linear")


@dataclass(frozen=True)
class UtilityConstants:
    """Subgradient-norm bound ``B`` and quadratic-growth constant ``A``.

    ``A`` is unavailable for the weighted-linear family; reading it raises.
    """

    B: float
    growth: Optional[float] = None

    @property
    def A(self) -> float:
        if self.growth is None:
            raise AssumptionError(
                "utility is not strongly concave: no quadratic-growth constant A exists"
            )
        return self.growth

    @property
    def has_A(self) -> bool:
        return self.growth is not None


@dataclass(frozen=True)
class UtilityModel:
    """``sum w_i ln(1 + r_i)`` (weighted-log) or ``sum w_i r_i`` (weighted-linear).

    ``box`` holds per-user rate ceilings over which ``A`` is certified.  It is
    optional for evaluation and required by :meth:`constants` unless passed
    there explicitly.
    """

    family: str
    weights: tuple[float, ...]
    box: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DomainError(f"unknown utility family {self.family!r}; expected one of {FAMILIES}")
        weights = tuple(float(w) for w in self.weights)
        if not weights or any(not math.isfinite(w) or w <= 0 for w in weights):
            raise DomainError(f"weights must be positive, got {weights}")
        object.__setattr__(self, "weights", weights)
        if self.box is not None:
            object.__setattr__(self, "box", _check_box(self.box, len(weights)))

    @property
    def m(self) -> int:
        return len(self.weights)

    @property
    def w(self) -> np.ndarray:
        return np.asarray(self.weights)

    def value(self, r) -> float:
        r = self._rates(r)
        if self.family == "weighted-log":
            return float(self.w @ np.log1p(r))
        return float(self.w @ r)

    def subgradient(self, r) -> np.ndarray:
        r = self._rates(r)
        if self.family == "weighted-log":
            return self.w / (1.0 + r)
        return self.w.copy()

    def constants(self, box: Sequence[float] | None = None) -> UtilityConstants:
        """Certify ``B`` and ``A`` over ``{0 <= r <= box}``.

        For weighted-log the gradient norm peaks at the origin, so ``B = |w|``.
        The Hessian is diagonal with entries ``-w_i / (1 + r_i)^2``; half its
        smallest magnitude over the box bounds ``u(R*) - u(R)`` below by
        ``A |R* - R|^2`` whenever ``R*`` maximises ``u`` over a convex subset of
        the box, because the first-order term is then nonpositive.
        """
        if box is None:
            box = self.box
        if box is None:
            raise DomainError("a rate box is required to certify utility constants")
        box = np.asarray(_check_box(box, self.m))
        B = float(np.linalg.norm(self.w))
        if self.family == "weighted-linear":
            return UtilityConstants(B=B)
        return UtilityConstants(B=B, growth=float(0.5 * np.min(self.w / (1.0 + box) ** 2)))

    def _rates(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        if r.shape != (self.m,):
            raise DomainError(f"expected {self.m} rates, got shape {r.shape}")
        if r.min() < 0:
            raise DomainError(f"rates must be nonnegative, got {r}")
        return r


def _check_box(box, m: int) -> tuple[float, ...]:
    box = tuple(float(b) for b in box)
    if len(box) != m:
        raise DomainError(f"box has {len(box)} entries for {m} users")
    if any(not math.isfinite(b) or b < 0 for b in box):
        raise DomainError(f"box bounds must be finite and nonnegative, got {box}")
    return box


def singleton_box(profile, h_max: float) -> tuple[float, ...]:
    """Per-user rate ceilings ``C(h_max P_i, N0)`` covering every region with gains <= h_max."""
    return tuple(awgn_capacity(h_max * p, profile.noise) for p in profile.powers)
