"""Bounded, ergodic fading traces and the region-step bounds they induce.

Each user's gain follows a reflected random walk on ``[h_min, h_max]`` with
i.i.d. signed increments no larger than ``v_hat[i]``.  The per-slot
region-distance bound is

    W_n = sum_i |H_i(n+1) - H_i(n)| * P_i / (2 * N0)
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from numba import njit

from .capacity import GaussianMacRegion, PowerProfile, region_distance
from .errors import ConfigError

STEP_LAWS = ("uniform", "scaled-beta")


@dataclass(frozen=True)
class FadingConfig:
    """Fading process parameters.

    ``v_hat`` may be a scalar (shared by all users) or one value per user.
    The scaled-beta law draws ``|step| = v_hat * Beta(beta_a, beta_b)`` with a
    fair random sign.
    """

    m: int
    h_min: float
    h_max: float
    v_hat: tuple[float, ...]
    horizon: int
    seed: int = 0
    law: str = "uniform"
    beta_a: float = 1.0
    beta_b: float = 1.0
    h0: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        if not isinstance(self.m, int) or self.m < 1:
            raise ConfigError(f"user count must be a positive integer, got {self.m!r}")
        v_hat = self.v_hat
        if np.ndim(v_hat) == 0:
            v_hat = (v_hat,) * self.m
        v_hat = tuple(float(v) for v in v_hat)
        object.__setattr__(self, "v_hat", v_hat)
        if len(v_hat) != self.m:
            raise ConfigError(f"v_hat has {len(v_hat)} entries for {self.m} users")
        if not (math.isfinite(self.h_min) and math.isfinite(self.h_max)):
            raise ConfigError("gain bounds must be finite")
        if not 0 <= self.h_min < self.h_max:
            raise ConfigError(f"need 0 <= h_min < h_max, got [{self.h_min}, {self.h_max}]")
        for v in v_hat:
            if not math.isfinite(v) or v < 0 or v > self.h_max - self.h_min:
                raise ConfigError(f"each v_hat must lie in [0, h_max - h_min], got {v}")
        if not isinstance(self.horizon, int) or self.horizon < 1:
            raise ConfigError(f"horizon must be a positive integer, got {self.horizon!r}")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ConfigError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")
        if self.law not in STEP_LAWS:
            raise ConfigError(f"unknown step law {self.law!r}; expected one of {STEP_LAWS}")
        if self.law == "scaled-beta" and not (self.beta_a > 0 and self.beta_b > 0):
            raise ConfigError("scaled-beta parameters must be positive")
        if self.h0 is not None:
            h0 = tuple(float(h) for h in self.h0)
            if len(h0) != self.m or any(not self.h_min <= h <= self.h_max for h in h0):
                raise ConfigError(f"h0 must hold {self.m} gains within [h_min, h_max]")
            object.__setattr__(self, "h0", h0)

    def mean_abs_step(self) -> np.ndarray:
        """Expected ``|step|`` per user under the step law (before reflection)."""
        v = np.asarray(self.v_hat)
        if self.law == "uniform":
            return v / 2.0
        return v * self.beta_a / (self.beta_a + self.beta_b)


@dataclass(frozen=True)
class SpeedStats:
    w_bar: float
    w_hat: float
    w_bar_analytic: float


@dataclass
class ChannelTrace:
    states: np.ndarray  # (N, M) gains per slot
    profile: PowerProfile
    step_speeds: np.ndarray = field(init=False)  # (N - 1, M)
    w: np.ndarray = field(init=False)  # (N - 1,)

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float)
        self.step_speeds = np.abs(np.diff(self.states, axis=0))
        self.w = w_series(self.step_speeds, self.profile)

    @property
    def horizon(self) -> int:
        return self.states.shape[0]

    def region(self, n: int) -> GaussianMacRegion:
        return GaussianMacRegion(self.profile, self.states[n])

    def speed_stats(self, cfg: FadingConfig | None = None) -> SpeedStats:
        w_bar = float(self.w.mean()) if self.w.size else 0.0
        if cfg is None:
            return SpeedStats(w_bar, float("nan"), float("nan"))
        return SpeedStats(w_bar, w_hat(cfg, self.profile), w_bar_analytic(cfg, self.profile))


def w_series(step_speeds: np.ndarray, profile: PowerProfile) -> np.ndarray:
    return step_speeds @ profile.power_array / (2.0 * profile.noise)


def w_hat(cfg: FadingConfig, profile: PowerProfile) -> float:
    """Largest possible W_n: ``sum v_hat_i P_i / (2 N0)``."""
    return float(np.asarray(cfg.v_hat) @ profile.power_array / (2.0 * profile.noise))


def w_bar_analytic(cfg: FadingConfig, profile: PowerProfile) -> float:
    """Mean of W_n implied by the step law, ignoring reflections."""
    return float(cfg.mean_abs_step() @ profile.power_array / (2.0 * profile.noise))


def draw_steps(cfg: FadingConfig, rng: np.random.Generator, n: int) -> np.ndarray:
    """Signed increments of shape ``(n, M)`` with ``|step_i| <= v_hat[i]``."""
    v = np.asarray(cfg.v_hat)
    if cfg.law == "uniform":
        return rng.uniform(-1.0, 1.0, size=(n, cfg.m)) * v
    magnitude = rng.beta(cfg.beta_a, cfg.beta_b, size=(n, cfg.m)) * v
    sign = np.where(rng.random(size=(n, cfg.m)) < 0.5, -1.0, 1.0)
    return sign * magnitude


def generate_trace(cfg: FadingConfig, profile: PowerProfile) -> ChannelTrace:
    """Reflected bounded-increment random walk; deterministic given ``cfg.seed``.

    Draw order: initial gains (unless ``cfg.h0`` is set), then all increments
    as one ``(horizon - 1, M)`` block.
    """
    if profile.m != cfg.m:
        raise ConfigError(f"fading config has {cfg.m} users, power profile has {profile.m}")
    rng = np.random.default_rng(cfg.seed)
    if cfg.h0 is None:
        h0 = rng.uniform(cfg.h_min, cfg.h_max, size=cfg.m)
    else:
        h0 = np.asarray(cfg.h0, dtype=float)
    steps = draw_steps(cfg, rng, cfg.horizon - 1)
    states = _reflected_walk(h0, steps, cfg.h_min, cfg.h_max, np.asarray(cfg.v_hat))
    return ChannelTrace(states, profile)


@njit(cache=True)
def _reflected_walk(h0, steps, lo, hi, v_hat):
    n, m = steps.shape
    out = np.empty((n + 1, m))
    out[0] = h0
    for t in range(n):
        for i in range(m):
            h = out[t, i]
            x = h + steps[t, i]
            if x > hi:
                x = 2.0 * hi - x
            elif x < lo:
                x = 2.0 * lo - x
            x = min(max(x, lo), hi)
            # rounding in h + step may overshoot the increment bound by an ulp
            while abs(x - h) > v_hat[i]:
                x = np.nextafter(x, h)
            out[t + 1, i] = x
    return out


def region_steps(trace: ChannelTrace) -> np.ndarray:
    """``d_H`` between the regions of consecutive slots."""
    regions = [trace.region(n) for n in range(trace.horizon)]
    return np.array([region_distance(regions[n + 1], regions[n]) for n in range(trace.horizon - 1)])


def w_bound_check(trace: ChannelTrace, regions: Sequence[GaussianMacRegion] | None = None,
                  tol: float = 1e-12) -> bool:
    """True when every consecutive region distance is within ``W_n + tol``."""
    if regions is None:
        dists = region_steps(trace)
    else:
        if len(regions) != trace.horizon:
            raise ConfigError("one region per slot is required")
        dists = np.array([region_distance(regions[n + 1], regions[n])
                          for n in range(len(regions) - 1)])
    return bool(np.all(dists <= trace.w + tol))


def write_trace_csv(trace: ChannelTrace, path) -> None:
    """Columns ``slot,h_1..h_M,w``; the last slot has no forward step so ``w`` is empty."""
    m = trace.states.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["slot", *[f"h_{i + 1}" for i in range(m)], "w"])
        for n, gains in enumerate(trace.states):
            w = _fmt(trace.w[n]) if n < trace.w.size else ""
            writer.writerow([n, *[_fmt(h) for h in gains], w])


def read_trace_csv(path, profile: PowerProfile) -> ChannelTrace:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    m = len(header) - 2
    if header[0] != "slot" or header[-1] != "w" or m != profile.m:
        raise ConfigError(f"{path}: unexpected trace header {header}")
    states = np.array([[float(v) for v in row[1:1 + m]] for row in body])
    return ChannelTrace(states, profile)


def _fmt(x: float) -> str:
    return format(float(x), ".17g")
