"""Block-based and renewal-based approximate rate allocation policies.

Both policies freeze the capacity region at a measurement slot, warm-start
from the rate they are currently serving, take a run of constant-stepsize
gradient projection iterations, and serve the best iterate until the next
measurement.  The block policy measures every ``k`` slots; the renewal policy
measures every slot and restarts once the accumulated region-step bound
``sum W_n`` reaches ``gamma``.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .capacity import GaussianMacRegion, SubsetPolytope, region_distance, subset_incidence
from .channel import ChannelTrace
from .errors import DomainError
from .solver import decomposition_greedy, greedy_oracle, nb_block
from .utility import UtilityConstants, UtilityModel

log = logging.getLogger(__name__)

CHECK_TOL = 1e-9

Reference = Callable[[SubsetPolytope], np.ndarray]


# ---------------------------------------------------------------- parameters

@dataclass(frozen=True)
class WorstCaseParams:
    k: int
    alpha: float
    theta: float
    w_prime: float
    w_hat: float
    k_clamped: bool = False

    @property
    def bound(self) -> float:
        return 2.0 * self.theta

    @property
    def guaranteed(self) -> bool:
        return not self.k_clamped


def worst_case_params(A: float, B: float, w_hat: float) -> WorstCaseParams:
    """Block length, stepsize and tracking radius from the fading-speed ceiling."""
    for name, v in (("A", A), ("B", B), ("w_hat", w_hat)):
        if not (math.isfinite(v) and v > 0):
            raise DomainError(f"{name} must be positive, got {v}")
    w_prime = math.sqrt(w_hat) * (math.sqrt(w_hat) + math.sqrt(B / A))
    k_raw = math.floor((2.0 * B / (A * w_prime)) ** (2.0 / 3.0))
    clamped = k_raw < 1
    if clamped:
        log.warning("fading too fast for the block-length formula; using k = 1 (bound not guaranteed)")
    return WorstCaseParams(
        k=max(k_raw, 1),
        alpha=(16.0 * A / B**2) ** (1.0 / 3.0) * w_prime ** (2.0 / 3.0),
        theta=(2.0 * B / A) ** (2.0 / 3.0) * w_prime ** (1.0 / 3.0),
        w_prime=w_prime,
        w_hat=w_hat,
        k_clamped=clamped,
    )


def _c_residual(c: float, w_hat: float) -> float:
    return (c * c - 1.0) ** 8 / (256.0 * c**4) - w_hat


def solve_c(w_hat: float) -> float:
    """Root ``c >= 1`` of ``(c^2 - 1)^8 / (2^8 c^4) = w_hat``.

    The left side is strictly increasing for ``c >= 1``, so bisection on a
    doubled bracket finds the unique root.
    """
    if not (math.isfinite(w_hat) and w_hat >= 0):
        raise DomainError(f"w_hat must be a nonnegative number, got {w_hat}")
    if w_hat == 0:
        return 1.0
    lo, hi = 1.0, 2.0
    while _c_residual(hi, w_hat) < 0:
        lo, hi = hi, 2.0 * hi
    while True:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if _c_residual(mid, w_hat) < 0:
            lo = mid
        else:
            hi = mid
    return lo if abs(_c_residual(lo, w_hat)) <= abs(_c_residual(hi, w_hat)) else hi


@dataclass(frozen=True)
class AvgCaseParams:
    gamma: float
    k: int
    alpha: float
    c: float
    w_bar: float
    w_hat: float
    B_over_A: float
    k_clamped: bool = False

    @property
    def bound(self) -> float:
        return 2.0 * self.gamma + math.sqrt(self.gamma * self.B_over_A)

    @property
    def guaranteed(self) -> bool:
        return not self.k_clamped


def avg_case_params(A: float, B: float, w_bar: float, w_hat: float) -> AvgCaseParams:
    """Renewal threshold, iterations per renewal and stepsize from the mean fading speed."""
    for name, v in (("A", A), ("B", B), ("w_bar", w_bar), ("w_hat", w_hat)):
        if not (math.isfinite(v) and v > 0):
            raise DomainError(f"{name} must be positive, got {v}")
    if w_bar > w_hat:
        raise DomainError(f"mean speed w_bar={w_bar} exceeds its ceiling w_hat={w_hat}")
    c = solve_c(w_hat)
    gamma = c * (B / A) ** 0.75 * w_bar**0.25
    k_raw = math.floor(gamma / w_bar)
    clamped = k_raw < 1
    if clamped:
        log.warning("fading too fast for the renewal formula; using k = 1 (bound not guaranteed)")
    return AvgCaseParams(
        gamma=gamma, k=max(k_raw, 1), alpha=A * gamma**2 / B**2, c=c,
        w_bar=w_bar, w_hat=w_hat, B_over_A=B / A, k_clamped=clamped,
    )


# ---------------------------------------------------------------- renewals

@dataclass
class RenewalSchedule:
    """Renewal slots ``T_0 = 0 < T_1 < ...`` and the W-sum that triggered each."""

    times: list[int]
    sums: list[float]


def build_renewal_schedule(w, gamma: float) -> RenewalSchedule:
    """``T_{i+1}`` is the first ``t`` with ``sum_{n=T_i}^{t-1} W_n >= gamma``.

    Running sums use compensated summation so that, e.g., ten steps of 0.1
    reach a threshold of 1.0.
    """
    if not (math.isfinite(gamma) and gamma > 0):
        raise DomainError(f"gamma must be positive, got {gamma}")
    times, sums = [0], [0.0]
    total = comp = 0.0
    for n, wn in enumerate(np.asarray(w, dtype=float)):
        y = wn - comp
        t = total + y
        comp = (t - total) - y
        total = t
        if total >= gamma:
            times.append(n + 1)
            sums.append(total)
            total = comp = 0.0
    return RenewalSchedule(times, sums)


# ---------------------------------------------------------------- runs

@dataclass
class BlockRecord:
    """One frozen-region update: measurement slot, warm start and outcome."""

    index: int
    measured_slot: int
    first_slot: int
    last_slot: int
    iterations: int
    tau: int
    start_dist: float
    served_value: float
    ref_value: float
    lemma3_eps: float
    lemma3_applies: bool
    lemma3_floor_only: bool
    lemma3_ok: bool
    induction_ok: bool
    lemma1_delta: float = float("nan")
    lemma1_dist: float = float("nan")
    lemma1_ok: bool = True


@dataclass
class PolicyRun:
    policy: str
    params: object
    allocated: np.ndarray
    reference: np.ndarray
    track_err: np.ndarray
    block: np.ndarray
    tau: np.ndarray
    bound: float
    blocks: list[BlockRecord]
    gradient_iterations: int
    measurements: int
    inst_violation: np.ndarray
    renewal_times: Optional[list[int]] = None
    warnings: list[str] = field(default_factory=list)

    @property
    def horizon(self) -> int:
        return self.allocated.shape[0]

    def max_track_err(self) -> float:
        finite = self.track_err[np.isfinite(self.track_err)]
        return float(finite.max()) if finite.size else float("nan")

    def summary(self) -> dict:
        err = self.track_err[np.isfinite(self.track_err)]
        quant = {f"q{int(q * 100)}": float(np.quantile(err, q)) for q in (0.5, 0.9, 0.99)} if err.size else {}
        return {
            "policy": self.policy,
            "params": {k: _jsonable(v) for k, v in self.params.__dict__.items()},
            "bound": self.bound,
            "track_err": {
                "max": self.max_track_err(),
                "mean": float(err.mean()) if err.size else float("nan"),
                "evaluated_slots": int(err.size),
                **quant,
            },
            "blocks": len(self.blocks),
            "gradient_iterations": self.gradient_iterations,
            "measurements": self.measurements,
            "max_instantaneous_violation": float(self.inst_violation.max()),
            "warnings": list(self.warnings),
        }


def make_reference(u: UtilityModel, method: str = "decomposition", tol: float = 1e-6) -> Reference:
    """Greedy-policy reference ``R(H) = argmax u`` over a region."""
    if method == "decomposition":
        return lambda region: decomposition_greedy(region, u)
    if method == "gradient":
        return lambda region: greedy_oracle(region, u, tol=tol).best
    raise DomainError(f"unknown reference method {method!r}")


class _References:
    """Per-slot greedy references, computed once on demand."""

    def __init__(self, trace: ChannelTrace, reference: Reference):
        self.trace = trace
        self.reference = reference
        self.values = np.full(trace.states.shape, np.nan)
        self.regions: dict[int, GaussianMacRegion] = {}

    def region(self, n: int) -> GaussianMacRegion:
        if n not in self.regions:
            self.regions[n] = self.trace.region(n)
        return self.regions[n]

    def __getitem__(self, n: int) -> np.ndarray:
        if np.isnan(self.values[n, 0]):
            self.values[n] = self.reference(self.region(n))
        return self.values[n]


def run_approximate_policy(
    trace: ChannelTrace,
    u: UtilityModel,
    constants: UtilityConstants,
    params: WorstCaseParams,
    reference: Reference | None = None,
    cadence: str = "every-slot",
) -> PolicyRun:
    """Block policy: measure at slots ``k t``, serve the block's best iterate on slots ``k t + 1 .. k t + k``.

    One gradient iteration is charged per served slot, so a block cut short by
    the horizon runs only as many iterations as it has slots.
    """
    k, alpha = params.k, params.alpha
    eps = alpha * constants.B**2
    blocks_start = list(range(0, trace.horizon - 1, k))
    spans = [(s, s + 1, min(s + k, trace.horizon - 1)) for s in blocks_start]
    run = _run_blocks(
        "approximate", trace, u, constants, params, spans, alpha,
        iterations=lambda first, last: last - first + 1,
        eps=eps, induction_radius=2.0 * params.theta,
        reference=reference, cadence=cadence,
    )
    run.measurements = len(blocks_start) if blocks_start else 1
    if params.k_clamped:
        run.warnings.append("k clamped to 1; tracking bound not guaranteed")
    ratio = k * params.w_prime / params.theta
    if ratio > 1:
        run.warnings.append(f"k*w'/theta = {ratio:.6g} exceeds 1")
    log.info("block policy: k*w'/theta = %.6g", ratio)
    return run


def run_improved_policy(
    trace: ChannelTrace,
    u: UtilityModel,
    constants: UtilityConstants,
    params: AvgCaseParams,
    reference: Reference | None = None,
    cadence: str = "every-slot",
) -> PolicyRun:
    """Renewal policy: update after slot ``T_t``, serve the best iterate until ``T_{t+1}``."""
    schedule = build_renewal_schedule(trace.w, params.gamma)
    times = schedule.times
    last = trace.horizon - 1
    spans = []
    for t, start in enumerate(times):
        stop = times[t + 1] if t + 1 < len(times) else last
        if start < last:
            spans.append((start, start + 1, stop))
    run = _run_blocks(
        "improved", trace, u, constants, params, spans, params.alpha,
        iterations=lambda first, last_slot: params.k,
        eps=constants.A * params.gamma**2, induction_radius=params.bound,
        reference=reference, cadence=cadence,
    )
    run.measurements = trace.horizon
    run.renewal_times = times
    if params.k_clamped:
        run.warnings.append("k clamped to 1; tracking bound not guaranteed")
    if len(times) == 1:
        run.warnings.append("threshold never crossed: policy never updated after its first block")
    return run


def renewal_ratio(run: PolicyRun, k: int, n: int | None = None) -> float:
    """``n / (t k)`` with ``t`` the number of renewals ``T_i <= n`` (``i >= 1``)."""
    if run.renewal_times is None:
        raise DomainError("renewal ratio needs a run of the renewal policy")
    if n is None:
        n = run.horizon - 1
    t = sum(1 for T in run.renewal_times[1:] if T <= n)
    if t == 0:
        raise DomainError("no renewal has occurred yet; the ratio is undefined")
    return n / (t * k)


def _run_blocks(name, trace, u, constants, params, spans, alpha, iterations, eps,
                induction_radius, reference, cadence) -> PolicyRun:
    if cadence not in ("every-slot", "block-boundaries"):
        raise DomainError(f"unknown oracle cadence {cadence!r}")
    if u.m != trace.profile.m:
        raise DomainError("utility and channel disagree on the number of users")
    refs = _References(trace, reference or make_reference(u))
    N, M = trace.states.shape
    allocated = np.zeros((N, M))
    block = np.full(N, -1, dtype=int)
    tau = np.full(N, -1, dtype=int)
    B = constants.B
    B_over_A = B / constants.A

    served = refs[0].copy()
    allocated[0] = served
    records: list[BlockRecord] = []
    total_iters = 0
    prev_region, prev_ref = None, None
    for t, (measured, first, last) in enumerate(spans):
        frozen = refs.region(measured)
        ref = refs[measured]
        n_iter = iterations(first, last)
        rep = nb_block(frozen, u, served, alpha, n_iter)
        total_iters += n_iter
        start_dist = float(np.linalg.norm(rep.start - ref))
        ref_value = u.value(ref)
        ratio = start_dist**2 / (alpha * eps)
        applies = n_iter >= math.floor(ratio)
        floor_only = applies and n_iter < ratio
        if floor_only:
            log.debug("%s block %d: iteration condition holds only after flooring", name, t)
        lemma3_ok = (not applies) or rep.best_value >= ref_value - (alpha * B**2 + eps) / 2 - CHECK_TOL
        rec = BlockRecord(
            index=t, measured_slot=measured, first_slot=first, last_slot=last,
            iterations=n_iter, tau=rep.best_index, start_dist=start_dist,
            served_value=rep.best_value, ref_value=ref_value, lemma3_eps=eps,
            lemma3_applies=applies, lemma3_floor_only=floor_only, lemma3_ok=lemma3_ok,
            induction_ok=start_dist <= induction_radius + CHECK_TOL,
        )
        if prev_region is not None:
            delta = region_distance(prev_region, frozen)
            rec.lemma1_delta = delta
            rec.lemma1_dist = float(np.linalg.norm(prev_ref - ref))
            rec.lemma1_ok = rec.lemma1_dist <= math.sqrt(delta) * (math.sqrt(delta) + math.sqrt(B_over_A)) + CHECK_TOL
        records.append(rec)
        prev_region, prev_ref = frozen, ref
        served = rep.best
        allocated[first:last + 1] = served
        block[first:last + 1] = t
        tau[first:last + 1] = rep.best_index

    if cadence == "every-slot":
        for n in range(N):
            refs[n]
    reference_rates = refs.values
    track_err = np.linalg.norm(allocated - reference_rates, axis=1)
    return PolicyRun(
        policy=name, params=params, allocated=allocated, reference=reference_rates,
        track_err=track_err, block=block, tau=tau, bound=params.bound, blocks=records,
        gradient_iterations=total_iters, measurements=0,
        inst_violation=instantaneous_violation(trace, allocated),
    )


def instantaneous_violation(trace: ChannelTrace, allocated: np.ndarray) -> np.ndarray:
    """Largest constraint excess of each served rate against that slot's true region."""
    _, incidence, _ = subset_incidence(trace.profile.m)
    received = trace.states @ (incidence * trace.profile.power_array).T
    ranks = 0.5 * np.log1p(received / trace.profile.noise)
    excess = allocated @ incidence.T - ranks
    return np.maximum(excess.max(axis=1), 0.0)


def write_run_csv(run: PolicyRun, trace: ChannelTrace, path) -> None:
    """Per-slot rows: ``slot,block,tau,h_*,r_*,rbar_*,track_err,bound``."""
    M = trace.states.shape[1]
    header = ["slot", "block", "tau",
              *[f"h_{i + 1}" for i in range(M)],
              *[f"r_{i + 1}" for i in range(M)],
              *[f"rbar_{i + 1}" for i in range(M)],
              "track_err", "bound"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for n in range(run.horizon):
            writer.writerow([
                n, run.block[n], run.tau[n],
                *[_fmt(h) for h in trace.states[n]],
                *[_fmt(r) for r in run.allocated[n]],
                *[_fmt(r) for r in run.reference[n]],
                _fmt(run.track_err[n]), _fmt(run.bound),
            ])


def _fmt(x: float) -> str:
    return "" if not math.isfinite(x) else format(float(x), ".17g")


def _jsonable(v):
    if isinstance(v, (bool, int, str)) or v is None:
        return v
    return float(v)
