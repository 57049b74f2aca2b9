"""Registered claim checks run by ``verify``.

Every check is deterministic: seeds are fixed per claim.  ``full`` sizes are
the desk-scale workloads of the acceptance suite; ``quick`` shrinks them for
smoke runs.
"""

from __future__ import annotations

import itertools
import math
import shutil
import tempfile
import time
from pathlib import Path

import numpy as np

from ..capacity import GaussianMacRegion, PowerProfile, region_distance, expansion_face_witness
from ..channel import FadingConfig, generate_trace, w_hat
from ..policies import (
    avg_case_params,
    renewal_ratio,
    run_approximate_policy,
    run_improved_policy,
    solve_c,
    worst_case_params,
)
from ..solver import decomposition_greedy, greedy_oracle, linear_greedy
from ..utility import UtilityModel, singleton_box
from .config import ORACLE_TOL, parse_config, run_experiment, scenario_s1, write_outputs
from .report import ClaimRecord, VerificationReport, combine

SIZES = {
    "full": dict(proj_states=20, proj_points=1000, poly_states=50, witness_pairs=50,
                 lemma1_pairs=100, trace_slots=10**4, calib_states=20,
                 s1_slots=10**4, renewal_slots=10**5),
    "quick": dict(proj_states=3, proj_points=100, poly_states=5, witness_pairs=10,
                  lemma1_pairs=10, trace_slots=10**3, calib_states=3,
                  s1_slots=2000, renewal_slots=10**4),
}


def _random_region(rng, m: int, lo: float = 0.5, hi: float = 2.0) -> GaussianMacRegion:
    profile = PowerProfile(tuple(rng.uniform(0.5, 2.0, m)), 1.0)
    return GaussianMacRegion(profile, rng.uniform(lo, hi, m))


def _random_feasible(rng, region, n: int) -> np.ndarray:
    """Random points of the region: scaled convex combinations of chain vertices."""
    m = region.m
    vertices = np.array([region.dominant_face_vertex(p) for p in itertools.permutations(range(m))])
    lam = rng.dirichlet(np.ones(len(vertices)), size=n)
    return (lam @ vertices) * rng.uniform(0.0, 1.0, size=(n, 1))


def claim_projection_suite(size: str, inflate: float = 0.0) -> ClaimRecord:
    s = SIZES[size]
    rng = np.random.default_rng(101)
    worst_feas = worst_nonexp = worst_gap = -math.inf
    t0 = time.perf_counter()
    for m in (2, 3, 4):
        for _ in range(s["proj_states"]):
            region = _random_region(rng, m, lo=0.0)
            scale = float(region.bounds.max())
            Y = rng.uniform(-0.5, 1.5, size=(s["proj_points"], m)) * scale
            Z = _random_feasible(rng, region, s["proj_points"])
            P = np.array([region.approximate_project(y) for y in Y])
            exact = region.exact_project(Y)
            feas = np.maximum(P.min(axis=1) * -1.0, (P @ region.incidence.T - region.bounds).max(axis=1))
            worst_feas = max(worst_feas, float(feas.max()))
            nonexp = np.linalg.norm(P - Z, axis=1) - np.linalg.norm(Y - Z, axis=1)
            worst_nonexp = max(worst_nonexp, float(nonexp.max()))
            gap = np.linalg.norm(exact - Y, axis=1) - np.linalg.norm(P - Y, axis=1)
            worst_gap = max(worst_gap, float(gap.max()))
    elapsed = time.perf_counter() - t0
    checks = [
        ClaimRecord("feasibility", worst_feas, 0.0, 1e-9, note="largest constraint excess"),
        ClaimRecord("nonexpansive", worst_nonexp, 0.0, 1e-12,
                    note="largest increase in distance to a feasible point"),
        ClaimRecord("oracle", worst_gap, 0.0, 1e-8,
                    note="Dykstra distance minus approximate distance"),
        ClaimRecord("runtime", elapsed, 30.0, 0.0, note="seconds"),
    ]
    return combine("projection-suite", checks, "approximate projection on M = 2, 3, 4")


def claim_polymatroid(size: str, inflate: float = 0.0) -> ClaimRecord:
    s = SIZES[size]
    rng = np.random.default_rng(102)
    worst_sub = worst_mono = -math.inf
    for m in (1, 2, 3, 4):
        full = (1 << m) - 1
        for _ in range(s["poly_states"]):
            region = _random_region(rng, m, lo=0.0)
            f = np.concatenate([[0.0], region.bounds])
            for a in range(full + 1):
                for b in range(full + 1):
                    worst_sub = max(worst_sub, f[a | b] + f[a & b] - f[a] - f[b])
                for i in range(m):
                    worst_mono = max(worst_mono, f[a] - f[a | (1 << i)])
    checks = [
        ClaimRecord("sub", float(worst_sub), 0.0, 1e-12, note="largest submodularity violation"),
        ClaimRecord("mono", float(worst_mono), 0.0, 1e-12, note="largest monotonicity violation"),
    ]
    return combine("polymatroid", checks, "exhaustive over subsets, M <= 4")


def claim_appendix_witness(size: str, inflate: float = 0.0) -> ClaimRecord:
    s = SIZES[size]
    rng = np.random.default_rng(103)
    feas = face = dist = combo = -math.inf
    for _ in range(s["witness_pairs"]):
        m = int(rng.integers(2, 5))
        region = _random_region(rng, m)
        delta = float(rng.uniform(0.001, 0.1))
        expanded = region.expand(delta)
        vs, ws = [], []
        for order in itertools.permutations(range(m)):
            v = expanded.dominant_face_vertex(order)
            w = expansion_face_witness(region, delta, v, order)
            feas = max(feas, float(region.excess(w).max()), float(-w.min()))
            face = max(face, abs(float(w.sum()) - float(region.bounds[-1])))
            dist = max(dist, abs(float(np.linalg.norm(v - w)) - delta))
            vs.append(v)
            ws.append(w)
        lam = rng.dirichlet(np.ones(len(vs)), size=20)
        pv, pw = lam @ np.array(vs), lam @ np.array(ws)
        combo = max(combo, float((np.linalg.norm(pv - pw, axis=1) - delta).max()))
    checks = [
        ClaimRecord("feas", feas, 0.0, 1e-12, note="witness constraint excess"),
        ClaimRecord("face", face, 0.0, 1e-12, note="witness distance from the full-set hyperplane"),
        ClaimRecord("dist", dist, 0.0, 1e-12, note="| |vertex - witness| - delta |"),
        ClaimRecord("combo", combo, 0.0, 1e-12, note="convex combination distance minus delta"),
    ]
    return combine("appendix-witness", checks, "expanded-face vertices map back within delta")


def claim_lemma1(size: str, inflate: float = 0.0) -> ClaimRecord:
    s = SIZES[size]
    rng = np.random.default_rng(104)
    profile = PowerProfile((1.0, 1.0), 1.0)
    u = UtilityModel("weighted-log", (1.0, 1.0))
    consts = u.constants(singleton_box(profile, 2.0))
    ratio = consts.B / consts.A
    worst = -math.inf
    worst_pair = None
    t0 = time.perf_counter()
    for j in range(s["lemma1_pairs"]):
        h1 = rng.uniform(0.5, 2.0, 2)
        # half the pairs are close, half independent
        if j % 2 == 0:
            h2 = np.clip(h1 + rng.uniform(-1, 1, 2) * 10 ** rng.uniform(-4, -1), 0.5, 2.0)
        else:
            h2 = rng.uniform(0.5, 2.0, 2)
        r1, r2 = GaussianMacRegion(profile, h1), GaussianMacRegion(profile, h2)
        delta = region_distance(r1, r2)
        d = float(np.linalg.norm(decomposition_greedy(r1, u) - decomposition_greedy(r2, u)))
        bound = math.sqrt(delta) * (math.sqrt(delta) + math.sqrt(ratio))
        if d - bound > worst:
            worst, worst_pair = d - bound, (d, bound)
    elapsed = time.perf_counter() - t0
    checks = [
        ClaimRecord("gap", worst_pair[0], worst_pair[1], 1e-4,
                    note="greedy-point distance vs sqrt(d)(sqrt(d) + sqrt(B/A)), tightest pair"),
        ClaimRecord("runtime", elapsed, 120.0, 0.0, note="seconds"),
    ]
    return combine("lemma1-bound", checks, "greedy points of nearby regions")


def claim_lemma2(size: str, inflate: float = 0.0) -> ClaimRecord:
    s = SIZES[size]
    checks = []
    cases = [
        dict(m=2, v_hat=1e-4, law="uniform"),
        dict(m=2, v_hat=0.2, law="uniform"),
        dict(m=3, v_hat=1e-3, law="uniform"),
        dict(m=3, v_hat=0.3, law="scaled-beta", beta_a=2.0, beta_b=0.5),
    ]
    for seed, case in enumerate(cases):
        m = case["m"]
        cfg = FadingConfig(h_min=0.5, h_max=2.0, horizon=s["trace_slots"], seed=900 + seed,
                           **{k: v for k, v in case.items()})
        profile = PowerProfile(tuple(np.linspace(0.5, 2.0, m)), 1.0)
        trace = generate_trace(cfg, profile)
        ranks = _rank_table(trace)
        dist = np.abs(np.diff(ranks, axis=0)).max(axis=1)
        checks.append(ClaimRecord(f"trace{seed}", float((dist - trace.w).max()), 0.0, 1e-12,
                                  note=f"M={m} v_hat={case['v_hat']} {case['law']}: max(d_H - W_n)"))
    return combine("lemma2-step", checks, "consecutive region distance vs W_n")


def _rank_table(trace) -> np.ndarray:
    from ..capacity import subset_incidence

    _, inc, _ = subset_incidence(trace.profile.m)
    received = trace.states @ (inc * trace.profile.power_array).T
    return 0.5 * np.log1p(received / trace.profile.noise)


def claim_oracle_calibration(size: str, inflate: float = 0.0) -> ClaimRecord:
    s = SIZES[size]
    rng = np.random.default_rng(106)
    worst_log = worst_lin = -math.inf
    for _ in range(s["calib_states"]):
        region = _random_region(rng, 2)
        u = UtilityModel("weighted-log", tuple(rng.uniform(0.5, 2.0, 2)))
        oracle = greedy_oracle(region, u)
        grid = _grid_best(region, u, 1e-3)
        worst_log = max(worst_log, abs(oracle.best_value - grid))

        m = int(rng.integers(2, 5))
        region = _random_region(rng, m)
        lin = UtilityModel("weighted-linear", tuple(rng.uniform(0.5, 2.0, m)))
        best_vertex = max(float(lin.w @ region.dominant_face_vertex(p))
                          for p in itertools.permutations(range(m)))
        got = greedy_oracle(region, lin).best_value
        worst_lin = max(worst_lin, abs(got - best_vertex), abs(lin.value(linear_greedy(region, lin.weights)) - best_vertex))
    checks = [
        ClaimRecord("log", worst_log, 0.0, 2e-3, note="weighted-log |du| vs grid search at step 1e-3"),
        ClaimRecord("lin", worst_lin, 0.0, 1e-6, note="weighted-linear value vs best chain vertex"),
    ]
    return combine("oracle-calibration", checks, "greedy oracle accuracy")


def _grid_best(region, u, step: float) -> float:
    f1, f2, f12 = (float(b) for b in region.bounds)
    x = np.arange(0.0, f1 + step / 2, step)
    y = np.arange(0.0, f2 + step / 2, step)
    X, Y = np.meshgrid(x, y, indexing="ij")
    ok = X + Y <= f12
    w = u.w
    values = np.where(ok, w[0] * np.log1p(X) + w[1] * np.log1p(Y), -np.inf)
    return float(values.max())


def _s1_trace(horizon: int, seed: int = 1):
    cfg = parse_config(scenario_s1(horizon, seed))
    trace = generate_trace(cfg.fading, cfg.profile)
    u = cfg.utility
    consts = u.constants(singleton_box(cfg.profile, cfg.fading.h_max))
    return cfg, trace, u, consts


def claim_thm1(size: str, inflate: float = 0.0) -> ClaimRecord:
    cfg, trace, u, consts = _s1_trace(SIZES[size]["s1_slots"])
    params = worst_case_params(consts.A, consts.B, w_hat(cfg.fading, cfg.profile))
    t0 = time.perf_counter()
    run = run_approximate_policy(trace, u, consts, params)
    elapsed = time.perf_counter() - t0
    checks = [
        ClaimRecord("err", run.max_track_err() + inflate, params.bound, ORACLE_TOL,
                    note="block policy max tracking error vs 2 theta"),
        ClaimRecord("runtime", elapsed, 600.0, 0.0, note="seconds"),
    ]
    return combine("thm1-bound", checks, "block policy on the slow-fading scenario")


def _improved_s1(horizon: int):
    cfg, trace, u, consts = _s1_trace(horizon)
    from ..channel import w_bar_analytic

    params = avg_case_params(consts.A, consts.B, w_bar_analytic(cfg.fading, cfg.profile),
                             w_hat(cfg.fading, cfg.profile))
    return params, trace, u, consts


def claim_thm2(size: str, inflate: float = 0.0) -> ClaimRecord:
    params, trace, u, consts = _improved_s1(SIZES[size]["renewal_slots"])
    run = run_improved_policy(trace, u, consts, params, cadence="block-boundaries")
    ratio = renewal_ratio(run, params.k)
    return ClaimRecord("thm2-ratio", ratio, 1.0, 0.05, kind="abs",
                       note=f"n/(t k) at the final slot, t={len(run.renewal_times) - 1}, k={params.k}")


def claim_lemma3(size: str, inflate: float = 0.0) -> ClaimRecord:
    params, trace, u, consts = _improved_s1(SIZES[size]["renewal_slots"])
    run = run_improved_policy(trace, u, consts, params, cadence="block-boundaries")
    cfg, trace1, _, _ = _s1_trace(SIZES[size]["s1_slots"])
    wparams = worst_case_params(consts.A, consts.B, w_hat(cfg.fading, cfg.profile))
    run1 = run_approximate_policy(trace1, u, consts, wparams, cadence="block-boundaries")
    checks = []
    for r in (run, run1):
        applies = [b for b in r.blocks if b.lemma3_applies]
        checks.append(ClaimRecord(r.policy, float(sum(not b.lemma3_ok for b in r.blocks)), 0.0, 0.0,
                                  note=f"{r.policy}: failing blocks ({len(applies)} of {len(r.blocks)} checked)"))
        checks.append(ClaimRecord(r.policy + "-ind", max(b.start_dist for b in r.blocks), r.bound, 1e-9,
                                  note=f"{r.policy}: warm-start distance vs tracking radius"))
    return combine("lemma3-block", checks, "per-block utility guarantee")


def claim_thm3(size: str, inflate: float = 0.0) -> ClaimRecord:
    params, trace, u, consts = _improved_s1(SIZES[size]["s1_slots"])
    run = run_improved_policy(trace, u, consts, params)
    return ClaimRecord("thm3-bound", run.max_track_err() + inflate, params.bound, ORACLE_TOL,
                       note="renewal policy max tracking error vs 2 gamma + sqrt(gamma B/A)")


def claim_solve_c(size: str, inflate: float = 0.0) -> ClaimRecord:
    checks = []
    prev = -math.inf
    mono = True
    for w in (0.0, 1e-8, 2.0**-8, 0.1):
        c = solve_c(w)
        resid = abs((c * c - 1) ** 8 / (256 * c**4) - w)
        checks.append(ClaimRecord(f"r{w}", resid, 0.0, 1e-10, note=f"residual at w_hat={w:g}"))
        checks.append(ClaimRecord(f"c{w}", 1.0 - c, 0.0, 0.0, note=f"1 - c at w_hat={w:g}"))
        mono = mono and c > prev
        prev = c
    checks.append(ClaimRecord("mono", 0.0 if mono else 1.0, 0.0, 0.0, note="strictly increasing"))
    return combine("solve-c", checks, "root of the renewal constant equation")


def claim_determinism(size: str, inflate: float = 0.0) -> ClaimRecord:
    horizon = SIZES[size]["s1_slots"] // 5
    tmp = Path(tempfile.mkdtemp(prefix="macrate-det-"))
    try:
        blobs = []
        for rep in range(2):
            cfg = parse_config(scenario_s1(horizon, seed=5), out=str(tmp / str(rep)))
            paths = write_outputs(run_experiment(cfg))
            blobs.append({p.name: p.read_bytes() for p in paths})
        differing = [name for name in blobs[0] if blobs[0][name] != blobs[1].get(name)]
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    return ClaimRecord("determinism", float(len(differing)), 0.0, 0.0,
                       note="output files differing between two identical runs"
                       + (f": {', '.join(differing)}" if differing else ""))


CLAIMS = {
    "projection-suite": (claim_projection_suite, "lemmas"),
    "polymatroid": (claim_polymatroid, "lemmas"),
    "appendix-witness": (claim_appendix_witness, "lemmas"),
    "lemma1-bound": (claim_lemma1, "lemmas"),
    "lemma2-step": (claim_lemma2, "lemmas"),
    "oracle-calibration": (claim_oracle_calibration, "lemmas"),
    "lemma3-block": (claim_lemma3, "lemmas"),
    "solve-c": (claim_solve_c, "lemmas"),
    "thm1-bound": (claim_thm1, "theorems"),
    "thm2-ratio": (claim_thm2, "theorems"),
    "thm3-bound": (claim_thm3, "theorems"),
    "determinism": (claim_determinism, "theorems"),
}

SUITES = ("lemmas", "theorems", "all")


def run_suite(suite: str, size: str = "full", inflate: float = 0.0, only=None) -> VerificationReport:
    if suite not in SUITES:
        raise ValueError(f"unknown suite {suite!r}; expected one of {SUITES}")
    if size not in SIZES:
        raise ValueError(f"unknown size {size!r}; expected one of {tuple(SIZES)}")
    records = []
    for claim, (fn, group) in CLAIMS.items():
        if suite != "all" and group != suite:
            continue
        if only is not None and claim not in only:
            continue
        records.append(fn(size, inflate))
    return VerificationReport(records)
