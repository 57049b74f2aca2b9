import itertools
import math

import cvxpy as cp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from macrate.capacity import (
    FEAS_TOL,
    GaussianMacRegion,
    PowerProfile,
    SubsetPolytope,
    awgn_capacity,
    expansion_face_witness,
    rank,
    region_distance,
    subset_mask,
    subset_users,
)
from macrate.errors import DomainError

UNIT2 = PowerProfile((1.0, 1.0), 1.0)


@pytest.fixture
def sym2():
    return GaussianMacRegion(UNIT2, (1.0, 1.0))


def random_region(rng, m, lo=0.0, hi=2.0):
    return GaussianMacRegion(PowerProfile(tuple(rng.uniform(0.5, 2.0, m)), float(rng.uniform(0.5, 2))),
                             rng.uniform(lo, hi, m))


def cvx_project(region, y):
    x = cp.Variable(region.m)
    cons = [x >= 0, region.incidence @ x <= region.bounds]
    cp.Problem(cp.Minimize(cp.sum_squares(x - y)), cons).solve(solver=cp.CLARABEL)
    return x.value


# region strategy: M in 1..4, positive powers, nonnegative gains
@st.composite
def regions(draw, max_m=4):
    m = draw(st.integers(1, max_m))
    pos = st.floats(0.1, 5.0)
    powers = tuple(draw(st.lists(pos, min_size=m, max_size=m)))
    gains = draw(st.lists(st.floats(0.0, 3.0), min_size=m, max_size=m))
    noise = draw(st.floats(0.2, 3.0))
    return GaussianMacRegion(PowerProfile(powers, noise), gains)


class TestAwgnCapacity:
    @pytest.mark.parametrize("p,n,expected", [(0, 1, 0.0), (1, 1, 0.5 * math.log(2)), (3, 1, math.log(2))])
    def test_values(self, p, n, expected):
        assert awgn_capacity(p, n) == pytest.approx(expected, abs=1e-15)

    @pytest.mark.parametrize("p,n", [(-1, 1), (1, 0), (float("nan"), 1), (1, float("inf"))])
    def test_domain(self, p, n):
        with pytest.raises(DomainError):
            awgn_capacity(p, n)


class TestRank:
    def test_examples(self, sym2):
        assert rank(sym2, [0]) == pytest.approx(0.3465736, abs=1e-7)
        assert rank(sym2, [0, 1]) == pytest.approx(0.5 * math.log(3), abs=1e-15)
        assert rank(GaussianMacRegion(UNIT2, (0.0, 1.0)), [0]) == 0.0

    def test_empty_subset(self, sym2):
        with pytest.raises(DomainError):
            rank(sym2, [])
        with pytest.raises(DomainError):
            sym2.rank(0)

    def test_mask_roundtrip(self):
        for mask in range(1, 16):
            assert subset_mask(subset_users(mask)) == mask

    def test_gain_count_mismatch(self):
        with pytest.raises(DomainError):
            GaussianMacRegion(UNIT2, (1.0,))

    @settings(max_examples=60, deadline=None)
    @given(regions())
    def test_polymatroid(self, region):
        f = np.concatenate([[0.0], region.bounds])
        full = (1 << region.m) - 1
        for a in range(full + 1):
            for b in range(full + 1):
                assert f[a] + f[b] >= f[a | b] + f[a & b] - 1e-12
                if a & b == a:
                    assert f[a] <= f[b] + 1e-12


class TestViolations:
    def test_origin(self, sym2):
        assert sym2.violations(np.zeros(2), 1e-12) == []

    def test_ordered_listing(self, sym2):
        v = sym2.violations([0.5, 0.5], 1e-12)
        assert [m for m, _ in v] == [3, 1, 2]
        assert [e for _, e in v] == pytest.approx([0.4506939, 0.1534264, 0.1534264], abs=1e-7)

    def test_boundary_point(self, sym2):
        assert sym2.violations([0.5 * math.log(2), 0.0], 1e-12) == []


class TestVertices:
    def test_two_user(self, sym2):
        assert sym2.dominant_face_vertex([0, 1]) == pytest.approx([0.3465736, 0.2027326], abs=1e-7)
        assert sym2.dominant_face_vertex([1, 0]) == pytest.approx([0.2027326, 0.3465736], abs=1e-7)

    def test_single_user(self):
        r = GaussianMacRegion(PowerProfile((2.0,), 1.0), (1.5,))
        assert r.dominant_face_vertex([0]) == pytest.approx([awgn_capacity(3.0, 1.0)])

    def test_bad_order(self, sym2):
        with pytest.raises(DomainError):
            sym2.dominant_face_vertex([0, 0])

    @settings(max_examples=40, deadline=None)
    @given(regions())
    def test_vertices_on_dominant_face(self, region):
        for order in itertools.permutations(range(region.m)):
            v = region.dominant_face_vertex(order)
            assert region.contains(v, 1e-12)
            assert v.sum() == pytest.approx(region.bounds[-1], abs=1e-12)


class TestApproximateProjection:
    def test_examples(self, sym2):
        assert sym2.approximate_project([0.5, 0.5]) == pytest.approx([0.2746531, 0.2746531], abs=1e-7)
        assert sym2.approximate_project([-0.1, 0.1]) == pytest.approx([0.0, 0.1], abs=1e-15)
        y = np.array([0.1, 0.2])
        assert np.array_equal(sym2.approximate_project(y), y)

    def test_input_not_mutated(self, sym2):
        y = np.array([0.5, 0.5])
        sym2.approximate_project(y)
        assert np.array_equal(y, [0.5, 0.5])

    def test_bad_input(self, sym2):
        with pytest.raises(DomainError):
            sym2.approximate_project([np.nan, 0.0])
        with pytest.raises(DomainError):
            sym2.approximate_project([0.0, 0.0, 0.0])

    @settings(max_examples=100, deadline=None)
    @given(regions(), st.data())
    def test_feasible_and_pseudo_nonexpansive(self, region, data):
        m = region.m
        scale = float(region.bounds.max()) + 0.1
        y = np.array(data.draw(st.lists(st.floats(-2 * scale, 3 * scale), min_size=m, max_size=m)))
        lam = np.array(data.draw(st.lists(st.floats(0.0, 1.0), min_size=m, max_size=m)))
        p = region.approximate_project(y)
        assert region.contains(p, FEAS_TOL)
        # feasible comparison points: a chain vertex and a shrunken copy of it
        order = data.draw(st.permutations(list(range(m))))
        v = region.dominant_face_vertex(order)
        for z in (v, v * lam, np.zeros(m)):
            assert np.linalg.norm(p - z) <= np.linalg.norm(y - z) + 1e-12

    @settings(max_examples=50, deadline=None)
    @given(regions(), st.data())
    def test_idempotent(self, region, data):
        m = region.m
        y = np.array(data.draw(st.lists(st.floats(-1, 3), min_size=m, max_size=m)))
        p = region.approximate_project(y)
        assert np.allclose(region.approximate_project(p), p, atol=1e-12)


class TestExactProjection:
    def test_examples(self, sym2):
        assert sym2.exact_project([0.5, 0.5]) == pytest.approx([0.2746531, 0.2746531], abs=1e-7)
        assert sym2.exact_project([1.0, 0.0]) == pytest.approx([0.3465736, 0.0], abs=1e-7)
        assert sym2.exact_project([0.1, 0.1]) == pytest.approx([0.1, 0.1], abs=1e-15)

    def test_matches_cvxpy(self):
        rng = np.random.default_rng(3)
        for m in (2, 3, 4):
            for _ in range(5):
                region = random_region(rng, m, lo=0.2)
                for y in rng.uniform(-0.5, 1.5, size=(5, m)):
                    assert region.exact_project(y) == pytest.approx(cvx_project(region, y), abs=2e-6)

    def test_dominates_approximate(self):
        rng = np.random.default_rng(4)
        for m in (2, 3, 4):
            region = random_region(rng, m)
            Y = rng.uniform(-0.5, 1.5, size=(200, m))
            exact = region.exact_project(Y)
            approx = np.array([region.approximate_project(y) for y in Y])
            assert np.all(np.linalg.norm(exact - Y, axis=1) <= np.linalg.norm(approx - Y, axis=1) + 1e-8)

    def test_batch_shape(self, sym2):
        out = sym2.exact_project(np.ones((3, 2)))
        assert out.shape == (3, 2)


class TestExpansionAndDistance:
    def test_expand(self, sym2):
        e = sym2.expand(0.1)
        assert e.bound(1) == pytest.approx(0.4465736, abs=1e-7)
        with pytest.raises(DomainError):
            sym2.expand(-1e-3)

    def test_expand_zero_membership(self, sym2):
        rng = np.random.default_rng(0)
        e = sym2.expand(0.0)
        for y in rng.uniform(-0.1, 0.6, size=(1000, 2)):
            assert e.contains(y, 0.0) == sym2.contains(y, 0.0)

    def test_vertex_interior_of_expansion(self, sym2):
        e = sym2.expand(0.01)
        v = sym2.dominant_face_vertex([0, 1])
        assert e.excess(v).max() == pytest.approx(-0.01)

    def test_distance_example(self):
        a = GaussianMacRegion(UNIT2, (1.0, 1.0))
        b = GaussianMacRegion(UNIT2, (1.2, 1.0))
        diffs = np.abs(a.bounds - b.bounds)
        assert diffs == pytest.approx([0.0476550, 0.0, 0.0322693], abs=1e-6)
        assert region_distance(a, b) == pytest.approx(0.0476550, abs=1e-6)
        assert region_distance(a, a) == 0.0
        assert region_distance(a, a.expand(0.07)) == pytest.approx(0.07)

    def test_distance_errors(self):
        a = GaussianMacRegion(UNIT2, (1.0, 1.0))
        with pytest.raises(DomainError):
            region_distance(a, GaussianMacRegion(PowerProfile((1.0,), 1.0), (1.0,)))
        with pytest.raises(DomainError):
            region_distance(a, GaussianMacRegion(PowerProfile((1.0, 2.0), 1.0), (1.0, 1.0)))

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_distance_is_smallest_mutual_containment(self, data):
        # Independent evaluation: a polymatroid lies in E_d(b) iff every chain
        # vertex of a does, so the containment threshold is the largest excess
        # of a's vertices in b (and vice versa).
        m = data.draw(st.integers(1, 4))
        profile = PowerProfile(tuple([1.0] * m), 1.0)
        ga = data.draw(st.lists(st.floats(0.0, 3.0), min_size=m, max_size=m))
        gb = data.draw(st.lists(st.floats(0.0, 3.0), min_size=m, max_size=m))
        a, b = GaussianMacRegion(profile, ga), GaussianMacRegion(profile, gb)

        def threshold(p, q):
            worst = 0.0
            for order in itertools.permutations(range(m)):
                worst = max(worst, float(q.excess(p.dominant_face_vertex(order)).max()))
            return worst

        assert region_distance(a, b) == pytest.approx(max(threshold(a, b), threshold(b, a)), abs=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.data())
    def test_pseudometric(self, data):
        m = data.draw(st.integers(1, 4))
        profile = PowerProfile(tuple([1.0] * m), 1.0)
        rs = [GaussianMacRegion(profile, data.draw(st.lists(st.floats(0.0, 3.0), min_size=m, max_size=m)))
              for _ in range(3)]
        a, b, c = rs
        assert region_distance(a, b) == region_distance(b, a)
        assert region_distance(a, c) <= region_distance(a, b) + region_distance(b, c) + 1e-12


class TestWitness:
    def test_example(self, sym2):
        v = sym2.expand(0.05).dominant_face_vertex([0, 1])
        assert v == pytest.approx([0.3965736, 0.2027326], abs=1e-7)
        w = expansion_face_witness(sym2, 0.05, v, [0, 1])
        assert w == pytest.approx([0.3465736, 0.2027326], abs=1e-7)
        assert sym2.violations(w, 1e-12) == []

    def test_zero_delta_identity(self, sym2):
        v = sym2.dominant_face_vertex([1, 0])
        assert np.array_equal(expansion_face_witness(sym2, 0.0, v, [1, 0]), v)

    def test_rejects_non_vertex(self, sym2):
        with pytest.raises(DomainError):
            expansion_face_witness(sym2, 0.05, [0.1, 0.1], [0, 1])

    def test_convex_combinations_m3(self):
        rng = np.random.default_rng(8)
        region = random_region(rng, 3, lo=0.5)
        delta = 0.03
        orders = list(itertools.permutations(range(3)))
        vs = np.array([region.expand(delta).dominant_face_vertex(o) for o in orders])
        ws = np.array([expansion_face_witness(region, delta, v, o) for v, o in zip(vs, orders)])
        for lam in rng.dirichlet(np.ones(len(orders)), size=100):
            p, q = lam @ vs, lam @ ws
            assert np.linalg.norm(p - q) <= delta + 1e-12
            assert region.contains(q, 1e-12)
            assert q.sum() == pytest.approx(region.bounds[-1], abs=1e-12)


def test_generic_polytope_validation():
    with pytest.raises(DomainError):
        SubsetPolytope([1.0, 2.0])
    p = SubsetPolytope([1.0, 1.0, 1.5])
    assert p.m == 2
    assert p.approximate_project([2.0, 2.0]) == pytest.approx([0.75, 0.75])
