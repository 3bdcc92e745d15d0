import itertools
from collections import deque
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from _stats import ALPHA, law_pvalue
from uidla.lattice import Aggregate, ball_volume, make_ball_aggregate, neighbour_offsets, origin_aggregate
from uidla.oracles import interval_exit, subset_1d_law, uidla_1d_law
from uidla.processes import (acceptance_probability, add_particle, boundary_weights, idla,
                             idla_from_origin, richardson, subset_uidla, uidla, uidla_1d_middle)


def exact_idla_1d(S0, starts):
    """Law of the final set of a d=1 IDLA, by walking the gambler's-ruin tree."""
    law = {frozenset(S0): Fraction(1)}
    for x in starts:
        nxt = {}
        for S, p in law.items():
            if x not in S:
                outcomes = [(x, Fraction(1))]
            else:
                lo, hi = x, x
                while lo - 1 in S:
                    lo -= 1
                while hi + 1 in S:
                    hi += 1
                left, right = interval_exit(lo, hi, x)
                outcomes = [(lo - 1, left), (hi + 1, right)]
            for y, q in outcomes:
                T = S | {y}
                nxt[T] = nxt.get(T, 0) + p * q
        law = nxt
    return law


def same_law_pvalue(a, b, pool=20):
    """Two-sample chi-square on outcome counts, rare outcomes pooled into one cell."""
    keys = sorted(set(a) | set(b), key=sorted)
    big = [k for k in keys if a.get(k, 0) + b.get(k, 0) >= pool]
    small = [k for k in keys if k not in big]
    table = np.array([[c.get(k, 0) for k in big] + [sum(c.get(k, 0) for k in small)] for c in (a, b)])
    if not table[:, -1].any():
        table = table[:, :-1]
    return stats.chi2_contingency(table)[1]


def final_set_1d(A):
    return frozenset(int(p[0]) for p in A.points())


def connected(A):
    occ = A.as_set()
    start = next(iter(occ))
    seen, todo = {start}, deque([start])
    while todo:
        p = todo.popleft()
        for off in neighbour_offsets(A.d):
            q = tuple(int(a + b) for a, b in zip(p, off))
            if q in occ and q not in seen:
                seen.add(q)
                todo.append(q)
    return len(seen) == len(occ)


def test_add_particle_examples(rng):
    S = Aggregate(2)
    assert add_particle(S, (0, 0), rng).as_set() == {(0, 0)}
    S = origin_aggregate(2)
    assert add_particle(S, (5, 5), rng).as_set() == {(0, 0), (5, 5)}
    outs = [final_set_1d(add_particle(origin_aggregate(1), (0,), rng)) for _ in range(4000)]
    assert law_pvalue(outs, {frozenset({0, 1}): 0.5, frozenset({-1, 0}): 0.5}) > ALPHA


def test_idla_examples(rng):
    assert idla(None, [[0, 0]], rng).as_set() == {(0, 0)}
    A = idla(None, np.zeros((0, 2)), rng, d=2)
    assert len(A) == 0


def test_idla_three_particles_d1(rng):
    law = exact_idla_1d(set(), [0, 0, 0])
    assert law == {frozenset({-2, -1, 0}): Fraction(1, 6), frozenset({-1, 0, 1}): Fraction(2, 3),
                   frozenset({0, 1, 2}): Fraction(1, 6)}
    outs = [final_set_1d(idla_from_origin(1, 3, rng)) for _ in range(20_000)]
    assert law_pvalue(outs, law) > ALPHA


@pytest.mark.parametrize("order", [(1, 0), (0, 1)])
def test_idla_abelian_d1(rng, order):
    law = exact_idla_1d({0}, order)
    assert law == exact_idla_1d({0}, tuple(reversed(order)))
    outs = [final_set_1d(idla(origin_aggregate(1), [[x] for x in order], rng)) for _ in range(20_000)]
    assert law_pvalue(outs, law) > ALPHA


def test_idla_abelian_d2(rng):
    X = [(0, 0), (1, 0), (0, 1), (0, 0)]
    runs = 6000
    laws = []
    for perm in [X, list(reversed(X))]:
        c = {}
        for _ in range(runs):
            key = idla(origin_aggregate(2), perm, rng).as_set()
            c[key] = c.get(key, 0) + 1
        laws.append(c)
    assert same_law_pvalue(*laws) > ALPHA


def test_idla_abelian_two_starts_from_ball(rng):
    B = make_ball_aggregate(2, 1)
    X = [(0, 0), (1, 0)]
    runs = 100_000
    laws = []
    for perm in [X, X[::-1]]:
        c = {}
        for _ in range(runs):
            key = idla(B, perm, rng).as_set()
            c[key] = c.get(key, 0) + 1
        laws.append(c)
    assert same_law_pvalue(*laws) > ALPHA


def test_idla_shape_at_1e4(rng):
    A = idla_from_origin(2, 10_000, rng)
    assert len(A) == 10_000
    assert A.outradius / A.inradius < 1.25


def test_uidla_examples(rng):
    outs = [final_set_1d(uidla(None, 1, rng, d=1)[0]) for _ in range(4000)]
    assert law_pvalue(outs, {frozenset({-1, 0}): 0.5, frozenset({0, 1}): 0.5}) > ALPHA
    A, F = uidla(None, 0, rng, d=1)
    assert A.as_set() == {(0,)} and F.n_edges == 0 and F.n_roots == 1


@pytest.mark.parametrize("k", [2, 3, 5])
def test_uidla_1d_law(rng, k):
    law = {frozenset(range(a, b + 1)): p for (a, b), p in uidla_1d_law(k).items()}
    if k == 2:
        assert law == {frozenset({-2, -1, 0}): Fraction(1, 4), frozenset({-1, 0, 1}): Fraction(1, 2),
                       frozenset({0, 1, 2}): Fraction(1, 4)}
    outs = [final_set_1d(uidla(None, k, rng, d=1)[0]) for _ in range(20_000)]
    assert law_pvalue(outs, law) > ALPHA


def test_uidla_does_not_mutate_input(rng):
    S0 = origin_aggregate(2)
    uidla(S0, 10, rng)
    assert len(S0) == 1


def test_uidla_forest_links_start_sites(rng):
    S0 = Aggregate(2, [(0, 0), (1, 0), (0, 1)])
    A, F = uidla(S0, 300, rng)
    assert len(F) == len(A) == 303
    assert F.n_roots == 3
    assert np.array_equal(F.sites, A.points())
    idx = np.arange(len(F))
    assert (F.parent[3:] < idx[3:]).all() and (F.parent[3:] >= 0).all()
    assert (F.depth[3:] == F.depth[F.parent[3:]] + 1).all()


def test_uidla_stats_callback(rng):
    sizes = []
    uidla(None, 95, rng, stats_every=10, on_stats=lambda a: sizes.append(len(a)))
    assert sizes == [11, 21, 31, 41, 51, 61, 71, 81, 91, 96]


def test_acceptance_probability():
    assert acceptance_probability(1, 1, 0) == 1
    assert acceptance_probability(3, 10, 5) == Fraction(1, 5)


def test_subset_examples(rng):
    E = origin_aggregate(2)
    # m = |E|: the first tick always launches a particle
    for _ in range(50):
        assert len(subset_uidla(E, 1, 1, rng)) == 2
    assert subset_uidla(E, 7, 0, rng).as_set() == E.as_set()
    with pytest.raises(ValueError):
        subset_uidla(Aggregate(2, [(0, 0), (1, 0)]), 1, 3, rng)


def test_subset_no_growth_probability():
    p = Fraction(1)
    for n in range(10):
        p *= 1 - acceptance_probability(1, 10 ** 6, n)
    assert float(p) == pytest.approx(1 - 1e-5, abs=1e-10)


@pytest.mark.parametrize("lo,hi,m,k", [(0, 0, 3, 3), (-1, 1, 5, 4)])
def test_subset_law_d1(rng, lo, hi, m, k):
    law = {frozenset(range(a, b + 1)): p for (a, b), p in subset_1d_law(lo, hi, m, k).items()}
    E = Aggregate(1, [[x] for x in range(lo, hi + 1)])
    outs = [final_set_1d(subset_uidla(E, m, k, rng)) for _ in range(20_000)]
    assert law_pvalue(outs, law) > ALPHA


def test_subset_with_host_equal_to_set_is_uidla():
    law_subset = subset_1d_law(0, 0, 1, 3)
    law_u = uidla_1d_law(3)
    assert law_subset == law_u


def test_richardson_examples(rng):
    outs = [next(p for p in richardson(origin_aggregate(2), 1, rng) if p != (0, 0)) for _ in range(4000)]
    assert law_pvalue(outs, {p: 0.25 for p in [(1, 0), (-1, 0), (0, 1), (0, -1)]}) > ALPHA


def test_richardson_weights_two_sites(rng):
    S0 = Aggregate(2, [(0, 0), (1, 0)])
    w = boundary_weights(S0)
    assert w == {(-1, 0): 1, (2, 0): 1, (0, 1): 1, (0, -1): 1, (1, 1): 1, (1, -1): 1}
    total = sum(w.values())
    outs = [richardson(S0, 1, rng).points()[2] for _ in range(6000)]
    assert law_pvalue([tuple(int(v) for v in p) for p in outs], {p: c / total for p, c in w.items()}) > ALPHA


def test_richardson_weights_count_neighbours(rng):
    S0 = Aggregate(2, [(0, 0), (1, 0), (0, 1)])
    w = boundary_weights(S0)
    assert w[(1, 1)] == 2
    total = sum(w.values())
    outs = [tuple(int(v) for v in richardson(S0, 1, rng).points()[3]) for _ in range(8000)]
    assert law_pvalue(outs, {p: c / total for p, c in w.items()}) > ALPHA


def test_richardson_large_is_connected(rng):
    A = richardson(origin_aggregate(2), 10_000, rng)
    assert len(A) == 10_001
    assert connected(A)


def test_midpoint_examples(rng):
    assert uidla_1d_middle(0, rng).values.tolist() == [0.0]
    outs = [float(uidla_1d_middle(1, rng).values[1]) for _ in range(4000)]
    assert law_pvalue(outs, {-0.5: 0.5, 0.5: 0.5}) > ALPHA
    tr = uidla_1d_middle(30, rng)
    assert set(np.abs(tr.increments()).tolist()) == {0.5}


def test_midpoint_increments_iid(rng):
    # 10^5 increments pooled over runs of 50 steps
    runs = [uidla_1d_middle(50, rng).increments() for _ in range(2000)]
    inc = np.concatenate(runs)
    assert law_pvalue(inc.tolist(), {-0.5: 0.5, 0.5: 0.5}) > ALPHA
    lag = np.concatenate([r[1:] * r[:-1] for r in runs]) / 0.25
    # the lag-one products are +-1 and have mean 0 under independence
    assert abs(lag.mean()) < 4 / np.sqrt(len(lag))


def test_midpoint_final_value_law(rng):
    # 2 M_4 against the binomial law of a 4-step walk
    outs = [int(uidla_1d_middle(4, rng).twice[-1]) for _ in range(20_000)]
    law = {}
    for steps in itertools.product((-1, 1), repeat=4):
        law[sum(steps)] = law.get(sum(steps), 0) + Fraction(1, 16)
    assert law_pvalue(outs, law) > ALPHA


@given(st.integers(0, 2 ** 32 - 1), st.integers(1, 30))
@settings(max_examples=30, deadline=None)
def test_richardson_monotone(seed, k):
    from uidla.rng import RngStream
    rng = RngStream(seed)
    A = origin_aggregate(2)
    for _ in range(k):
        w = boundary_weights(A)
        assert all(c > 0 for c in w.values())
        B = richardson(A, 1, rng)
        assert A.as_set() < B.as_set()
        assert (B.as_set() - A.as_set()) <= set(w)
        A = B


small_sets = st.sets(st.tuples(st.integers(-3, 3), st.integers(-3, 3)), min_size=1, max_size=10)


@given(small_sets, st.integers(0, 40), st.integers(0, 2 ** 32 - 1), st.booleans())
@settings(max_examples=40, deadline=None)
def test_uidla_growth_invariants(sites, k, seed, accel):
    from uidla.rng import RngStream
    S0 = Aggregate(2, sorted(sites))
    A, F = uidla(S0, k, RngStream(seed), accel)
    assert len(A) == len(S0) + k
    assert S0.as_set() <= A.as_set()
    pts = A.points()
    occ = {tuple(p) for p in pts[: len(S0)].tolist()}
    for p in pts[len(S0):].tolist():
        # each new site touches the set it joined
        assert any((p[0] + dx, p[1] + dy) in occ for dx, dy in [(1, 0), (-1, 0), (0, 1), (0, -1)])
        occ.add(tuple(p))


@given(st.integers(0, 60), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=25, deadline=None)
def test_processes_reach_requested_size(k, seed):
    from uidla.rng import RngStream
    rng = RngStream(seed)
    assert len(idla_from_origin(3, k, rng)) == k
    assert len(richardson(origin_aggregate(3), k, rng)) == k + 1
    assert len(uidla(None, k, rng, d=4)[0]) == k + 1
    assert len(subset_uidla(origin_aggregate(2), 5, k, rng)) <= k + 1
    assert ball_volume(3, 0) == 1
