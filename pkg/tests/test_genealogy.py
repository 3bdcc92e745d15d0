import itertools
import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from _stats import ALPHA, law_pvalue
from uidla.genealogy import (GEOM_CONVENTIONS, GenealogyForest, assign_edge_weights, forest_rows,
                             geometric_mean, geometric_pmf, grow_yule, max_reaching_time,
                             reaching_times, recursive_tree_root_degree_pmf, yule_level_mean)
from uidla.processes import uidla
from uidla.rng import RngStream


def test_from_parents_rejects_forward_links():
    with pytest.raises(ValueError):
        GenealogyForest.from_parents([-1, 2, 0])


def test_depths():
    F = GenealogyForest.from_parents([-1, 0, 1, 1, -1, 4])
    assert F.depth.tolist() == [0, 1, 2, 2, 0, 1]
    assert F.n_roots == 2 and F.n_edges == 4
    assert F.children_count().tolist() == [1, 2, 0, 0, 1, 0]


@pytest.mark.parametrize("conv", sorted(GEOM_CONVENTIONS))
def test_geometric_pmf_normalised(conv):
    total = sum(geometric_pmf(k, conv) for k in range(200))
    assert total == pytest.approx(1.0, abs=1e-12)
    mean = sum(k * geometric_pmf(k, conv) for k in range(400))
    assert mean == pytest.approx(geometric_mean(conv), abs=1e-12)


def test_single_edge_weight_law(rng):
    assert [geometric_pmf(k) for k in range(3)] == [0.5, 0.25, 0.125]
    draws = []
    for _ in range(20_000):
        F = GenealogyForest.from_parents([-1, 0])
        draws.append(int(assign_edge_weights(F, rng).edge_weight[1]))
    law = {k: geometric_pmf(k) for k in range(6)}
    law["tail"] = 1 - sum(law.values())
    assert law_pvalue([d if d < 6 else "tail" for d in draws], law) > ALPHA


@pytest.mark.parametrize("conv", sorted(GEOM_CONVENTIONS))
def test_many_edges_mean(rng, conv):
    n = 100_000
    F = GenealogyForest.from_parents(np.arange(-1, n))
    w = assign_edge_weights(F, rng, conv).edge_weight[1:]
    p = GEOM_CONVENTIONS[conv]
    sd = math.sqrt((1 - p) / p ** 2 / n)
    assert abs(w.mean() - geometric_mean(conv)) < 4 * sd


def test_empty_and_root_only_forests(rng):
    F = GenealogyForest.from_parents(np.zeros(0, dtype=np.int64))
    assign_edge_weights(F, rng)
    assert len(F.edge_weight) == 0
    R = GenealogyForest.from_parents([-1, -1, -1])
    assert max_reaching_time(R) == 0
    assign_edge_weights(R, rng)
    assert reaching_times(R).tolist() == [0, 0, 0]


def test_weights_assigned_once(rng):
    F = GenealogyForest.from_parents([-1, 0])
    assign_edge_weights(F, rng)
    with pytest.raises(ValueError):
        assign_edge_weights(F, rng)
    with pytest.raises(ValueError):
        assign_edge_weights(GenealogyForest.from_parents([-1, 0]), rng, "nope")
    with pytest.raises(ValueError):
        reaching_times(GenealogyForest.from_parents([-1, 0]))


def test_reaching_time_examples():
    chain = GenealogyForest.from_parents([-1, 0, 1, 2])
    chain.edge_weight = np.array([0, 1, 0, 2])
    assert reaching_times(chain).tolist() == [0, 1, 1, 3]
    star = GenealogyForest.from_parents([-1, 0, 0, 0])
    star.edge_weight = np.array([0, 0, 3, 1])
    assert max_reaching_time(star) == 3


@given(st.lists(st.integers(0, 10 ** 6), min_size=1, max_size=60), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=50, deadline=None)
def test_reaching_times_monotone_along_edges(raw, seed):
    parent = [-1] + [r % (i + 1) for i, r in enumerate(raw)]
    F = assign_edge_weights(GenealogyForest.from_parents(parent), RngStream(seed))
    rt = reaching_times(F)
    kids = np.nonzero(F.parent >= 0)[0]
    assert (rt[kids] >= rt[F.parent[kids]]).all()
    assert (rt[kids] - rt[F.parent[kids]] == F.edge_weight[kids]).all()
    assert (F.depth[kids] == F.depth[F.parent[kids]] + 1).all()


def test_forest_rows(rng):
    _, F = uidla(None, 5, rng, d=2)
    assign_edge_weights(F, rng)
    rows = list(forest_rows(F))
    assert len(rows) == 6
    assert rows[0][:3] == (0, -1, "0 0")
    rt = reaching_times(F)
    assert [r[5] for r in rows] == rt.tolist()


def test_yule_examples(rng):
    t0 = grow_yule(rng, t_target=0.0)
    assert len(t0) == 1 and t0.level_counts(0.0).tolist() == [1]
    tree = grow_yule(rng, t_target=1.5)
    assert (np.diff(tree.birth_times) > 0).all()
    assert tree.level_counts(1.5)[0] == 1
    with pytest.raises(ValueError):
        tree.level_counts(2.0)
    assert len(grow_yule(rng, n_target=50)) == 50
    with pytest.raises(ValueError):
        grow_yule(rng)


def test_yule_total_size_mean(rng):
    sizes = np.array([len(grow_yule(rng, t_target=2.0)) for _ in range(10_000)])
    # size at time t is geometric with mean e^t and variance e^t (e^t - 1)
    mu = math.exp(2)
    sd = math.sqrt(mu * (mu - 1) / len(sizes))
    assert abs(sizes.mean() - mu) < 4 * sd


def test_yule_level_two_at_time_one(rng):
    x = np.array([grow_yule(rng, t_target=1.0).level_counts(1.0, 2)[2] for _ in range(10_000)])
    assert yule_level_mean(1.0, 2) == 0.5
    assert abs(x.mean() - 0.5) < 4 * x.std(ddof=1) / math.sqrt(len(x))


def test_recursive_tree_root_degree_by_enumeration():
    # vertex i picks a parent uniformly among 0..i-1
    for n in range(1, 8):
        counts = Counter()
        for choice in itertools.product(*[range(i) for i in range(1, n)]):
            counts[sum(1 for c in choice if c == 0)] += 1
        total = math.factorial(n - 1)
        exact = [counts[k] / total for k in range(n)]
        assert recursive_tree_root_degree_pmf(n) == pytest.approx(exact, abs=1e-14)


def test_uidla_genealogy_is_a_recursive_tree(rng):
    # a uniform start site means a uniform parent among earlier particles
    n = 8
    degs = []
    for _ in range(20_000):
        _, F = uidla(None, n - 1, rng, d=2)
        degs.append(int(F.children_count()[0]))
    pmf = recursive_tree_root_degree_pmf(n)
    assert law_pvalue(degs, {k: p for k, p in enumerate(pmf) if p > 0}) > ALPHA
