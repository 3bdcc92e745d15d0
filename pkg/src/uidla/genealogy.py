"""Genealogical forests, first-passage reaching times and the Yule reference tree."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .rng import RngStream

# support {0,1,2,...}; "param-half" has success probability 1/2 (mean 1),
# "mean-half" has success probability 2/3 (mean 1/2)
GEOM_CONVENTIONS = {"param-half": 0.5, "mean-half": 2.0 / 3.0}


def geometric_pmf(k: int, convention: str = "param-half") -> float:
    p = GEOM_CONVENTIONS[convention]
    return p * (1.0 - p) ** k


def geometric_mean(convention: str = "param-half") -> float:
    p = GEOM_CONVENTIONS[convention]
    return (1.0 - p) / p


@dataclass
class GenealogyForest:
    """Rooted forest over particle indices.

    ``parent[i] = -1`` for roots; every other vertex has a parent with a
    smaller index. ``sites[i]`` is the lattice site of vertex i and
    ``edge_weight[i]`` the weight of the edge into i (-1 while unassigned,
    0 for roots once assigned).
    """

    parent: np.ndarray
    depth: np.ndarray
    sites: np.ndarray | None = None
    edge_weight: np.ndarray | None = None
    convention: str | None = field(default=None)

    @classmethod
    def from_parents(cls, parent, sites=None, n_roots: int | None = None) -> "GenealogyForest":
        parent = np.asarray(parent, dtype=np.int64).copy()
        n = len(parent)
        idx = np.arange(n)
        if n_roots is not None:
            parent[:n_roots] = -1
        nonroot = parent >= 0
        if np.any(parent[nonroot] >= idx[nonroot]):
            raise ValueError("every parent must precede its child")
        depth = np.zeros(n, dtype=np.int64)
        for i in np.nonzero(nonroot)[0]:
            depth[i] = depth[parent[i]] + 1
        return cls(parent, depth, sites)

    def __len__(self) -> int:
        return len(self.parent)

    @property
    def n_roots(self) -> int:
        return int((self.parent < 0).sum())

    @property
    def n_edges(self) -> int:
        return int((self.parent >= 0).sum())

    def children_count(self) -> np.ndarray:
        nonroot = self.parent[self.parent >= 0]
        return np.bincount(nonroot, minlength=len(self))


def assign_edge_weights(F: GenealogyForest, rng: RngStream,
                        convention: str = "param-half") -> GenealogyForest:
    """Independent geometric weights on {0,1,...} for every edge (in place)."""
    if F.edge_weight is not None:
        raise ValueError("edge weights are already assigned")
    if convention not in GEOM_CONVENTIONS:
        raise ValueError(f"unknown geometric convention {convention!r}")
    w = np.zeros(len(F), dtype=np.int64)
    edges = F.parent >= 0
    if edges.any():
        # numpy's geometric counts trials, support {1,2,...}
        w[edges] = rng.generator.geometric(GEOM_CONVENTIONS[convention], size=int(edges.sum())) - 1
    F.edge_weight = w
    F.convention = convention
    return F


def reaching_times(F: GenealogyForest) -> np.ndarray:
    """Sum of edge weights on each root-to-vertex path."""
    if F.edge_weight is None:
        raise ValueError("edge weights have not been assigned")
    rt = np.zeros(len(F), dtype=np.int64)
    parent, w = F.parent, F.edge_weight
    for i in np.nonzero(parent >= 0)[0]:
        rt[i] = rt[parent[i]] + w[i]
    return rt


def max_reaching_time(F: GenealogyForest) -> int:
    if F.edge_weight is None and F.n_edges == 0:
        return 0
    rt = reaching_times(F)
    return int(rt.max()) if len(rt) else 0


def forest_rows(F: GenealogyForest):
    """Rows ``index,parent_index,site_coords,edge_weight,depth,reaching_time``."""
    rt = reaching_times(F) if F.edge_weight is not None else None
    for i in range(len(F)):
        site = "" if F.sites is None else " ".join(str(int(v)) for v in F.sites[i])
        yield (i, int(F.parent[i]), site,
               "" if F.edge_weight is None else int(F.edge_weight[i]),
               int(F.depth[i]), "" if rt is None else int(rt[i]))


FOREST_HEADER = ("index", "parent_index", "site_coords", "edge_weight", "depth", "reaching_time")


# -- continuous-time reference tree ------------------------------------------

@dataclass
class YuleTree:
    """Every vertex spawns a child at rate 1; vertex 0 is the root, born at 0."""

    birth_times: np.ndarray
    parent: np.ndarray
    depth: np.ndarray
    horizon: float

    def __len__(self) -> int:
        return len(self.birth_times)

    def level_counts(self, t: float | None = None, kmax: int | None = None) -> np.ndarray:
        """X_t(k) for k = 0..kmax: vertices born by time t at graph distance k."""
        t = self.horizon if t is None else t
        if t > self.horizon + 1e-12:
            raise ValueError(f"tree was grown only up to time {self.horizon}")
        alive = self.depth[self.birth_times <= t]
        top = int(alive.max()) if kmax is None else int(kmax)
        return np.bincount(alive, minlength=top + 1)[: top + 1]

    def size_at(self, t: float) -> int:
        return int((self.birth_times <= t).sum())


def grow_yule(rng: RngStream, n_target: int | None = None, t_target: float | None = None) -> YuleTree:
    """Grow until ``n_target`` vertices exist or time ``t_target`` is reached."""
    if (n_target is None) == (t_target is None):
        raise ValueError("set exactly one of n_target and t_target")
    gen = rng.generator
    births = [0.0]
    parent = [-1]
    depth = [0]
    t = 0.0
    while True:
        size = len(births)
        if n_target is not None and size >= n_target:
            break
        t_next = t + gen.exponential(1.0 / size)
        if t_target is not None and t_next > t_target:
            break
        t = t_next
        j = int(gen.integers(0, size))
        births.append(t)
        parent.append(j)
        depth.append(depth[j] + 1)
    horizon = float(t_target) if t_target is not None else t
    return YuleTree(np.array(births), np.array(parent, dtype=np.int64),
                    np.array(depth, dtype=np.int64), horizon)


def yule_level_mean(t: float, k: int) -> float:
    """E[X_t(k)] = t^k / k!."""
    return t ** k / math.factorial(k)


def recursive_tree_root_degree_pmf(n: int) -> np.ndarray:
    """Exact root-degree law of a random recursive tree on n vertices.

    Vertex i (i = 2..n) attaches to the root with probability 1/(i-1),
    independently, so the law is a convolution of Bernoulli variables.
    """
    pmf = np.zeros(n)
    pmf[0] = 1.0
    for i in range(2, n + 1):
        q = 1.0 / (i - 1)
        nxt = pmf * (1 - q)
        nxt[1:] += pmf[:-1] * q
        pmf = nxt
    return pmf
