"""Growth processes built on the Add primitive.

``add_particle`` and the ``*_into`` variants mutate their aggregate; the
other processes copy the initial set and return a fresh aggregate.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from . import _kernels as K
from .genealogy import GenealogyForest
from .lattice import Aggregate, origin_aggregate
from .rng import RngStream
from .walk import MAX_WALK_STEPS, ladder_for, walk_until_exit

PROCESSES = ("idla", "uidla", "subset", "richardson")


def add_particle(S: Aggregate, start, rng: RngStream, accel: bool = True) -> Aggregate:
    """S ∪ {first exit point of a walk from ``start``}; a start off S lands in place.

    ``S`` is modified in place and returned.
    """
    y = walk_until_exit(start, S, rng, accel)
    added = S.add(y)
    assert added, "exit point was already occupied"
    return S


def _drive(agg: Aggregate, call) -> None:
    while agg.handle_status(call()):
        pass


def idla(S0: Aggregate | None, X: Sequence[Sequence[int]] | np.ndarray, rng: RngStream,
         accel: bool = True, d: int | None = None) -> Aggregate:
    """Launch one particle from each point of the multiset ``X``, in the given order.

    ``S0=None`` starts from the empty set (then ``d`` or the shape of X gives the
    dimension).
    """
    X = np.asarray(X, dtype=np.int64)
    if S0 is None:
        dim = d if d is not None else X.shape[1]
        agg = Aggregate(dim, capacity=len(X) + 4)
    else:
        agg = S0.copy()
    return idla_into(agg, X, rng, accel)


def idla_into(agg: Aggregate, X, rng: RngStream, accel: bool = True) -> Aggregate:
    """In-place variant of :func:`idla`."""
    X = np.ascontiguousarray(np.asarray(X, dtype=np.int64).reshape(-1, agg.d))
    if len(X):
        agg._ensure_half(int(np.abs(X).max()))
    agg._ensure_capacity(len(agg) + len(X))
    progress = np.zeros(1, dtype=np.int64)
    ladder = ladder_for(agg.d, accel)
    _drive(agg, lambda: K.idla_batch(X, progress, agg.grid, agg.half, agg.strides, agg.sites,
                                     agg.meta, agg.occ, agg.shell, accel, *ladder.args(),
                                     rng.generator, MAX_WALK_STEPS))
    return agg


def idla_from_origin(d: int, k: int, rng: RngStream, accel: bool = True,
                     S0: Aggregate | None = None) -> Aggregate:
    """DA_k(S0): k particles from the origin, S0 empty by default."""
    return idla(S0, np.zeros((int(k), d), dtype=np.int64), rng, accel, d=d)


def uidla(S0: Aggregate | None, k: int, rng: RngStream, accel: bool = True,
          d: int = 2, stats_every: int = 0, on_stats=None) -> tuple[Aggregate, GenealogyForest]:
    """Add k particles, each started at a uniform site of the current aggregate.

    With ``S0=None`` the run starts from {0} in dimension ``d``. The forest links
    each particle's starting site to the site it occupies; roots are the sites
    of S0 (indices 0..|S0|-1). ``on_stats(agg)`` is called every ``stats_every``
    additions when set.
    """
    agg = origin_aggregate(d) if S0 is None else S0.copy()
    if not len(agg):
        raise ValueError("uIDLA needs a nonempty initial aggregate")
    n0 = len(agg)
    total = n0 + int(k)
    agg._ensure_capacity(total)
    parent = -np.ones(max(agg.sites.shape[0], total), dtype=np.int64)
    ladder = ladder_for(agg.d, accel)
    chunk = int(stats_every) if stats_every and stats_every > 0 else int(k)
    target = n0
    while target < total:
        target = min(total, target + max(chunk, 1))

        def call(t=target):
            return K.uidla_batch(t, agg.grid, agg.half, agg.strides, agg.sites, agg.meta,
                                 agg.occ, agg.shell, parent, accel, *ladder.args(),
                                 rng.generator, MAX_WALK_STEPS)

        _drive(agg, call)
        if on_stats is not None:
            on_stats(agg)
    forest = GenealogyForest.from_parents(parent[:total], agg.points().copy(), n_roots=n0)
    return agg, forest


def acceptance_probability(size_E: int, m: int, tick: int) -> Fraction:
    """Exact acceptance probability |E_n| / (m + n) of the subset process."""
    return Fraction(int(size_E), int(m) + int(tick))


def subset_uidla(E: Aggregate, m: int, k_ticks: int, rng: RngStream,
                 accel: bool = True) -> Aggregate:
    """Trace on E of a uIDLA running on a host of size m.

    At tick n a Bernoulli(|E_n|/(m+n)) draw decides whether a particle started
    uniformly on E_n is added.
    """
    if m < len(E):
        raise ValueError(f"host size m={m} is smaller than |E|={len(E)}")
    return subset_into(E.copy(), m, 0, k_ticks, rng, accel)


def subset_into(agg: Aggregate, m: int, tick0: int, tick_end: int, rng: RngStream,
                accel: bool = True) -> Aggregate:
    """Run ticks ``tick0 .. tick_end-1`` of the subset process in place."""
    if not len(agg) or tick_end <= tick0:
        return agg
    tick = np.array([tick0], dtype=np.int64)
    ladder = ladder_for(agg.d, accel)
    _drive(agg, lambda: K.subset_batch(int(m), tick, int(tick_end), agg.grid, agg.half,
                                       agg.strides, agg.sites, agg.meta, agg.occ, agg.shell,
                                       accel, *ladder.args(), rng.generator, MAX_WALK_STEPS))
    return agg


def richardson(S0: Aggregate, k: int, rng: RngStream) -> Aggregate:
    """Add k sites, each boundary site chosen with weight = its occupied neighbours."""
    if not len(S0):
        raise ValueError("Richardson growth needs a nonempty initial set")
    return richardson_into(S0.copy(), k, rng)


def richardson_into(agg: Aggregate, k: int, rng: RngStream) -> Aggregate:
    target = len(agg) + int(k)
    agg._ensure_capacity(target)
    _drive(agg, lambda: K.richardson_batch(target, agg.grid, agg.half, agg.strides, agg.sites,
                                           agg.meta, agg.occ, agg.shell, rng.generator))
    return agg


def boundary_weights(S: Aggregate) -> dict[tuple[int, ...], int]:
    """Vacant neighbours of S with their number of occupied neighbours."""
    from .lattice import neighbour_offsets
    out: dict[tuple[int, ...], int] = {}
    occupied = S.as_set()
    for p in occupied:
        for off in neighbour_offsets(S.d):
            q = tuple(int(a + b) for a, b in zip(p, off))
            if q not in occupied:
                out[q] = out.get(q, 0) + 1
    return out


@dataclass
class MiddlePointTrace:
    """Midpoints of the 1-d uIDLA interval, stored doubled as integers."""

    twice: np.ndarray

    @property
    def values(self) -> np.ndarray:
        return self.twice / 2.0

    def increments(self) -> np.ndarray:
        return np.diff(self.values)


def uidla_1d_middle(k: int, rng: RngStream, accel: bool = False) -> MiddlePointTrace:
    """Midpoint M_0..M_k of the interval grown by k uIDLA steps from {0}."""
    agg, _ = uidla(None, k, rng, accel, d=1)
    x = agg.points()[:, 0]
    lo = np.minimum.accumulate(x)
    hi = np.maximum.accumulate(x)
    return MiddlePointTrace((lo + hi).astype(np.int64))
