"""Independent reference computations used to check the simulators.

Nothing here calls the walk kernels or the sparse solver: path laws come from
enumeration, exit laws from iterating the walk's mass forward, and the d=1
process laws from gambler's-ruin formulas in exact rational arithmetic.
"""
from __future__ import annotations

import itertools
from fractions import Fraction

import numpy as np

from .lattice import ball_points, neighbour_offsets


def srw_path_law(k: int) -> dict[tuple[int, ...], Fraction]:
    """Law of (S_1..S_k) for a +-1 simple random walk from 0: each path has mass 2^-k."""
    out = {}
    for steps in itertools.product((-1, 1), repeat=k):
        out[tuple(itertools.accumulate(steps))] = Fraction(1, 2 ** k)
    return out


def exit_distribution_mass(points: np.ndarray, starts: np.ndarray, tol: float = 1e-15,
                           max_iter: int = 1_000_000):
    """Exit law of the region ``points`` by pushing probability mass one step at a time.

    Returns ``(exits, table)`` with ``table[i, j]`` the probability that a walk
    from ``starts[i]`` leaves the region at ``exits[j]``. Iterates until the mass
    still inside is below ``tol``.
    """
    points = np.asarray(points, dtype=np.int64)
    d = points.shape[1]
    index = {tuple(p): i for i, p in enumerate(points.tolist())}
    exit_index: dict[tuple[int, ...], int] = {}
    offs = neighbour_offsets(d)
    n = len(points)
    inner_nbr = np.full((n, 2 * d), -1, dtype=np.int64)
    outer_nbr = np.full((n, 2 * d), -1, dtype=np.int64)
    for i, p in enumerate(points):
        for j, off in enumerate(offs):
            q = tuple(int(v) for v in p + off)
            if q in index:
                inner_nbr[i, j] = index[q]
            else:
                outer_nbr[i, j] = exit_index.setdefault(q, len(exit_index))
    starts = np.asarray(starts, dtype=np.int64).reshape(-1, d)
    # a start outside the region exits where it stands
    outside = [(s, exit_index.setdefault(tuple(x), len(exit_index)))
               for s, x in enumerate(starts.tolist()) if tuple(x) not in index]
    mass = np.zeros((n, len(starts)))
    table = np.zeros((len(exit_index), len(starts)))
    for s, x in enumerate(starts.tolist()):
        if tuple(x) in index:
            mass[index[tuple(x)], s] = 1.0
    for s, j in outside:
        table[j, s] = 1.0
    share = 1.0 / (2 * d)
    for _ in range(max_iter):
        if mass.sum(axis=0).max() < tol:
            break
        moved = mass * share
        nxt = np.zeros_like(mass)
        for j in range(2 * d):
            inner = inner_nbr[:, j] >= 0
            np.add.at(nxt, inner_nbr[inner, j], moved[inner])
            np.add.at(table, outer_nbr[~inner, j], moved[~inner])
        mass = nxt
    else:
        raise RuntimeError("mass propagation did not converge")
    exits = np.array(sorted(exit_index, key=exit_index.get), dtype=np.int64).reshape(-1, d)
    return exits, table.T


def ball_exit_mass(d: int, r: int, starts=None):
    """Exit law of B[r] by mass propagation; starts default to every point of B[r]."""
    pts = ball_points(d, r)
    return exit_distribution_mass(pts, pts if starts is None else starts)


# -- exact d=1 laws -------------------------------------------------------------------

def interval_exit(lo: int, hi: int, x: int) -> tuple[Fraction, Fraction]:
    """P(exit at lo-1), P(exit at hi+1) for a walk from x in [lo, hi]."""
    if not lo <= x <= hi:
        raise ValueError("start must lie in the interval")
    right = Fraction(x - lo + 1, hi - lo + 2)
    return 1 - right, right


def _add_from(lo: int, hi: int, x: int):
    left, right = interval_exit(lo, hi, x)
    return ((lo - 1, hi), left), ((lo, hi + 1), right)


def uidla_1d_law(k: int, lo: int = 0, hi: int = 0) -> dict[tuple[int, int], Fraction]:
    """Exact law of the interval after k uIDLA steps from [lo, hi]."""
    law = {(lo, hi): Fraction(1)}
    for _ in range(k):
        nxt: dict[tuple[int, int], Fraction] = {}
        for (a, b), p in law.items():
            size = b - a + 1
            for x in range(a, b + 1):
                for iv, q in _add_from(a, b, x):
                    nxt[iv] = nxt.get(iv, 0) + p * q / size
        law = nxt
    return law


def subset_1d_law(lo: int, hi: int, m: int, k_ticks: int) -> dict[tuple[int, int], Fraction]:
    """Exact law of the subset process on an interval E=[lo,hi] with host size m."""
    law = {(lo, hi): Fraction(1)}
    for n in range(k_ticks):
        nxt: dict[tuple[int, int], Fraction] = {}
        for (a, b), p in law.items():
            size = b - a + 1
            accept = Fraction(size, m + n)
            if accept < 1:
                nxt[(a, b)] = nxt.get((a, b), 0) + p * (1 - accept)
            for x in range(a, b + 1):
                for iv, q in _add_from(a, b, x):
                    nxt[iv] = nxt.get(iv, 0) + p * accept * q / size
        law = nxt
    return law


def tricolor_hand_law() -> tuple[dict[frozenset, Fraction], dict[frozenset, Fraction]]:
    """Blue and red-or-blue laws for E={0}, F={-1,0}, one particle, d=1.

    Start at -1 (red, prob 1/2): a black particle settles, colours unchanged.
    Start at 0 (blue, prob 1/2): it exits {0} at +1 or -1. At +1 nothing else
    happens. At -1 the displaced red particle walks in {-1,0} from -1 and
    leaves at -2 w.p. 2/3 or at +1 w.p. 1/3.
    """
    h = Fraction(1, 2)
    blue = {frozenset({0}): h, frozenset({0, 1}): h * h, frozenset({-1, 0}): h * h}
    redblue = {
        frozenset({-1, 0}): h,
        frozenset({-1, 0, 1}): h * h + h * h * Fraction(1, 3),
        frozenset({-2, -1, 0}): h * h * Fraction(2, 3),
    }
    return blue, redblue
