"""Numba hot loops shared by the walk engine and the growth processes.

Aggregate state travels as raw arrays so every kernel works for any d:

    grid     flat uint8 occupancy over the box [-half, half]^d
    strides  int64[d], C order
    sites    int64[cap, d], insertion order
    meta     int64[META_LEN] (see the index constants below)
    occ      int64[half^2 + 1], occupied sites per squared norm
    shell    int64[half^2 + 1], lattice points per squared norm

The ``RHO2`` slot is the smallest squared norm that still has an unoccupied
lattice point, so every point with a smaller squared norm is occupied.
Acceleration ladders are concatenated centre-start exit kernels:
``k_radii[i]`` owns rows ``k_start[i]:k_start[i+1]`` of ``k_off``/``k_cdf``.
"""
from __future__ import annotations

import numpy as np
from numba import njit

N_SITES, RHO2, MAX_NORM2, MAX_SUP, STEPS, JUMPS = range(6)
META_LEN = 6

OK, NEED_GROW, NEED_CAPACITY, ABORTED = 0, 1, 2, 3

# a walk never lands more than one lattice unit beyond the current support
GRID_MARGIN = 3


@njit(cache=True)
def flat_index(pos, half, strides):
    idx = 0
    for i in range(pos.shape[0]):
        c = pos[i]
        if c < -half or c > half:
            return -1
        idx += (c + half) * strides[i]
    return idx


@njit(cache=True)
def is_occupied(grid, pos, half, strides):
    idx = flat_index(pos, half, strides)
    return idx >= 0 and grid[idx] != 0


@njit(cache=True)
def norm2(pos):
    s = 0
    for i in range(pos.shape[0]):
        s += pos[i] * pos[i]
    return s


@njit(cache=True)
def insert_site(pos, grid, half, strides, sites, meta, occ, shell):
    d = pos.shape[0]
    grid[flat_index(pos, half, strides)] = 1
    n = meta[N_SITES]
    sup = 0
    for i in range(d):
        sites[n, i] = pos[i]
        a = abs(pos[i])
        if a > sup:
            sup = a
    meta[N_SITES] = n + 1
    n2 = norm2(pos)
    if n2 > meta[MAX_NORM2]:
        meta[MAX_NORM2] = n2
    if sup > meta[MAX_SUP]:
        meta[MAX_SUP] = sup
    kmax = occ.shape[0] - 1
    if n2 <= kmax:
        occ[n2] += 1
        p = meta[RHO2]
        while p <= kmax and occ[p] == shell[p]:
            p += 1
        meta[RHO2] = p


@njit(cache=True)
def walk_exit(pos, grid, half, strides, rho2, k_radii, k_start, k_off, k_cdf,
              gen, max_steps, meta):
    """Move ``pos`` in place to the first site off the occupied set.

    Jumps through a ladder kernel only when the whole jump ball lies inside the
    region of squared norm below ``rho2``. Returns the largest squared norm seen
    at any simulated position (exit point included), or -1 on abort.
    """
    d = pos.shape[0]
    nk = k_radii.shape[0]
    rho = np.sqrt(rho2)
    steps = 0
    jumps = 0
    best = norm2(pos)
    while is_occupied(grid, pos, half, strides):
        if steps + jumps >= max_steps:
            meta[STEPS] += steps
            meta[JUMPS] += jumps
            return -1
        n2 = norm2(pos)
        if nk > 0 and n2 < rho2:
            room = rho - np.sqrt(n2) - 1e-9
            kk = nk - 1
            while kk >= 0 and k_radii[kk] >= room:
                kk -= 1
            if kk >= 0:
                lo = k_start[kk]
                hi = k_start[kk + 1]
                u = gen.random()
                j = lo + np.searchsorted(k_cdf[lo:hi], u, side="right")
                if j >= hi:
                    j = hi - 1
                for i in range(d):
                    pos[i] += k_off[j, i]
                jumps += 1
                n2 = norm2(pos)
                if n2 > best:
                    best = n2
                continue
        u = gen.integers(0, 2 * d)
        if u & 1:
            pos[u >> 1] += 1
        else:
            pos[u >> 1] -= 1
        steps += 1
        n2 = norm2(pos)
        if n2 > best:
            best = n2
    meta[STEPS] += steps
    meta[JUMPS] += jumps
    return best


@njit(cache=True)
def sample_exits(start, n_walks, grid, half, strides, rho2, k_radii, k_start, k_off,
                 k_cdf, gen, max_steps, meta, out, out_max2):
    """Run ``n_walks`` independent walks from ``start``; exits go to ``out``."""
    d = start.shape[0]
    pos = np.empty(d, np.int64)
    for w in range(n_walks):
        for i in range(d):
            pos[i] = start[i]
        best = walk_exit(pos, grid, half, strides, rho2, k_radii, k_start, k_off,
                         k_cdf, gen, max_steps, meta)
        if best < 0:
            return ABORTED
        for i in range(d):
            out[w, i] = pos[i]
        out_max2[w] = best
    return OK


@njit(cache=True)
def sample_exits_multi(starts, grid, half, strides, rho2, k_radii, k_start, k_off,
                       k_cdf, gen, max_steps, meta, out, out_max2):
    """One walk per row of ``starts``."""
    d = starts.shape[1]
    pos = np.empty(d, np.int64)
    for w in range(starts.shape[0]):
        for i in range(d):
            pos[i] = starts[w, i]
        best = walk_exit(pos, grid, half, strides, rho2, k_radii, k_start, k_off,
                         k_cdf, gen, max_steps, meta)
        if best < 0:
            return ABORTED
        for i in range(d):
            out[w, i] = pos[i]
        out_max2[w] = best
    return OK


@njit(cache=True)
def uidla_batch(n_target, grid, half, strides, sites, meta, occ, shell, parent,
                accel_on, k_radii, k_start, k_off, k_cdf, gen, max_steps):
    d = sites.shape[1]
    pos = np.empty(d, np.int64)
    cap = sites.shape[0]
    while meta[N_SITES] < n_target:
        if meta[N_SITES] >= cap:
            return NEED_CAPACITY
        if meta[MAX_SUP] > half - GRID_MARGIN:
            return NEED_GROW
        n = meta[N_SITES]
        j = gen.integers(0, n)
        for i in range(d):
            pos[i] = sites[j, i]
        rho2 = meta[RHO2] if accel_on else 0
        if walk_exit(pos, grid, half, strides, rho2, k_radii, k_start, k_off, k_cdf,
                     gen, max_steps, meta) < 0:
            return ABORTED
        parent[n] = j
        insert_site(pos, grid, half, strides, sites, meta, occ, shell)
    return OK


@njit(cache=True)
def idla_batch(starts, progress, grid, half, strides, sites, meta, occ, shell,
               accel_on, k_radii, k_start, k_off, k_cdf, gen, max_steps):
    """Launch ``starts[progress[0]:]`` in order; a start off the set lands in place."""
    d = sites.shape[1]
    pos = np.empty(d, np.int64)
    cap = sites.shape[0]
    while progress[0] < starts.shape[0]:
        if meta[N_SITES] >= cap:
            return NEED_CAPACITY
        if meta[MAX_SUP] > half - GRID_MARGIN:
            return NEED_GROW
        for i in range(d):
            pos[i] = starts[progress[0], i]
        rho2 = meta[RHO2] if accel_on else 0
        if walk_exit(pos, grid, half, strides, rho2, k_radii, k_start, k_off, k_cdf,
                     gen, max_steps, meta) < 0:
            return ABORTED
        insert_site(pos, grid, half, strides, sites, meta, occ, shell)
        progress[0] += 1
    return OK


@njit(cache=True)
def subset_batch(m, tick, k_ticks, grid, half, strides, sites, meta, occ, shell,
                 accel_on, k_radii, k_start, k_off, k_cdf, gen, max_steps):
    """Ticks ``tick[0] .. k_ticks-1`` of the subset process with host size m."""
    d = sites.shape[1]
    pos = np.empty(d, np.int64)
    cap = sites.shape[0]
    while tick[0] < k_ticks:
        if meta[N_SITES] >= cap:
            return NEED_CAPACITY
        if meta[MAX_SUP] > half - GRID_MARGIN:
            return NEED_GROW
        n = meta[N_SITES]
        p = n / (m + tick[0])
        if gen.random() < p:
            j = gen.integers(0, n)
            for i in range(d):
                pos[i] = sites[j, i]
            rho2 = meta[RHO2] if accel_on else 0
            if walk_exit(pos, grid, half, strides, rho2, k_radii, k_start, k_off,
                         k_cdf, gen, max_steps, meta) < 0:
                return ABORTED
            insert_site(pos, grid, half, strides, sites, meta, occ, shell)
        tick[0] += 1
    return OK


@njit(cache=True)
def richardson_batch(n_target, grid, half, strides, sites, meta, occ, shell, gen):
    """Embedded jump chain: a uniform (occupied site, direction) pair pointing at a
    vacant site selects that site with weight equal to its occupied-neighbour count."""
    d = sites.shape[1]
    pos = np.empty(d, np.int64)
    cap = sites.shape[0]
    while meta[N_SITES] < n_target:
        if meta[N_SITES] >= cap:
            return NEED_CAPACITY
        if meta[MAX_SUP] > half - GRID_MARGIN:
            return NEED_GROW
        n = meta[N_SITES]
        while True:
            j = gen.integers(0, n)
            u = gen.integers(0, 2 * d)
            for i in range(d):
                pos[i] = sites[j, i]
            if u & 1:
                pos[u >> 1] += 1
            else:
                pos[u >> 1] -= 1
            if not is_occupied(grid, pos, half, strides):
                break
        insert_site(pos, grid, half, strides, sites, meta, occ, shell)
    return OK


@njit(cache=True)
def topple_sweeps(mass, odo, nbr, tol, max_sweeps):
    """Sequential divisible-sandpile sweeps over a flat box.

    ``nbr`` is int64[cells, 2d] of neighbour indices, -1 on the box edge. A site
    holding mass above 1 keeps 1 and hands the excess out equally. Returns the
    number of sweeps that moved mass, or -1 if mass reached the box edge, or -2 on non-convergence.
    """
    cells = mass.shape[0]
    deg = nbr.shape[1]
    for sweep in range(max_sweeps):
        worst = 0.0
        for c in range(cells):
            e = mass[c] - 1.0
            if e > 0.0:
                if e > worst:
                    worst = e
                # bail out before moving anything so the caller can regrow cleanly
                for k in range(deg):
                    if nbr[c, k] < 0:
                        return -1
                share = e / deg
                for k in range(deg):
                    mass[nbr[c, k]] += share
                mass[c] = 1.0
                odo[c] += e
        if worst < tol:
            return sweep + 1 if worst > 0.0 else sweep
    return -2
