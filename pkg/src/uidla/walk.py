"""Simple random walk engine and exact exit kernels.

Exit distributions are solved exactly from the discrete Dirichlet problem.
``build_exit_kernel`` gives the full table for every start inside a small ball;
the acceleration ladder only needs the row for the centre, which stays cheap
for much larger radii and is cached on disk.
"""
from __future__ import annotations

import functools
import hashlib
import logging
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _kernels as K
from .errors import ConfigError, WalkAbort
from .io import atomic_write_bytes
from .lattice import Aggregate, ball_points, neighbour_offsets, _check_dim
from .rng import RngStream

log = logging.getLogger(__name__)

MAX_WALK_STEPS = 10 ** 10
MAX_TABLE_RADIUS = 8
MAX_TABLE_ENTRIES = 50_000_000

# centre-kernel radii used to jump through the inscribed ball
LADDERS = {
    1: (1, 2, 4, 8, 16, 32, 64, 128),
    2: (1, 2, 3, 4, 6, 8, 12, 16, 24, 32, 48, 64, 96, 128),
    3: (1, 2, 3, 4, 6, 8, 12, 16, 24),
    4: (1, 2, 3, 4, 6, 8, 12),
}

CACHE_MAGIC = b"UIDLAEK\x00"
CACHE_VERSION = 1


@dataclass
class WalkState:
    position: np.ndarray
    step_count: int = 0
    approximate: bool = False


def srw_step(w: WalkState, rng: RngStream) -> WalkState:
    """One nearest-neighbour step, each of the 2d directions with probability 1/(2d)."""
    d = len(w.position)
    u = int(rng.generator.integers(0, 2 * d))
    pos = np.array(w.position, dtype=np.int64)
    pos[u >> 1] += 1 if u & 1 else -1
    return WalkState(pos, w.step_count + 1, w.approximate)


# -- exact harmonic measure --------------------------------------------------

def _index_map(points: np.ndarray):
    lo = points.min(axis=0) - 1
    shape = tuple(points.max(axis=0) - lo + 2)
    lookup = -np.ones(shape, dtype=np.int64)
    lookup[tuple((points - lo).T)] = np.arange(len(points))
    return lo, lookup


def harmonic_measure_system(points: np.ndarray):
    """Pieces of the exit problem for the finite set ``points``.

    Returns ``(A, P_exit, exits)`` with ``A = I - P_inside`` (sparse) and
    ``P_exit[i, j]`` the one-step probability from point i to exit point j.
    """
    points = np.asarray(points, dtype=np.int64)
    n, d = points.shape
    lo, lookup = _index_map(points)
    rows_in, cols_in = [], []
    nb_pts, nb_src = [], []
    for off in neighbour_offsets(d):
        q = points + off
        idx = lookup[tuple((q - lo).T)]
        inside = idx >= 0
        rows_in.append(np.nonzero(inside)[0])
        cols_in.append(idx[inside])
        nb_pts.append(q[~inside])
        nb_src.append(np.nonzero(~inside)[0])
    q = np.concatenate(nb_pts)
    src = np.concatenate(nb_src)
    exits, inv = np.unique(q, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    step = 1.0 / (2 * d)
    r = np.concatenate(rows_in)
    c = np.concatenate(cols_in)
    P_in = sp.csr_matrix((np.full(len(r), step), (r, c)), shape=(n, n))
    A = (sp.identity(n, format="csr") - P_in).tocsc()
    P_exit = sp.csr_matrix((np.full(len(src), step), (src, inv)), shape=(n, len(exits)))
    return A, P_exit, exits


def harmonic_measure_table(points: np.ndarray, start_rows=None):
    """Exact exit distributions from a finite set.

    ``start_rows`` selects starting points (indices into ``points``); default all.
    Returns ``(exits, table)`` where ``table[i, j]`` is the probability that a walk
    from the i-th selected start first leaves the set at ``exits[j]``.
    """
    A, P_exit, exits = harmonic_measure_system(points)
    n = A.shape[0]
    if start_rows is None:
        lu = spla.splu(A)
        table = lu.solve(P_exit.toarray())
        resid = np.abs(A @ table - P_exit.toarray()).max()
    else:
        # symmetric walk: row x of (I-P)^{-1} is the Green function column at x
        start_rows = np.atleast_1d(np.asarray(start_rows, dtype=np.int64))
        rhs = np.zeros((n, len(start_rows)))
        rhs[start_rows, np.arange(len(start_rows))] = 1.0
        green = _solve(A, rhs)
        resid = np.abs(A @ green - rhs).max()
        table = (P_exit.T @ green).T
    if resid > 1e-12:
        raise WalkAbort(f"exit-distribution solve residual {resid:.3g} exceeds 1e-12")
    return exits, np.asarray(table)


def _solve(A, rhs):
    if A.shape[0] <= 60_000:
        return np.asarray(spla.splu(A).solve(rhs))
    out = np.empty_like(rhs)
    for j in range(rhs.shape[1]):
        x, info = spla.cg(A, rhs[:, j], rtol=1e-15, atol=0.0, maxiter=100_000)
        if info != 0:
            raise WalkAbort("conjugate-gradient solve for exit kernel did not converge")
        # polish with one step of iterative refinement
        x = x + spla.cg(A, rhs[:, j] - A @ x, rtol=1e-15, atol=0.0, maxiter=100_000)[0]
        out[:, j] = x
    return out


@dataclass
class ExitKernel:
    """Exit distribution of B[r] for every interior start offset."""

    d: int
    radius: int
    starts: np.ndarray
    exits: np.ndarray
    table: np.ndarray
    _row: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._row = {tuple(int(v) for v in p): i for i, p in enumerate(self.starts)}

    def distribution(self, start) -> dict[tuple[int, ...], float]:
        row = self.table[self._row[tuple(int(v) for v in start)]]
        return {tuple(int(v) for v in y): float(p) for y, p in zip(self.exits, row) if p > 0}

    def row(self, start) -> np.ndarray:
        return self.table[self._row[tuple(int(v) for v in start)]]

    def sample(self, start, rng: RngStream) -> np.ndarray:
        cdf = np.cumsum(self.row(start))
        j = min(int(np.searchsorted(cdf, rng.generator.random(), side="right")), len(cdf) - 1)
        return self.exits[j].copy()


def build_exit_kernel(d: int, r: int) -> ExitKernel:
    d = _check_dim(d)
    r = int(r)
    if r < 0 or r > MAX_TABLE_RADIUS:
        raise ConfigError(f"exit-kernel tables are limited to radius <= {MAX_TABLE_RADIUS}")
    pts = ball_points(d, r)
    A, P_exit, exits = harmonic_measure_system(pts)
    if len(pts) * len(exits) > MAX_TABLE_ENTRIES:
        raise ConfigError(f"exit-kernel table for d={d}, r={r} is too large")
    exits, table = harmonic_measure_table(pts)
    return ExitKernel(d, r, pts, exits, table)


# -- centre kernels and the acceleration ladder --------------------------------

def _compute_center_kernel(d: int, r: int) -> tuple[np.ndarray, np.ndarray]:
    pts = ball_points(d, r)
    origin = int(np.nonzero(~pts.any(axis=1))[0][0])
    exits, table = harmonic_measure_table(pts, [origin])
    probs = table[0]
    keep = probs > 0
    return exits[keep], probs[keep]


def cache_dir() -> Path:
    return Path(os.environ.get("UIDLA_CACHE_DIR", Path.home() / ".cache" / "uidla"))


def _encode_kernel(d: int, r: int, offsets: np.ndarray, probs: np.ndarray) -> bytes:
    body = (CACHE_MAGIC + struct.pack("<IIII", CACHE_VERSION, d, r, len(probs))
            + offsets.astype("<i8").tobytes() + probs.astype("<f8").tobytes())
    return body + hashlib.sha256(body).digest()


def _decode_kernel(data: bytes, d: int, r: int):
    if len(data) < 56 or data[:8] != CACHE_MAGIC:
        return None
    body, digest = data[:-32], data[-32:]
    if hashlib.sha256(body).digest() != digest:
        return None
    version, dd, rr, n = struct.unpack("<IIII", body[8:24])
    if (version, dd, rr) != (CACHE_VERSION, d, r) or len(body) != 24 + n * d * 8 + n * 8:
        return None
    offsets = np.frombuffer(body, dtype="<i8", count=n * d, offset=24).reshape(n, d)
    probs = np.frombuffer(body, dtype="<f8", count=n, offset=24 + n * d * 8)
    return offsets.astype(np.int64), probs.astype(np.float64)


def center_exit_kernel(d: int, r: int, use_cache: bool = True) -> tuple[np.ndarray, np.ndarray]:
    """Exit offsets and probabilities for a walk started at the centre of B[r].

    Cached in ``$UIDLA_CACHE_DIR`` (default ``~/.cache/uidla``); a file whose
    checksum or header does not match is recomputed and rewritten.
    """
    d = _check_dim(d)
    path = cache_dir() / f"center_d{d}_r{r}.bin"
    if use_cache and path.exists():
        decoded = _decode_kernel(path.read_bytes(), d, r)
        if decoded is not None:
            return decoded
        log.warning("exit-kernel cache %s failed validation; regenerating", path)
    offsets, probs = _compute_center_kernel(d, r)
    if use_cache:
        try:
            atomic_write_bytes(path, _encode_kernel(d, r, offsets, probs))
        except OSError as exc:
            log.debug("could not write kernel cache %s: %s", path, exc)
    return offsets, probs


@dataclass(frozen=True)
class Ladder:
    radii: np.ndarray
    start: np.ndarray
    offsets: np.ndarray
    cdf: np.ndarray

    def args(self):
        return self.radii, self.start, self.offsets, self.cdf


@functools.lru_cache(maxsize=None)
def acceleration_ladder(d: int, max_radius: int | None = None) -> Ladder:
    radii = [r for r in LADDERS[_check_dim(d)] if max_radius is None or r <= max_radius]
    offs, cdfs, start = [], [], [0]
    for r in radii:
        o, p = center_exit_kernel(d, r)
        c = np.cumsum(p)
        c /= c[-1]
        offs.append(o)
        cdfs.append(c)
        start.append(start[-1] + len(p))
    return Ladder(np.array(radii, dtype=np.float64), np.array(start, dtype=np.int64),
                  np.concatenate(offs) if offs else np.zeros((0, d), np.int64),
                  np.concatenate(cdfs) if cdfs else np.zeros(0))


def no_ladder(d: int) -> Ladder:
    return Ladder(np.zeros(0), np.zeros(1, np.int64), np.zeros((0, d), np.int64), np.zeros(0))


def ladder_for(d: int, accel: bool) -> Ladder:
    return acceleration_ladder(d) if accel else no_ladder(d)


# -- walking ---------------------------------------------------------------

def walk_until_exit(start, S: Aggregate, rng: RngStream, accel: bool = True,
                    max_steps: int = MAX_WALK_STEPS, state: WalkState | None = None) -> np.ndarray:
    """First position off ``S`` of a walk from ``start`` (``start`` itself if off S).

    When ``state`` is given its step counter is advanced; jumps count as one
    macro-step each and mark the count approximate.
    """
    pos = np.array(start, dtype=np.int64).reshape(-1)
    if pos.shape[0] != S.d:
        raise ValueError("start dimension does not match the aggregate")
    counters = np.zeros(K.META_LEN, dtype=np.int64)
    ladder = ladder_for(S.d, accel)
    rho2 = S.min_unoccupied_norm2 if accel else 0
    best = K.walk_exit(pos, S.grid, S.half, S.strides, rho2, *ladder.args(),
                       rng.generator, max_steps, counters)
    if best < 0:
        raise WalkAbort(f"walk from {tuple(start)} exceeded {max_steps} steps")
    if state is not None:
        state.position = pos.copy()
        state.step_count += int(counters[K.STEPS] + counters[K.JUMPS])
        state.approximate = state.approximate or bool(counters[K.JUMPS])
    return pos


def sample_exit_points(S: Aggregate, start, n_walks: int, rng: RngStream, accel: bool = True,
                       rho2_cap: int | None = None, max_steps: int = MAX_WALK_STEPS):
    """Exit points of ``n_walks`` independent walks from ``start``.

    Returns ``(exits, max_norm2)``; the second array holds the largest squared
    norm visited by each walk. ``rho2_cap`` keeps jumps inside the ball of that
    squared norm so that the visited maximum is exact beyond it.
    """
    start = np.asarray(start, dtype=np.int64).reshape(-1)
    out = np.zeros((int(n_walks), S.d), dtype=np.int64)
    out_max = np.zeros(int(n_walks), dtype=np.int64)
    rho2 = _effective_rho2(S, accel, rho2_cap)
    counters = np.zeros(K.META_LEN, dtype=np.int64)
    status = K.sample_exits(start, int(n_walks), S.grid, S.half, S.strides, rho2,
                            *ladder_for(S.d, accel).args(), rng.generator, max_steps,
                            counters, out, out_max)
    if status != K.OK:
        raise WalkAbort("walk exceeded its step budget")
    return out, out_max


def sample_exit_points_multi(S: Aggregate, starts, rng: RngStream, accel: bool = True,
                             rho2_cap: int | None = None, max_steps: int = MAX_WALK_STEPS):
    """One walk per row of ``starts``; same return convention as above."""
    starts = np.ascontiguousarray(np.asarray(starts, dtype=np.int64).reshape(-1, S.d))
    out = np.zeros_like(starts)
    out_max = np.zeros(len(starts), dtype=np.int64)
    rho2 = _effective_rho2(S, accel, rho2_cap)
    counters = np.zeros(K.META_LEN, dtype=np.int64)
    status = K.sample_exits_multi(starts, S.grid, S.half, S.strides, rho2,
                                  *ladder_for(S.d, accel).args(), rng.generator, max_steps,
                                  counters, out, out_max)
    if status != K.OK:
        raise WalkAbort("walk exceeded its step budget")
    return out, out_max


def _effective_rho2(S: Aggregate, accel: bool, cap: int | None) -> int:
    if not accel:
        return 0
    rho2 = S.min_unoccupied_norm2
    return rho2 if cap is None else min(rho2, int(cap))
