"""Geometry of Z^d: lattice balls and the occupied-set container.

Radii are real numbers compared through squared norms. A real radius ``n`` is
turned into the integer bound ``floor(n*n + 1e-9)`` so that radii written as
``sqrt(k)`` keep every point of squared norm ``k``.
"""
from __future__ import annotations

import functools
import math
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np
from scipy.signal import fftconvolve

from . import _kernels as K
from .errors import ConfigError, WalkAbort

MAX_DIM = 4
COORD_LIMIT = 1 << 20
MAX_GRID_CELLS = 1 << 31
INT64_MAX = (1 << 63) - 1


def norm2_bound(radius: float) -> int:
    """Largest integer squared norm inside the closed ball of ``radius``."""
    if radius < 0:
        raise ConfigError(f"radius must be nonnegative, got {radius}")
    return int(math.floor(float(radius) * float(radius) + 1e-9))


def _check_dim(d: int) -> int:
    d = int(d)
    if not 1 <= d <= MAX_DIM:
        raise ConfigError(f"dimension must be in 1..{MAX_DIM}, got {d}")
    return d


def _count_norm2_le(d: int, bound: int) -> int:
    # slice the bounding box along the first axis
    if bound < 0:
        return 0
    r = math.isqrt(bound)
    if d == 1:
        return 2 * r + 1
    if d == 2:
        x = np.arange(-r, r + 1, dtype=np.int64)
        rest = bound - x * x
        ys = np.array([math.isqrt(int(v)) for v in rest], dtype=np.int64)
        return int((2 * ys + 1).sum())
    return sum(_count_norm2_le(d - 1, bound - x * x) for x in range(-r, r + 1))


def ball_volume(d: int, n: float) -> int:
    """Number of lattice points of Z^d with Euclidean norm at most ``n``."""
    d = _check_dim(d)
    count = _count_norm2_le(d, norm2_bound(n))
    if count > INT64_MAX:
        raise ConfigError(f"ball volume overflows int64 for d={d}, n={n}")
    return count


@functools.lru_cache(maxsize=64)
def shell_counts(d: int, kmax: int) -> np.ndarray:
    """``out[k]`` = number of points of Z^d with squared norm exactly k, k <= kmax.

    The returned array is shared and read-only.
    """
    r = math.isqrt(kmax)
    theta = np.zeros(kmax + 1)
    j = np.arange(r + 1)
    theta[j * j] = 2.0
    theta[0] = 1.0
    out = theta.copy()
    for _ in range(d - 1):
        out = fftconvolve(out, theta)[: kmax + 1]
    out = np.rint(out).astype(np.int64)
    out.setflags(write=False)
    return out


def ball_points(d: int, n: float) -> np.ndarray:
    """All points of B[n] as an int64 array, lexicographic order."""
    d = _check_dim(d)
    bound = norm2_bound(n)
    r = math.isqrt(bound)
    axes = np.arange(-r, r + 1, dtype=np.int64)
    mesh = np.stack(np.meshgrid(*([axes] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return mesh[(mesh * mesh).sum(axis=1) <= bound]


def neighbour_offsets(d: int) -> np.ndarray:
    offs = np.zeros((2 * d, d), dtype=np.int64)
    for i in range(d):
        offs[2 * i, i] = -1
        offs[2 * i + 1, i] = 1
    return offs


class Aggregate:
    """Finite occupied subset of Z^d.

    Sites live in a dense occupancy grid over a box that doubles when the set
    approaches its edge, plus an append-only array in insertion order, which
    gives O(1) membership and O(1) uniform sampling. The smallest unoccupied
    squared norm and the largest occupied squared norm are maintained on every
    insertion.
    """

    def __init__(self, d: int, sites: Iterable[Sequence[int]] | np.ndarray | None = None,
                 capacity: int = 64):
        self.d = _check_dim(d)
        self.meta = np.zeros(K.META_LEN, dtype=np.int64)
        self.sites = np.zeros((max(int(capacity), 4), self.d), dtype=np.int64)
        self.half = 0
        self._regrid(8)
        if sites is not None:
            self.extend(sites)

    # -- storage management -------------------------------------------------
    def _regrid(self, half: int) -> None:
        if half > COORD_LIMIT:
            raise WalkAbort(f"lattice coordinates exceed +-2^20 (needed half-width {half})")
        side = 2 * half + 1
        if side ** self.d > MAX_GRID_CELLS:
            raise ConfigError(f"occupancy grid of side {side} in d={self.d} is too large")
        d = self.d
        self.half = half
        self.strides = np.array([side ** (d - 1 - i) for i in range(d)], dtype=np.int64)
        self.grid = np.zeros(side ** d, dtype=np.uint8)
        n = int(self.meta[K.N_SITES])
        pts = self.sites[:n]
        if n:
            self.grid[((pts + half) * self.strides).sum(axis=1)] = 1
        kmax = half * half
        self.shell = shell_counts(d, kmax)
        n2 = (pts * pts).sum(axis=1)
        self.occ = np.bincount(n2[n2 <= kmax], minlength=kmax + 1).astype(np.int64)
        short = np.nonzero(self.occ != self.shell)[0]
        self.meta[K.RHO2] = int(short[0]) if short.size else kmax + 1

    def _ensure_half(self, sup: int) -> None:
        need = int(sup) + K.GRID_MARGIN + 1
        if need > self.half:
            half = self.half
            while half < need:
                half *= 2
            self._regrid(half)

    def _ensure_capacity(self, n: int) -> None:
        if n > self.sites.shape[0]:
            cap = self.sites.shape[0]
            while cap < n:
                cap *= 2
            grown = np.zeros((cap, self.d), dtype=np.int64)
            grown[: self.sites.shape[0]] = self.sites
            self.sites = grown

    def handle_status(self, status: int) -> bool:
        """React to a kernel status; True means the kernel should be called again."""
        if status == K.OK:
            return False
        if status == K.NEED_GROW:
            self._ensure_half(int(self.meta[K.MAX_SUP]))
            return True
        if status == K.NEED_CAPACITY:
            self._ensure_capacity(2 * self.sites.shape[0])
            return True
        raise WalkAbort("walk exceeded its step budget")

    # -- basic container protocol ------------------------------------------
    def __len__(self) -> int:
        return int(self.meta[K.N_SITES])

    def _as_point(self, point) -> np.ndarray:
        p = np.asarray(point, dtype=np.int64).reshape(-1)
        if p.shape[0] != self.d:
            raise ValueError(f"expected a point of dimension {self.d}, got {tuple(p)}")
        return p

    def __contains__(self, point) -> bool:
        p = self._as_point(point)
        return bool(K.is_occupied(self.grid, p, self.half, self.strides))

    def __iter__(self) -> Iterator[tuple[int, ...]]:
        for row in self.points():
            yield tuple(int(v) for v in row)

    def points(self) -> np.ndarray:
        """Occupied sites in insertion order (a view; do not mutate)."""
        return self.sites[: len(self)]

    def as_set(self) -> frozenset[tuple[int, ...]]:
        return frozenset(self)

    def add(self, point) -> bool:
        """Insert one site; returns False if it was already occupied."""
        p = self._as_point(point)
        if self.__contains__(p):
            return False
        self._ensure_half(int(np.abs(p).max(initial=0)))
        self._ensure_capacity(len(self) + 1)
        K.insert_site(p, self.grid, self.half, self.strides, self.sites, self.meta,
                      self.occ, self.shell)
        return True

    def extend(self, points) -> None:
        pts = np.asarray(points, dtype=np.int64).reshape(-1, self.d)
        if pts.size:
            self._ensure_half(int(np.abs(pts).max()))
        self._ensure_capacity(len(self) + len(pts))
        for p in pts:
            if not K.is_occupied(self.grid, p, self.half, self.strides):
                K.insert_site(p, self.grid, self.half, self.strides, self.sites,
                              self.meta, self.occ, self.shell)

    def copy(self) -> "Aggregate":
        out = Aggregate.__new__(Aggregate)
        out.d = self.d
        out.meta = self.meta.copy()
        out.sites = self.sites.copy()
        out.half = self.half
        out.strides = self.strides.copy()
        out.grid = self.grid.copy()
        out.shell = self.shell
        out.occ = self.occ.copy()
        return out

    def sample(self, rng) -> np.ndarray:
        """A uniformly chosen occupied site."""
        if not len(self):
            raise ValueError("cannot sample from an empty aggregate")
        return self.sites[rng.generator.integers(0, len(self))].copy()

    # -- cached radii -------------------------------------------------------
    @property
    def min_unoccupied_norm2(self) -> int:
        """Smallest squared norm of an unoccupied lattice point."""
        return int(self.meta[K.RHO2])

    @property
    def min_boundary_dist(self) -> float:
        return math.sqrt(self.min_unoccupied_norm2)

    @property
    def max_dist(self) -> float:
        return math.sqrt(int(self.meta[K.MAX_NORM2])) if len(self) else 0.0

    @property
    def outradius(self) -> float:
        return self.max_dist

    @property
    def inradius(self) -> float:
        """Largest r with B[r] inside the set; -1.0 when the origin is vacant."""
        rho2 = self.min_unoccupied_norm2
        if rho2 == 0:
            return -1.0
        below = np.nonzero(self.shell[:rho2])[0]
        return math.sqrt(int(below[-1]))

    def __repr__(self) -> str:
        return f"Aggregate(d={self.d}, n_sites={len(self)})"

    # -- snapshots ------------------------------------------------------------
    def to_snapshot(self) -> str:
        lines = [f"d={self.d} n_sites={len(self)}"]
        lines += [" ".join(str(int(v)) for v in row) for row in self.points()]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_snapshot(cls, text: str) -> "Aggregate":
        lines = text.splitlines()
        if not lines:
            raise ConfigError("empty snapshot")
        try:
            head = dict(tok.split("=", 1) for tok in lines[0].split())
            d, n = int(head["d"]), int(head["n_sites"])
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad snapshot header {lines[0]!r}") from exc
        body = [ln for ln in lines[1:] if ln.strip()]
        if len(body) != n:
            raise ConfigError(f"snapshot declares {n} sites but holds {len(body)}")
        pts = np.array([[int(v) for v in ln.split()] for ln in body], dtype=np.int64).reshape(n, d)
        agg = cls(d, capacity=max(n, 4))
        agg.extend(pts)
        if len(agg) != n:
            raise ConfigError("snapshot contains duplicate sites")
        return agg

    def write_snapshot(self, path) -> None:
        from .io import atomic_write_text
        atomic_write_text(Path(path), self.to_snapshot())

    @classmethod
    def read_snapshot(cls, path) -> "Aggregate":
        return cls.from_snapshot(Path(path).read_text())


def make_ball_aggregate(d: int, n: float) -> Aggregate:
    pts = ball_points(d, n)
    return Aggregate(d, pts, capacity=len(pts) + 4)


def origin_aggregate(d: int) -> Aggregate:
    return Aggregate(d, [[0] * d])


def shape_radii(agg: Aggregate) -> tuple[float, float]:
    """(inradius, outradius) of a nonempty aggregate."""
    if not len(agg):
        raise ValueError("shape radii of an empty aggregate are undefined")
    return agg.inradius, agg.outradius
