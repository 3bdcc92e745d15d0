"""Comparison constructions: killed-walk domination, sandpile quadrature and
the three-colour coupling, together with their harmonic-measure estimators."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import ConfigError, CouplingError, WalkAbort
from .lattice import Aggregate, ball_points, make_ball_aggregate, neighbour_offsets, norm2_bound
from .rng import RngStream
from .walk import harmonic_measure_table, sample_exit_points, walk_until_exit


# -- harmonic measure ------------------------------------------------------------

@dataclass
class HarmonicMeasureEstimate:
    source: Aggregate
    start: tuple[int, ...]
    counts: dict[tuple[int, ...], int]
    n_samples: int

    def estimate(self, y) -> float:
        return self.counts.get(tuple(int(v) for v in y), 0) / self.n_samples

    def stderr(self, y) -> float:
        p = self.estimate(y)
        return math.sqrt(p * (1 - p) / self.n_samples)

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {y: c / self.n_samples for y, c in self.counts.items()}


def _count_points(points: np.ndarray) -> dict[tuple[int, ...], int]:
    uniq, counts = np.unique(points, axis=0, return_counts=True)
    return {tuple(int(v) for v in u): int(c) for u, c in zip(uniq, counts)}


def estimate_harmonic_measure(A: Aggregate, x, n_samples: int, rng: RngStream,
                              accel: bool = True) -> HarmonicMeasureEstimate:
    """Monte Carlo exit distribution of A seen from x."""
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    exits, _ = sample_exit_points(A, x, n_samples, rng, accel)
    return HarmonicMeasureEstimate(A, tuple(int(v) for v in np.ravel(x)), _count_points(exits),
                                   int(n_samples))


def exact_ball_exit(d: int, n: float, starts) -> tuple[np.ndarray, np.ndarray]:
    """Exact exit distributions of B[n] from each row of ``starts``."""
    pts = ball_points(d, n)
    lookup = {tuple(int(v) for v in p): i for i, p in enumerate(pts)}
    rows = [lookup[tuple(int(v) for v in s)] for s in np.asarray(starts).reshape(-1, d)]
    return harmonic_measure_table(pts, rows)


def harnack_starts(d: int, n: float) -> np.ndarray:
    """Origin plus the outermost shell of B[n/2], where the ratio is smallest."""
    pts = ball_points(d, n / 2)
    n2 = (pts * pts).sum(axis=1)
    outer = pts[n2 == n2.max()]
    return np.vstack([np.zeros((1, d), dtype=np.int64), outer])


@dataclass
class HarnackScan:
    ratio: float
    argmin: tuple | None
    excluded: list = field(default_factory=list)
    n_pairs: int = 0

    def __float__(self) -> float:
        return self.ratio


def harnack_ratio_scan(n: float, n_samples: int, rng: RngStream, d: int = 2,
                       starts=None, min_count: int = 50, accel: bool = True) -> HarnackScan:
    """Empirical min of h_y(x)/h_y(0) over starts x in B[n/2] and exits y of B[n].

    Exit points seen fewer than ``min_count`` times from the origin are left out
    and listed in ``excluded``.
    """
    if n > 15:
        raise ConfigError("harnack_ratio_scan is limited to radius <= 15")
    A = make_ball_aggregate(d, n)
    starts = harnack_starts(d, n) if starts is None else np.asarray(starts).reshape(-1, d)
    base = estimate_harmonic_measure(A, np.zeros(d, dtype=np.int64), n_samples, rng, accel)
    good = {y: c for y, c in base.counts.items() if c >= min_count}
    excluded = sorted(y for y, c in base.counts.items() if c < min_count)
    best, arg, pairs = math.inf, None, 0
    for x in starts:
        est = estimate_harmonic_measure(A, x, n_samples, rng, accel)
        for y, c0 in good.items():
            r = est.counts.get(y, 0) / c0
            pairs += 1
            if r < best:
                best, arg = r, (tuple(int(v) for v in x), y)
    return HarnackScan(best, arg, excluded, pairs)


def exact_harnack_ratio(d: int, n: float, starts) -> float:
    """min over starts x and exits y of h_y(x)/h_y(0) for A = B[n], by linear solve."""
    starts = np.asarray(starts, dtype=np.int64).reshape(-1, d)
    _, table = exact_ball_exit(d, n, np.vstack([np.zeros((1, d), dtype=np.int64), starts]))
    h0 = table[0]
    return float((table[1:] / h0).min())


# -- killed-walk domination -------------------------------------------------------

def coupled_domination_run(n: float, X, eta: float, rng: RngStream, d: int = 2,
                           accel: bool = True):
    """Pair an IDLA from the multiset X with an origin IDLA whose particles die w.p. 1-eta.

    Both sets start at B[n]. The two walks for particle k are coupled through
    their exit point Z from B[n]: with probability eta the origin walk survives,
    Z is drawn from the origin's exit law and both walks share the path from Z
    on; otherwise Z is drawn from the residual law (h(x,.) - eta h(0,.))/(1-eta)
    and only the X-walk runs. Each marginal is exact, so requires eta at most the
    exact ball-exit Harnack ratio of the starts. Returns (E, F, kappa).
    """
    X = np.asarray(X, dtype=np.int64).reshape(-1, d)
    if not 0.0 <= eta <= 1.0:
        raise ConfigError("eta must lie in [0, 1]")
    if len(X) and ((X * X).sum(axis=1) > norm2_bound(n / 2)).any():
        raise ConfigError("all starting points must lie in B[n/2]")
    E = make_ball_aggregate(d, n)
    F = E.copy()
    if not len(X):
        return E, F, 0
    gen = rng.generator
    uniq, inv = np.unique(X, axis=0, return_inverse=True)
    inv = inv.reshape(-1)
    exits, table = exact_ball_exit(d, n, np.vstack([np.zeros((1, d), dtype=np.int64), uniq]))
    h0 = table[0]
    cdf0 = np.cumsum(h0)
    cdf0 /= cdf0[-1]
    resid_cdf = []
    for row in table[1:]:
        r = row - eta * h0
        if r.min() < -1e-12:
            raise ConfigError(
                f"eta={eta} exceeds the exact Harnack ratio {float((row / h0).min()):.6f} of a start")
        r = np.clip(r, 0.0, None)
        tot = r.sum()
        resid_cdf.append(np.cumsum(r) / tot if tot > 0 else None)

    def draw(cdf):
        return exits[min(int(np.searchsorted(cdf, gen.random(), side="right")), len(cdf) - 1)]

    kappa = 0
    for k in range(len(X)):
        if gen.random() < eta:
            z = draw(cdf0)
            y_f = walk_until_exit(z, F, rng, accel)
            y_e = walk_until_exit(y_f, E, rng, accel)
            E.add(y_e)
            F.add(y_f)
            kappa += 1
            if y_f not in E:
                raise CouplingError(f"F-site {tuple(y_f)} not contained in E after step {k}")
        else:
            cdf = resid_cdf[inv[k]]
            if cdf is None:
                raise CouplingError("residual exit law is empty although the particle was killed")
            z = draw(cdf)
            E.add(walk_until_exit(z, E, rng, accel))
    return E, F, kappa


# -- divisible sandpile -------------------------------------------------------------

@dataclass
class SandpileState:
    """Mass and odometer on the box [-half, half]^d (dense arrays)."""

    d: int
    half: int
    mass: np.ndarray
    odometer: np.ndarray
    total: float
    sweeps: int

    def coords(self) -> np.ndarray:
        side = 2 * self.half + 1
        axes = np.arange(-self.half, self.half + 1)
        return np.stack(np.meshgrid(*([axes] * self.d), indexing="ij"), axis=-1).reshape(side ** self.d, self.d)

    def items(self):
        for p, m in zip(self.coords(), self.mass.reshape(-1)):
            if m > 0:
                yield tuple(int(v) for v in p), float(m)

    def quadrature_residual(self, h) -> float:
        """|sum m(x) h(x) - M h(0)| for a function h of the coordinate array."""
        c = self.coords()
        vals = np.asarray(h(c), dtype=np.float64)
        h0 = float(np.asarray(h(np.zeros((1, self.d), dtype=np.int64)))[0])
        return abs(float(np.dot(self.mass.reshape(-1), vals)) - self.total * h0)

    def support_radii(self, full_tol: float = 1e-6) -> tuple[float, float]:
        """(r_in, r_out): inradius of {m >= 1 - full_tol}, outradius of {m > 0}."""
        c = self.coords()
        m = self.mass.reshape(-1)
        n2 = (c * c).sum(axis=1)
        r_out = math.sqrt(int(n2[m > 0].max()))
        not_full = n2[m < 1 - full_tol]
        rho2 = int(not_full.min()) if not_full.size else int(n2.max()) + 1
        below = n2[n2 < rho2]
        r_in = math.sqrt(int(below.max())) if below.size else -1.0
        return r_in, r_out


def _box_neighbours(d: int, half: int) -> np.ndarray:
    side = 2 * half + 1
    idx = np.arange(side ** d).reshape((side,) * d)
    nbr = -np.ones((side ** d, 2 * d), dtype=np.int64)
    for axis in range(d):
        for j, shift in enumerate((-1, 1)):
            col = 2 * axis + j
            src = [slice(None)] * d
            dst = [slice(None)] * d
            if shift < 0:
                src[axis], dst[axis] = slice(1, None), slice(None, -1)
            else:
                src[axis], dst[axis] = slice(None, -1), slice(1, None)
            nbr[idx[tuple(src)].reshape(-1), col] = idx[tuple(dst)].reshape(-1)
    return nbr


def sandpile_relax(d: int, M: float, tol: float = 1e-8, max_sweeps: int = 10 ** 7) -> SandpileState:
    """Divisible sandpile from mass M at the origin, toppled until every excess < tol."""
    if M <= 0:
        raise ConfigError("initial mass must be positive")
    omega = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    half = int(math.ceil((M / omega) ** (1.0 / d))) + 4
    mass = odo = None
    sweeps_total = 0
    while True:
        side = 2 * half + 1
        if side ** d > 50_000_000:
            raise ConfigError(f"sandpile box too large for M={M} in d={d}")
        nbr = _box_neighbours(d, half)
        new_mass = np.zeros(side ** d)
        new_odo = np.zeros(side ** d)
        if mass is None:
            new_mass[(side ** d) // 2] = M
        else:
            _embed(mass, new_mass, d, old_half, half)
            _embed(odo, new_odo, d, old_half, half)
        mass, odo = new_mass, new_odo
        while True:
            s = K.topple_sweeps(mass, odo, nbr, tol, max_sweeps - sweeps_total)
            if s == -2:
                raise WalkAbort(f"sandpile did not converge in {max_sweeps} sweeps")
            if s == -1:
                break
            sweeps_total += s
            if (mass - 1.0).max() < tol:
                return SandpileState(d, half, mass.reshape((side,) * d),
                                     odo.reshape((side,) * d), float(M), sweeps_total)
        old_half, half = half, half * 2


def _embed(src, dst, d, old_half, half):
    os_, ns = 2 * old_half + 1, 2 * half + 1
    off = half - old_half
    view = dst.reshape((ns,) * d)
    view[tuple(slice(off, off + os_) for _ in range(d))] = src.reshape((os_,) * d)


# -- averaging defect ---------------------------------------------------------------

def averaging_defect(n: float, n_samples: int, rng: RngStream, d: int = 2,
                     accel: bool = True) -> float:
    """Monte Carlo estimate of sum_y |h_y(0) - mean_{x in B[n]} h_y(x)| for A = B[n]."""
    if n > 12:
        raise ConfigError("averaging_defect is limited to radius <= 12")
    A = make_ball_aggregate(d, n)
    from_origin, _ = sample_exit_points(A, np.zeros(d, dtype=np.int64), n_samples, rng, accel)
    pts = A.points()
    starts = pts[rng.generator.integers(0, len(pts), size=int(n_samples))]
    from .walk import sample_exit_points_multi
    from_uniform, _ = sample_exit_points_multi(A, starts, rng, accel)
    c0 = _count_points(from_origin)
    c1 = _count_points(from_uniform)
    keys = set(c0) | set(c1)
    return sum(abs(c0.get(y, 0) - c1.get(y, 0)) for y in keys) / n_samples


def averaging_defect_exact(n: float, d: int = 2) -> float:
    pts = ball_points(d, n)
    exits, table = harmonic_measure_table(pts)
    origin = int(np.nonzero(~pts.any(axis=1))[0][0])
    return float(np.abs(table[origin] - table.mean(axis=0)).sum())


# -- three-colour coupling -------------------------------------------------------------

class Color(enum.Enum):
    BLUE = "blue"
    RED = "red"
    BLACK = "black"


@dataclass
class TricolorState:
    color: dict[tuple[int, ...], Color]
    aggregate: Aggregate
    wakeups: int = 0

    def sites_of(self, *colors: Color) -> frozenset:
        return frozenset(p for p, c in self.color.items() if c in colors)


def tricolor_run(E: Aggregate, F: Aggregate, k: int, rng: RngStream, accel: bool = True):
    """Grow F by k uIDLA particles while tracking the blue/red/black colouring.

    Returns ``(state, blue, red_or_blue)`` with the last two as aggregates.
    """
    if not E.as_set() <= F.as_set():
        raise ValueError("E must be a subset of F")
    d = F.d
    blue = Aggregate(d, E.points())
    redblue = Aggregate(d, F.points())
    everything = F.copy()
    color = {p: Color.RED for p in F}
    for p in E:
        color[p] = Color.BLUE
    state = TricolorState(color, everything)
    gen = rng.generator

    def settle_black(start):
        y = walk_until_exit(start, everything, rng, accel)
        everything.add(y)
        color[tuple(int(v) for v in y)] = Color.BLACK

    for _ in range(int(k)):
        x = everything.points()[gen.integers(0, len(everything))]
        cx = color[tuple(int(v) for v in x)]
        if cx is not Color.BLUE:
            settle_black(x)
            continue
        chain = 0
        y = walk_until_exit(x, blue, rng, accel)
        ty = tuple(int(v) for v in y)
        previous = color.get(ty)
        blue.add(y)
        redblue.add(y)
        everything.add(y)
        color[ty] = Color.BLUE
        if previous is Color.RED:
            chain += 1
            y2 = walk_until_exit(y, redblue, rng, accel)
            t2 = tuple(int(v) for v in y2)
            prev2 = color.get(t2)
            redblue.add(y2)
            everything.add(y2)
            color[t2] = Color.RED
            if prev2 is Color.BLACK:
                chain += 1
                settle_black(y2)
        elif previous is Color.BLACK:
            chain += 1
            settle_black(y)
        state.wakeups += chain
        if chain > len(everything):
            raise CouplingError("wake-up chain longer than the aggregate")
    return state, blue, redblue
