"""Shape statistics against lattice balls, annulus-crossing probes and
fluctuation summaries."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .lattice import Aggregate, ball_volume, make_ball_aggregate, norm2_bound, shell_counts
from .rng import RngStream
from .walk import sample_exit_points_multi


def equivalent_radius(d: int, n_sites: int) -> float:
    """Smallest radius r with b_r >= n_sites (bisection over squared radii)."""
    if n_sites <= 1:
        return 0.0
    hi = 1
    while ball_volume(d, math.sqrt(hi)) < n_sites:
        hi *= 2
    lo = hi // 2  # b(sqrt(lo)) < n_sites <= b(sqrt(hi))
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if ball_volume(d, math.sqrt(mid)) >= n_sites:
            hi = mid
        else:
            lo = mid
    return math.sqrt(hi)


@dataclass
class ShapeReport:
    n_sites: int
    ball_radius_equiv: float
    inradius: float
    outradius: float
    symdiff_count: int
    ball_volume: int
    overlap: int
    shell_occupied: np.ndarray
    shell_total: np.ndarray

    def check_identity(self) -> bool:
        return self.symdiff_count == self.n_sites + self.ball_volume - 2 * self.overlap

    @property
    def relative_error(self) -> float:
        return (self.outradius - self.inradius) / self.ball_radius_equiv if self.ball_radius_equiv else math.nan


def shape_report(A: Aggregate) -> ShapeReport:
    """Compare A with the lattice ball of equal (or next larger) volume."""
    if not len(A):
        raise ValueError("shape report of an empty aggregate")
    d = A.d
    r_eq = equivalent_radius(d, len(A))
    bound = norm2_bound(r_eq)
    pts = A.points()
    n2 = (pts * pts).sum(axis=1)
    overlap = int((n2 <= bound).sum())
    b = ball_volume(d, r_eq)
    symdiff = len(A) - overlap + (b - overlap)
    # integer shells [k, k+1) of Euclidean norm
    kmax = int(math.floor(math.sqrt(int(n2.max())))) + 1
    shell = np.floor(np.sqrt(n2)).astype(np.int64)
    occ = np.bincount(shell, minlength=kmax + 1)
    counts = shell_counts(d, (kmax + 1) ** 2)
    sq = np.floor(np.sqrt(np.arange(len(counts)))).astype(np.int64)
    tot = np.bincount(sq, weights=counts, minlength=kmax + 2)[: kmax + 1].astype(np.int64)
    rep = ShapeReport(len(A), r_eq, A.inradius, A.outradius, symdiff, b, overlap, occ, tot)
    assert rep.check_identity()
    return rep


SHAPE_HEADER = ("n_sites", "ball_radius_equiv", "inradius", "outradius", "symdiff_count")


def shape_row(rep: ShapeReport):
    return (rep.n_sites, rep.ball_radius_equiv, rep.inradius, rep.outradius, rep.symdiff_count)


# -- annulus crossing ----------------------------------------------------------------

@dataclass(frozen=True)
class AnnulusSpec:
    """Annuli R_k = B[m + (k+1) w] minus B[m + k w], k = 0..count-1."""

    inner: float
    width: float
    count: int

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("annulus width must be at least one lattice unit")
        if self.count < 1:
            raise ValueError("need at least one annulus")

    @classmethod
    def scaled(cls, n: float, d: int, count: int, beta: float = 1.0) -> "AnnulusSpec":
        """Width beta * n^(1 - 1/(4d)) around B[n]."""
        return cls(n, beta * n ** (1 - 1 / (4 * d)), count)

    def edges(self) -> np.ndarray:
        return self.inner + self.width * np.arange(self.count + 1)


def random_annulus_fill(d: int, spec: AnnulusSpec, density: float, rng: RngStream) -> Aggregate:
    """Each lattice point of the annuli occupied independently with prob ``density``."""
    outer = spec.edges()[-1]
    pts = make_ball_aggregate(d, outer).points()
    norm = np.sqrt((pts * pts).sum(axis=1))
    ring = pts[norm > spec.inner]
    keep = rng.generator.random(len(ring)) < density
    return Aggregate(d, ring[keep], capacity=int(keep.sum()) + 4)


@dataclass
class CrossingReport:
    spec: AnnulusSpec
    crossed: np.ndarray          # annuli fully crossed by each walk
    frequencies: np.ndarray      # P(crossed > k), k = 0..count-1
    decay_ratio: float           # geometric fit of the frequencies

    def cdf(self, j: int) -> float:
        return float((self.crossed <= j).mean())


def annulus_crossing_probe(S: Aggregate, spec: AnnulusSpec, starts, n_walks: int,
                           rng: RngStream, accel: bool = True) -> CrossingReport:
    """Walks from ``starts`` until they leave S ∪ B[m]; counts annuli crossed.

    An annulus counts as crossed once the walk (exit point included) has been
    strictly beyond its outer radius; with unit steps this is the same as
    entering annulus k+1 after being in annulus k.
    """
    d = S.d
    region = S.copy()
    region.extend(make_ball_aggregate(d, spec.inner).points())
    starts = np.asarray(starts, dtype=np.int64).reshape(-1, d)
    reps = np.repeat(starts, int(n_walks), axis=0)
    # jumps stay inside B[m], where no annulus boundary lies
    _, max2 = sample_exit_points_multi(region, reps, rng, accel,
                                       rho2_cap=norm2_bound(spec.inner) + 1)
    reach = np.sqrt(max2.astype(np.float64))
    edges = spec.edges()[1:]
    crossed = (reach[:, None] > edges[None, :] + 1e-12).sum(axis=1)
    freq = np.array([(crossed > k).mean() for k in range(spec.count)])
    return CrossingReport(spec, crossed, freq, _decay_fit(freq))


def _decay_fit(freq: np.ndarray) -> float:
    pos = freq > 0
    if pos.sum() >= 2:
        k = np.nonzero(pos)[0]
        slope = np.polyfit(k, np.log(freq[pos]), 1)[0]
        return float(math.exp(slope))
    if pos.sum() == 1:
        return float(freq[0])
    return 0.0


# -- fluctuation scaling ------------------------------------------------------------

FLUCT_HEADER = ("n", "particles", "replicas", "mean_out_excess", "std_out_excess",
                "mean_in_deficit", "std_in_deficit", "std_defined")


def run_to_volume(process: str, d: int, n: float, rng: RngStream, accel: bool = True) -> Aggregate:
    """Aggregate of b_n sites grown by ``process`` from its canonical start."""
    from .lattice import origin_aggregate
    from .processes import idla_from_origin, richardson, uidla
    b = ball_volume(d, n)
    if process == "idla":
        return idla_from_origin(d, b, rng, accel)
    if process == "uidla":
        return uidla(None, b - 1, rng, accel, d=d)[0]
    if process == "richardson":
        return richardson(origin_aggregate(d), b - 1, rng)
    raise ValueError(f"unsupported process {process!r} for volume runs")


def fluctuation_scaling(process: str, d: int, radii, replicas: int, rng: RngStream,
                        accel: bool = True) -> list[tuple]:
    """Rows of ``FLUCT_HEADER``: outradius - n and n - inradius at b_n particles."""
    radii = list(radii)
    if radii != sorted(radii):
        raise ValueError("radii must be sorted ascending")
    rows = []
    for i, n in enumerate(radii):
        out_ex, in_def = [], []
        for r in range(int(replicas)):
            A = run_to_volume(process, d, n, rng.spawn(i * 1_000_003 + r), accel)
            out_ex.append(A.outradius - n)
            in_def.append(n - A.inradius)
        defined = replicas > 1
        rows.append((n, ball_volume(d, n), int(replicas), float(np.mean(out_ex)),
                     float(np.std(out_ex, ddof=1)) if defined else math.nan,
                     float(np.mean(in_def)),
                     float(np.std(in_def, ddof=1)) if defined else math.nan,
                     int(defined)))
    return rows
