"""Acceptance suite: eleven seeded checks with fixed tolerances and runtime budgets.

Each check writes one CSV; the suite runs twice and compares CSV hashes for
the determinism check. CSVs never contain timings.
"""
from __future__ import annotations

import hashlib
import math
import time
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import ndimage, stats

from .analysis import AnnulusSpec, annulus_crossing_probe, equivalent_radius, random_annulus_fill
from .couplings import averaging_defect, averaging_defect_exact, sandpile_relax, tricolor_run
from .genealogy import assign_edge_weights, grow_yule, max_reaching_time, yule_level_mean
from .harness import BLUE, RED, WHITE, read_ppm, render_symdiff
from .io import write_csv
from .lattice import Aggregate, ball_points, ball_volume, make_ball_aggregate
from .oracles import ball_exit_mass, srw_path_law, tricolor_hand_law
from .processes import uidla, uidla_1d_middle
from .rng import RngStream
from .walk import build_exit_kernel, center_exit_kernel, sample_exit_points

# pinned tolerances
SIGNIFICANCE = 1e-3
Z_BOUND = 4.0
SHAPE_TOL = 0.15
REACH_RATIO_BOUND = 2.0
REACH_GROWTH_BOUND = 1.5
QUADRATURE_REL = 1e-6
SUPPORT_WIDTH = 4.0
DEFECT_SPREAD = 3.0
KERNEL_TOL = 1e-10
FRINGE_WINDOW = (0.9, 1.1)


@dataclass
class Outcome:
    passed: bool
    detail: str
    header: tuple
    rows: list


@dataclass
class CriterionResult:
    number: int
    title: str
    passed: bool
    detail: str
    elapsed: float
    budget: float
    files: dict = field(default_factory=dict)

    @property
    def within_budget(self) -> bool:
        return self.elapsed <= self.budget

    @property
    def ok(self) -> bool:
        return self.passed and self.within_budget

    def line(self) -> str:
        verdict = "PASS" if self.ok else "FAIL"
        budget = "" if math.isinf(self.budget) else f" / {self.budget:.0f}s"
        slow = "" if self.within_budget else " over budget"
        return (f"criterion {self.number:2d} {verdict}  {self.title}: {self.detail}"
                f"  [{self.elapsed:.1f}s{budget}{slow}]")


def _fmt_set(s) -> str:
    return " ".join(str(v) for v in sorted(s))


# -- individual checks ---------------------------------------------------------------

def c01_midpoint_walk(rng: RngStream, out: Path) -> Outcome:
    k, runs = 4, 100_000
    counts: Counter = Counter()
    for _ in range(runs):
        counts[tuple(int(v) for v in uidla_1d_middle(k, rng).twice[1:])] += 1
    law = srw_path_law(k)
    paths = sorted(law)
    stray = set(counts) - set(law)
    obs = np.array([counts[p] for p in paths], dtype=float)
    exp = np.array([runs * float(law[p]) for p in paths])
    pval = float(stats.chisquare(obs, exp).pvalue)
    rows = [(" ".join(map(str, p)), int(o), e) for p, o, e in zip(paths, obs, exp)]
    rows += [(" ".join(map(str, p)), counts[p], 0.0) for p in sorted(stray)]
    ok = not stray and pval >= SIGNIFICANCE
    return Outcome(ok, f"chi-square p={pval:.4g} over {len(paths)} paths, {len(stray)} off-support",
                   ("path", "observed", "expected"), rows)


def c02_shape_trend(rng: RngStream, out: Path) -> Outcome:
    radii, seeds = (25, 50, 100), 10
    rows, medians = [], []
    worst_out = worst_in = 0.0
    for n in radii:
        b = ball_volume(2, n)
        widths = []
        for s in range(seeds):
            A, _ = uidla(None, b - 1, rng.spawn(n * 1000 + s), d=2)
            r_in, r_out = A.inradius, A.outradius
            widths.append((r_out - r_in) / n)
            rows.append((n, s, b, r_in, r_out, (r_out - r_in) / n))
            if n == radii[-1]:
                worst_out = max(worst_out, abs(r_out / n - 1))
                worst_in = max(worst_in, abs(1 - r_in / n))
        medians.append(float(np.median(widths)))
    monotone = all(b <= a for a, b in zip(medians, medians[1:]))
    ok = monotone and worst_out < SHAPE_TOL and worst_in < SHAPE_TOL
    detail = (f"median width/n {', '.join(f'{m:.4f}' for m in medians)}; at n=100 "
              f"max|out/n-1|={worst_out:.4f}, max|1-in/n|={worst_in:.4f}")
    return Outcome(ok, detail, ("n", "seed", "particles", "inradius", "outradius", "width_over_n"), rows)


def c03_yule_levels(rng: RngStream, out: Path) -> Outcome:
    times, kmax, reps = (0.5, 1.0, 2.0), 5, 10_000
    X = np.zeros((len(times), kmax + 1, reps))
    for r in range(reps):
        tree = grow_yule(rng, t_target=max(times))
        for i, t in enumerate(times):
            X[i, :, r] = tree.level_counts(t, kmax)
    rows, worst = [], 0.0
    for i, t in enumerate(times):
        for k in range(kmax + 1):
            mu = yule_level_mean(t, k)
            mean = float(X[i, k].mean())
            # the theoretical mean floors the variance so rare levels are not
            # judged against a zero sample spread
            se = math.sqrt(max(float(X[i, k].var(ddof=1)), mu) / reps)
            z = (mean - mu) / se
            worst = max(worst, abs(z))
            rows.append((t, k, mean, mu, se, z))
    return Outcome(worst <= Z_BOUND, f"max |z| = {worst:.3f} over {len(rows)} (t, k) pairs",
                   ("t", "k", "mean", "expected", "stderr", "z"), rows)


def c04_reaching_time(rng: RngStream, out: Path) -> Outcome:
    sizes, seeds = (100, 1000, 10_000), 20
    rows, means = [], []
    for n in sizes:
        ratios = []
        for s in range(seeds):
            sub = rng.spawn(n * 1000 + s)
            _, forest = uidla(None, n - 1, sub, d=2)
            assign_edge_weights(forest, sub.spawn(1))
            mrt = max_reaching_time(forest)
            ratio = mrt / math.log(n) ** 2
            ratios.append(ratio)
            rows.append((n, s, mrt, ratio))
        means.append(float(np.mean(ratios)))
    top = max(r[3] for r in rows)
    ok = top <= REACH_RATIO_BOUND and means[-1] <= REACH_GROWTH_BOUND * means[0]
    detail = (f"max ratio {top:.4f} (bound {REACH_RATIO_BOUND}); mean ratio "
              f"{', '.join(f'{m:.4f}' for m in means)}")
    return Outcome(ok, detail, ("n", "seed", "max_reaching_time", "ratio_log2"), rows)


def c05_tricolor(rng: RngStream, out: Path) -> Outcome:
    runs = 100_000
    E = Aggregate(1, [[0]])
    F = Aggregate(1, [[-1], [0]])
    blue_c: Counter = Counter()
    rb_c: Counter = Counter()
    for _ in range(runs):
        _, blue, redblue = tricolor_run(E, F, 1, rng)
        blue_c[frozenset(int(p[0]) for p in blue.points())] += 1
        rb_c[frozenset(int(p[0]) for p in redblue.points())] += 1
    blue_law, rb_law = tricolor_hand_law()
    rows, worst, stray = [], 0.0, 0
    for name, law, counts in (("blue", blue_law, blue_c), ("red_or_blue", rb_law, rb_c)):
        stray += sum(c for s, c in counts.items() if s not in law)
        for s in sorted(law, key=_fmt_set):
            p = float(law[s])
            freq = counts[s] / runs
            se = math.sqrt(p * (1 - p) / runs)
            z = (freq - p) / se
            worst = max(worst, abs(z))
            rows.append((name, _fmt_set(s), freq, p, z))
    return Outcome(worst <= Z_BOUND and stray == 0,
                   f"max |z| = {worst:.3f}, {stray} runs outside the exact support",
                   ("law", "set", "frequency", "exact", "z"), rows)


def c06_sandpile(rng: RngStream, out: Path) -> Outcome:
    funcs = {
        "x": lambda c: c[:, 0].astype(float),
        "x2-y2": lambda c: c[:, 0].astype(float) ** 2 - c[:, 1].astype(float) ** 2,
        "xy": lambda c: c[:, 0].astype(float) * c[:, 1],
    }
    rows, ok = [], True
    for M in (10, 100, 1000):
        st = sandpile_relax(2, M)
        r_in, r_out = st.support_radii()
        width = r_out - r_in
        ok &= width <= SUPPORT_WIDTH
        for name, h in funcs.items():
            res = st.quadrature_residual(h)
            ok &= res <= QUADRATURE_REL * M
            rows.append((M, name, res, QUADRATURE_REL * M, r_in, r_out, width))
    worst = max(r[2] / r[3] for r in rows)
    widest = max(r[6] for r in rows)
    return Outcome(bool(ok), f"max residual/bound {worst:.3g}, widest support annulus {widest:.3f}",
                   ("M", "h", "residual", "bound", "r_in", "r_out", "width"), rows)


def c07_averaging_defect(rng: RngStream, out: Path) -> Outcome:
    samples = 1_000_000
    rows, scaled = [], []
    for n in (4, 6, 8, 10, 12):
        est = averaging_defect(n, samples, rng.spawn(n), d=2)
        exact = averaging_defect_exact(n, d=2)
        scaled.append(est * n)
        rows.append((n, est, exact, est * n, exact * n))
    spread = max(scaled) / min(scaled)
    return Outcome(spread <= DEFECT_SPREAD, f"max/min of n*defect = {spread:.3f}",
                   ("n", "defect", "defect_exact", "n_defect", "n_defect_exact"), rows)


def c08_exit_kernels(rng: RngStream, out: Path) -> Outcome:
    walks = 100_000
    A = make_ball_aggregate(2, 5)
    origin = np.zeros(2, dtype=np.int64)
    fast, _ = sample_exit_points(A, origin, walks, rng.spawn(1), accel=True)
    slow, _ = sample_exit_points(A, origin, walks, rng.spawn(2), accel=False)
    keys = sorted({tuple(p) for p in fast.tolist()} | {tuple(p) for p in slow.tolist()})
    cf, cs = Counter(map(tuple, fast.tolist())), Counter(map(tuple, slow.tolist()))
    table = np.array([[cf[k] for k in keys], [cs[k] for k in keys]])
    pval = float(stats.chi2_contingency(table)[1])
    rows = [("contingency_p", 2, 5, pval)]
    worst = 0.0
    for d in (1, 2, 3):
        for r in (1, 2, 3):
            offs, probs = center_exit_kernel(d, r)
            ex, tab = ball_exit_mass(d, r, np.zeros((1, d), dtype=np.int64))
            ref = {tuple(e): p for e, p in zip(ex.tolist(), tab[0])}
            got = {tuple(o): p for o, p in zip(offs.tolist(), probs)}
            centre_err = max(abs(got.get(y, 0.0) - ref.get(y, 0.0)) for y in set(ref) | set(got))
            kern = build_exit_kernel(d, r)
            ex2, tab2 = ball_exit_mass(d, r, kern.starts)
            col = {tuple(e): j for j, e in enumerate(ex2.tolist())}
            full_err = float(np.abs(tab2[:, [col[tuple(e)] for e in kern.exits.tolist()]]
                                    - kern.table).max())
            worst = max(worst, centre_err, full_err)
            rows.append(("kernel_max_abs_err", d, r, max(centre_err, full_err)))
    ok = pval >= SIGNIFICANCE and worst <= KERNEL_TOL
    return Outcome(ok, f"accelerated vs plain p={pval:.4g}; max kernel error {worst:.3g}",
                   ("check", "d", "r", "value"), rows)


def c09_annulus_crossing(rng: RngStream, out: Path) -> Outcome:
    spec = AnnulusSpec(30, 10, 6)
    walks = 10_000
    S = random_annulus_fill(2, spec, 0.05, rng.spawn(1))
    ball = ball_points(2, spec.inner)
    starts = ball[rng.spawn(2).generator.integers(0, len(ball), size=walks)]
    rep = annulus_crossing_probe(S, spec, starts, 1, rng.spawn(3))
    rows, ok = [], True
    for j in range(1, 6):
        geo = 1 - 2.0 ** -(j + 1)
        margin = Z_BOUND * math.sqrt(geo * (1 - geo) / walks)
        emp = rep.cdf(j)
        ok &= emp >= geo - margin
        rows.append((j, emp, geo, margin))
    return Outcome(bool(ok), f"P(J<=j) for j=1..5: {', '.join(f'{r[1]:.4f}' for r in rows)}",
                   ("j", "empirical_cdf", "geometric_cdf", "margin"), rows)


def c10_render(rng: RngStream, out: Path) -> Outcome:
    particles = 1_000_000
    A, _ = uidla(None, particles - 1, rng, d=2)
    path = out / "criterion_10.ppm"
    render_symdiff(A, path)
    img = read_ppm(path)
    h, w, _ = img.shape
    r_eq = equivalent_radius(2, len(A))
    X, Y = np.meshgrid(np.arange(w) - w // 2, h // 2 - np.arange(h))
    rad = np.sqrt(X * X + Y * Y) / r_eq
    white = (img == WHITE).all(axis=-1)
    blue = (img == BLUE).all(axis=-1)
    red = (img == RED).all(axis=-1)
    disk = rad < FRINGE_WINDOW[0]
    labels, _ = ndimage.label(white & disk)
    centre = labels[h // 2, w // 2]
    disk_ok = bool(centre > 0 and (labels[disk] == centre).all())
    coloured = blue | red
    lo = float(rad[coloured].min()) if coloured.any() else math.nan
    hi = float(rad[coloured].max()) if coloured.any() else math.nan
    fringe_ok = bool(coloured.any() and lo >= FRINGE_WINDOW[0] and hi <= FRINGE_WINDOW[1])
    valid = bool((white | coloured).all())
    rows = [("n_sites", len(A)), ("ball_radius_equiv", r_eq), ("width", w), ("height", h),
            ("blue_pixels", int(blue.sum())), ("red_pixels", int(red.sum())),
            ("min_fringe_radius_ratio", lo), ("max_fringe_radius_ratio", hi),
            ("white_disk_connected", int(disk_ok))]
    return Outcome(valid and disk_ok and fringe_ok,
                   f"{int(blue.sum())} blue, {int(red.sum())} red pixels; fringe in "
                   f"[{lo:.4f}, {hi:.4f}] x r_eq; white disk connected: {disk_ok}",
                   ("metric", "value"), rows)


@dataclass(frozen=True)
class Criterion:
    number: int
    title: str
    budget: float
    run: Callable[[RngStream, Path], Outcome]


CRITERIA = (
    Criterion(1, "d=1 midpoint is a simple random walk", 60, c01_midpoint_walk),
    Criterion(2, "shape trend in d=2", 600, c02_shape_trend),
    Criterion(3, "Yule level means", 120, c03_yule_levels),
    Criterion(4, "reaching time grows like log^2", 300, c04_reaching_time),
    Criterion(5, "tricolor blue-set law", 60, c05_tricolor),
    Criterion(6, "sandpile quadrature", 120, c06_sandpile),
    Criterion(7, "averaging defect decay", 300, c07_averaging_defect),
    Criterion(8, "exit kernel exactness", 120, c08_exit_kernels),
    Criterion(9, "annulus crossing domination", 180, c09_annulus_crossing),
    Criterion(10, "symmetric difference render at 10^6 particles", 1800, c10_render),
)
DETERMINISM = 11


def criterion_stream(seed: int, number: int) -> RngStream:
    return RngStream(seed, number << 40)


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def run_criteria(seed: int, out_dir, numbers=None, log=None) -> list[CriterionResult]:
    """Run the selected statistical criteria (1..10), one CSV per criterion."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    wanted = set(range(1, 11) if numbers is None else numbers)
    results = []
    for c in CRITERIA:
        if c.number not in wanted:
            continue
        t0 = time.perf_counter()
        o = c.run(criterion_stream(seed, c.number), out)
        elapsed = time.perf_counter() - t0
        path = out / f"criterion_{c.number:02d}.csv"
        write_csv(path, o.header, o.rows)
        res = CriterionResult(c.number, c.title, bool(o.passed), o.detail, elapsed, c.budget,
                              {path.name: file_digest(path)})
        results.append(res)
        if log is not None:
            log(res.line())
    write_csv(out / "verdicts.csv", ("criterion", "title", "passed", "detail"),
              [(r.number, r.title, int(r.passed), r.detail) for r in results])
    return results


def run_selftest(seed: int, out_dir, numbers=None, determinism: bool = True,
                 log=None) -> list[CriterionResult]:
    """Run the criteria into ``out_dir/run1``; with ``determinism`` run them again
    into ``out_dir/run2`` and compare every CSV by SHA-256."""
    out = Path(out_dir)
    first = run_criteria(seed, out / "run1", numbers, log)
    if not determinism:
        return first
    t0 = time.perf_counter()
    run_criteria(seed, out / "run2", numbers)
    elapsed = time.perf_counter() - t0
    names = sorted(p.name for p in (out / "run1").glob("*.csv"))
    other = sorted(p.name for p in (out / "run2").glob("*.csv"))
    diffs = [n for n in names if n not in other
             or file_digest(out / "run1" / n) != file_digest(out / "run2" / n)]
    diffs += [n for n in other if n not in names]
    rows = [(n, file_digest(out / "run1" / n)) for n in names]
    write_csv(out / "hashes.csv", ("file", "sha256"), rows)
    detail = (f"{len(names)} CSV files identical across two runs" if not diffs
              else f"differing files: {', '.join(diffs)}")
    res = CriterionResult(DETERMINISM, "determinism under a fixed seed", not diffs, detail,
                          elapsed, math.inf, dict(rows))
    if log is not None:
        log(res.line())
    return first + [res]
