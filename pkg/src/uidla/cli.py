"""Command-line entry point: ``uidla <subcommand> [--flags]``."""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import analysis, couplings, genealogy
from .errors import ConfigError, CouplingError, WalkAbort
from .harness import SUMMARY_HEADER, STATS_HEADER, ExperimentConfig, RenderSpec, render_symdiff, run_experiment
from .io import atomic_write_bytes, atomic_write_text, csv_text
from .lattice import Aggregate, ball_points, make_ball_aggregate
from .processes import uidla
from .rng import RngStream

CSV_SCHEMAS = f"""\
CSV schemas (floats have 9 significant digits):
  simulate  replica_XXX_stats.csv  {",".join(STATS_HEADER)}
            summary.csv            {",".join(SUMMARY_HEADER)}
            replica_XXX_forest.csv {",".join(genealogy.FOREST_HEADER)}
  couple    killed                 scheme,n,eta,particles,kappa,size_E,size_F,contained
            tricolor               scheme,particles,blue,red,black,red_or_blue,total,wakeups
  estimate  harmonic               exit_point,estimate,stderr,exact
            harnack                n,samples,ratio,exact_ratio,excluded_exits
            defect                 n,samples,defect,defect_exact
            sandpile               M,h,residual,r_in,r_out,sweeps
  genealogy forest                 {",".join(genealogy.FOREST_HEADER)}
            yule                   t,k,mean,expected
  analyze   snapshot               {",".join(analysis.SHAPE_HEADER)}
            fluctuation            {",".join(analysis.FLUCT_HEADER)}
            annulus                k,frequency_crossed_more,empirical_cdf
  selftest  run1/criterion_NN.csv  one file per criterion; hashes.csv file,sha256

Exit codes: 0 success, 2 configuration error, 3 runtime abort.
"""


def _point(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",")]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _emit(text: str, out: str | None) -> None:
    if out:
        atomic_write_text(Path(out), text)
    else:
        sys.stdout.write(text)


# -- subcommands ----------------------------------------------------------------------------

SIM_KEYS = ("seed", "dim", "process", "particles", "radius", "replicas", "out_dir",
            "initial_radius", "host_size", "stats_every", "geom_convention")


def cmd_simulate(args) -> int:
    values = {}
    if args.config:
        values = vars(ExperimentConfig.load(args.config))
    for key in SIM_KEYS:
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    if args.particles is not None:
        values["radius"] = None
    if args.radius is not None:
        values["particles"] = None
    for flag in ("snapshots", "forest", "render"):
        if getattr(args, flag):
            values[flag] = True
    if args.accel is not None:
        values["accel"] = args.accel == "on"
    if args.snapshot_out:
        values["snapshots"] = True
    cfg = ExperimentConfig(**values)
    extra = {"replica_000.snap": args.snapshot_out, "replica_000_stats.csv": args.stats_out}
    extra = {name: path for name, path in extra.items() if path}
    if extra and cfg.replicas != 1:
        raise ConfigError("--snapshot-out and --stats-out need replicas = 1")
    if args.write_config:
        atomic_write_text(Path(args.write_config), cfg.serialize())
    code = run_experiment(cfg)
    if code == 0:
        for name, path in extra.items():
            atomic_write_bytes(Path(path), (Path(cfg.out_dir) / name).read_bytes())
    return code


def cmd_couple(args) -> int:
    rng = RngStream(args.seed)
    if args.scheme == "killed":
        inner = ball_points(args.dim, args.radius / 2)
        X = inner[rng.generator.integers(0, len(inner), size=args.particles)]
        E, F, kappa = couplings.coupled_domination_run(args.radius, X, args.eta, rng, d=args.dim,
                                                       accel=args.accel == "on")
        row = ("killed", args.radius, args.eta, args.particles, kappa, len(E), len(F),
               int(F.as_set() <= E.as_set()))
        _emit(csv_text(("scheme", "n", "eta", "particles", "kappa", "size_E", "size_F", "contained"),
                       [row]), args.out)
        return 0
    E = make_ball_aggregate(args.dim, args.inner_radius)
    F = make_ball_aggregate(args.dim, args.radius)
    state, blue, redblue = couplings.tricolor_run(E, F, args.particles, rng, accel=args.accel == "on")
    C = couplings.Color
    row = ("tricolor", args.particles, len(state.sites_of(C.BLUE)), len(state.sites_of(C.RED)),
           len(state.sites_of(C.BLACK)), len(redblue), len(state.aggregate), state.wakeups)
    _emit(csv_text(("scheme", "particles", "blue", "red", "black", "red_or_blue", "total", "wakeups"),
                   [row]), args.out)
    return 0


def cmd_estimate(args) -> int:
    rng = RngStream(args.seed)
    accel = args.accel == "on"
    d = args.dim
    if args.what == "harmonic":
        A = make_ball_aggregate(d, args.radius)
        start = args.start if args.start is not None else (0,) * d
        if len(start) != d:
            raise ConfigError(f"--start needs {d} coordinates")
        est = couplings.estimate_harmonic_measure(A, np.array(start), args.samples, rng, accel)
        exact = {}
        if args.radius <= 15 and tuple(start) in A:
            exits, table = couplings.exact_ball_exit(d, args.radius, [start])
            exact = {tuple(int(v) for v in y): float(p) for y, p in zip(exits, table[0])}
        keys = sorted(set(est.counts) | set(exact))
        rows = [(" ".join(map(str, y)), est.estimate(y), est.stderr(y), exact.get(y, float("nan")))
                for y in keys]
        _emit(csv_text(("exit_point", "estimate", "stderr", "exact"), rows), args.out)
    elif args.what == "harnack":
        scan = couplings.harnack_ratio_scan(args.radius, args.samples, rng, d=d, accel=accel)
        exact = couplings.exact_harnack_ratio(d, args.radius, couplings.harnack_starts(d, args.radius))
        _emit(csv_text(("n", "samples", "ratio", "exact_ratio", "excluded_exits"),
                       [(args.radius, args.samples, scan.ratio, exact, len(scan.excluded))]), args.out)
    elif args.what == "defect":
        est = couplings.averaging_defect(args.radius, args.samples, rng, d=d, accel=accel)
        exact = couplings.averaging_defect_exact(args.radius, d)
        _emit(csv_text(("n", "samples", "defect", "defect_exact"),
                       [(args.radius, args.samples, est, exact)]), args.out)
    else:
        st = couplings.sandpile_relax(d, args.mass)
        r_in, r_out = st.support_radii()
        harmonic = {"x": lambda c: c[:, 0].astype(float)}
        if d >= 2:
            harmonic["x2-y2"] = lambda c: c[:, 0].astype(float) ** 2 - c[:, 1].astype(float) ** 2
            harmonic["xy"] = lambda c: c[:, 0].astype(float) * c[:, 1]
        rows = [(args.mass, name, st.quadrature_residual(h), r_in, r_out, st.sweeps)
                for name, h in harmonic.items()]
        _emit(csv_text(("M", "h", "residual", "r_in", "r_out", "sweeps"), rows), args.out)
    return 0


def cmd_genealogy(args) -> int:
    rng = RngStream(args.seed)
    if args.yule_time is not None:
        kmax = args.kmax
        sums = np.zeros(kmax + 1)
        for _ in range(args.replicas):
            sums += genealogy.grow_yule(rng, t_target=args.yule_time).level_counts(kmax=kmax)
        rows = [(args.yule_time, k, sums[k] / args.replicas, genealogy.yule_level_mean(args.yule_time, k))
                for k in range(kmax + 1)]
        _emit(csv_text(("t", "k", "mean", "expected"), rows), args.out)
        return 0
    if args.particles is None:
        raise ConfigError("genealogy needs --particles (or --yule-time)")
    _, forest = uidla(None, args.particles - 1, rng, args.accel == "on", d=args.dim)
    genealogy.assign_edge_weights(forest, rng.spawn(1), args.geom_convention)
    _emit(csv_text(genealogy.FOREST_HEADER, genealogy.forest_rows(forest)), args.out)
    print(f"max reaching time {genealogy.max_reaching_time(forest)}", file=sys.stderr)
    return 0


def cmd_analyze(args) -> int:
    rng = RngStream(args.seed)
    if args.snapshot:
        rep = analysis.shape_report(Aggregate.read_snapshot(args.snapshot))
        _emit(csv_text(analysis.SHAPE_HEADER, [analysis.shape_row(rep)]), args.out)
    elif args.fluctuation:
        rows = analysis.fluctuation_scaling(args.process, args.dim, args.radii, args.replicas, rng,
                                            accel=args.accel == "on")
        _emit(csv_text(analysis.FLUCT_HEADER, rows), args.out)
    elif args.annulus:
        inner, width, count = args.annulus
        spec = analysis.AnnulusSpec(inner, width, int(count))
        S = analysis.random_annulus_fill(args.dim, spec, args.density, rng.spawn(1))
        ball = ball_points(args.dim, inner)
        starts = ball[rng.spawn(2).generator.integers(0, len(ball), size=args.walks)]
        rep = analysis.annulus_crossing_probe(S, spec, starts, 1, rng.spawn(3), args.accel == "on")
        rows = [(k, rep.frequencies[k], rep.cdf(k)) for k in range(spec.count)]
        _emit(csv_text(("k", "frequency_crossed_more", "empirical_cdf"), rows), args.out)
    else:
        raise ConfigError("analyze needs one of --snapshot, --fluctuation, --annulus")
    return 0


def cmd_render(args) -> int:
    A = Aggregate.read_snapshot(args.snapshot)
    render_symdiff(A, args.out, RenderSpec(args.width, args.height))
    return 0


def cmd_selftest(args) -> int:
    from .selftest import run_selftest
    results = run_selftest(args.seed, args.out_dir, args.criteria, not args.no_determinism,
                           log=print)
    return 0 if all(r.ok for r in results) else 1


# -- parser ---------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uidla", description="uIDLA simulation laboratory",
                                epilog=CSV_SCHEMAS, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help_text, func):
        sp = sub.add_parser(name, help=help_text, description=help_text, epilog=CSV_SCHEMAS,
                            formatter_class=argparse.RawDescriptionHelpFormatter)
        sp.set_defaults(func=func)
        return sp

    def common(sp, seed_default=0):
        sp.add_argument("--seed", type=int, default=seed_default)
        sp.add_argument("--dim", type=int, default=2)
        sp.add_argument("--accel", choices=("on", "off"), default="on",
                        help="exit-kernel jumps (off: plain step-by-step walks)")
        sp.add_argument("--out", help="output file (default: stdout)")

    s = add("simulate", "run replicas of a growth process", cmd_simulate)
    s.add_argument("--config", help="key = value config file; flags override it")
    s.add_argument("--write-config", help="write the effective config here")
    s.add_argument("--seed", type=int)
    s.add_argument("--dim", type=int)
    s.add_argument("--process", choices=("idla", "uidla", "subset", "richardson"))
    s.add_argument("--particles", type=int)
    s.add_argument("--radius", type=float, help="grow until b_radius sites")
    s.add_argument("--replicas", type=int)
    s.add_argument("--out-dir", dest="out_dir")
    s.add_argument("--initial-radius", dest="initial_radius", type=float)
    s.add_argument("--host-size", dest="host_size", type=int)
    s.add_argument("--stats-every", dest="stats_every", type=int)
    s.add_argument("--geom-convention", dest="geom_convention", choices=tuple(genealogy.GEOM_CONVENTIONS))
    s.add_argument("--snapshots", action="store_true")
    s.add_argument("--forest", action="store_true")
    s.add_argument("--render", action="store_true")
    s.add_argument("--accel", choices=("on", "off"))
    s.add_argument("--snapshot-out", help="also write the final snapshot here (replicas = 1)")
    s.add_argument("--stats-out", help="also write the stats CSV here (replicas = 1)")

    c = add("couple", "run a coupling construction", cmd_couple)
    common(c)
    c.add_argument("--scheme", choices=("killed", "tricolor"), required=True)
    c.add_argument("--radius", type=float, default=10.0, help="starting ball B[n] (F for tricolor)")
    c.add_argument("--inner-radius", type=float, default=3.0, help="E = B[r] for tricolor")
    c.add_argument("--particles", type=int, default=100)
    c.add_argument("--eta", type=float, default=0.1, help="survival probability (killed)")

    e = add("estimate", "Monte Carlo estimators with exact references", cmd_estimate)
    common(e)
    e.add_argument("--what", choices=("harmonic", "harnack", "defect", "sandpile"), required=True)
    e.add_argument("--radius", type=float, default=5.0)
    e.add_argument("--start", type=_point, help="walk start, e.g. 1,0")
    e.add_argument("--samples", type=int, default=100_000)
    e.add_argument("--mass", type=float, default=100.0, help="sandpile mass M")

    g = add("genealogy", "genealogical forest or Yule level counts", cmd_genealogy)
    common(g)
    g.add_argument("--particles", type=int)
    g.add_argument("--geom-convention", choices=tuple(genealogy.GEOM_CONVENTIONS), default="param-half")
    g.add_argument("--yule-time", type=float)
    g.add_argument("--replicas", type=int, default=1000)
    g.add_argument("--kmax", type=int, default=5)

    a = add("analyze", "shape statistics, fluctuation scaling, annulus probe", cmd_analyze)
    common(a)
    a.add_argument("--snapshot", help="aggregate snapshot to summarise")
    a.add_argument("--fluctuation", action="store_true")
    a.add_argument("--process", choices=("idla", "uidla", "richardson"), default="uidla")
    a.add_argument("--radii", type=_floats, default=[10.0, 20.0, 40.0])
    a.add_argument("--replicas", type=int, default=5)
    a.add_argument("--annulus", type=_floats, help="inner,width,count")
    a.add_argument("--density", type=float, default=0.05)
    a.add_argument("--walks", type=int, default=10_000)

    r = add("render", "symmetric difference against the equal-volume ball (P6)", cmd_render)
    r.add_argument("--snapshot", required=True)
    r.add_argument("--out", required=True)
    r.add_argument("--width", type=int)
    r.add_argument("--height", type=int)

    t = add("selftest", "run the acceptance suite", cmd_selftest)
    t.add_argument("--seed", type=int, default=42)
    t.add_argument("--out-dir", default="selftest_out")
    t.add_argument("--criteria", type=_ints, help="subset of 1..10, e.g. 1,5,8")
    t.add_argument("--no-determinism", action="store_true", help="skip the second run")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (WalkAbort, CouplingError) as exc:
        print(f"run aborted: {exc}", file=sys.stderr)
        return 3
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
