"""Experiment configuration, replica execution and image output."""
from __future__ import annotations

import dataclasses
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import equivalent_radius, shape_report
from .errors import ConfigError, WalkAbort
from .genealogy import (FOREST_HEADER, GEOM_CONVENTIONS, assign_edge_weights, forest_rows,
                        max_reaching_time)
from .io import atomic_write_bytes, atomic_write_text, write_csv
from .lattice import MAX_DIM, Aggregate, ball_volume, make_ball_aggregate, norm2_bound
from .processes import PROCESSES, idla_into, richardson_into, subset_into, uidla
from .rng import RngStream

STATS_HEADER = ("step", "n_sites", "inradius", "outradius")
SUMMARY_HEADER = ("replica", "process", "dim", "steps", "n_sites", "ball_radius_equiv",
                  "inradius", "outradius", "symdiff_count", "max_reaching_time")

# replica streams: purpose 0 drives the growth, 1 the genealogy weights
GROWTH, WEIGHTS = 0, 1


@dataclass
class ExperimentConfig:
    """Flat ``key = value`` experiment description.

    Exactly one of ``particles`` and ``radius`` is set; ``radius`` means
    "run until the aggregate holds b_radius sites". For ``subset``,
    ``particles`` counts host ticks.
    """

    seed: int = 0
    dim: int = 2
    process: str = "uidla"
    particles: int | None = None
    radius: float | None = None
    replicas: int = 1
    accel: bool = True
    out_dir: str = "out"
    initial_radius: float = 0.0
    host_size: int | None = None
    stats_every: int = 0
    snapshots: bool = False
    forest: bool = False
    geom_convention: str = "param-half"
    render: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 1 <= self.dim <= MAX_DIM:
            raise ConfigError(f"dim must be in 1..{MAX_DIM}, got {self.dim}")
        if self.process not in PROCESSES:
            raise ConfigError(f"process must be one of {', '.join(PROCESSES)}, got {self.process!r}")
        if (self.particles is None) == (self.radius is None):
            raise ConfigError("set exactly one of particles and radius")
        if self.particles is not None and self.particles < 0:
            raise ConfigError("particles must be nonnegative")
        if self.radius is not None and self.radius < 0:
            raise ConfigError("radius must be nonnegative")
        if self.replicas < 1:
            raise ConfigError("replicas must be at least 1")
        if self.initial_radius < 0:
            raise ConfigError("initial_radius must be nonnegative")
        if self.stats_every < 0:
            raise ConfigError("stats_every must be nonnegative")
        if self.geom_convention not in GEOM_CONVENTIONS:
            raise ConfigError(f"geom_convention must be one of {', '.join(GEOM_CONVENTIONS)}")
        if self.forest and self.process != "uidla":
            raise ConfigError("forest output exists only for process = uidla")
        if self.render and self.dim != 2:
            raise ConfigError("render needs dim = 2")
        if self.process == "subset":
            if self.host_size is None:
                raise ConfigError("process = subset needs host_size")
            if self.host_size < ball_volume(self.dim, self.initial_radius):
                raise ConfigError("host_size is smaller than the initial set")
            if self.radius is not None:
                raise ConfigError("process = subset counts host ticks; give particles, not radius")
        elif self.host_size is not None:
            raise ConfigError("host_size applies only to process = subset")

    # -- text form ----------------------------------------------------------------
    @classmethod
    def parse(cls, text: str) -> "ExperimentConfig":
        types = {f.name: f.type for f in dataclasses.fields(cls)}
        values: dict = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            if key not in types:
                raise ConfigError(f"line {lineno}: unknown key {key!r}")
            if key in values:
                raise ConfigError(f"line {lineno}: duplicate key {key!r}")
            values[key] = _convert(key, types[key], value)
        return cls(**values)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls.parse(text)

    def serialize(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if v is None:
                continue
            if isinstance(v, bool):
                v = "true" if v else "false"
            elif isinstance(v, float):
                v = repr(v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"


def _convert(key: str, typ: str, value: str):
    try:
        if "bool" in typ:
            low = value.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return low in ("true", "1", "yes")
        if "int" in typ:
            return int(value)
        if "float" in typ:
            v = float(value)
            if not math.isfinite(v):
                raise ValueError(value)
            return v
        return value
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {value!r}") from exc


# -- replica execution ------------------------------------------------------------------

def _initial_set(cfg: ExperimentConfig, nonempty: bool) -> Aggregate:
    if cfg.initial_radius > 0 or nonempty:
        return make_ball_aggregate(cfg.dim, cfg.initial_radius)
    return Aggregate(cfg.dim)


def _budget(cfg: ExperimentConfig, start_size: int) -> int:
    if cfg.particles is not None:
        return int(cfg.particles)
    return max(0, ball_volume(cfg.dim, cfg.radius) - start_size)


def _stat_row(step: int, agg: Aggregate):
    if not len(agg):
        return (step, 0, -1.0, 0.0)
    return (step, len(agg), agg.inradius, agg.outradius)


def run_replica(cfg: ExperimentConfig, replica: int):
    """One seeded run; returns (aggregate, stats rows, forest or None, steps)."""
    rng = RngStream.for_replica(cfg.seed, replica, GROWTH)
    stats = []
    forest = None
    if cfg.process == "uidla":
        S0 = _initial_set(cfg, nonempty=True)
        steps = _budget(cfg, len(S0))
        stats.append(_stat_row(0, S0))
        n0 = len(S0)
        agg, forest = uidla(S0, steps, rng, cfg.accel, d=cfg.dim, stats_every=cfg.stats_every,
                            on_stats=lambda a: stats.append(_stat_row(len(a) - n0, a)))
        if cfg.forest:
            assign_edge_weights(forest, RngStream.for_replica(cfg.seed, replica, WEIGHTS),
                                cfg.geom_convention)
        return agg, stats, forest, steps
    nonempty = cfg.process != "idla"
    agg = _initial_set(cfg, nonempty)
    steps = _budget(cfg, len(agg))
    chunk = cfg.stats_every if cfg.stats_every > 0 else max(steps, 1)
    stats.append(_stat_row(0, agg))
    done = 0
    while done < steps:
        step = min(chunk, steps - done)
        if cfg.process == "idla":
            idla_into(agg, np.zeros((step, cfg.dim), dtype=np.int64), rng, cfg.accel)
        elif cfg.process == "richardson":
            richardson_into(agg, step, rng)
        else:
            subset_into(agg, cfg.host_size, done, done + step, rng, cfg.accel)
        done += step
        stats.append(_stat_row(done, agg))
    return agg, stats, None, steps


def summary_row(cfg: ExperimentConfig, replica: int, agg: Aggregate, steps: int, forest) -> tuple:
    if len(agg):
        rep = shape_report(agg)
        shape = (rep.ball_radius_equiv, rep.inradius, rep.outradius, rep.symdiff_count)
    else:
        shape = (0.0, -1.0, 0.0, 0)
    mrt = max_reaching_time(forest) if forest is not None and forest.edge_weight is not None else ""
    return (replica, cfg.process, cfg.dim, steps, len(agg)) + shape + (mrt,)


def run_experiment(cfg: ExperimentConfig, stderr=None) -> int:
    """Run every replica and write its artifacts; returns the process exit code."""
    stderr = sys.stderr if stderr is None else stderr
    out = Path(cfg.out_dir)
    try:
        cfg.validate()
        out.mkdir(parents=True, exist_ok=True)
        atomic_write_text(out / "config.txt", cfg.serialize())
        rows = []
        for r in range(cfg.replicas):
            agg, stats, forest, steps = run_replica(cfg, r)
            tag = f"replica_{r:03d}"
            write_csv(out / f"{tag}_stats.csv", STATS_HEADER, stats)
            if cfg.snapshots:
                agg.write_snapshot(out / f"{tag}.snap")
            if cfg.forest:
                write_csv(out / f"{tag}_forest.csv", FOREST_HEADER, forest_rows(forest))
            if cfg.render:
                render_symdiff(agg, out / f"{tag}.ppm")
            rows.append(summary_row(cfg, r, agg, steps, forest))
        write_csv(out / "summary.csv", SUMMARY_HEADER, rows)
    except ConfigError as exc:
        print(f"config error: {exc}", file=stderr)
        return 2
    except (WalkAbort, MemoryError) as exc:
        print(f"run aborted: {exc}", file=stderr)
        return 3
    return 0


# -- rendering ---------------------------------------------------------------------------

WHITE = (255, 255, 255)
BLUE = (0, 0, 255)
RED = (255, 0, 0)


@dataclass(frozen=True)
class RenderSpec:
    """Image size in pixels (None = fit the picture) and the three colours.

    Pixel (col, row) shows the site (col - width//2, height//2 - row).
    """

    width: int | None = None
    height: int | None = None
    aggregate_only: tuple = BLUE
    ball_only: tuple = RED
    agreement: tuple = WHITE

    def resolve(self, extent: int) -> tuple[int, int]:
        side = 2 * extent + 3
        w = side if self.width is None else int(self.width)
        h = side if self.height is None else int(self.height)
        if w < 1 or h < 1:
            raise ConfigError("image dimensions must be positive")
        return w, h


def symdiff_image(A: Aggregate, spec: RenderSpec | None = None) -> np.ndarray:
    """(height, width, 3) uint8 raster of A against B[ball_radius_equiv]."""
    if A.d != 2:
        raise ConfigError(f"rendering needs a two-dimensional aggregate, got d={A.d}")
    spec = RenderSpec() if spec is None else spec
    r_eq = equivalent_radius(2, len(A))
    extent = int(math.ceil(max(A.outradius, r_eq)))
    w, h = spec.resolve(extent)
    img = np.empty((h, w, 3), dtype=np.uint8)
    img[:] = spec.agreement
    cx, cy = w // 2, h // 2
    bound = norm2_bound(r_eq)
    cols = np.arange(w) - cx
    rows = cy - np.arange(h)
    X, Y = np.meshgrid(cols, rows)
    in_ball = X * X + Y * Y <= bound
    in_agg = np.zeros((h, w), dtype=bool)
    pts = A.points()
    c = pts[:, 0] + cx
    rr = cy - pts[:, 1]
    ok = (c >= 0) & (c < w) & (rr >= 0) & (rr < h)
    in_agg[rr[ok], c[ok]] = True
    img[in_agg & ~in_ball] = spec.aggregate_only
    img[in_ball & ~in_agg] = spec.ball_only
    return img


def ppm_bytes(img: np.ndarray) -> bytes:
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + np.ascontiguousarray(img, dtype=np.uint8).tobytes()


def read_ppm(path) -> np.ndarray:
    """Parse a binary P6 file written by :func:`ppm_bytes`."""
    data = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        end = pos
        while end < len(data) and not data[end:end + 1].isspace():
            end += 1
        if end == pos:
            raise ValueError("truncated PPM header")
        fields.append(data[pos:end])
        pos = end
    if fields[0] != b"P6":
        raise ValueError("not a binary PPM (P6) file")
    w, h, maxval = (int(f) for f in fields[1:])
    if maxval != 255:
        raise ValueError(f"unsupported maxval {maxval}")
    body = data[pos + 1:]
    if len(body) != w * h * 3:
        raise ValueError(f"pixel payload has {len(body)} bytes, expected {w * h * 3}")
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)


def render_symdiff(A: Aggregate, path, spec: RenderSpec | None = None) -> np.ndarray:
    img = symdiff_image(A, spec)
    atomic_write_bytes(Path(path), ppm_bytes(img))
    return img
