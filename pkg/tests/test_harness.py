import csv
import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from uidla import harness
from uidla.errors import ConfigError, WalkAbort
from uidla.genealogy import GEOM_CONVENTIONS
from uidla.harness import (BLUE, RED, SUMMARY_HEADER, WHITE, ExperimentConfig, RenderSpec, ppm_bytes,
                           read_ppm, render_symdiff, run_experiment, symdiff_image)
from uidla.lattice import Aggregate, ball_volume, make_ball_aggregate


def read_rows(path):
    with open(path) as fh:
        return list(csv.reader(fh))


def tree_bytes(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


configs = st.builds(
    ExperimentConfig,
    seed=st.integers(0, 2 ** 63 - 1),
    dim=st.integers(1, 4),
    process=st.sampled_from(["idla", "uidla", "richardson"]),
    particles=st.integers(0, 10 ** 6),
    replicas=st.integers(1, 50),
    accel=st.booleans(),
    out_dir=st.from_regex(r"[a-z][a-z0-9_/]{0,12}", fullmatch=True),
    initial_radius=st.floats(0, 50, allow_nan=False),
    stats_every=st.integers(0, 1000),
    snapshots=st.booleans(),
    geom_convention=st.sampled_from(sorted(GEOM_CONVENTIONS)),
)


@given(configs)
@settings(max_examples=60, deadline=None)
def test_config_round_trip(cfg):
    assert ExperimentConfig.parse(cfg.serialize()) == cfg


def test_config_parse_examples():
    cfg = ExperimentConfig.parse("seed = 7  # comment\n\n# whole line\nparticles=10\naccel = false\n")
    assert cfg.seed == 7 and cfg.particles == 10 and cfg.accel is False and cfg.radius is None


@pytest.mark.parametrize("text", [
    "particles = 10\ncolour = red\n",
    "particles = 10\nparticles = 11\n",
    "particles = ten\n",
    "particles 10\n",
    "seed = 1\n",
    "particles = 10\nradius = 3\n",
    "particles = 10\ndim = 5\n",
    "particles = 10\nprocess = dla\n",
    "particles = 10\nprocess = subset\n",
    "particles = 10\nprocess = idla\nforest = true\n",
    "particles = 10\ndim = 3\nrender = true\n",
    "radius = inf\n",
    "particles = 10\ngeom_convention = other\n",
])
def test_config_errors(text):
    with pytest.raises(ConfigError):
        ExperimentConfig.parse(text)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        ExperimentConfig.load(tmp_path / "nope.txt")


def test_run_is_reproducible(tmp_path):
    outs = []
    for name in ("a", "b"):
        cfg = ExperimentConfig(seed=3, particles=200, replicas=2, out_dir=str(tmp_path / name),
                               stats_every=50, snapshots=True, forest=True, render=True)
        assert run_experiment(cfg) == 0
        outs.append(tree_bytes(tmp_path / name))
    # config.txt records the output directory, which differs on purpose
    c0, c1 = outs[0].pop("config.txt"), outs[1].pop("config.txt")
    assert c0.replace(b"/a\n", b"/b\n") == c1
    assert outs[0] == outs[1]
    assert set(outs[0]) == {"summary.csv"} | {
        f"replica_00{r}{ext}" for r in (0, 1) for ext in ("_stats.csv", ".snap", "_forest.csv", ".ppm")}
    # the two replicas use different streams
    assert outs[0]["replica_000.snap"] != outs[0]["replica_001.snap"]


def test_radius_run_summary(tmp_path):
    cfg = ExperimentConfig(seed=1, radius=50, out_dir=str(tmp_path))
    assert run_experiment(cfg) == 0
    rows = read_rows(tmp_path / "summary.csv")
    assert tuple(rows[0]) == SUMMARY_HEADER
    row = dict(zip(rows[0], rows[1]))
    assert int(row["n_sites"]) == ball_volume(2, 50)
    assert int(row["steps"]) == ball_volume(2, 50) - 1
    assert float(row["ball_radius_equiv"]) == 50.0
    assert 0 < float(row["inradius"]) <= 50 <= float(row["outradius"])
    assert row["max_reaching_time"] == ""
    assert ExperimentConfig.load(tmp_path / "config.txt") == cfg


def test_reloaded_config_reproduces_run(tmp_path):
    cfg = ExperimentConfig(seed=11, particles=300, replicas=2, out_dir=str(tmp_path / "a"), forest=True)
    assert run_experiment(cfg) == 0
    first = tree_bytes(tmp_path / "a")
    assert run_experiment(ExperimentConfig.load(tmp_path / "a" / "config.txt")) == 0
    assert tree_bytes(tmp_path / "a") == first
    assert first["summary.csv"].count(b"\n") == 3


def test_stats_rows(tmp_path):
    cfg = ExperimentConfig(process="idla", particles=95, stats_every=40, out_dir=str(tmp_path))
    assert run_experiment(cfg) == 0
    rows = read_rows(tmp_path / "replica_000_stats.csv")
    assert rows[1] == ["0", "0", "-1", "0"]
    assert [r[:2] for r in rows[2:]] == [["40", "40"], ["80", "80"], ["95", "95"]]


def test_subset_run(tmp_path):
    cfg = ExperimentConfig(process="subset", particles=100, host_size=50, initial_radius=2,
                           out_dir=str(tmp_path))
    assert run_experiment(cfg) == 0
    row = read_rows(tmp_path / "summary.csv")[1]
    assert ball_volume(2, 2) <= int(row[4]) <= ball_volume(2, 2) + 100


def test_forest_weights_in_summary(tmp_path):
    cfg = ExperimentConfig(particles=30, forest=True, out_dir=str(tmp_path))
    assert run_experiment(cfg) == 0
    row = dict(zip(*read_rows(tmp_path / "summary.csv")))
    forest = read_rows(tmp_path / "replica_000_forest.csv")
    assert len(forest) == 32
    assert int(row["max_reaching_time"]) == max(int(r[5]) for r in forest[1:])


def test_invalid_config_returns_2(tmp_path):
    cfg = ExperimentConfig(particles=10, out_dir=str(tmp_path))
    cfg.replicas = 0
    err = io.StringIO()
    assert run_experiment(cfg, stderr=err) == 2
    assert "replicas" in err.getvalue()
    assert not (tmp_path / "summary.csv").exists()


def test_walk_abort_returns_3(tmp_path, monkeypatch):
    def boom(cfg, replica):
        raise WalkAbort("step budget")
    monkeypatch.setattr(harness, "run_replica", boom)
    err = io.StringIO()
    assert run_experiment(ExperimentConfig(particles=10, out_dir=str(tmp_path)), stderr=err) == 3
    assert "step budget" in err.getvalue()


# -- rendering ------------------------------------------------------------------------

def test_render_ball_is_white():
    img = symdiff_image(make_ball_aggregate(2, 10))
    assert img.shape == (23, 23, 3)
    assert (img == WHITE).all()


def test_render_single_extra_site():
    A = make_ball_aggregate(2, 10)
    A.add((11, 0))
    img = symdiff_image(A)
    h, w, _ = img.shape
    blue = np.argwhere((img == BLUE).all(axis=2))
    assert blue.tolist() == [[h // 2, w // 2 + 11]]
    # the next ball up has more sites than A, so the rest of the difference is red
    red = (img == RED).all(axis=2).sum()
    r2 = int(round(harness.equivalent_radius(2, len(A)) ** 2))
    assert red == ball_volume(2, r2 ** 0.5) - (len(A) - 1)


def test_render_orientation():
    A = Aggregate(2, [(0, 0), (0, 1), (0, 2)])
    img = symdiff_image(A, RenderSpec(width=9, height=9, agreement=(0, 0, 0)))
    assert img.shape == (9, 9, 3)
    # y grows upwards: (0, 2) is two rows above the centre pixel
    assert (img[2, 4] == BLUE).all()
    assert (img[4, 3] == RED).all()


def test_render_needs_two_dimensions():
    with pytest.raises(ConfigError):
        symdiff_image(make_ball_aggregate(3, 2))
    with pytest.raises(ConfigError):
        symdiff_image(make_ball_aggregate(2, 2), RenderSpec(width=0))


def test_ppm_round_trip(tmp_path):
    A = make_ball_aggregate(2, 4)
    A.add((5, 1))
    path = tmp_path / "x.ppm"
    img = render_symdiff(A, path)
    data = path.read_bytes()
    h, w, _ = img.shape
    assert data.startswith(f"P6\n{w} {h}\n255\n".encode())
    assert np.array_equal(read_ppm(path), img)


def test_ppm_pixels_that_look_like_whitespace(tmp_path):
    img = np.full((2, 3, 3), 10, dtype=np.uint8)  # byte 10 is a newline
    path = tmp_path / "ws.ppm"
    path.write_bytes(ppm_bytes(img))
    assert np.array_equal(read_ppm(path), img)


@pytest.mark.parametrize("data", [b"P3\n1 1\n255\n\x00\x00\x00", b"P6\n2 2\n255\n\x00", b"P6\n1"])
def test_bad_ppm(tmp_path, data):
    path = tmp_path / "bad.ppm"
    path.write_bytes(data)
    with pytest.raises(ValueError):
        read_ppm(path)
