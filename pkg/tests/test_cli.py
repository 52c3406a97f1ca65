import json
import math

import numpy as np
import pytest

from uavrt import cli
from uavrt.config import OUTPUT_ENV, ConfigError, load_run_config, parse_run_config
from uavrt.kinematics import Trajectory, TrajectoryError, dump_trajectories, parse_trajectories

DEM = "2 2 1000.0 -500.0 -500.0\n0 0\n0 0\n"
FOOTPRINTS = """\
building concrete 30 150 -20 180 -20 180 20 150 20
building concrete 10 -150 100 -120 100 -120 130 -150 130
vegetation foliage 6 -80 -150 -60 -150 -60 -130 -80 -130
"""
MATERIALS = "concrete 5.31 reflective\nwet_soil 15 reflective\nfoliage 1.1 foliage\nwater 20\n"
TRAJ = "[trajectory a]\nwaypoints_m = -100 60 75; 100 60 75\nspeed_mps = 10\ndt_s = 1\nduration_s = 5\n"
CONFIG = """\
[simulation]
frequency_mhz = 28000
seed = 3
workers = 1

[scene]
dem = dem.txt
footprints = footprints.txt
materials = materials.txt
lod = DB-I, DB-III

[trajectories]
file = flights.ini

[output]
directory = out
"""


@pytest.fixture
def workspace(tmp_path, monkeypatch):
    monkeypatch.delenv(OUTPUT_ENV, raising=False)
    for name, text in [
        ("dem.txt", DEM), ("footprints.txt", FOOTPRINTS), ("materials.txt", MATERIALS),
        ("flights.ini", TRAJ), ("run.ini", CONFIG),
    ]:
        (tmp_path / name).write_text(text)
    return tmp_path


class TestTrajectoryFile:
    def test_round_trip(self):
        t = Trajectory(np.array([[0.1, 2.0, 75.0], [100.0, -3.5, 75.0], [100.0, 50.0, 80.0]]), 10.0, 0.5, 12.0)
        (back,) = parse_trajectories(dump_trajectories([t]))
        np.testing.assert_array_equal(back.waypoints, t.waypoints)
        assert (back.speed, back.dt, back.duration) == (10.0, 0.5, 12.0)

    def test_dt_override(self):
        (t,) = parse_trajectories(TRAJ, dt_override=0.25)
        assert t.dt == 0.25 and t.n_states == 21

    @pytest.mark.parametrize(
        "text",
        [
            "[trajectory a]\nspeed_mps = 1\nduration_s = 1\n",
            "[trajectory a]\nwaypoints_m = 0 0; 1 1\nspeed_mps = 1\nduration_s = 1\n",
            "[trajectory a]\nwaypoints_m = 0 0 1; 1 1 1\nspeed_mps = fast\nduration_s = 1\n",
            "[other]\nx = 1\n",
            "",
        ],
    )
    def test_errors(self, text):
        with pytest.raises(TrajectoryError):
            parse_trajectories(text)


class TestRunConfig:
    def test_defaults(self):
        cfg = parse_run_config("[scene]\nsource = campus\n[trajectories]\nfile = campus\n")
        sim = cfg.simulation
        assert (sim.frequency_mhz, sim.threshold_db, sim.seed, sim.rx) == (28000.0, -45.0, 0, (0.0, 0.0, 2.0))
        assert (cfg.bandwidth_mhz, cfg.tx_power_dbm) == (500.0, 20.0)
        assert [c.label for c in cfg.lods] == ["DB-III"]
        assert len(cfg.trajectories()) == 6

    def test_relative_paths(self, workspace):
        cfg = load_run_config(workspace / "run.ini")
        assert cfg.scene.dem == workspace / "dem.txt"
        assert cfg.output_dir == workspace / "out"
        assert cfg.simulation.seed == 3

    def test_env_output_dir(self, workspace, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV, str(workspace / "elsewhere"))
        assert load_run_config(workspace / "run.ini").output_dir == workspace / "elsewhere"

    def test_threshold_off(self):
        cfg = parse_run_config("[simulation]\nthreshold_db = off\n[scene]\nsource = campus\n[trajectories]\nfile = campus\n")
        assert cfg.simulation.threshold_db == -math.inf

    def test_digest_tracks_text(self):
        base = "[scene]\nsource = campus\n[trajectories]\nfile = campus\n"
        assert parse_run_config(base).digest != parse_run_config(base + "\n").digest

    @pytest.mark.parametrize(
        "text",
        [
            "[scene]\nsource = campus\n",
            "[trajectories]\nfile = campus\n",
            "[bogus]\n[scene]\nsource = campus\n[trajectories]\nfile = campus\n",
            "[simulation]\nseed = x\n[scene]\nsource = campus\n[trajectories]\nfile = campus\n",
            "[simulation]\nfrequency_mhz = 0\n[scene]\nsource = campus\n[trajectories]\nfile = campus\n",
            "[simulation]\nthreshold_db = 3\n[scene]\nsource = campus\n[trajectories]\nfile = campus\n",
            "[scene]\nsource = campus\nlod = DB-IV\n[trajectories]\nfile = campus\n",
            "not an ini file",
        ],
    )
    def test_errors(self, text):
        with pytest.raises(ConfigError):
            parse_run_config(text)


def run(*argv):
    return cli.main([str(a) for a in argv])


class TestBuildScene:
    def test_three_databases_ordered_and_stable(self, workspace):
        args = ["build-scene", "--dem", workspace / "dem.txt", "--footprints", workspace / "footprints.txt",
                "--materials", workspace / "materials.txt"]
        assert run(*args, "-o", workspace / "a") == 0
        assert run(*args, "-o", workspace / "b") == 0
        facets = []
        for label in ("DB-I", "DB-II", "DB-III"):
            a = (workspace / "a" / f"scene_{label}.json").read_bytes()
            assert a == (workspace / "b" / f"scene_{label}.json").read_bytes()
            facets.append(json.loads(a)["provenance"]["facet_count"])
        assert facets[0] < facets[1] < facets[2]

    def test_missing_material_table(self, workspace, capsys):
        rc = run("build-scene", "--dem", workspace / "dem.txt", "--footprints", workspace / "footprints.txt",
                 "--materials", workspace / "nowhere.txt")
        assert rc == cli.EXIT_INPUT
        assert "nowhere.txt" in capsys.readouterr().err

    def test_parse_error(self, workspace, capsys):
        (workspace / "footprints.txt").write_text("building concrete ten 0 0 1 0 1 1\n")
        rc = run("build-scene", "--dem", workspace / "dem.txt", "--footprints", workspace / "footprints.txt")
        assert rc == cli.EXIT_INPUT
        assert "footprints.txt:1:" in capsys.readouterr().err

    def test_needs_input(self, workspace):
        assert run("build-scene") == cli.EXIT_USAGE

    def test_from_config(self, workspace):
        assert run("build-scene", "--config", workspace / "run.ini") == 0
        assert sorted(p.name for p in (workspace / "out").iterdir()) == ["scene_DB-I.json", "scene_DB-III.json"]


class TestSimulate:
    def test_deterministic(self, workspace):
        assert run("simulate", workspace / "run.ini", "-o", workspace / "a") == 0
        assert run("simulate", workspace / "run.ini", "-o", workspace / "b") == 0
        for label in ("DB-I", "DB-III"):
            a = (workspace / "a" / label / "snapshots_01.csv").read_bytes()
            assert a == (workspace / "b" / label / "snapshots_01.csv").read_bytes()
            assert a.count(b"\n") > 6

    def test_manifest(self, workspace):
        assert run("simulate", workspace / "run.ini", "--lod", "DB-III") == 0
        m = json.loads((workspace / "out" / "manifest.json").read_text())
        assert m["seed"] == 3 and m["label"] == "DB-III"
        assert m["config_sha256"] == load_run_config(workspace / "run.ini").digest
        assert m["trace_seconds_total"] > 0 and len(m["trace_seconds"]) == 1
        assert (m["bandwidth_mhz"], m["tx_power_dbm"], m["threshold_db"]) == (500.0, 20.0, -45.0)

    def test_seed_changes_phase_only(self, workspace):
        run("simulate", workspace / "run.ini", "--lod", "DB-III", "-o", workspace / "a")
        run("simulate", workspace / "run.ini", "--lod", "DB-III", "--seed", "4", "-o", workspace / "b")
        a = (workspace / "a" / "snapshots_01.csv").read_text().splitlines()
        b = (workspace / "b" / "snapshots_01.csv").read_text().splitlines()
        assert len(a) == len(b) and a != b
        assert [r.rsplit(",", 1)[0] for r in a] == [r.rsplit(",", 1)[0] for r in b]

    def test_threshold_flag(self, workspace):
        run("simulate", workspace / "run.ini", "--lod", "DB-III", "-o", workspace / "a", "--threshold", "-45")
        run("simulate", workspace / "run.ini", "--lod", "DB-III", "-o", workspace / "b")
        run("simulate", workspace / "run.ini", "--lod", "DB-III", "-o", workspace / "c", "--threshold", "-5")
        a = (workspace / "a" / "snapshots_01.csv").read_bytes()
        assert a == (workspace / "b" / "snapshots_01.csv").read_bytes()
        assert len((workspace / "c" / "snapshots_01.csv").read_bytes()) < len(a)

    def test_unknown_flag(self, workspace):
        with pytest.raises(SystemExit) as exc:
            run("simulate", workspace / "run.ini", "--frobnicate")
        assert exc.value.code == cli.EXIT_USAGE

    def test_bad_config(self, workspace):
        (workspace / "run.ini").write_text("[scene]\n")
        assert run("simulate", workspace / "run.ini") == cli.EXIT_CONFIG

    def test_missing_config(self, workspace):
        assert run("simulate", workspace / "missing.ini") == cli.EXIT_INPUT

    def test_env_output(self, workspace, monkeypatch):
        monkeypatch.setenv(OUTPUT_ENV, str(workspace / "env"))
        assert run("simulate", workspace / "run.ini", "--lod", "DB-I") == 0
        assert (workspace / "env" / "manifest.json").is_file()


class TestStats:
    def test_los_only(self, workspace):
        (workspace / "footprints.txt").write_text("")
        (workspace / "materials.txt").write_text("wet_soil 15 -\n")
        run("simulate", workspace / "run.ini", "--lod", "DB-I", "-o", workspace / "sim")
        assert run("stats", workspace / "sim", "-o", workspace / "st") == 0
        summary = json.loads((workspace / "st" / "summary.json").read_text())
        assert summary["delay_spread_ns"]["max"] == 0.0
        assert summary["mean_ray_count"] == 1.0

    def test_comparison(self, workspace):
        run("simulate", workspace / "run.ini", "-o", workspace / "sim")
        assert run("stats", workspace / "sim", "-o", workspace / "st") == 0
        report = json.loads((workspace / "st" / "comparison.json").read_text())
        assert report["reference"] == "DB-III"
        assert set(report["mean_offsets"]) == {"DB-I"}
        assert (workspace / "st" / "DB-I" / "summary.json").is_file()

    def test_corrupt_row(self, workspace, capsys):
        run("simulate", workspace / "run.ini", "--lod", "DB-III", "-o", workspace / "sim")
        csv_path = workspace / "sim" / "snapshots_01.csv"
        lines = csv_path.read_text().splitlines()
        lines[3] = lines[3].replace(lines[3].split(",")[3], "garbage", 1)
        csv_path.write_text("\n".join(lines) + "\n")
        assert run("stats", workspace / "sim") == cli.EXIT_INPUT
        assert "row 4" in capsys.readouterr().err

    def test_no_manifest(self, workspace):
        assert run("stats", workspace) == cli.EXIT_INPUT

    def test_mismatched_runs(self, workspace):
        run("simulate", workspace / "run.ini", "--lod", "DB-I", "-o", workspace / "a")
        run("simulate", workspace / "run.ini", "--lod", "DB-III", "--dt-s", "0.5", "-o", workspace / "b")
        assert run("stats", workspace / "a", workspace / "b", "-o", workspace / "st") == cli.EXIT_RUNTIME


class TestBenchmark:
    def test_report(self, workspace, capsys):
        assert run("benchmark", workspace / "run.ini", "--repetitions", "2") == 0
        doc = json.loads((workspace / "out" / "benchmark.json").read_text())
        assert doc["repetitions"] == 2 and doc["labels"] == ["DB-I", "DB-III"]
        assert all(len(v) == 2 for v in doc["seconds"].values())
        assert set(doc["std_s"]) == {"DB-I", "DB-III"}
        assert "±" in capsys.readouterr().out

    def test_single_database(self, workspace):
        assert run("benchmark", workspace / "run.ini", "--lod", "DB-I") == cli.EXIT_CONFIG

    def test_bad_repetitions(self, workspace):
        assert run("benchmark", workspace / "run.ini", "--repetitions", "0") == cli.EXIT_CONFIG
