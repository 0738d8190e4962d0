import json
import math

import numpy as np
import pytest

from tvchan.channel import SPEED_OF_LIGHT, PathSet
from tvchan.cli import main
from tvchan.files import (Scenario, ScenarioError, doppler_from_velocity, fmt, load_scenario, read_csv,
                          save_scenario, write_csv)

HEADER = "# format_version=1\n# f_c_hz=30000000000\n"
COLUMNS = "path_id,aod_azimuth_rad,aoa_azimuth_rad,delay_s,gain_re,gain_im,doppler_hz\n"


def write(tmp_path, text, name="scn.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


class TestScenario:
    def test_doppler_along_motion(self, tmp_path):
        aod = 0.8
        v = 30 * np.array([math.cos(aod), math.sin(aod), 0.0])
        p = write(tmp_path, HEADER + "# velocity_mps=" + ",".join(map(fmt, v)) + "\n" + COLUMNS
                  + f"1,{aod!r},1.0,1e-7,1.0,0.0,\n")
        sc = load_scenario(p)
        # 30 m/s at 30 GHz: 3000 Hz with c rounded to 3e8, 3002.08 Hz with the exact value
        assert sc.paths.doppler_hz[0] == pytest.approx(30 * 30e9 / SPEED_OF_LIGHT, rel=1e-12)
        assert sc.paths.doppler_hz[0] == pytest.approx(3000.0, rel=1e-3)

    def test_perpendicular_motion(self):
        assert doppler_from_velocity([0.0], 30e9, [0.0, 30.0, 0.0])[0] == pytest.approx(0.0, abs=1e-9)

    def test_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        paths = PathSet(rng.uniform(0.3, 2.8, 4), rng.uniform(0.3, 2.8, 4), rng.uniform(0, 1e-6, 4),
                        rng.uniform(-3e3, 3e3, 4), rng.standard_normal(4) + 1j * rng.standard_normal(4))
        save_scenario(tmp_path / "a.csv", Scenario(paths, 28e9, (1.0, 2.0, 0.0)))
        sc = load_scenario(tmp_path / "a.csv")
        for name in ("aoa_rad", "aod_rad", "delay_s", "doppler_hz", "gain"):
            np.testing.assert_array_equal(getattr(sc.paths, name), getattr(paths, name))
        assert sc.f_c_hz == 28e9 and sc.velocity_mps == (1.0, 2.0, 0.0)
        save_scenario(tmp_path / "b.csv", sc)
        assert (tmp_path / "a.csv").read_text() == (tmp_path / "b.csv").read_text()

    def test_missing_doppler_and_velocity(self, tmp_path):
        p = write(tmp_path, HEADER + COLUMNS + "1,0.8,1.0,1e-7,1.0,0.0,\n")
        with pytest.raises(ScenarioError, match="velocity"):
            load_scenario(p)

    def test_malformed_row_line_number(self, tmp_path):
        p = write(tmp_path, HEADER + COLUMNS + "1,0.8,1.0,1e-7,1.0,0.0,5\n2,abc,1.0,1e-7,1.0,0.0,5\n")
        with pytest.raises(ScenarioError, match="line 5"):
            load_scenario(p)

    def test_negative_delay(self, tmp_path):
        p = write(tmp_path, HEADER + COLUMNS + "1,0.8,1.0,-1e-7,1.0,0.0,5\n")
        with pytest.raises(ScenarioError):
            load_scenario(p)

    def test_empty(self, tmp_path):
        with pytest.raises(ScenarioError):
            load_scenario(write(tmp_path, HEADER + COLUMNS))

    def test_duplicates_perturbed(self, tmp_path):
        p = write(tmp_path, HEADER + COLUMNS + "1,0.8,1.0,1e-7,1.0,0.0,5\n2,0.9,1.0,2e-7,1.0,0.0,6\n")
        with pytest.warns(RuntimeWarning, match="aoa_rad"):
            sc = load_scenario(p)
        a = sc.paths.aoa_rad
        assert a[0] != a[1] and abs(a[0] - a[1]) <= 1e-9


def test_csv_full_precision(tmp_path):
    x = 0.1 + 0.2
    write_csv(tmp_path / "t.csv", [{"a": x, "b": 3, "c": True}])
    row = read_csv(tmp_path / "t.csv")[0]
    assert float(row["a"]) == x and row["b"] == "3" and row["c"] == "1"
    assert fmt(1 / 3) == "0.33333333333333331"


class TestCommands:
    def run(self, capsys, *args):
        code = main(list(args))
        out = capsys.readouterr()
        return code, out.out, out.err

    def test_check_paper_scale(self, tmp_path, capsys):
        code, out, _ = self.run(capsys, "check-uniqueness", "--preset", "paper", "--out", str(tmp_path))
        assert code == 0 and "uniqueness: satisfied" in out and "margin" in out
        rep = json.loads((tmp_path / "uniqueness.json").read_text())
        assert rep["satisfied"] and rep["conditions"][0]["margin"] == 77
        assert (tmp_path / "manifest.json").exists()

    def test_check_violation(self, tmp_path, capsys):
        code, out, _ = self.run(capsys, "check-uniqueness", "--k-pilot", "1", "--m-slots", "2",
                                "--out", str(tmp_path))
        assert code == 0 and "violated" in out and "(K4-1)*K >= L" in out

    def test_bench_deterministic(self, tmp_path, capsys):
        for name in ("a", "b"):
            code, _, _ = self.run(capsys, "bench", "--trials", "2", "--snr-db", "10", "--seed", "3",
                                  "--estimators", "esprit,als", "--out", str(tmp_path / name))
            assert code == 0
        assert sorted(f.name for f in (tmp_path / "a").glob("*.csv")) == ["results.csv", "trials.csv"]
        for f in ("results.csv", "trials.csv"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_timing_opt_in(self, tmp_path, capsys):
        code, _, _ = self.run(capsys, "bench", "--trials", "2", "--timing", "--out", str(tmp_path))
        assert code == 0
        rows = read_csv(tmp_path / "timing_summary.csv")
        assert float(rows[0]["wall_time_mean"]) > 0
        assert len(read_csv(tmp_path / "timing.csv")) == 2

    def test_rerun_from_manifest(self, tmp_path, capsys, monkeypatch):
        self.run(capsys, "bench", "--trials", "1", "--snr-db", "0", "--snr-db", "20", "--out", str(tmp_path / "a"))
        monkeypatch.setenv("TVCHAN_OUT", str(tmp_path / "b"))
        code, _, _ = self.run(capsys, "bench", "--config", str(tmp_path / "a" / "manifest.json"))
        assert code == 0
        assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()

    def test_output_precedence(self, tmp_path, capsys, monkeypatch):
        cfg = tmp_path / "c.json"
        cfg.write_text(json.dumps({"out": str(tmp_path / "from_config"), "preset": "toy", "l_paths": 2}))
        self.run(capsys, "check-uniqueness", "--config", str(cfg))
        assert (tmp_path / "from_config" / "manifest.json").exists()
        monkeypatch.setenv("TVCHAN_OUT", str(tmp_path / "from_env"))
        self.run(capsys, "check-uniqueness", "--config", str(cfg))
        assert (tmp_path / "from_env" / "manifest.json").exists()
        self.run(capsys, "check-uniqueness", "--config", str(cfg), "--out", str(tmp_path / "from_flag"))
        man = json.loads((tmp_path / "from_flag" / "manifest.json").read_text())
        assert man["config"]["preset"] == "toy" and man["seed"] == 0 and "version" in man

    @pytest.mark.parametrize("mode,per_path", [("split", 6), ("paper", 5)])
    def test_crb_columns(self, tmp_path, capsys, mode, per_path):
        code, _, _ = self.run(capsys, "crb", "--preset", "toy", "--paths", "2", "--crb-mode", mode,
                              "--snr-db", "0", "--snr-db", "10", "--out", str(tmp_path))
        assert code == 0
        rows = read_csv(tmp_path / "crb.csv")
        assert len(rows) == 2
        assert len([c for c in rows[0] if c not in ("snr_db", "fim_rank")]) == per_path * 2

    def test_simulate_then_estimate(self, tmp_path, capsys):
        assert self.run(capsys, "simulate", "--snr-db", "30", "--out", str(tmp_path / "s"))[0] == 0
        code, _, err = self.run(capsys, "estimate", "--input", str(tmp_path / "s" / "tensor.npz"),
                                "--scenario", str(tmp_path / "s" / "paths.csv"), "--refine-angles",
                                "--out", str(tmp_path / "e"))
        assert code == 0, err
        m = read_csv(tmp_path / "e" / "metrics.csv")[0]
        assert float(m["nmse"]) < 1e-2
        assert len(read_csv(tmp_path / "e" / "estimates.csv")) == 6

    def test_estimate_with_scenario(self, tmp_path, capsys):
        p = write(tmp_path, HEADER + COLUMNS + "1,0.8,1.2,1e-7,1e-5,0.0,1000\n2,1.9,2.1,6e-7,0.0,1e-5,-2000\n")
        code, _, err = self.run(capsys, "estimate", "--scenario", str(p), "--paths", "2", "--snr-db", "40",
                                "--out", str(tmp_path / "o"))
        assert code == 0, err
        assert float(read_csv(tmp_path / "o" / "metrics.csv")[0]["nmse"]) < 1e-2

    def test_error_json(self, tmp_path, capsys):
        code, _, err = self.run(capsys, "estimate", "--scenario", str(tmp_path / "none.csv"),
                                "--out", str(tmp_path / "o"))
        assert code == 1
        payload = json.loads(err.strip().splitlines()[-1])
        assert payload["error"] == "FileNotFoundError" and payload["command"] == "estimate"

    def test_bad_estimator(self, tmp_path, capsys):
        code, _, err = self.run(capsys, "bench", "--estimators", "music", "--out", str(tmp_path))
        assert code == 1 and "estimators" in json.loads(err)["message"]

    def test_unknown_config_key(self, tmp_path, capsys):
        cfg = write(tmp_path, json.dumps({"snr": 3}), "c.json")
        code, _, err = self.run(capsys, "bench", "--config", str(cfg), "--out", str(tmp_path))
        assert code == 1 and "unknown config keys" in err
