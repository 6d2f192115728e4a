"""CLI behavior: config validation, artifact layout, determinism, exit codes."""

import json
from pathlib import Path

import numpy as np
import pytest

from splitbound.cli import ConfigError, load_config, main
from splitbound.presets import PRESET_NAMES


def write_config(tmp_path, text, name="config.toml"):
    path = tmp_path / name
    path.write_text(text)
    return path


FAST_LINEAR = """
preset = "random-linear-7"
[time]
T = 0.25
N0 = 8
max_doublings = 1
tol = 0.5
[outputs]
directory = "{out}"
"""


class TestParsing:
    def test_missing_file(self, tmp_path, capsys):
        assert main(["run", str(tmp_path / "nope.toml")]) == 1
        assert "configuration error" in capsys.readouterr().err

    def test_bad_toml(self, tmp_path, capsys):
        cfg = write_config(tmp_path, "preset = [unclosed")
        assert main(["run", str(cfg)]) == 1

    def test_json_config(self, tmp_path):
        out = tmp_path / "out"
        cfg = tmp_path / "config.json"
        cfg.write_text(
            json.dumps(
                {
                    "preset": "random-linear-7",
                    "time": {"T": 0.25, "N0": 8, "max_doublings": 1, "tol": 0.5},
                    "outputs": {"directory": str(out)},
                }
            )
        )
        assert main(["run", str(cfg)]) == 0
        assert (out / "summary.json").exists()

    def test_unknown_preset(self, tmp_path, capsys):
        cfg = write_config(tmp_path, 'preset = "no-such-thing"')
        assert main(["run", str(cfg)]) == 1
        assert "preset" in capsys.readouterr().err

    def test_unknown_section(self, tmp_path):
        cfg = write_config(tmp_path, 'preset = "tg2d"\n[bogus]\nx = 1\n')
        assert main(["run", str(cfg)]) == 1

    def test_bad_monitor_pair(self, tmp_path):
        cfg = write_config(
            tmp_path,
            'preset = "random-linear-7"\n[monitors]\npairs = [[[9], [0]]]\n',
        )
        assert main(["run", str(cfg)]) == 1

    def test_negative_horizon(self, tmp_path):
        cfg = write_config(
            tmp_path, 'preset = "random-linear-7"\n[time]\nT = -1.0\n'
        )
        assert main(["run", str(cfg)]) == 1

    def test_load_config_error_paths(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{broken")
        with pytest.raises(ConfigError):
            load_config(bad)


class TestRunArtifacts:
    def test_linear_run_artifacts(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(tmp_path, FAST_LINEAR.format(out=out))
        assert main(["run", str(cfg)]) == 0
        for name in ("trace.csv", "bounds.csv", "summary.json"):
            assert (out / name).exists(), name
        trace = (out / "trace.csv").read_text().splitlines()
        bounds = (out / "bounds.csv").read_text().splitlines()
        assert trace[0] == bounds[0]
        assert [r.split(",")[0] for r in trace] == [r.split(",")[0] for r in bounds]
        summary = json.loads((out / "summary.json").read_text())
        assert summary["exit_code"] == 0
        assert summary["kind"] == "linear"
        assert "wall_time_s" in summary

    def test_svg_outputs(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path,
            FAST_LINEAR.format(out=out) + "svg = true\n",
        )
        assert main(["run", str(cfg)]) == 0
        plots = list((out / "plots").glob("*.svg"))
        assert plots
        body = plots[0].read_text()
        assert "<polyline" in body and "<svg" in body

    def test_deterministic_reruns(self, tmp_path):
        out1, out2 = tmp_path / "a", tmp_path / "b"
        cfg1 = write_config(tmp_path, FAST_LINEAR.format(out=out1), "c1.toml")
        cfg2 = write_config(tmp_path, FAST_LINEAR.format(out=out2), "c2.toml")
        assert main(["run", str(cfg1)]) == 0
        assert main(["run", str(cfg2)]) == 0
        assert (out1 / "trace.csv").read_bytes() == (out2 / "trace.csv").read_bytes()
        assert (out1 / "bounds.csv").read_bytes() == (out2 / "bounds.csv").read_bytes()
        s1 = json.loads((out1 / "summary.json").read_text())
        s2 = json.loads((out2 / "summary.json").read_text())
        s1.pop("wall_time_s")
        s2.pop("wall_time_s")
        assert s1 == s2

    def test_output_root_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("SPLITBOUND_OUTPUT_ROOT", str(tmp_path / "root"))
        cfg = write_config(tmp_path, FAST_LINEAR.format(out="rel/dir"))
        assert main(["run", str(cfg)]) == 0
        assert (tmp_path / "root" / "rel" / "dir" / "summary.json").exists()

    def test_monitor_override(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path,
            FAST_LINEAR.format(out=out)
            + "[monitors]\npairs = [[[0], [0]], [[1], [1]]]\n",
        )
        assert main(["run", str(cfg)]) == 0
        header = (out / "trace.csv").read_text().splitlines()[0]
        assert header == "t,a0_b0,a1_b1"

    def test_domain_override(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path,
            f"""
preset = "burgers1d-gauss"
[domain]
points = [512]
[time]
T = 0.4
N0 = 32
max_doublings = 1
tol = 0.5
[outputs]
directory = "{out}"
""",
        )
        assert main(["run", str(cfg)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        assert summary["grid"]["points"] == [512]

    def test_domain_override_bad_points(self, tmp_path):
        cfg = write_config(
            tmp_path,
            'preset = "burgers1d-gauss"\n[domain]\npoints = [100]\n',
        )
        assert main(["run", str(cfg)]) == 1

    def test_nonschwartz_run(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path,
            f"""
preset = "nonschwartz-2d"
[time]
T = 0.1
N0 = 8
[outputs]
directory = "{out}"
""",
        )
        assert main(["run", str(cfg)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        asserted = set(summary["asserted_monitors"])
        assert asserted < set(summary["monitors"])  # strict subset
        for label in asserted:
            assert summary["bound_ratio_max"][label] <= 10.0

    def test_burgers_breakdown_estimate(self, tmp_path):
        out = tmp_path / "out"
        cfg = write_config(
            tmp_path,
            f"""
preset = "burgers1d-gauss"
[domain]
points = [2048]
[time]
T = 0.7
N0 = 128
max_doublings = 2
tol = 0.02
[outputs]
directory = "{out}"
""",
        )
        assert main(["run", str(cfg)]) == 0
        summary = json.loads((out / "summary.json").read_text())
        est = summary["blowup_estimate"]
        assert est["detected"]
        exact = (np.e / 2.0) ** 0.5
        assert abs(est["t_star"] - exact) / exact < 0.05


class TestVerifyCommand:
    def test_unknown_suite(self, capsys):
        assert main(["verify", "nope"]) == 1
        assert "unknown suite" in capsys.readouterr().err

    def test_propagators_suite(self, capsys):
        assert main(["verify", "propagators"]) == 0
        lines = capsys.readouterr().out.strip().splitlines()
        tail = json.loads(lines[-1])
        assert tail["failed"] == 0
        assert tail["checks"] == len(lines) - 1
        for line in lines[:-1]:
            entry = json.loads(line)
            assert entry["passed"] is True


class TestPresetsCommand:
    def test_list(self, capsys):
        assert main(["presets", "list"]) == 0
        out = capsys.readouterr().out.split()
        assert list(PRESET_NAMES) == out
        assert "tg2d" in out and "burgers1d-gauss" in out
