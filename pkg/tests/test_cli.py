import json

import numpy as np
import pytest

from mpckit.cli import (DEMOS, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK,
                        demo_config, emit_plot, main, parse_config, read_csv,
                        run_experiment, write_csv)
from mpckit.controller import Trajectory, run_closed_loop
from mpckit.exceptions import ConfigError
from mpckit.model import LtiModel

SMALL_CONFIG = {
    "name": "small",
    "model": {"kind": "lti", "A": [[0.9, 0.2], [-0.4, 0.8]], "B": [[0.1], [0.01]]},
    "horizon": {"N": 3, "N_T": 5},
    "weights": {"Q": [[1, 0], [0, 1]], "R": [[1]]},
    "constraints": {"F_x": [[1, 0], [0, 1], [-1, 0], [0, -1]],
                    "g_x": [10, 10, 10, 10],
                    "F_u": [[1], [-1]], "g_u": [1, 1]},
    "initial_state": [10, 5],
}


class TestParseConfig:
    def test_bundled_stabilize_demo(self):
        cfg = demo_config("lmpc-stabilize")
        assert cfg.mpc.N == 5
        assert cfg.mpc.N_T == 50
        assert isinstance(cfg.model, LtiModel)

    def test_all_demos_parse(self):
        for name in DEMOS:
            cfg = demo_config(name)
            assert cfg.mpc.N >= 2

    def test_qn_defaults_to_q(self):
        cfg = parse_config(json.dumps(SMALL_CONFIG))
        assert np.allclose(cfg.mpc.Q_N, cfg.mpc.Q)

    def test_zero_horizon_rejected(self):
        doc = dict(SMALL_CONFIG, horizon={"N": 0, "N_T": 5})
        with pytest.raises(ConfigError):
            parse_config(json.dumps(doc))

    def test_unknown_model_kind(self):
        doc = dict(SMALL_CONFIG, model={"kind": "bicycle"})
        with pytest.raises(ConfigError):
            parse_config(json.dumps(doc))

    def test_missing_section(self):
        doc = {k: v for k, v in SMALL_CONFIG.items() if k != "weights"}
        with pytest.raises(ConfigError):
            parse_config(json.dumps(doc))

    def test_malformed_json_reports_position(self):
        with pytest.raises(ConfigError) as err:
            parse_config("{\n  broken")
        assert "line" in str(err.value)

    def test_state_dimension_mismatch(self):
        doc = dict(SMALL_CONFIG, initial_state=[1, 2, 3])
        with pytest.raises(ConfigError):
            parse_config(json.dumps(doc))

    def test_unknown_demo(self):
        with pytest.raises(ConfigError):
            demo_config("does-not-exist")


class TestCsv:
    def test_round_trip_full_precision(self, tmp_path):
        cfg = parse_config(json.dumps(SMALL_CONFIG))
        traj = run_closed_loop(cfg.model, cfg.mpc, cfg.initial_state)
        path = tmp_path / "traj.csv"
        write_csv(traj, 2, 1, path)
        states, inputs, costs = read_csv(path)
        assert np.array_equal(states, np.array(traj.states))
        assert np.array_equal(inputs, np.array(traj.inputs))
        assert np.array_equal(costs, np.array(traj.costs))

    def test_layout(self, tmp_path):
        cfg = parse_config(json.dumps(SMALL_CONFIG))
        traj = run_closed_loop(cfg.model, cfg.mpc, cfg.initial_state)
        path = tmp_path / "traj.csv"
        write_csv(traj, 2, 1, path)
        lines = path.read_text().split("\n")
        assert lines[0] == "k,x1,x2,u1,J_star,status,iterations"
        assert len(lines) == 1 + 5 + 1 + 1  # header, steps, final row, trailing LF
        final = lines[-2].split(",")
        assert final[0] == "5"
        assert final[3:] == ["", "", "", ""]
        assert "\r" not in path.read_text()

    def test_demo_determinism(self, tmp_path):
        cfg = parse_config(json.dumps(SMALL_CONFIG))
        paths = []
        for i in range(2):
            traj = run_closed_loop(cfg.model, cfg.mpc, cfg.initial_state)
            p = tmp_path / f"run{i}.csv"
            write_csv(traj, 2, 1, p)
            paths.append(p)
        assert paths[0].read_bytes() == paths[1].read_bytes()


class TestRunExperiment:
    def test_summary_fields(self, tmp_path):
        cfg = parse_config(json.dumps(SMALL_CONFIG))
        out = tmp_path / "out.csv"
        summary = run_experiment(cfg, out_path=out)
        assert summary["steps"] == 5
        assert summary["aborted_at"] is None
        assert summary["max_constraint_violation"] <= 1e-6
        assert out.exists()

    def test_infeasible_abort_recorded(self, tmp_path):
        doc = dict(SMALL_CONFIG, initial_state=[20, 0])
        cfg = parse_config(json.dumps(doc))
        out = tmp_path / "out.csv"
        summary = run_experiment(cfg, out_path=out)
        assert summary["aborted_at"] == 0
        assert summary["steps"] == 0
        assert out.exists()  # partial CSV still written


class TestEmitPlot:
    def _traj(self, steps):
        cfg = parse_config(json.dumps(dict(SMALL_CONFIG,
                                           horizon={"N": 2, "N_T": steps})))
        return run_closed_loop(cfg.model, cfg.mpc, cfg.initial_state)

    def test_structure(self, tmp_path):
        traj = self._traj(5)
        path = tmp_path / "plot.svg"
        emit_plot(traj, path)
        text = path.read_text()
        assert text.count("<polyline") == 2 + 1  # two states, one input
        assert "<svg" in text

    def test_single_step(self, tmp_path):
        full = self._traj(5)
        traj = Trajectory(states=full.states[:2], inputs=full.inputs[:1],
                          costs=full.costs[:1], statuses=full.statuses[:1],
                          iterations=full.iterations[:1])
        path = tmp_path / "plot.svg"
        emit_plot(traj, path)
        assert path.exists()

    def test_empty_trajectory_rejected(self, tmp_path):
        path = tmp_path / "plot.svg"
        with pytest.raises(ValueError):
            emit_plot(Trajectory(), path)
        assert not path.exists()

    def test_bound_lines_drawn(self, tmp_path):
        cfg = parse_config(json.dumps(SMALL_CONFIG))
        traj = run_closed_loop(cfg.model, cfg.mpc, cfg.initial_state)
        path = tmp_path / "plot.svg"
        emit_plot(traj, path, X_set=cfg.mpc.X_set, U_set=cfg.mpc.U_set)
        assert "stroke-dasharray" in path.read_text()


class TestMain:
    def test_run_subcommand(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(SMALL_CONFIG))
        out = tmp_path / "out.csv"
        plot = tmp_path / "plot.svg"
        code = main(["run", "--config", str(cfg_path),
                     "--out", str(out), "--plot", str(plot)])
        assert code == EXIT_OK
        assert out.exists() and plot.exists()
        assert "final_state" in capsys.readouterr().out

    def test_missing_config_file(self, tmp_path, capsys):
        code = main(["run", "--config", str(tmp_path / "nope.json")])
        assert code == EXIT_CONFIG

    def test_invalid_config(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(dict(SMALL_CONFIG,
                                            horizon={"N": 0, "N_T": 5})))
        code = main(["run", "--config", str(cfg_path)])
        assert code == EXIT_CONFIG

    def test_infeasible_exit_code(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(dict(SMALL_CONFIG,
                                            initial_state=[20, 0])))
        code = main(["run", "--config", str(cfg_path)])
        assert code == EXIT_INFEASIBLE

    def test_check_feasibility(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps(SMALL_CONFIG))
        code = main(["check-feasibility", "--config", str(cfg_path),
                     "--state", "0,0"])
        assert code == EXIT_OK
        out = capsys.readouterr().out
        assert "feasible: True" in out

    def test_version_flag(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["--version"])
        assert exc.value.code == 0
        assert "mpc" in capsys.readouterr().out
