import csv
import json
import math

import numpy as np
import pytest
import yaml

from boussinesq_lab.cli import _parse_set, main
from boussinesq_lab.config import DEFAULTS, ConfigError, load_config, make_config
from boussinesq_lab.diagnostics import CSV_HEADER, read_csv
from boussinesq_lab.fields import load_field


class TestConfig:
    def test_defaults(self):
        cfg = make_config()
        assert cfg.d == 2 and cfg.epsilon == 0.25 and cfg.nu == 1.0 and cfg.lam == 1.0
        assert cfg.grid().N == (128, 128)

    def test_round_trip_through_yaml(self, tmp_path):
        cfg = make_config({"nu": 2.0, "simulate": {"t_end": 3.0}})
        path = tmp_path / "c.yaml"
        path.write_text(cfg.to_yaml())
        back = load_config(path)
        assert back.raw == cfg.raw

    @pytest.mark.parametrize(
        "override",
        [
            {"viscosity": 1.0},
            {"simulate": {"tend": 1.0}},
            {"dimension": 4},
            {"nu": -1.0},
            {"epsilon": "small"},
            {"simulate": {"cfl": 1.5}},
            {"simulate": {"mode": "both"}},
            {"quadrature": {"mode": "exact"}},
            {"condition": {"C": 0}},
            {"sweep": {"epsilon": []}},
            {"epsilon": 0.4},
            {"condition": {"delta": "tiny"}},
            {"simulate": {"dt": [0.1]}},
            {"perturbation": {"seed": True}},
        ],
    )
    def test_invalid(self, override):
        with pytest.raises(ConfigError):
            make_config(override)

    def test_explicit_amplitude_allows_larger_epsilon(self):
        assert make_config({"epsilon": 0.4, "amplitude": 1.0}).data_params().amp == 1.0

    def test_missing_and_malformed_files(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.yaml")
        bad = tmp_path / "bad.yaml"
        bad.write_text("nu: [1, 2\n")
        with pytest.raises(ConfigError):
            load_config(bad)
        listy = tmp_path / "list.yaml"
        listy.write_text("- 1\n- 2\n")
        with pytest.raises(ConfigError):
            load_config(listy)

    def test_defaults_not_mutated(self):
        before = yaml.safe_dump(DEFAULTS)
        make_config({"simulate": {"t_end": 1.0}, "sweep": {"epsilon": [0.1]}})
        assert yaml.safe_dump(DEFAULTS) == before


class TestSetParser:
    def test_nested_and_typed(self):
        out = _parse_set(["simulate.t_end=5", "nu=0.5", "sweep.epsilon=[0.1, 0.2]", "simulate.mode=full"])
        assert out == {"simulate": {"t_end": 5, "mode": "full"}, "nu": 0.5, "sweep": {"epsilon": [0.1, 0.2]}}

    def test_exponent_floats(self):
        assert _parse_set(["a=1e-3", "b=-2E+4", "c=1.5e2", "d=e5"]) == {"a": 1e-3, "b": -2e4, "c": 150.0, "d": "e5"}

    def test_rejects_missing_equals(self):
        with pytest.raises(ConfigError):
            _parse_set(["nu"])


class TestExitCodes:
    @pytest.mark.parametrize(
        "argv",
        [
            ["simulate", "--set", "nu=-1"],
            ["simulate", "--set", "bogus=1"],
            ["simulate", "--set", "nu"],
            ["simulate", "--config", "/nonexistent/config.yaml"],
            ["build-data", "--set", "grid.L=16", "--set", "grid.N=48"],
            ["explode"],
            [],
        ],
    )
    def test_usage_errors(self, argv, tmp_path, capsys):
        assert main(argv + ([] if argv in ([], ["explode"]) else ["--out", str(tmp_path)])) == 2

    def test_help(self, capsys):
        assert main(["--help"]) == 0


class TestCommands:
    def test_build_data(self, tmp_path, capsys):
        assert main(["build-data", "--out", str(tmp_path)]) == 0
        out = capsys.readouterr().out
        assert "result = PASS" in out
        a0 = load_field(tmp_path / "a0.npz")
        assert a0.grid.N == (128, 128)
        assert load_field(tmp_path / "U0.npz").m == 2
        rows = list(csv.reader(open(tmp_path / "cutoff.csv")))
        assert rows[0] == ["xi", "chi", "phi"]
        summary = json.loads((tmp_path / "build_data.json").read_text())
        assert summary["ok"] is True and summary["epsilon"] == 0.25

    def test_linear(self, tmp_path, capsys):
        assert main(["linear", "--out", str(tmp_path), "--set", "simulate.t_end=5"]) == 0
        rows = list(csv.reader(open(tmp_path / "linear.csv")))
        assert rows[0] == ["t", "U_h3", "Theta_h3", "f_h3", "g_h3", "UTheta_linf"]
        assert float(rows[-1][0]) == 5.0
        data = np.array(rows[1:], dtype=float)
        # Theta decays exactly like exp(-lambda t)
        assert np.allclose(data[:, 2], data[0, 2] * np.exp(-data[:, 0]), rtol=1e-12)
        summary = json.loads((tmp_path / "linear.json").read_text())
        assert summary["E0_quadrature"] <= summary["E0_bound"]

    def test_simulate_with_snapshots(self, tmp_path, capsys):
        argv = [
            "simulate", "--out", str(tmp_path),
            "--set", "simulate.t_end=0.5",
            "--set", "simulate.snapshot_times=[0.25]",
            "--set", "perturbation.h3_norm=1e-3",
        ]
        assert main(argv) == 0
        data = read_csv(tmp_path / "energy.csv")
        assert tuple(data) == CSV_HEADER
        assert data["t"][0] == 0 and data["t"][-1] == pytest.approx(0.5)
        snaps = sorted(p.name for p in tmp_path.glob("snapshot_*.npz"))
        assert len(snaps) == 2 and all("t0.25" in s for s in snaps)
        u = load_field(next(tmp_path.glob("snapshot_u_*.npz")))
        assert u.m == 2
        text = (tmp_path / "simulate.txt").read_text()
        assert "monitor = never exited" in text

    def test_failed_check_exits_one(self, tmp_path, capsys):
        argv = ["verify", "--out", str(tmp_path), "--set", "condition.delta=1e-30", "--set", "verify.commutator_pairs=5"]
        assert main(argv) == 1
        out = capsys.readouterr().out
        assert "condition_holds = False" in out and "result = FAIL" in out
        summary = json.loads((tmp_path / "verify.json").read_text())
        assert summary["identity_ok"] and summary["commutator_ok"]

    def test_sweep_sorted_and_parallel(self, tmp_path, capsys):
        cfg = tmp_path / "sweep.yaml"
        cfg.write_text(yaml.safe_dump({"sweep": {"epsilon": [0.3, 0.1, 0.2], "nu": [2.0, 1.0], "workers": 2}}))
        assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path)]) == 0
        rows = list(csv.DictReader(open(tmp_path / "sweep.csv")))
        keys = [(float(r["epsilon"]), float(r["nu"])) for r in rows]
        assert keys == sorted(keys) and len(keys) == 6
        # F0 / |a0_hat|_L1 depends on nu only (the sup norm of the annulus data is
        # its Fourier L1 norm up to a fixed factor)
        by_nu = {}
        for r in rows:
            by_nu.setdefault(float(r["nu"]), []).append(float(r["F0_ratio"]))
        for values in by_nu.values():
            assert max(values) / min(values) <= 1.5
        assert all(math.isnan(float(r["sup_A"])) for r in rows)
