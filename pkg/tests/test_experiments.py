"""Experiment harness: configs, presets, sweeps, CSV output and the CLI."""

import numpy as np
import pytest
import yaml

from mlamp.cli import main
from mlamp.experiments import (Axis, build_preset_spec, build_spec,
                               cmd_free_energy, cmd_instance, cmd_se,
                               cmd_selftest, cmd_sweep, load_config,
                               parse_config, preset_params, sweep_grid,
                               write_csv)
from mlamp.model import (Awgn, ConfigurationError, GaussBernoulli,
                         Rademacher, SignWithNoise)


class TestPresets:
    def test_unknown_preset(self):
        with pytest.raises(ConfigurationError):
            preset_params("nope")

    def test_slr2_defaults(self):
        spec = build_preset_spec("slr2", {})
        assert isinstance(spec.prior, GaussBernoulli)
        assert spec.prior.rho == 0.3
        assert isinstance(spec.layers[0].channel, Awgn)
        assert spec.layers[0].channel.delta == 1e-8
        # alpha = 0.8 with alpha2 = 1.0 means alpha1 = 0.8
        assert spec.layers[0].alpha == pytest.approx(0.8)
        assert spec.layers[1].alpha == pytest.approx(1.0)

    def test_perceptron2_structure(self):
        spec = build_preset_spec("perceptron2", {"alpha": 2.0})
        assert isinstance(spec.prior, Rademacher)
        assert isinstance(spec.layers[0].channel, SignWithNoise)
        assert spec.layers[0].alpha == pytest.approx(2.0)

    def test_decoder2_structure(self):
        spec = build_preset_spec("decoder2", {})
        assert isinstance(spec.layers[1].channel, SignWithNoise)
        assert spec.layers[0].alpha == pytest.approx(0.6)
        assert spec.layers[1].alpha == pytest.approx(2.0)

    def test_alpha_splits_across_alpha2(self):
        spec = build_preset_spec("slr2", {"alpha": 1.2, "alpha2": 2.0})
        assert spec.layers[0].alpha == pytest.approx(0.6)
        assert spec.layers[1].alpha == pytest.approx(2.0)

    def test_alpha_and_alpha1_conflict(self):
        with pytest.raises(ConfigurationError):
            build_preset_spec("slr2", {"alpha": 1.0, "alpha1": 0.5})

    def test_unknown_parameter_rejected(self):
        with pytest.raises(ConfigurationError):
            build_preset_spec("slr2", {"gamma": 1.0})


class TestBuildSpec:
    MODEL = dict(
        prior=dict(kind="gauss_bernoulli", rho=0.25),
        layers=[dict(channel="awgn", delta=0.01, alpha=0.7),
                dict(channel="sign", alpha=2.0)],
        n_signal=500,
    )

    def test_explicit_model(self):
        spec = build_spec(self.MODEL)
        assert spec.n_signal == 500
        assert spec.prior.rho == 0.25
        assert spec.layers[1].channel.delta == 0.0

    def test_strict_keys(self):
        bad = dict(self.MODEL, extra=1)
        with pytest.raises(ConfigurationError):
            build_spec(bad)
        bad = dict(self.MODEL, prior=dict(kind="rademacher", rho=0.3))
        with pytest.raises(ConfigurationError):
            build_spec(bad)
        bad = dict(self.MODEL,
                   layers=[dict(channel="laplace", alpha=1.0)])
        with pytest.raises(ConfigurationError):
            build_spec(bad)

    def test_overrides_on_explicit_model(self):
        spec = build_spec(self.MODEL, {"alpha2": 3.0, "rho": 0.1})
        assert spec.layers[1].alpha == pytest.approx(3.0)
        assert spec.prior.rho == pytest.approx(0.1)
        spec = build_spec(self.MODEL, {"delta1": 0.5})
        assert spec.layers[0].channel.delta == pytest.approx(0.5)

    def test_total_alpha_needs_preset(self):
        with pytest.raises(ConfigurationError):
            build_spec(self.MODEL, {"alpha": 1.0})

    def test_preset_override_replaces_default_alpha(self):
        spec = build_spec({"preset": "slr2", "n_signal": 100},
                          {"alpha1": 0.5})
        assert spec.layers[0].alpha == pytest.approx(0.5)


class TestAxis:
    def test_validation(self):
        with pytest.raises(ConfigurationError):
            Axis(param="beta", lo=0.0, hi=1.0, steps=3)
        with pytest.raises(ConfigurationError):
            Axis(param="alpha", lo=0.0, hi=1.0, steps=0)

    def test_values(self):
        ax = Axis(param="alpha", lo=0.2, hi=1.0, steps=5)
        assert np.allclose(ax.values(), [0.2, 0.4, 0.6, 0.8, 1.0])
        assert Axis(param="alpha", lo=0.3, hi=9.9, steps=1).values() == [0.3]

    def test_grid_order_first_axis_outermost(self):
        axes = (Axis(param="alpha", lo=0.0, hi=1.0, steps=2),
                Axis(param="alpha2", lo=1.0, hi=2.0, steps=2))
        combos = list(sweep_grid(axes))
        assert combos == [
            {"alpha": 0.0, "alpha2": 1.0}, {"alpha": 0.0, "alpha2": 2.0},
            {"alpha": 1.0, "alpha2": 1.0}, {"alpha": 1.0, "alpha2": 2.0}]


class TestParseConfig:
    RAW = dict(
        model={"preset": "slr2", "n_signal": 200},
        solver={"max_iter": 50, "damping": 0.2},
        se={"nodes_per_dim": 21, "max_iter": 300, "tol": 1e-9},
        sweep={"axes": [{"param": "alpha", "min": 0.1, "max": 1.0,
                         "steps": 4}],
               "instance_stride": 2},
        seeds=[0, 1, 2],
        output="out.csv",
    )

    def test_round_trip(self):
        cfg = parse_config(dict(self.RAW))
        assert cfg.solver.max_iter == 50
        assert cfg.solver.damping == 0.2
        assert cfg.quadrature.nodes_per_dim == 21
        assert cfg.se_max_iter == 300
        assert cfg.se_tol == 1e-9
        assert cfg.seeds == (0, 1, 2)
        assert cfg.axes[0].steps == 4
        assert cfg.instance_stride == 2
        assert cfg.output == "out.csv"

    def test_unknown_keys_rejected(self):
        with pytest.raises(ConfigurationError):
            parse_config(dict(self.RAW, typo=1))
        bad = dict(self.RAW, solver={"maxiter": 5})
        with pytest.raises(ConfigurationError):
            parse_config(bad)
        bad = dict(self.RAW,
                   sweep={"axes": [{"param": "alpha", "min": 0.0,
                                    "steps": 2}]})
        with pytest.raises(ConfigurationError):
            parse_config(bad)  # axis missing 'max'

    def test_needs_model(self):
        with pytest.raises(ConfigurationError):
            parse_config({"output": "x.csv"})


class TestCsv:
    def test_formatting(self, tmp_path):
        path = tmp_path / "t.csv"
        write_csv(str(path), ["a", "b", "c"],
                  [dict(a=1, b=0.25, c=True), dict(a="x")],
                  meta=["hello"], timestamp=False)
        text = path.read_text()
        assert text == "# hello\na,b,c\n1,0.25,true\nx,NA,NA\n"

    def test_timestamp_header(self, tmp_path):
        path = tmp_path / "t.csv"
        write_csv(str(path), ["a"], [], timestamp=True)
        assert path.read_text().startswith("# generated: ")


def small_cfg(**over):
    raw = dict(model={"preset": "slr2", "n_signal": 300}, **over)
    return parse_config(raw)


class TestCommands:
    def test_instance_rows(self):
        cfg = small_cfg(seeds=[0, 1], instance={"baseline": True},
                        solver={"max_iter": 30})
        columns, rows, _ = cmd_instance(cfg)
        assert columns[0] == "seed"
        algos = {r["algorithm"] for r in rows}
        assert algos == {"mlamp", "baseline"}
        summaries = [r for r in rows if r["kind"] == "summary"]
        assert len(summaries) == 4  # 2 seeds x 2 algorithms
        traces = [r for r in rows if r["kind"] == "trace"]
        assert all(r["layer"] in (1, 2) for r in traces)

    def test_se_rows_both_inits(self):
        cfg = small_cfg()
        _, rows, _ = cmd_se(cfg)
        inits = {r["init"] for r in rows}
        assert inits == {"uninformed", "informed"}
        ts = [r["t"] for r in rows if r["init"] == "uninformed"
              and r["layer"] == 1]
        assert ts == sorted(ts)

    def test_sweep_rows_and_phases(self):
        cfg = small_cfg(sweep={"axes": [{"param": "alpha", "min": 0.05,
                                         "max": 0.8, "steps": 3}]})
        columns, rows, _ = cmd_sweep(cfg)
        assert columns[0] == "alpha"
        assert len(rows) == 3
        phases = [r["phase"] for r in rows]
        assert phases[0] == "impossible" and phases[-1] == "easy"
        assert all(r["runtime_s"] is not None for r in rows)

    def test_sweep_timestamp_off_suppresses_runtime(self):
        cfg = small_cfg(sweep={"axes": [{"param": "alpha", "min": 0.8,
                                         "max": 0.8, "steps": 1}]})
        cfg.timestamp = False
        _, rows, _ = cmd_sweep(cfg)
        assert rows[0]["runtime_s"] is None

    def test_sweep_instance_stride(self):
        cfg = small_cfg(sweep={"axes": [{"param": "alpha", "min": 0.6,
                                         "max": 0.9, "steps": 3},],
                               "instance_stride": 2})
        _, rows, _ = cmd_sweep(cfg)
        has_inst = [r.get("instance_mse") is not None for r in rows]
        assert has_inst == [True, False, True]

    def test_sweep_needs_axes(self):
        with pytest.raises(ConfigurationError):
            cmd_sweep(small_cfg())

    def test_free_energy_rows(self):
        cfg = small_cfg(free_energy={"points": 11, "relax_iters": 50})
        columns, rows, _ = cmd_free_energy(cfg)
        assert columns == ["m_signal", "phi"]
        assert len(rows) == 11
        ms = [r["m_signal"] for r in rows]
        assert ms == sorted(ms)

    def test_selftest_passes(self):
        ok, lines = cmd_selftest(n_draws=3, seed=0)
        assert ok
        assert all(line.startswith("PASS") for line in lines)


class TestCli:
    def write_config(self, tmp_path, raw):
        path = tmp_path / "cfg.yaml"
        path.write_text(yaml.safe_dump(raw))
        return str(path)

    def test_sweep_end_to_end_reproducible(self, tmp_path):
        cfg = self.write_config(tmp_path, dict(
            model={"preset": "slr2", "n_signal": 300},
            sweep={"axes": [{"param": "alpha", "min": 0.5, "max": 0.8,
                             "steps": 2}]},
        ))
        out1, out2 = str(tmp_path / "a.csv"), str(tmp_path / "b.csv")
        assert main(["sweep", "--config", cfg, "--out", out1,
                     "--no-timestamp"]) == 0
        assert main(["sweep", "--config", cfg, "--out", out2,
                     "--no-timestamp"]) == 0
        a, b = open(out1, "rb").read(), open(out2, "rb").read()
        assert a == b  # byte-identical without the timestamp
        header = a.decode().splitlines()
        assert header[-3].split(",")[0] == "alpha"

    def test_parallel_matches_serial(self, tmp_path):
        cfg = self.write_config(tmp_path, dict(
            model={"preset": "slr2", "n_signal": 300},
            sweep={"axes": [{"param": "alpha", "min": 0.3, "max": 0.9,
                             "steps": 3}]},
        ))
        out1, out2 = str(tmp_path / "s.csv"), str(tmp_path / "p.csv")
        assert main(["sweep", "--config", cfg, "--out", out1,
                     "--no-timestamp"]) == 0
        assert main(["sweep", "--config", cfg, "--out", out2,
                     "--no-timestamp", "--threads", "2"]) == 0
        assert open(out1).read() == open(out2).read()

    def test_instance_csv_written(self, tmp_path):
        cfg = self.write_config(tmp_path, dict(
            model={"preset": "slr2", "n_signal": 300},
            solver={"max_iter": 30},
            output=str(tmp_path / "inst.csv"),
        ))
        assert main(["instance", "--config", cfg, "--seed", "7"]) == 0
        lines = (tmp_path / "inst.csv").read_text().splitlines()
        cols = [ln for ln in lines if not ln.startswith("#")][0].split(",")
        assert cols == ["seed", "algorithm", "kind", "t", "layer", "mse",
                        "delta", "converged", "iterations"]
        assert all(ln.split(",")[0] == "7" for ln in lines
                   if not ln.startswith("#") and ln != lines[-0]
                   and not ln.startswith("seed"))

    def test_malformed_config_exits_nonzero(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, dict(
            model={"preset": "slr2"}, bogus=1))
        assert main(["se", "--config", cfg,
                     "--out", str(tmp_path / "x.csv")]) == 1
        assert "error:" in capsys.readouterr().err

    def test_missing_output_path_errors(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path,
                                dict(model={"preset": "slr2",
                                            "n_signal": 100}))
        assert main(["se", "--config", cfg]) == 1
        assert "output" in capsys.readouterr().err
