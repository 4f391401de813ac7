import json

import numpy as np
import pytest

from stft_superres.cli import main
from stft_superres.measure import read_spike_train


def run_cli(*args):
    return main(list(args))


@pytest.fixture()
def small_chain(tmp_path):
    """gen -> measure with a small, fast configuration."""
    spikes = tmp_path / "spikes.json"
    meas = tmp_path / "meas.json"
    assert run_cli("gen", "--delta", "0.1", "--seed", "7", "--out", str(spikes)) == 0
    assert run_cli(
        "measure", "--in", str(spikes), "--K", "8", "--N", "24",
        "--sigma", str(1 / 34), "--out", str(meas),
    ) == 0
    return spikes, meas


class TestExitCodes:
    def test_no_arguments_usage(self, capsys):
        with pytest.raises(SystemExit) as exc:
            run_cli()
        assert exc.value.code == 2

    def test_unknown_command_usage(self):
        with pytest.raises(SystemExit) as exc:
            run_cli("frobnicate")
        assert exc.value.code == 2

    def test_malformed_json_is_usage_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        code = run_cli("measure", "--in", str(bad), "--K", "4", "--out",
                       str(tmp_path / "out.json"))
        assert code == 2
        assert "error" in capsys.readouterr().err

    def test_missing_file_is_usage_error(self, tmp_path):
        code = run_cli("recover", "--in", str(tmp_path / "absent.json"))
        assert code == 2


class TestPipeline:
    def test_gen_measure_recover(self, small_chain, tmp_path, capsys):
        spikes, meas = small_chain
        out = tmp_path / "result.json"
        code = run_cli("recover", "--in", str(meas), "--sigma", str(1 / 34),
                       "--truth", str(spikes), "--out", str(out))
        assert code == 0
        text = capsys.readouterr().out
        assert "status: Success" in text
        err_line = [ln for ln in text.splitlines() if ln.startswith("support_error")]
        assert err_line and float(err_line[0].split(":")[1]) <= 1e-3
        payload = json.loads(out.read_text())
        assert set(payload) >= {"estimate", "dual_poly", "solver", "status"}

    def test_fourier_measure_and_baseline(self, tmp_path, capsys):
        spikes = tmp_path / "spikes.json"
        meas = tmp_path / "fmeas.json"
        assert run_cli("gen", "--delta", "0.2", "--seed", "3", "--out", str(spikes)) == 0
        assert run_cli("measure", "--in", str(spikes), "--K", "10", "--fourier",
                       "--out", str(meas)) == 0
        obj = json.loads(meas.read_text())
        assert obj["N"] == 0
        code = run_cli("recover", "--in", str(meas), "--baseline-fourier",
                       "--truth", str(spikes))
        assert code == 0
        text = capsys.readouterr().out
        assert "support_error" in text

    def test_gen_deterministic_bytes(self, tmp_path):
        a = tmp_path / "a.json"
        b = tmp_path / "b.json"
        run_cli("gen", "--delta", "0.1", "--seed", "5", "--out", str(a))
        run_cli("gen", "--delta", "0.1", "--seed", "5", "--out", str(b))
        assert a.read_bytes() == b.read_bytes()

    def test_recover_deterministic_bytes(self, small_chain, tmp_path):
        _, meas = small_chain
        outs = []
        for name in ("r1.json", "r2.json"):
            out = tmp_path / name
            run_cli("recover", "--in", str(meas), "--sigma", str(1 / 34),
                    "--out", str(out))
            outs.append(out.read_bytes())
        assert outs[0] == outs[1]

    def test_plot_from_recover_output(self, small_chain, tmp_path):
        _, meas = small_chain
        out = tmp_path / "result.json"
        run_cli("recover", "--in", str(meas), "--sigma", str(1 / 34), "--out", str(out))
        csv = tmp_path / "poly.csv"
        assert run_cli("plot", "--dual-poly", str(out), "--grid", "256",
                       "--out-csv", str(csv)) == 0
        lines = csv.read_text().splitlines()
        assert lines[0] == "t,re,im,abs"
        assert len(lines) == 257

    def test_invert(self, tmp_path, capsys):
        spikes = tmp_path / "one.json"
        run_cli("gen", "--delta", "0.3", "--seed", "2", "--out", str(spikes))
        code = run_cli("invert", "--in", str(spikes), "--K", "60", "--t", "0.25",
                       "--sigma", "0.05")
        assert code == 0
        assert "value at t=" in capsys.readouterr().out


def test_full_default_chain_k20(tmp_path, capsys):
    # gen --delta 0.05 --seed 7, measure --K 20 (default sigma and N),
    # recover: printed support error meets the success criterion
    spikes = tmp_path / "spikes.json"
    meas = tmp_path / "meas.json"
    assert run_cli("gen", "--delta", "0.05", "--seed", "7", "--out", str(spikes)) == 0
    assert run_cli("measure", "--in", str(spikes), "--K", "20", "--out", str(meas)) == 0
    code = run_cli("recover", "--in", str(meas), "--truth", str(spikes))
    assert code == 0
    text = capsys.readouterr().out
    err_line = [ln for ln in text.splitlines() if ln.startswith("support_error")]
    assert err_line and float(err_line[0].split(":")[1]) <= 1e-3


class TestCertifyCli:
    def test_conforming_instance(self, tmp_path, capsys):
        out = tmp_path / "report.json"
        code = run_cli(
            "certify", "--support", "0.1,0.35,0.62,0.86", "--fc", "10.5", "--torus",
            "--grid", "8192", "--out", str(out),
        )
        assert code == 0
        text = capsys.readouterr().out
        assert "off_support_max" in text
        assert "bound chain" in text
        payload = json.loads(out.read_text())
        assert payload["valid"] is True
        assert payload["off_support_max"] < 1.0
        assert payload["bound_chain"]["far_region"] <= 0.876

    def test_support_from_spike_train(self, tmp_path):
        spikes = tmp_path / "spikes.json"
        run_cli("gen", "--delta", "0.12", "--seed", "1", "--out", str(spikes))
        code = run_cli("certify", "--support", str(spikes), "--fc", "10.5", "--torus",
                       "--grid", "4096")
        assert code == 0

    def test_violating_support_fails_cleanly(self, tmp_path, capsys):
        code = run_cli("certify", "--support", "0.1,0.15", "--fc", "10.5", "--torus")
        assert code == 1
        assert "failed" in capsys.readouterr().err


class TestSweepCli:
    def test_sweep_outputs(self, tmp_path):
        spec = tmp_path / "sweep.cfg"
        spec.write_text(
            "K = 6\n"
            "N_values = 12\n"
            "sigma_values = 0.05\n"
            "delta_grid = 0.066,0.266\n"
            "trials_per_cell = 2\n"
            "seed = 9\n"
        )
        csv = tmp_path / "out.csv"
        svg = tmp_path / "out.svg"
        code = run_cli("sweep", "--spec", str(spec), "--out-csv", str(csv),
                       "--out-svg", str(svg))
        assert code == 0
        from stft_superres.bench import read_results

        records = read_results(csv)
        assert len(records) == 2 * 2 * 2  # (fourier + stft) x 2 deltas x 2 trials
        assert svg.read_text().startswith("<svg")

    def test_unknown_key_rejected(self, tmp_path, capsys):
        spec = tmp_path / "sweep.cfg"
        spec.write_text("K = 6\nbogus = 1\n")
        assert run_cli("sweep", "--spec", str(spec)) == 2


class TestConfigFile:
    def test_config_preloads_defaults(self, tmp_path):
        cfg = tmp_path / "conf.cfg"
        cfg.write_text("seed = 11\ndelta = 0.2\n")
        out = tmp_path / "train.json"
        code = run_cli("--config", str(cfg), "gen", "--out", str(out))
        assert code == 0
        from stft_superres.measure import InstanceSpec, random_instance

        ref = random_instance(InstanceSpec(delta=0.2, rng_seed=11))
        got = read_spike_train(out)
        assert np.allclose(got.points, ref.points)

    def test_explicit_flag_beats_config(self, tmp_path):
        cfg = tmp_path / "conf.cfg"
        cfg.write_text("seed = 11\ndelta = 0.2\n")
        out = tmp_path / "train.json"
        code = run_cli("--config", str(cfg), "gen", "--seed", "12", "--out", str(out))
        assert code == 0
        from stft_superres.measure import InstanceSpec, random_instance

        ref = random_instance(InstanceSpec(delta=0.2, rng_seed=12))
        got = read_spike_train(out)
        assert np.allclose(got.points, ref.points)

    def test_bad_config_line(self, tmp_path, capsys):
        cfg = tmp_path / "conf.cfg"
        cfg.write_text("just a line without equals\n")
        assert run_cli("--config", str(cfg), "gen", "--delta", "0.2",
                       "--out", str(tmp_path / "x.json")) == 2
