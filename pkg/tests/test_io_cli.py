import json

import numpy as np
import pytest

from homsim import analysis, cli, io, montecarlo as mc
from homsim.params import DarkState, DetectorParams, EmitterParams, SetupParams


def _config(**overrides):
    base = io.RunConfig(
        emitters=(
            EmitterParams(t1=610.0, t2=580.0, multiphoton_residual=0.09),
            EmitterParams(
                t1=950.0, t2=390.0, multiphoton_residual=0.07,
                dark_state=DarkState(slow_lifetime=4000.0, slow_fraction=0.2),
            ),
        ),
        setup=SetupParams(mode_overlap=0.95, polarization="parallel"),
        detector=DetectorParams.from_combined_fwhm(640.0),
        simulation=io.SimulationSettings(n_pulses=5000, seed=3),
        analysis=io.AnalysisSettings(bin_width=256.0),
    )
    import dataclasses
    return dataclasses.replace(base, **overrides) if overrides else base


class TestConfig:
    def test_round_trip_identity(self):
        cfg = _config()
        again = io.config_from_dict(io.config_to_dict(cfg))
        assert again == cfg
        # and a second cycle through JSON text
        text = json.dumps(io.config_to_dict(cfg))
        assert io.config_from_dict(json.loads(text)) == cfg

    def test_file_round_trip(self, tmp_path):
        cfg = _config()
        p = tmp_path / "cfg.json"
        io.save_config(cfg, p)
        assert io.load_config(p) == cfg

    def test_missing_field_message(self):
        d = io.config_to_dict(_config())
        del d["emitters"][0]["t1_ps"]
        with pytest.raises(io.ConfigError, match=r"emitters\[0\].*t1_ps"):
            io.config_from_dict(d)

    def test_invalid_json(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text("{not json")
        with pytest.raises(io.ConfigError, match="invalid JSON"):
            io.load_config(p)

    def test_two_emitters_required(self):
        with pytest.raises(io.ConfigError):
            io.RunConfig(emitters=(EmitterParams(t1=1.0, t2=1.0),))

    def test_effective_windows(self):
        cfg = _config()
        assert cfg.effective_window() == 13140.0
        assert cfg.effective_post_window() == 256.0
        assert cfg.max_tau() == 3.5 * 13140.0


class TestTagFiles:
    def _stream(self, n=500, seed=0):
        rng = np.random.default_rng(seed)
        tags = np.unique(rng.integers(0, 10_000_000, n))
        return mc.TimeTagStream(channel="D4", tags=tags, duration=10_000_000.0)

    def test_csv_round_trip(self, tmp_path):
        s = self._stream()
        p = tmp_path / "tags.csv"
        io.write_tags(s, p, "csv")
        back = io.read_tags(p)
        np.testing.assert_array_equal(back.tags, s.tags)
        assert back.channel == "D4"

    def test_binary_round_trip_bit_exact(self, tmp_path):
        s = self._stream()
        p = tmp_path / "tags.bin"
        io.write_tags(s, p, "bin")
        raw = p.read_bytes()
        assert raw[:8] == io.TAG_MAGIC
        np.testing.assert_array_equal(
            np.frombuffer(raw[16:], dtype="<u8").astype(np.int64), s.tags
        )
        back = io.read_tags(p)
        np.testing.assert_array_equal(back.tags, s.tags)
        # re-writing the parsed stream reproduces the file byte-for-byte
        p2 = tmp_path / "tags2.bin"
        io.write_tags(back, p2, "bin")
        assert p2.read_bytes() == raw

    def test_malformed_csv_reports_line(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("channel,timestamp_ps\nD3,100\nD3,oops\n")
        with pytest.raises(io.FileFormatError, match=r"bad\.csv:3"):
            io.read_tags_csv(p)

    def test_mixed_channels_rejected(self, tmp_path):
        p = tmp_path / "mixed.csv"
        p.write_text("channel,timestamp_ps\nD3,100\nD4,200\n")
        with pytest.raises(io.FileFormatError, match="mixed"):
            io.read_tags_csv(p)

    def test_bad_header(self, tmp_path):
        p = tmp_path / "h.csv"
        p.write_text("time,chan\n1,2\n")
        with pytest.raises(io.FileFormatError, match="header"):
            io.read_tags_csv(p)

    def test_truncated_binary(self, tmp_path):
        p = tmp_path / "t.bin"
        io.write_tags(self._stream(), p, "bin")
        p.write_bytes(p.read_bytes()[:-3])
        with pytest.raises(io.FileFormatError, match="truncated"):
            io.read_tags_binary(p)

    def test_not_a_tag_file(self, tmp_path):
        p = tmp_path / "x.bin"
        p.write_bytes(b"definitely not a tag file")
        with pytest.raises(io.FileFormatError):
            io.read_tags_binary(p)


class TestCurveCsv:
    def test_sampled_curve_round_trip(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("x,y,yerr\n0.0,1.0,0.1\n1.0,2.0,0.2\n2.0,1.5,0.1\n")
        s = io.read_sampled_curve_csv(p)
        np.testing.assert_allclose(s.x, [0.0, 1.0, 2.0])
        np.testing.assert_allclose(s.y_err, [0.1, 0.2, 0.1])

    def test_two_column(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("0,1\n1,2\n2,3\n")
        s = io.read_sampled_curve_csv(p)
        assert s.y_err is None

    def test_malformed_row(self, tmp_path):
        p = tmp_path / "s.csv"
        p.write_text("x,y\n0,1\n1,zzz\n")
        with pytest.raises(io.FileFormatError, match=":3"):
            io.read_sampled_curve_csv(p)


class TestCli:
    def _write_config(self, tmp_path, **kw):
        cfg = _config(**kw)
        p = tmp_path / "config.json"
        io.save_config(cfg, p)
        return p

    def test_simulate_deterministic_outputs(self, tmp_path):
        cfgp = self._write_config(tmp_path)
        outa, outb = tmp_path / "a", tmp_path / "b"
        for out in (outa, outb):
            rc = cli.main(["simulate", "--config", str(cfgp), "--out", str(out),
                           "--format", "bin"])
            assert rc == 0
        for name in ("tags_d3.bin", "tags_d4.bin"):
            assert (outa / name).read_bytes() == (outb / name).read_bytes()
        summary = json.loads((outa / "simulate_summary.json").read_text())
        assert summary["n_pulses"] == 5000

    def test_simulate_analyze_pipeline(self, tmp_path):
        cfgp = self._write_config(tmp_path)
        out = tmp_path / "run"
        assert cli.main(["simulate", "--config", str(cfgp), "--out", str(out)]) == 0
        rc = cli.main([
            "analyze", "--config", str(cfgp), "--out", str(tmp_path / "m"),
            str(out / "tags_d3.csv"), str(out / "tags_d4.csv"),
        ])
        assert rc == 0
        metrics = json.loads((tmp_path / "m" / "metrics.json").read_text())
        assert "ratio_center_b" in metrics
        assert (tmp_path / "m" / "histogram.csv").read_text().startswith("tau_ps,counts")

    def test_analyze_four_files_full_metrics(self, tmp_path):
        import dataclasses
        cfg = _config()
        perp_cfg = dataclasses.replace(
            cfg, setup=dataclasses.replace(cfg.setup, polarization="orthogonal")
        )
        cfgp = tmp_path / "cfg.json"
        io.save_config(cfg, cfgp)
        perp_p = tmp_path / "cfg_perp.json"
        io.save_config(perp_cfg, perp_p)
        for name, conf in (("perp", perp_p), ("par", cfgp)):
            assert cli.main(["simulate", "--config", str(conf),
                             "--out", str(tmp_path / name)]) == 0
        rc = cli.main([
            "analyze", "--config", str(cfgp), "--out", str(tmp_path / "m4"),
            str(tmp_path / "perp/tags_d3.csv"), str(tmp_path / "perp/tags_d4.csv"),
            str(tmp_path / "par/tags_d3.csv"), str(tmp_path / "par/tags_d4.csv"),
        ])
        assert rc == 0
        m = json.loads((tmp_path / "m4" / "metrics.json").read_text())
        assert set(m) >= {"pc", "pc_post", "ratio_par_b"}

    def test_duplicate_channel_rejected(self, tmp_path):
        cfgp = self._write_config(tmp_path)
        out = tmp_path / "run"
        cli.main(["simulate", "--config", str(cfgp), "--out", str(out)])
        rc = cli.main([
            "analyze", "--config", str(cfgp), "--out", str(tmp_path / "m"),
            str(out / "tags_d3.csv"), str(out / "tags_d3.csv"),
        ])
        assert rc == cli.EXIT_CONFIG

    def test_missing_config_is_io_error(self, tmp_path):
        rc = cli.main(["simulate", "--config", str(tmp_path / "nope.json")])
        assert rc == cli.EXIT_IO

    def test_invalid_config_is_config_error(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{"emitters": []}')
        rc = cli.main(["simulate", "--config", str(p)])
        assert rc == cli.EXIT_CONFIG

    def test_curve_command(self, tmp_path):
        cfgp = self._write_config(tmp_path)
        out = tmp_path / "c"
        assert cli.main(["curve", "--config", str(cfgp), "--out", str(out)]) == 0
        header = (out / "curves.csv").read_text().splitlines()[0]
        assert header == "tau_ps,perp,par,perp_conv,par_conv"

    def test_curve_delta_irf_columns_match(self, tmp_path):
        import dataclasses
        cfg = _config()
        cfg = dataclasses.replace(cfg, detector=DetectorParams())
        cfgp = tmp_path / "cfg.json"
        io.save_config(cfg, cfgp)
        out = tmp_path / "c"
        assert cli.main(["curve", "--config", str(cfgp), "--out", str(out)]) == 0
        data = np.genfromtxt(out / "curves.csv", delimiter=",", skip_header=1)
        np.testing.assert_array_equal(data[:, 1], data[:, 3])
        np.testing.assert_array_equal(data[:, 2], data[:, 4])

    def test_fit_decay_command(self, tmp_path):
        from homsim import fitting
        t = np.arange(-2000.0, 10_000.0, 20.0)
        y = 5.0 + 1e5 * fitting.exp_decay_irf(t - 100.0, 610.0, 640.0, "gaussian")
        data = tmp_path / "decay.csv"
        data.write_text(
            "t_ps,counts\n" + "\n".join(f"{a},{b}" for a, b in zip(t, y)) + "\n"
        )
        rc = cli.main(["fit-decay", str(data), "--model", "single_exp",
                       "--irf-fwhm-ps", "640", "--out", str(tmp_path / "f")])
        assert rc == 0
        fit = json.loads((tmp_path / "f" / "fit_single_exp.json").read_text())
        assert fit["params"]["lifetime"] == pytest.approx(610.0, rel=1e-4)

    def test_fit_spectrum_command(self, tmp_path):
        from homsim import fitting
        x = np.linspace(-5.0, 5.0, 301)
        y = 2.0 + 900.0 * fitting.lorentzian_profile(x, 0.2, 0.55 + 0.15)
        data = tmp_path / "spec.csv"
        data.write_text(
            "x,y\n" + "\n".join(f"{a},{b}" for a, b in zip(x, y)) + "\n"
        )
        rc = cli.main(["fit-spectrum", str(data), "--instrument-fwhm-ghz", "0.15",
                       "--out", str(tmp_path / "f")])
        assert rc == 0
        fit = json.loads((tmp_path / "f" / "fit_lorentzian.json").read_text())
        assert fit["params"]["fwhm"] == pytest.approx(0.55, rel=1e-4)

    def test_hbt_command(self, tmp_path):
        cfgp = self._write_config(tmp_path)
        out = tmp_path / "h"
        rc = cli.main(["hbt", "--config", str(cfgp), "--emitter", "1",
                       "--n-pulses", "20000", "--out", str(out)])
        assert rc == 0
        result = json.loads((out / "hbt_emitter1.json").read_text())
        assert result["configured_residual"] == 0.09

    def test_env_var_output_dir(self, tmp_path, monkeypatch):
        cfgp = self._write_config(tmp_path)
        monkeypatch.setenv(cli.OUTPUT_DIR_ENV, str(tmp_path / "envout"))
        assert cli.main(["curve", "--config", str(cfgp)]) == 0
        assert (tmp_path / "envout" / "curves.csv").exists()
