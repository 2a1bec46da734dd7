import numpy as np
import pytest

from swda.checkpoint import CheckpointError, load_model, save_model
from swda.cli import EXIT_CONFIG, EXIT_OK, EXIT_STAGE, main
from swda.config import ConfigError, ExperimentConfig, dump_config, load_config
from swda.dsb import TrainConfig, make_schedule, new_model


class TestConfig:
    def test_defaults_validate(self):
        ExperimentConfig().validate()

    def test_load_round_trip(self, tmp_path):
        cfg = ExperimentConfig(fine_nx=64, fine_ny=64, coarse_nx=16, coarse_ny=16,
                               f_max=8, seed=42, forecast_horizons=(100, 200))
        path = tmp_path / "exp.ini"
        path.write_text(dump_config(cfg))
        back = load_config(path)
        assert back == cfg

    def test_partial_file_keeps_defaults(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text("[run]\nseed = 7\n")
        cfg = load_config(path)
        assert cfg.seed == 7
        assert cfg.fine_nx == 128  # untouched default

    def test_unknown_section(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text("[nope]\nx = 1\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_key_in_wrong_section(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text("[run]\nfine_nx = 64\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_bad_value(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text("[grids]\nfine_nx = sixty-four\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.ini")

    @pytest.mark.parametrize("override", [
        {"fine_nx": 100},            # not divisible by coarse 32
        {"f_max": 17},               # above coarse Nyquist
        {"d_obs": 5},                # not a perfect square
        {"da_total_steps": 5},       # below window_steps
    ])
    def test_validation_failures(self, override):
        cfg = ExperimentConfig(**override)
        with pytest.raises(ConfigError):
            cfg.validate()

    def test_bool_parsing(self, tmp_path):
        path = tmp_path / "exp.ini"
        path.write_text("[physics]\nwind_on = false\n")
        assert load_config(path).wind_on is False


class TestCheckpoint:
    def make_model(self):
        cfg = TrainConfig(hidden_width=8, emb_dim=4, seed=3)
        model = new_model(5, make_schedule(6, 1e-3, 1e-2), 0.4, 0.2, cfg)
        model.forward_trained = True
        model.round_index = 2
        return model

    def test_round_trip_bitwise(self, tmp_path):
        model = self.make_model()
        path = tmp_path / "m.ckpt"
        save_model(path, model)
        back = load_model(path)
        assert np.array_equal(back.schedule.gamma, model.schedule.gamma)
        assert back.data_mean == model.data_mean
        assert back.data_std == model.data_std
        assert back.forward_trained and back.round_index == 2
        for name in model.backward_net.params:
            assert np.array_equal(back.backward_net.params[name],
                                  model.backward_net.params[name])
            assert np.array_equal(back.forward_net.params[name],
                                  model.forward_net.params[name])

    def test_loaded_model_samples_identically(self, tmp_path):
        from swda.dsb import sample

        model = self.make_model()
        path = tmp_path / "m.ckpt"
        save_model(path, model)
        back = load_model(path)
        a = sample(model, 10, np.random.default_rng(0))
        b = sample(back, 10, np.random.default_rng(0))
        assert np.array_equal(a, b)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_model(path, self.make_model())
        raw = bytearray(path.read_bytes())
        raw[:4] = b"NOPE"
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError):
            load_model(path)

    def test_truncated(self, tmp_path):
        path = tmp_path / "m.ckpt"
        save_model(path, self.make_model())
        path.write_bytes(path.read_bytes()[:-16])
        with pytest.raises(CheckpointError):
            load_model(path)


class TestCli:
    def test_bad_config_exit_code(self, tmp_path, capsys):
        path = tmp_path / "exp.ini"
        path.write_text("[grids]\nf_max = 99\n")
        code = main(["simulate", "--config", str(path), "--out", str(tmp_path / "o")])
        assert code == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        code = main(["simulate", "--config", str(tmp_path / "nope.ini"),
                     "--out", str(tmp_path / "o")])
        assert code == EXIT_CONFIG

    def test_missing_dependency_exit_code(self, tmp_path, capsys):
        code = main(["calibrate", "--out", str(tmp_path / "o")])
        assert code == EXIT_STAGE
        assert "simulate" in capsys.readouterr().err

    def test_unknown_stage_rejected(self):
        with pytest.raises(SystemExit):
            main(["frobnicate"])

    def test_env_var_out_dir(self, tmp_path, monkeypatch, tiny_ini):
        monkeypatch.setenv("SWDA_OUT", str(tmp_path / "env_out"))
        monkeypatch.chdir(tmp_path)
        code = main(["simulate", "--config", str(tiny_ini)])
        assert code == EXIT_OK
        assert (tmp_path / "env_out" / "fine_eta.swda").exists()

    def test_seed_override_recorded(self, tmp_path, tiny_ini):
        out = tmp_path / "o"
        code = main(["simulate", "--config", str(tiny_ini), "--seed", "99",
                     "--out", str(out)])
        assert code == EXIT_OK
        assert "seed = 99" in (out / "config_used.ini").read_text()


@pytest.fixture
def tiny_ini(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "tiny.ini"
    path.write_text(
        "[grids]\n"
        "fine_nx = 32\nfine_ny = 32\ncoarse_nx = 16\ncoarse_ny = 16\nf_max = 8\n"
        "[times]\n"
        "fine_steps = 30\nforecast_horizons = 10\nforecast_total_steps = 20\n"
        "da_total_steps = 20\nwindow_steps = 10\n"
        "[dsb]\n"
        "k_steps = 6\nn_dsb_steps = 1\niters_per_step = 20\nhidden_width = 16\n"
        "[dictionary]\n"
        "dict_n_samples = 6\ndict_scale = 0.01\n"
        "[filter]\n"
        "n_ens = 4\nforecast_n_ens = 3\njitter_moves = 1\n"
    )
    return path
