import csv

import numpy as np
import pytest

from swda.config import ExperimentConfig
from swda.pipeline import (
    STAGES,
    StageError,
    check_dependencies,
    load_dictionary,
    load_training_dataset,
    load_truth_coarse,
    run_all,
    run_stage,
    stage_seed,
)
from swda.snapshot import read_snapshot


def tiny_config(seed=0):
    return ExperimentConfig(
        fine_nx=32, fine_ny=32, coarse_nx=16, coarse_ny=16, f_max=8,
        fine_steps=30, forecast_horizons=(10,), forecast_total_steps=20,
        da_total_steps=20, window_steps=10,
        k_steps=6, n_dsb_steps=1, iters_per_step=20, hidden_width=16,
        dict_n_samples=6, dict_scale=0.01,
        n_ens=4, forecast_n_ens=3, jitter_moves=1,
        seed=seed,
    )


@pytest.fixture(scope="module")
def full_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = tiny_config()
    run_all(cfg, out)
    return cfg, out


class TestStageSeed:
    def test_deterministic(self):
        assert stage_seed(0, "simulate") == stage_seed(0, "simulate")

    def test_distinct_per_stage(self):
        seeds = {stage_seed(0, s) for s in STAGES}
        assert len(seeds) == len(STAGES)

    def test_distinct_per_master(self):
        assert stage_seed(0, "train") != stage_seed(1, "train")


class TestDependencies:
    def test_missing_dep_raises(self, tmp_path):
        with pytest.raises(StageError):
            run_stage(tiny_config(), "train", tmp_path)

    def test_unknown_stage(self, tmp_path):
        with pytest.raises(StageError):
            run_stage(tiny_config(), "bogus", tmp_path)

    def test_check_passes_after_run(self, full_run):
        cfg, out = full_run
        for stage in STAGES:
            check_dependencies(cfg, stage, out)


class TestArtifacts:
    def test_all_artifacts_exist(self, full_run):
        _, out = full_run
        for name in [
            "fine_eta.swda", "truth_coarse.swda", "training_data.swda",
            "training_meta.txt", "dsb_selected.ckpt", "fid_scores.csv",
            "dictionary.swda", "dictionary_meta.txt", "forecast_crps.csv",
            "rank_hist.csv", "spaghetti.csv", "da_metrics.csv",
            "da_ensemble.csv", "da_summary.csv", "manifest.txt",
            "config_used.ini",
        ]:
            assert (out / name).exists(), name

    def test_manifest_lines(self, full_run):
        _, out = full_run
        lines = (out / "manifest.txt").read_text().strip().splitlines()
        assert len(lines) == len(STAGES)
        for stage, line in zip(STAGES, lines):
            assert line.startswith(f"stage={stage} status=ok seed=")
            assert "wall_time=" in line

    def test_truth_series_length(self, full_run):
        cfg, out = full_run
        _, states = load_truth_coarse(out)
        assert len(states) == max(cfg.da_total_steps, cfg.forecast_total_steps) + 1
        assert states[0].grid.nx == cfg.coarse_nx

    def test_training_dataset_loads(self, full_run):
        cfg, out = full_run
        d = load_training_dataset(out)
        # fine_steps + 1 stored snapshots give fine_steps increments
        assert d.n_samples == cfg.fine_steps
        assert d.samples.min() >= 0.0 and d.samples.max() <= 1.0
        assert d.grid.nx == cfg.coarse_nx

    def test_dictionary_loads(self, full_run):
        cfg, out = full_run
        d = load_dictionary(out)
        assert d.n_samples == cfg.dict_n_samples
        assert d.scale == cfg.dict_scale
        assert np.all(np.isfinite(d.samples))

    def test_fid_scores_rows(self, full_run):
        cfg, out = full_run
        with open(out / "fid_scores.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == cfg.n_dsb_steps
        assert all(float(r["frechet_score"]) >= 0 for r in rows)

    def test_crps_csv(self, full_run):
        cfg, out = full_run
        with open(out / "forecast_crps.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert [int(r["horizon"]) for r in rows] == list(cfg.forecast_horizons)
        for r in rows:
            for key in ("crps_eta", "crps_u", "crps_v"):
                assert float(r[key]) >= 0.0

    def test_rank_hist_totals(self, full_run):
        cfg, out = full_run
        with open(out / "rank_hist.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        npoints = cfg.coarse_nx * cfg.coarse_ny
        reps = cfg.forecast_total_steps // cfg.forecast_horizons[0]
        for var in ("eta", "u", "v"):
            sub = [r for r in rows if r["variable"] == var]
            assert len(sub) == cfg.forecast_n_ens + 1
            assert sum(int(r["count"]) for r in sub) == npoints * reps

    def test_da_metrics_csv(self, full_run):
        cfg, out = full_run
        with open(out / "da_metrics.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        cycles = cfg.da_total_steps // cfg.window_steps
        assert len(rows) == cycles * cfg.d_obs
        for r in rows:
            assert float(r["rmse"]) >= 0
            assert 1 <= float(r["ess_min"]) <= cfg.n_ens
            assert int(r["temper_stages"]) >= 1

    def test_da_summary_consistent_with_metrics(self, full_run):
        cfg, out = full_run
        with open(out / "da_metrics.csv", newline="") as fh:
            metric_rows = list(csv.DictReader(fh))
        with open(out / "da_summary.csv", newline="") as fh:
            summary_rows = list(csv.DictReader(fh))
        assert len(summary_rows) == cfg.d_obs
        for s in summary_rows:
            key = (s["location_i"], s["location_j"])
            biases = [float(r["bias"]) for r in metric_rows
                      if (r["location_i"], r["location_j"]) == key]
            assert float(s["avg_bias"]) == pytest.approx(np.mean(biases), abs=1e-6)
            assert float(s["avg_abs_bias"]) == pytest.approx(abs(np.mean(biases)), abs=1e-6)

    def test_config_recorded(self, full_run):
        _, out = full_run
        text = (out / "config_used.ini").read_text()
        assert "[grids]" in text and "fine_nx = 32" in text


class TestDeterminism:
    def test_simulate_reproducible(self, tmp_path):
        cfg = tiny_config(seed=5)
        outs = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            run_stage(cfg, "simulate", out)
            _, fields = read_snapshot(out / "fine_eta.swda")
            outs.append(fields)
        for name in outs[0]:
            assert np.array_equal(outs[0][name], outs[1][name])

    def test_seed_changes_assimilation(self, tmp_path, full_run):
        # same artifacts, different master seed for the assimilate stage
        cfg, out_src = full_run
        import shutil

        for seed, sub in ((1, "s1"), (2, "s2")):
            dst = tmp_path / sub
            shutil.copytree(out_src, dst)
            (dst / "manifest.txt").unlink()
            cfg2 = tiny_config(seed=seed)
            run_stage(cfg2, "assimilate", dst)
        a = (tmp_path / "s1" / "da_metrics.csv").read_text()
        b = (tmp_path / "s2" / "da_metrics.csv").read_text()
        assert a != b
