"""
Stage orchestration: each pipeline stage reads its inputs from the output
directory, writes its artifacts, and appends a manifest entry.  Stage seeds
are derived by hashing the master seed with the stage name, so any stage is
reproducible in isolation.
"""

from __future__ import annotations

import csv
import hashlib
import time
from pathlib import Path

import numpy as np

from . import dsb, filtering, noise_dictionary as nd
from .calibration import (
    NonConvergenceError,
    TrainingDataset,
    build_training_dataset,
    compute_increments,
    invert_transform,
    solve_stream_function,
)
from .checkpoint import load_model, save_model
from .config import ConfigError, ExperimentConfig, dump_config
from .dynamics import PhysParams, State, initial_state, step_deterministic, step_stochastic
from .grid import CutoffSpec, Grid, restrict_to_coarse
from .snapshot import read_metadata, read_snapshot, write_metadata, write_snapshot

STAGES = ["simulate", "calibrate", "train", "generate", "forecast", "assimilate", "metrics"]

# stage -> (artifacts it writes, stages it needs)
_ARTIFACTS = {
    "simulate": ["fine_eta.swda", "truth_coarse.swda"],
    "calibrate": ["training_data.swda", "training_meta.txt"],
    "train": ["dsb_selected.ckpt", "fid_scores.csv"],
    "generate": ["dictionary.swda", "dictionary_meta.txt"],
    "forecast": ["forecast_crps.csv", "rank_hist.csv", "spaghetti.csv"],
    "assimilate": ["da_metrics.csv", "da_ensemble.csv"],
    "metrics": ["da_summary.csv"],
}
_DEPS = {
    "simulate": [],
    "calibrate": ["simulate"],
    "train": ["calibrate"],
    "generate": ["train"],
    "forecast": ["simulate", "generate"],
    "assimilate": ["simulate", "generate"],
    "metrics": ["assimilate"],
}


class StageError(Exception):
    pass


def stage_seed(master_seed: int, stage: str) -> int:
    digest = hashlib.sha256(f"{master_seed}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _phys(cfg: ExperimentConfig) -> PhysParams:
    return PhysParams(
        fr=cfg.fr, ro=cfg.ro, f_cor=cfg.f_cor, nu=cfg.nu, c_d=cfg.c_d,
        a_init=cfg.a_init, wind_on=cfg.wind_on,
    )


def _grids(cfg: ExperimentConfig) -> tuple[Grid, Grid]:
    return Grid(cfg.fine_nx, cfg.fine_ny), Grid(cfg.coarse_nx, cfg.coarse_ny)


def check_dependencies(cfg: ExperimentConfig, stage: str, out: Path) -> None:
    for dep in _DEPS[stage]:
        for artifact in _ARTIFACTS[dep]:
            if not (out / artifact).exists():
                raise StageError(
                    f"stage {stage!r} needs output {artifact!r} of stage {dep!r}; "
                    f"run `swda {dep}` first"
                )


def _append_manifest(out: Path, stage: str, seed: int, wall: float, outputs: list[str]) -> None:
    line = (
        f"stage={stage} status=ok seed={seed} wall_time={wall:.2f}s "
        f"outputs={','.join(outputs)}"
    )
    with open(out / "manifest.txt", "a") as fh:
        fh.write(line + "\n")


def run_stage(cfg: ExperimentConfig, stage: str, out_dir: str | Path) -> list[str]:
    """Execute one pipeline stage; returns the artifact paths written."""
    if stage not in STAGES:
        raise StageError(f"unknown stage {stage!r}; choose from {STAGES}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    check_dependencies(cfg, stage, out)
    (out / "config_used.ini").write_text(dump_config(cfg))
    seed = stage_seed(cfg.seed, stage)
    t0 = time.time()
    outputs = _STAGE_FNS[stage](cfg, out, seed)
    _append_manifest(out, stage, seed, time.time() - t0, outputs)
    return outputs


def run_all(cfg: ExperimentConfig, out_dir: str | Path) -> None:
    for stage in STAGES:
        run_stage(cfg, stage, out_dir)


# ---------------------------------------------------------------- stages


def _stage_simulate(cfg: ExperimentConfig, out: Path, seed: int) -> list[str]:
    fine, coarse = _grids(cfg)
    p = _phys(cfg)
    s = initial_state(fine, p)
    n_keep = max(cfg.da_total_steps, cfg.forecast_total_steps)

    fine_etas = {"eta_%05d" % 0: s.eta.copy()}
    coarse_fields = {}

    def record_coarse(step: int, state: State):
        if step <= n_keep:
            coarse_fields["u_%05d" % step] = restrict_to_coarse(state.u, fine, coarse)
            coarse_fields["v_%05d" % step] = restrict_to_coarse(state.v, fine, coarse)
            coarse_fields["eta_%05d" % step] = restrict_to_coarse(state.eta, fine, coarse)

    record_coarse(0, s)
    for n in range(1, cfg.fine_steps + 1):
        s = step_deterministic(s, p, cfg.dt)
        if n % cfg.snapshot_stride == 0:
            fine_etas["eta_%05d" % n] = s.eta.copy()
        record_coarse(n, s)

    write_snapshot(out / "fine_eta.swda", fine, fine_etas)
    write_snapshot(out / "truth_coarse.swda", coarse, coarse_fields)
    return ["fine_eta.swda", "truth_coarse.swda"]


def _stage_calibrate(cfg: ExperimentConfig, out: Path, seed: int) -> list[str]:
    fine, coarse = _grids(cfg)
    _, fields = read_snapshot(out / "fine_eta.swda")
    etas = [fields[name] for name in sorted(fields)]
    cutoff = CutoffSpec(cfg.f_max)
    series = compute_increments(etas, fine, cutoff, coarse)

    max_iter = cfg.cal_max_iter or 10 * coarse.npoints
    solutions = []
    n_nonconv = 0
    for rhs, (gx, gy) in zip(series.delta_eta, series.grad_filtered):
        try:
            sol = solve_stream_function(rhs, gx, gy, coarse, tol=cfg.cal_tol, max_iter=max_iter)
        except NonConvergenceError as exc:
            sol = exc.solution
            n_nonconv += 1
        solutions.append(sol)

    dataset = build_training_dataset(solutions, coarse, arcsinh_scale=cfg.arcsinh_scale)
    fields_out = {"mean_field": dataset.mean_field}
    for i, row in enumerate(dataset.samples):
        fields_out["sample_%05d" % i] = row.reshape(coarse.shape)
    write_snapshot(out / "training_data.swda", coarse, fields_out)
    write_metadata(out / "training_meta.txt", {
        "n_samples": dataset.n_samples,
        "arcsinh_scale": dataset.arcsinh_scale,
        "norm_min": dataset.norm_min,
        "norm_max": dataset.norm_max,
        "nonconverged_solves": n_nonconv,
    })
    return ["training_data.swda", "training_meta.txt"]


def load_training_dataset(out: Path) -> TrainingDataset:
    grid, fields = read_snapshot(out / "training_data.swda")
    meta = read_metadata(out / "training_meta.txt")
    n = int(meta["n_samples"])
    samples = np.stack([fields["sample_%05d" % i].ravel() for i in range(n)])
    return TrainingDataset(
        samples=samples,
        mean_field=fields["mean_field"],
        arcsinh_scale=float(meta["arcsinh_scale"]),
        norm_min=float(meta["norm_min"]),
        norm_max=float(meta["norm_max"]),
        grid=grid,
    )


def _stage_train(cfg: ExperimentConfig, out: Path, seed: int) -> list[str]:
    dataset = load_training_dataset(out)
    train_cfg = dsb.TrainConfig(
        n_dsb_steps=cfg.n_dsb_steps,
        iters_per_step=cfg.iters_per_step,
        batch_size=cfg.batch_size,
        learning_rate=cfg.learning_rate,
        hidden_width=cfg.hidden_width,
        seed=seed,
    )
    schedule = dsb.make_schedule(cfg.k_steps, cfg.gamma_min, cfg.gamma_max)
    checkpoints = dsb.train_dsb(dataset.samples, train_cfg, schedule)

    score_rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    n_score = min(2000, 4 * dataset.n_samples)
    scores = []
    outputs = []
    for ckpt in checkpoints:
        generated = dsb.sample(ckpt, n_score, score_rng)
        scores.append(dsb.frechet_score(generated, dataset.samples))
        name = f"dsb_round_{ckpt.round_index:02d}.ckpt"
        save_model(out / name, ckpt)
        outputs.append(name)

    with open(out / "fid_scores.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["round", "frechet_score"])
        for ckpt, score in zip(checkpoints, scores):
            w.writerow([ckpt.round_index, f"{score:.8g}"])

    if cfg.select_round:
        if not 1 <= cfg.select_round <= len(checkpoints):
            raise StageError(f"select_round={cfg.select_round} out of range")
        best = checkpoints[cfg.select_round - 1]
    else:
        best = checkpoints[int(np.argmin(scores))]
    save_model(out / "dsb_selected.ckpt", best)
    return outputs + ["fid_scores.csv", "dsb_selected.ckpt"]


def _stage_generate(cfg: ExperimentConfig, out: Path, seed: int) -> list[str]:
    dataset = load_training_dataset(out)
    model = load_model(out / "dsb_selected.ckpt")
    rng = np.random.default_rng(np.random.SeedSequence([seed]))
    dictionary = nd.build_dictionary(model, dataset, cfg.dict_n_samples, cfg.dict_scale, rng)
    fields = {"local_mean": dictionary.local_mean, "local_std": dictionary.local_std}
    for i in range(dictionary.n_samples):
        fields["sample_%05d" % i] = dictionary.samples[i]
    write_snapshot(out / "dictionary.swda", dictionary.grid, fields)
    write_metadata(out / "dictionary_meta.txt", {
        "n_samples": dictionary.n_samples,
        "scale": dictionary.scale,
    })
    return ["dictionary.swda", "dictionary_meta.txt"]


def load_dictionary(out: Path) -> nd.NoiseDictionary:
    grid, fields = read_snapshot(out / "dictionary.swda")
    meta = read_metadata(out / "dictionary_meta.txt")
    n = int(meta["n_samples"])
    samples = np.stack([fields["sample_%05d" % i] for i in range(n)])
    return nd.NoiseDictionary(
        samples=samples,
        local_mean=fields["local_mean"],
        local_std=fields["local_std"],
        scale=float(meta["scale"]),
        grid=grid,
    )


def load_truth_coarse(out: Path):
    grid, fields = read_snapshot(out / "truth_coarse.swda")
    n_steps = sum(1 for name in fields if name.startswith("eta_"))
    states = [
        State(fields["u_%05d" % n], fields["v_%05d" % n], fields["eta_%05d" % n], grid)
        for n in range(n_steps)
    ]
    return grid, states


def _stage_forecast(cfg: ExperimentConfig, out: Path, seed: int) -> list[str]:
    _, coarse = _grids(cfg)
    p = _phys(cfg)
    dictionary = load_dictionary(out)
    _, truth = load_truth_coarse(out)
    rng = np.random.default_rng(np.random.SeedSequence([seed]))

    crps_rows = []
    rank_rows = []
    spaghetti_rows = []
    sample_points = filtering.observation_lattice(coarse, 4)
    longest = max(cfg.forecast_horizons)

    for horizon in cfg.forecast_horizons:
        reps = max(cfg.forecast_total_steps // horizon, 1)
        if (reps * horizon) >= len(truth):
            raise StageError(
                f"truth series too short ({len(truth)} steps) for horizon {horizon} x {reps}"
            )
        crps_acc = {"eta": [], "u": [], "v": []}
        rank_counts = {
            var: np.zeros(cfg.forecast_n_ens + 1, dtype=np.int64) for var in ("eta", "u", "v")
        }
        for rep in range(reps):
            start = truth[rep * horizon]
            members = [start.copy() for _ in range(cfg.forecast_n_ens)]
            streams = filtering.fork_streams(int(rng.integers(2**62)), len(members))
            record = horizon == longest and rep == 0
            for step in range(horizon):
                for i, m in enumerate(members):
                    psi = nd.draw(dictionary, streams[i])
                    members[i] = step_stochastic(m, psi, p, cfg.dt)
                if record and step % 10 == 0:
                    t_state = truth[rep * horizon + step + 1]
                    for var in ("eta", "u", "v"):
                        for iy, ix in sample_points:
                            vals = [getattr(m, var)[iy, ix] for m in members]
                            for j, val in enumerate(vals):
                                spaghetti_rows.append(
                                    [step + 1, var, iy, ix, j, f"{val:.8g}",
                                     f"{getattr(t_state, var)[iy, ix]:.8g}"]
                                )
            end_truth = truth[(rep + 1) * horizon]
            for var in ("eta", "u", "v"):
                ens_fields = np.stack([getattr(m, var) for m in members])  # (N, ny, nx)
                truth_field = getattr(end_truth, var)
                flat = ens_fields.reshape(len(members), -1)
                tflat = truth_field.ravel()
                for j in range(flat.shape[1]):
                    crps_acc[var].append(filtering.crps(flat[:, j], tflat[j]))
                counts = filtering.rank_histogram(
                    [(flat[:, j], tflat[j]) for j in range(flat.shape[1])], rng
                )
                rank_counts[var] += counts
        crps_rows.append(
            [horizon] + [f"{np.mean(crps_acc[var]):.6g}" for var in ("eta", "u", "v")]
        )
        for var in ("eta", "u", "v"):
            for rank, count in enumerate(rank_counts[var]):
                rank_rows.append([var, horizon, rank, int(count)])

    with open(out / "forecast_crps.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["horizon", "crps_eta", "crps_u", "crps_v"])
        w.writerows(crps_rows)
    with open(out / "rank_hist.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variable", "horizon", "rank", "count"])
        w.writerows(rank_rows)
    with open(out / "spaghetti.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "variable", "location_i", "location_j", "member", "value", "truth"])
        w.writerows(spaghetti_rows)
    return ["forecast_crps.csv", "rank_hist.csv", "spaghetti.csv"]


def _stage_assimilate(cfg: ExperimentConfig, out: Path, seed: int) -> list[str]:
    _, coarse = _grids(cfg)
    p = _phys(cfg)
    dictionary = load_dictionary(out)
    _, truth = load_truth_coarse(out)
    if len(truth) <= cfg.da_total_steps:
        raise StageError("truth series too short for the assimilation run")
    truth_etas = [s.eta for s in truth]

    locations = filtering.observation_lattice(coarse, cfg.d_obs)
    members = [truth[0].copy() for _ in range(cfg.n_ens)]
    e0 = filtering.make_ensemble(members, stage_seed(seed, "ensemble"))
    fcfg = filtering.FilterConfig(
        window_steps=cfg.window_steps,
        ess_threshold_frac=cfg.ess_threshold,
        jitter_moves=cfg.jitter_moves,
        jitter_rho=cfg.jitter_rho,
        max_temper_stages=cfg.max_temper_stages,
    )
    rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))

    ensemble_rows = []

    def hook(cycle, ens):
        t = (cycle + 1) * cfg.window_steps * cfg.dt
        truth_eta = truth_etas[(cycle + 1) * cfg.window_steps]
        for iy, ix in locations:
            for j, m in enumerate(ens.members):
                ensemble_rows.append(
                    [cycle, f"{t:.6g}", iy, ix, j, f"{m.eta[iy, ix]:.8g}",
                     f"{truth_eta[iy, ix]:.8g}"]
                )

    try:
        metrics = filtering.assimilate_run(
            truth_etas, e0, dictionary, p, cfg.dt, fcfg, locations,
            cfg.sigma_obs, cfg.da_total_steps, rng, snapshot_hook=hook,
        )
    except RuntimeError as exc:
        raise StageError(str(exc)) from exc

    with open(out / "da_metrics.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "location_i", "location_j", "ensemble_mean",
                    "bias", "rmse", "ess_min", "temper_stages"])
        for c in range(metrics.bias.shape[0]):
            for k, (iy, ix) in enumerate(locations):
                w.writerow([
                    f"{metrics.times[c]:.6g}", iy, ix,
                    f"{metrics.ensemble_mean[c, k]:.8g}",
                    f"{metrics.bias[c, k]:.8g}", f"{metrics.rmse[c, k]:.8g}",
                    f"{metrics.ess_min[c]:.4g}", int(metrics.temper_stages[c]),
                ])
    with open(out / "da_ensemble.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cycle", "time", "location_i", "location_j", "member", "value", "truth"])
        w.writerows(ensemble_rows)
    return ["da_metrics.csv", "da_ensemble.csv"]


def _stage_metrics(cfg: ExperimentConfig, out: Path, seed: int) -> list[str]:
    with open(out / "da_metrics.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise StageError("da_metrics.csv is empty")
    by_loc: dict[tuple[int, int], dict[str, list[float]]] = {}
    for row in rows:
        key = (int(row["location_i"]), int(row["location_j"]))
        acc = by_loc.setdefault(key, {"bias": [], "rmse": []})
        acc["bias"].append(float(row["bias"]))
        acc["rmse"].append(float(row["rmse"]))

    summary = []
    for (iy, ix), acc in sorted(by_loc.items()):
        summary.append({
            "location_i": iy,
            "location_j": ix,
            "avg_bias": np.mean(acc["bias"]),
            "avg_abs_bias": abs(np.mean(acc["bias"])),
            "avg_rmse": np.mean(acc["rmse"]),
        })
    best_bias = min(s["avg_abs_bias"] for s in summary)
    best_rmse = min(s["avg_rmse"] for s in summary)

    with open(out / "da_summary.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["location_i", "location_j", "avg_bias", "avg_abs_bias",
                    "avg_rmse", "best_abs_bias", "best_rmse"])
        for s in summary:
            w.writerow([
                s["location_i"], s["location_j"], f"{s['avg_bias']:.8g}",
                f"{s['avg_abs_bias']:.8g}", f"{s['avg_rmse']:.8g}",
                f"{best_bias:.8g}", f"{best_rmse:.8g}",
            ])
    return ["da_summary.csv"]


_STAGE_FNS = {
    "simulate": _stage_simulate,
    "calibrate": _stage_calibrate,
    "train": _stage_train,
    "generate": _stage_generate,
    "forecast": _stage_forecast,
    "assimilate": _stage_assimilate,
    "metrics": _stage_metrics,
}
