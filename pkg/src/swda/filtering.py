"""
Ensemble forecasting, verification metrics, and the particle filter with
adaptive tempering, systematic resampling, and MCMC jittering.

The tempering/jittering update is written against a small "window forecaster"
interface so the same filter runs both the shallow-water model and the toy
models used as correctness oracles: a forecaster must provide

    redraw(rng)              -> one fresh window noise element
    run_window(start, noises)-> end-of-window state
    observe(state)           -> vector of observed values

Jitter proposals act on the window's noise draws (a preconditioned-Crank-
Nicolson-style mixture: each draw is kept with probability rho, redrawn
otherwise), so proposed particles always live on the stochastic model's
attainable set.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import noise_dictionary as nd
from .dynamics import PhysParams, State, step_stochastic
from .grid import Grid


@dataclass
class Observation:
    """Noisy pointwise observations of eta at distinct grid indices."""

    locations: list[tuple[int, int]]  # (iy, ix) pairs
    values: np.ndarray
    sigma_obs: float

    def __post_init__(self):
        if len(self.locations) < 1:
            raise ValueError("need at least one observation location")
        if len(set(self.locations)) != len(self.locations):
            raise ValueError("observation locations must be distinct")
        if self.sigma_obs <= 0:
            raise ValueError("sigma_obs must be positive")
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.size != len(self.locations):
            raise ValueError("values/locations length mismatch")


@dataclass
class FilterConfig:
    window_steps: int = 20
    ess_threshold_frac: float = 0.5
    jitter_moves: int = 5
    jitter_rho: float = 0.9
    max_temper_stages: int = 50

    def __post_init__(self):
        if self.window_steps < 1:
            raise ValueError("window_steps must be >= 1")
        if not 0 < self.ess_threshold_frac < 1:
            raise ValueError("ess_threshold_frac must be in (0,1)")
        if not 0 < self.jitter_rho < 1:
            raise ValueError("jitter_rho must be in (0,1)")


@dataclass
class Ensemble:
    """Weighted particle set with per-member random streams and, after a
    window propagation, the start states and noise draws of that window."""

    members: list
    weights: np.ndarray
    streams: list[np.random.Generator]
    window_starts: list | None = None
    window_noises: list[list] | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        n = len(self.members)
        if n < 1:
            raise ValueError("ensemble must be nonempty")
        if self.weights.size != n or len(self.streams) != n:
            raise ValueError("members/weights/streams length mismatch")
        if abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must sum to 1")

    @property
    def size(self) -> int:
        return len(self.members)


def make_ensemble(members: list, seed: int) -> Ensemble:
    n = len(members)
    streams = fork_streams(seed, n)
    return Ensemble(members=members, weights=np.full(n, 1.0 / n), streams=streams)


def fork_streams(seed: int, n: int) -> list[np.random.Generator]:
    return [np.random.default_rng(np.random.SeedSequence([int(seed), i])) for i in range(n)]


class RswWindowForecaster:
    """Window forecaster for the stochastic shallow-water model: noise
    elements are dictionary indices, one per timestep."""

    def __init__(
        self,
        dictionary: nd.NoiseDictionary,
        params: PhysParams,
        dt: float,
        locations: list[tuple[int, int]],
    ):
        self.dictionary = dictionary
        self.params = params
        self.dt = dt
        self.locations = locations

    def redraw(self, rng: np.random.Generator) -> int:
        return nd.draw_index(self.dictionary, rng)

    def run_window(self, start: State, noises: list[int]) -> State:
        s = start
        for idx in noises:
            psi = nd.psi_for_index(self.dictionary, idx)
            s = step_stochastic(s, psi, self.params, self.dt)
        return s

    def observe(self, state: State) -> np.ndarray:
        return np.array([state.eta[iy, ix] for iy, ix in self.locations])


def propagate_windows(e: Ensemble, forecaster, steps: int) -> Ensemble:
    """Advance every member one window of `steps` noise draws from its own
    stream; weights unchanged, start states and draws recorded for jittering."""
    if steps < 0:
        raise ValueError("steps must be nonnegative")
    starts = [copy.deepcopy(m) for m in e.members]
    members = []
    noises: list[list] = []
    for i, (start, stream) in enumerate(zip(starts, e.streams)):
        draws = [forecaster.redraw(stream) for _ in range(steps)]
        try:
            members.append(forecaster.run_window(start, draws))
        except FloatingPointError as exc:
            raise FloatingPointError(f"member {i}: {exc}") from exc
        noises.append(draws)
    return Ensemble(
        members=members,
        weights=e.weights.copy(),
        streams=e.streams,
        window_starts=starts,
        window_noises=noises,
    )


def propagate_ensemble(
    e: Ensemble,
    dictionary: nd.NoiseDictionary,
    p: PhysParams,
    dt: float,
    steps: int,
) -> Ensemble:
    """Advance every member `steps` stochastic steps with fresh dictionary
    draws (one per member per step) from its own stream."""
    return propagate_windows(e, RswWindowForecaster(dictionary, p, dt, []), steps)


def crps(ensemble_values: np.ndarray, y: float) -> float:
    """Empirical CRPS: (1/N) sum|x_i - y| - (1/2N^2) sum_ij |x_i - x_j|."""
    x = np.asarray(ensemble_values, dtype=np.float64)
    if x.size == 0:
        raise ValueError("empty ensemble")
    term1 = np.mean(np.abs(x - y))
    term2 = np.mean(np.abs(x[:, None] - x[None, :])) / 2.0
    return float(term1 - term2)


def rank_histogram(
    forecasts: list[tuple[np.ndarray, float]], rng: np.random.Generator
) -> np.ndarray:
    """Counts of the truth's rank in the ensemble, ties split uniformly."""
    counts = None
    for values, truth in forecasts:
        values = np.asarray(values)
        n = values.size
        if counts is None:
            counts = np.zeros(n + 1, dtype=np.int64)
        elif counts.size != n + 1:
            raise ValueError("inconsistent ensemble size across events")
        below = int(np.sum(values < truth))
        ties = int(np.sum(values == truth))
        rank = below + (int(rng.integers(0, ties + 1)) if ties else 0)
        counts[rank] += 1
    if counts is None:
        raise ValueError("no events")
    return counts


def ess(weights: np.ndarray) -> float:
    """Effective sample size 1 / sum(w^2) of normalized weights."""
    w = np.asarray(weights, dtype=np.float64)
    if abs(w.sum() - 1.0) > 1e-9 or np.any(w < 0):
        raise ValueError("weights must be nonnegative and sum to 1")
    return float(1.0 / np.sum(w**2))


def systematic_resample(e: Ensemble, rng: np.random.Generator) -> Ensemble:
    """Systematic (single-uniform stratified) resampling; uniform weights and
    deterministically re-forked streams afterwards."""
    n = e.size
    idx = systematic_resample_indices(e.weights, rng)
    members = [copy.deepcopy(e.members[j]) if _count(idx, j) > 1 else e.members[j] for j in idx]
    starts = None if e.window_starts is None else [copy.deepcopy(e.window_starts[j]) for j in idx]
    noises = None if e.window_noises is None else [list(e.window_noises[j]) for j in idx]
    fork_seed = int(rng.integers(0, 2**62))
    return Ensemble(
        members=members,
        weights=np.full(n, 1.0 / n),
        streams=fork_streams(fork_seed, n),
        window_starts=starts,
        window_noises=noises,
    )


def _count(idx: np.ndarray, j: int) -> int:
    return int(np.sum(idx == j))


def systematic_resample_indices(weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    n = weights.size
    positions = (rng.uniform() + np.arange(n)) / n
    return np.searchsorted(np.cumsum(weights), positions).clip(0, n - 1)


def gaussian_loglik(predicted: np.ndarray, observed: np.ndarray, sigma: float) -> float:
    resid = np.asarray(predicted) - np.asarray(observed)
    return float(
        -np.sum(resid**2) / (2.0 * sigma**2)
        - resid.size * np.log(sigma * np.sqrt(2.0 * np.pi))
    )


def log_likelihood(s: State, obs: Observation) -> float:
    """Gaussian observation log-likelihood of eta at the observed locations."""
    pred = np.array([s.eta[iy, ix] for iy, ix in obs.locations])
    return gaussian_loglik(pred, obs.values, obs.sigma_obs)


@dataclass
class TemperDiagnostics:
    stages: int
    phis: list[float]
    ess_per_stage: list[float]
    acceptance_rate: float
    completed: bool


class TemperingError(Exception):
    pass


def adaptive_temper_jitter(
    e: Ensemble,
    obs: Observation,
    cfg: FilterConfig,
    forecaster,
    rng: np.random.Generator,
) -> tuple[Ensemble, TemperDiagnostics]:
    """Assimilate one observation by adaptive tempering with resampling and
    pCN-in-noise jittering.

    Maintains a cumulative likelihood exponent phi from 0 to 1.  Each stage
    takes the largest increment (found by bisection) that keeps the effective
    sample size of the reweighted ensemble at or above the threshold fraction,
    then resamples and applies Metropolis jitter moves at the new exponent.
    """
    if e.window_starts is None or e.window_noises is None:
        raise TemperingError("ensemble has no stored window history; propagate first")

    def loglik(state) -> float:
        ll = gaussian_loglik(forecaster.observe(state), obs.values, obs.sigma_obs)
        if not np.isfinite(ll):
            raise TemperingError("non-finite log-likelihood")
        return ll

    lls = np.array([loglik(m) for m in e.members])
    weights = e.weights.copy()
    phi = 0.0
    phis: list[float] = []
    ess_hist: list[float] = []
    accepts = 0
    proposals = 0
    stages = 0

    while phi < 1.0:
        stages += 1
        if stages > cfg.max_temper_stages:
            raise TemperingError(
                f"exceeded {cfg.max_temper_stages} tempering stages (phi={phi:.4f})"
            )
        thresh = cfg.ess_threshold_frac * e.size

        def candidate_ess(dphi: float) -> tuple[float, np.ndarray]:
            with np.errstate(divide="ignore"):
                logw = np.log(weights) + dphi * (lls - lls.max())
            w = np.exp(logw - logw.max())
            w /= w.sum()
            return float(1.0 / np.sum(w**2)), w

        full = 1.0 - phi
        ess_full, w_full = candidate_ess(full)
        if ess_full >= thresh:
            dphi, w = full, w_full
        else:
            lo, hi = 0.0, full
            for _ in range(60):
                mid = 0.5 * (lo + hi)
                if candidate_ess(mid)[0] >= thresh:
                    lo = mid
                else:
                    hi = mid
            dphi = lo if lo > 0 else hi  # never get stuck at 0
            _, w = candidate_ess(dphi)
        phi += dphi
        phis.append(dphi)
        ess_hist.append(float(1.0 / np.sum(w**2)))

        e = Ensemble(
            members=e.members,
            weights=w,
            streams=e.streams,
            window_starts=e.window_starts,
            window_noises=e.window_noises,
        )
        e = systematic_resample(e, rng)
        lls = np.array([loglik(m) for m in e.members])
        weights = e.weights.copy()

        for _ in range(cfg.jitter_moves):
            for i in range(e.size):
                old_noises = e.window_noises[i]
                keep = rng.uniform(size=len(old_noises)) < cfg.jitter_rho
                new_noises = [
                    n if k else forecaster.redraw(rng) for n, k in zip(old_noises, keep)
                ]
                if new_noises == old_noises:
                    accepts += 1
                    proposals += 1
                    continue
                proposed = forecaster.run_window(e.window_starts[i], new_noises)
                ll_new = loglik(proposed)
                proposals += 1
                if np.log(rng.uniform()) < phi * (ll_new - lls[i]):
                    e.members[i] = proposed
                    e.window_noises[i] = new_noises
                    lls[i] = ll_new
                    accepts += 1

    diag = TemperDiagnostics(
        stages=stages,
        phis=phis,
        ess_per_stage=ess_hist,
        acceptance_rate=accepts / proposals if proposals else 1.0,
        completed=True,
    )
    return e, diag


def observation_lattice(grid: Grid, d_obs: int) -> list[tuple[int, int]]:
    """Centered sqrt(d) x sqrt(d) sub-lattice of observation points."""
    k = int(round(np.sqrt(d_obs)))
    if k * k != d_obs:
        raise ValueError("d_obs must be a perfect square")
    iys = [round((j + 1) * grid.ny / (k + 1)) % grid.ny for j in range(k)]
    ixs = [round((j + 1) * grid.nx / (k + 1)) % grid.nx for j in range(k)]
    return [(iy, ix) for iy in iys for ix in ixs]


@dataclass
class DaMetrics:
    """Per-assimilation-time bias and RMSE at each observed location."""

    times: np.ndarray
    locations: list[tuple[int, int]]
    bias: np.ndarray  # (cycles, d_obs)
    rmse: np.ndarray  # (cycles, d_obs)
    ess_min: np.ndarray
    temper_stages: np.ndarray
    ensemble_mean: np.ndarray  # (cycles, d_obs)

    @property
    def time_avg_bias(self) -> np.ndarray:
        return self.bias.mean(axis=0)

    @property
    def time_avg_rmse(self) -> np.ndarray:
        return self.rmse.mean(axis=0)


def assimilate_run(
    truth_etas,
    e0: Ensemble,
    dictionary: nd.NoiseDictionary,
    p: PhysParams,
    dt: float,
    cfg: FilterConfig,
    locations: list[tuple[int, int]],
    sigma_obs: float,
    total_steps: int,
    rng: np.random.Generator,
    snapshot_hook=None,
) -> DaMetrics:
    """Alternate window propagation and tempered assimilation.

    `truth_etas[n]` must give the coarse-restricted truth eta after n model
    steps; observations are synthesized as truth plus Gaussian noise.
    """
    cycles = total_steps // cfg.window_steps
    forecaster = RswWindowForecaster(dictionary, p, dt, locations)
    e = e0
    bias = np.zeros((cycles, len(locations)))
    rmse = np.zeros_like(bias)
    emean = np.zeros_like(bias)
    ess_min = np.zeros(cycles)
    stages = np.zeros(cycles, dtype=np.int64)
    times = np.zeros(cycles)

    for c in range(cycles):
        try:
            e = propagate_ensemble(e, dictionary, p, dt, cfg.window_steps)
            step_now = (c + 1) * cfg.window_steps
            truth = np.asarray(truth_etas[step_now])
            truth_at = np.array([truth[iy, ix] for iy, ix in locations])
            obs = Observation(
                locations=locations,
                values=truth_at + sigma_obs * rng.standard_normal(len(locations)),
                sigma_obs=sigma_obs,
            )
            e, diag = adaptive_temper_jitter(e, obs, cfg, forecaster, rng)
        except (TemperingError, FloatingPointError) as exc:
            raise RuntimeError(f"assimilation cycle {c}: {exc}") from exc

        ens_at = np.stack([forecaster.observe(m) for m in e.members])
        bias[c] = ens_at.mean(axis=0) - truth_at
        rmse[c] = np.sqrt(np.mean((ens_at - truth_at) ** 2, axis=0))
        emean[c] = ens_at.mean(axis=0)
        ess_min[c] = min(diag.ess_per_stage) if diag.ess_per_stage else e.size
        stages[c] = diag.stages
        times[c] = step_now * dt
        if snapshot_hook is not None:
            snapshot_hook(c, e)

    return DaMetrics(
        times=times,
        locations=locations,
        bias=bias,
        rmse=rmse,
        ess_min=ess_min,
        temper_stages=stages,
        ensemble_mean=emean,
    )
