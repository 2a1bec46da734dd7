"""
Diffusion Schroedinger Bridge trained by mean-matching iterative proportional
fitting.

Two residual fully-connected networks parametrize the forward and backward
transition means.  At round 0 the forward mean is the Ornstein-Uhlenbeck pull
F_k(x) = x - gamma_{k+1} x toward the standard-normal prior; once trained,
F_k(x) = x + gamma_{k+1} f_net(x, k) and likewise B_{k+1}(x) = x +
gamma_{k+1} b_net(x, k+1).  Chains step with x' = mean(x) + sqrt(2 gamma) eps.

Everything is plain numpy with hand-derived reverse-mode gradients and SGD
with momentum, so results are bitwise reproducible from a single seed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


@dataclass(frozen=True)
class DiffusionSchedule:
    """Positive step sizes gamma_1..gamma_K of the diffusion chain."""

    gamma: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=np.float64)
        if g.ndim != 1 or g.size < 2:
            raise ValueError("schedule needs at least 2 steps")
        if np.any(g <= 0):
            raise ValueError("all gamma must be positive")
        object.__setattr__(self, "gamma", g)

    @property
    def k_steps(self) -> int:
        return int(self.gamma.size)


def make_schedule(k_steps: int, gamma_min: float, gamma_max: float) -> DiffusionSchedule:
    """Symmetric triangular schedule: linear rise to gamma_max, then descent."""
    if k_steps < 2:
        raise ValueError("k_steps must be >= 2")
    if not 0 < gamma_min <= gamma_max:
        raise ValueError("need 0 < gamma_min <= gamma_max")
    half = k_steps // 2
    rise = np.linspace(gamma_min, gamma_max, half)
    if k_steps % 2 == 0:
        gamma = np.concatenate([rise, rise[::-1]])
    else:
        gamma = np.concatenate([rise, [gamma_max], rise[::-1]])
    return DiffusionSchedule(gamma=gamma)


@dataclass
class TrainConfig:
    n_dsb_steps: int = 9
    iters_per_step: int = 10_000
    batch_size: int = 128
    learning_rate: float = 1e-4
    seed: int = 0
    momentum: float = 0.9
    hidden_width: int = 512
    emb_dim: int = 32
    cache_period: int = 10

    def __post_init__(self):
        if min(self.n_dsb_steps, self.batch_size, self.hidden_width, self.emb_dim, self.cache_period) < 1:
            raise ValueError("all counts must be positive")
        if self.iters_per_step < 0:
            raise ValueError("iters_per_step must be nonnegative")
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


def timestep_embedding(k: np.ndarray, emb_dim: int) -> np.ndarray:
    """Sinusoidal embedding of integer timesteps, shape (len(k), emb_dim)."""
    half = emb_dim // 2
    freqs = np.exp(-np.log(10_000.0) * np.arange(half) / max(half - 1, 1))
    ang = np.asarray(k, dtype=np.float64)[:, None] * freqs[None, :]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class MeanNet:
    """Residual 3-hidden-layer MLP mapping (x, timestep) -> drift, with
    hand-coded backprop and SGD-momentum updates."""

    def __init__(self, dim: int, hidden: int, emb_dim: int, rng: np.random.Generator):
        self.dim = dim
        self.hidden = hidden
        self.emb_dim = emb_dim
        din = dim + emb_dim
        scale_in = np.sqrt(2.0 / din)
        scale_h = np.sqrt(2.0 / hidden)
        self.params = {
            "W1": rng.normal(0, scale_in, (din, hidden)),
            "b1": np.zeros(hidden),
            "W2": rng.normal(0, scale_h, (hidden, hidden)),
            "b2": np.zeros(hidden),
            "W3": rng.normal(0, scale_h, (hidden, hidden)),
            "b3": np.zeros(hidden),
            "W4": np.zeros((hidden, dim)),  # zero drift at init
            "b4": np.zeros(dim),
        }
        self.velocity = {k: np.zeros_like(v) for k, v in self.params.items()}

    def copy(self) -> "MeanNet":
        out = object.__new__(MeanNet)
        out.dim, out.hidden, out.emb_dim = self.dim, self.hidden, self.emb_dim
        out.params = {k: v.copy() for k, v in self.params.items()}
        out.velocity = {k: v.copy() for k, v in self.velocity.items()}
        return out

    def _forward(self, x: np.ndarray, k: np.ndarray):
        p = self.params
        xin = np.concatenate([x, timestep_embedding(k, self.emb_dim)], axis=1)
        z1 = xin @ p["W1"] + p["b1"]
        h1 = np.maximum(z1, 0.0)
        z2 = h1 @ p["W2"] + p["b2"]
        h2 = h1 + np.maximum(z2, 0.0)
        z3 = h2 @ p["W3"] + p["b3"]
        h3 = h2 + np.maximum(z3, 0.0)
        out = h3 @ p["W4"] + p["b4"]
        return out, (xin, z1, h1, z2, h2, z3, h3)

    def __call__(self, x: np.ndarray, k: np.ndarray) -> np.ndarray:
        out, _ = self._forward(x, k)
        return out

    def train_step(
        self, x: np.ndarray, k: np.ndarray, target: np.ndarray, lr: float, momentum: float
    ) -> float:
        """One SGD-momentum step on the mean-squared error; returns the loss."""
        p = self.params
        out, (xin, z1, h1, z2, h2, z3, h3) = self._forward(x, k)
        diff = out - target
        loss = float(np.mean(diff**2))
        if not np.isfinite(loss):
            return loss

        dout = 2.0 * diff / diff.size
        grads = {}
        grads["W4"] = h3.T @ dout
        grads["b4"] = dout.sum(axis=0)
        dh3 = dout @ p["W4"].T
        dz3 = dh3 * (z3 > 0)
        grads["W3"] = h2.T @ dz3
        grads["b3"] = dz3.sum(axis=0)
        dh2 = dh3 + dz3 @ p["W3"].T
        dz2 = dh2 * (z2 > 0)
        grads["W2"] = h1.T @ dz2
        grads["b2"] = dz2.sum(axis=0)
        dh1 = dh2 + dz2 @ p["W2"].T
        dz1 = dh1 * (z1 > 0)
        grads["W1"] = xin.T @ dz1
        grads["b1"] = dz1.sum(axis=0)

        for name, g in grads.items():
            v = self.velocity[name]
            v *= momentum
            v -= lr * g
            p[name] += v
        return loss


@dataclass
class DsbModel:
    """Forward/backward mean networks, schedule, and data standardization."""

    forward_net: MeanNet
    backward_net: MeanNet
    schedule: DiffusionSchedule
    data_mean: float
    data_std: float
    forward_trained: bool = False
    round_index: int = 0

    def __post_init__(self):
        if self.data_std <= 0:
            raise ValueError("data_std must be positive")

    def copy(self) -> "DsbModel":
        return DsbModel(
            forward_net=self.forward_net.copy(),
            backward_net=self.backward_net.copy(),
            schedule=self.schedule,
            data_mean=self.data_mean,
            data_std=self.data_std,
            forward_trained=self.forward_trained,
            round_index=self.round_index,
        )

    @property
    def dim(self) -> int:
        return self.backward_net.dim

    def forward_mean(self, x: np.ndarray, k: np.ndarray) -> np.ndarray:
        """F_k(x): OU pull at round 0, learned drift afterwards."""
        g = self.schedule.gamma[np.asarray(k)][:, None]
        if not self.forward_trained:
            return x - g * x
        return x + g * self.forward_net(x, np.asarray(k))

    def backward_mean(self, x: np.ndarray, k_plus_1: np.ndarray) -> np.ndarray:
        """B_{k+1}(x) with learned drift."""
        g = self.schedule.gamma[np.asarray(k_plus_1) - 1][:, None]
        return x + g * self.backward_net(x, np.asarray(k_plus_1))


def new_model(
    dim: int, schedule: DiffusionSchedule, data_mean: float, data_std: float, cfg: TrainConfig
) -> DsbModel:
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0xD5B]))
    return DsbModel(
        forward_net=MeanNet(dim, cfg.hidden_width, cfg.emb_dim, rng),
        backward_net=MeanNet(dim, cfg.hidden_width, cfg.emb_dim, rng),
        schedule=schedule,
        data_mean=data_mean,
        data_std=data_std,
    )


def forward_trajectory(model: DsbModel, x0: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Simulate the noising chain; returns shape (K+1, n, dim)."""
    x = np.atleast_2d(np.asarray(x0, dtype=np.float64))
    K = model.schedule.k_steps
    traj = np.empty((K + 1,) + x.shape)
    traj[0] = x
    for k in range(K):
        gamma = model.schedule.gamma[k]
        mean = model.forward_mean(x, np.full(x.shape[0], k))
        x = mean + np.sqrt(2.0 * gamma) * rng.standard_normal(x.shape)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"forward chain diverged at step {k + 1}")
        traj[k + 1] = x
    return traj


def backward_trajectory(model: DsbModel, xK: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Simulate the denoising chain; returns shape (K+1, n, dim), index k = level."""
    x = np.atleast_2d(np.asarray(xK, dtype=np.float64))
    K = model.schedule.k_steps
    traj = np.empty((K + 1,) + x.shape)
    traj[K] = x
    for k in range(K - 1, -1, -1):
        gamma = model.schedule.gamma[k]
        mean = model.backward_mean(x, np.full(x.shape[0], k + 1))
        x = mean + np.sqrt(2.0 * gamma) * rng.standard_normal(x.shape)
        if not np.all(np.isfinite(x)):
            raise FloatingPointError(f"backward chain diverged at level {k}")
        traj[k] = x
    return traj


def _refresh_cache(model: DsbModel, data: np.ndarray | None, side: str, batch: int, rng):
    """Simulate a batch of chains and lay out (input, timestep, target) triples
    for every transition, flattened over (sample, k)."""
    K = model.schedule.k_steps
    gamma = model.schedule.gamma
    if side == "backward":
        idx = rng.integers(0, data.shape[0], size=batch)
        traj = forward_trajectory(model, data[idx], rng)
        xs, xs_next = traj[:-1], traj[1:]  # (K, B, D)
        ks = np.arange(K)
        inputs = xs_next.reshape(-1, model.dim)
        steps = np.repeat(ks + 1, batch)
        # target = x_{k+1} + F_k(x_k) - F_k(x_{k+1})
        kcol = np.repeat(ks, batch)
        flat_k = xs.reshape(-1, model.dim)
        targets = inputs + model.forward_mean(flat_k, kcol) - model.forward_mean(inputs, kcol)
    else:
        xK = rng.standard_normal((batch, model.dim))
        traj = backward_trajectory(model, xK, rng)
        ks = np.arange(K)
        inputs = traj[:-1].reshape(-1, model.dim)  # x_k, k = 0..K-1
        steps = np.repeat(ks, batch)
        kp1 = np.repeat(ks + 1, batch)
        flat_next = traj[1:].reshape(-1, model.dim)
        targets = inputs + model.backward_mean(flat_next, kp1) - model.backward_mean(inputs, kp1)
    # nets regress the drift: mean(x) = x + gamma * net(x, step)
    gcol = gamma[np.where(side == "backward", steps - 1, steps).astype(int)][:, None]
    drift_targets = (targets - inputs) / gcol
    return inputs, steps, drift_targets


def ipf_half_step(
    model: DsbModel,
    data: np.ndarray | None,
    side: str,
    cfg: TrainConfig,
    rng: np.random.Generator,
) -> tuple[MeanNet, bool, list[float]]:
    """Train one side of the bridge by mean-matching regression.

    side "backward" simulates forward chains from the data; side "forward"
    simulates backward chains from the prior.  Returns (net, success, losses);
    a non-finite loss aborts with the last finite parameters and success=False.
    """
    if side not in ("backward", "forward"):
        raise ValueError(f"side must be 'backward' or 'forward', got {side!r}")
    if side == "backward" and (data is None or data.shape[0] == 0):
        raise ValueError("backward half-step needs a nonempty dataset")
    net = model.backward_net if side == "backward" else model.forward_net
    losses: list[float] = []
    cache = None
    snapshot = net.copy()
    for it in range(cfg.iters_per_step):
        if it % cfg.cache_period == 0:
            cache = _refresh_cache(model, data, side, cfg.batch_size, rng)
            snapshot = net.copy()
        inputs, steps, targets = cache
        pick = rng.integers(0, inputs.shape[0], size=cfg.batch_size)
        loss = net.train_step(
            inputs[pick], steps[pick], targets[pick], cfg.learning_rate, cfg.momentum
        )
        if not np.isfinite(loss):
            net.params = snapshot.params
            net.velocity = snapshot.velocity
            return net, False, losses
        losses.append(loss)
    return net, True, losses


def train_dsb(
    samples: np.ndarray, cfg: TrainConfig, schedule: DiffusionSchedule | None = None
) -> list[DsbModel]:
    """Run n_dsb_steps rounds of alternating backward/forward half-steps.

    `samples` is the raw (N, dim) training matrix; it is standardized to zero
    mean and unit standard deviation internally.  One model checkpoint is
    emitted per round; everything is deterministic given cfg.seed.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    if samples.shape[0] == 0:
        raise ValueError("empty training set")
    if schedule is None:
        schedule = make_schedule(30, 1e-4, 1e-2)
    mean = float(samples.mean())
    std = float(samples.std())
    if std == 0.0:
        std = 1.0
    data = (samples - mean) / std

    model = new_model(samples.shape[1], schedule, mean, std, cfg)
    rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x1BF]))
    checkpoints: list[DsbModel] = []
    for rnd in range(cfg.n_dsb_steps):
        _, ok, _ = ipf_half_step(model, data, "backward", cfg, rng)
        if not ok:
            raise FloatingPointError(f"backward half-step diverged in round {rnd}")
        _, ok, _ = ipf_half_step(model, None, "forward", cfg, rng)
        if not ok:
            raise FloatingPointError(f"forward half-step diverged in round {rnd}")
        model.forward_trained = True
        model.round_index = rnd + 1
        checkpoints.append(model.copy())
    return checkpoints


def sample(model: DsbModel, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n samples by running the denoising chain from the prior."""
    if n < 1:
        raise ValueError("n must be positive")
    xK = rng.standard_normal((n, model.dim))
    traj = backward_trajectory(model, xK, rng)
    return traj[0] * model.data_std + model.data_mean


def frechet_score(a: np.ndarray, b: np.ndarray) -> float:
    """Gaussian Frechet distance with diagonal covariances between two batches."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise ValueError("batches must be nonempty")
    if a.shape[1] != b.shape[1]:
        raise ValueError(f"dimension mismatch: {a.shape[1]} vs {b.shape[1]}")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    var_a, var_b = a.var(axis=0), b.var(axis=0)
    return float(
        np.sum((mu_a - mu_b) ** 2)
        + np.sum(var_a + var_b - 2.0 * np.sqrt(var_a * var_b))
    )
