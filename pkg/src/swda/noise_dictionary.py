"""
Noise dictionary: generated stream-function samples post-processed for use as
stochastic forcing, plus the transport-noise state increment they induce.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dsb
from .calibration import TrainingDataset, invert_transform
from .dynamics import PhysParams, State
from .grid import Grid, check_field, grad_perp, spectral_derivative


@dataclass
class NoiseDictionary:
    """Clipped stream-function samples; `scale` is applied at draw time."""

    samples: np.ndarray  # (N, ny, nx), clipped, unscaled
    local_mean: np.ndarray
    local_std: np.ndarray
    scale: float
    grid: Grid

    def __post_init__(self):
        if self.samples.ndim != 3 or self.samples.shape[1:] != self.grid.shape:
            raise ValueError("samples must be (N, ny, nx) on the dictionary grid")
        if np.any(self.local_std < 0):
            raise ValueError("local_std must be nonnegative")

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


def dictionary_from_fields(psi_fields: np.ndarray, grid: Grid, scale: float) -> NoiseDictionary:
    """Build a dictionary directly from raw psi fields: compute the pointwise
    mean/std across the set and clip each sample to mean +/- one std."""
    psi_fields = np.asarray(psi_fields, dtype=np.float64)
    if psi_fields.shape[0] < 2:
        raise ValueError("need at least 2 samples (pointwise std undefined)")
    local_mean = psi_fields.mean(axis=0)
    local_std = psi_fields.std(axis=0)
    clipped = np.clip(psi_fields, local_mean - local_std, local_mean + local_std)
    return NoiseDictionary(
        samples=clipped, local_mean=local_mean, local_std=local_std, scale=scale, grid=grid
    )


def build_dictionary(
    model: dsb.DsbModel,
    dataset: TrainingDataset,
    n: int,
    scale: float,
    rng: np.random.Generator,
) -> NoiseDictionary:
    """Draw n generated samples, invert the statistical transform, clip."""
    if n < 2:
        raise ValueError("need n >= 2")
    raw = dsb.sample(model, n, rng)
    fields = np.stack([invert_transform(dataset, row) for row in raw])
    return dictionary_from_fields(fields, dataset.grid, scale)


def draw(dictionary: NoiseDictionary, rng: np.random.Generator) -> np.ndarray:
    """Uniformly pick a stored sample and return it times the scale."""
    if dictionary.n_samples == 0:
        raise ValueError("empty dictionary")
    return dictionary.samples[draw_index(dictionary, rng)] * dictionary.scale


def draw_index(dictionary: NoiseDictionary, rng: np.random.Generator) -> int:
    return int(rng.integers(0, dictionary.n_samples))


def psi_for_index(dictionary: NoiseDictionary, index: int) -> np.ndarray:
    return dictionary.samples[index] * dictionary.scale


def state_increment(s: State, psi: np.ndarray, p: PhysParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Transport-noise increment for a stream function psi, with zeta = grad_perp(psi).

    Velocity row: -(zeta.grad)u - (grad zeta).u - (f/Ro) z x zeta;
    height row: -grad(eta).zeta.  Diagnostic form; the stochastic step composes
    the same terms through the perturbed advecting velocity.
    """
    g = s.grid
    zu, zv = grad_perp(check_field(psi, g), g)
    fro = p.f_cor / p.ro

    ux = spectral_derivative(s.u, g, "x")
    uy = spectral_derivative(s.u, g, "y")
    vx = spectral_derivative(s.v, g, "x")
    vy = spectral_derivative(s.v, g, "y")
    zux = spectral_derivative(zu, g, "x")
    zuy = spectral_derivative(zu, g, "y")
    zvx = spectral_derivative(zv, g, "x")
    zvy = spectral_derivative(zv, g, "y")

    du = -(zu * ux + zv * uy) - (s.u * zux + s.v * zuy) - (-fro * zv)
    dv = -(zu * vx + zv * vy) - (s.u * zvx + s.v * zvy) - (fro * zu)
    deta = -(
        spectral_derivative(s.eta, g, "x") * zu
        + spectral_derivative(s.eta, g, "y") * zv
    )
    return du, dv, deta
