"""
Noise calibration: from a fine-grid height history to a training set of
stream-function samples.

The pipeline is: isolate the high-frequency residual of each fine snapshot,
time-difference it, restrict to the coarse grid, and solve the hyperbolic
calibration relation

    rhs = gx * d(psi)/dy - gy * d(psi)/dx

for a mean-zero stream function psi at every calibration time, where
(gx, gy) is the restricted gradient of the low-pass filtered height.  The
solved psi fields are mean-centered, arcsinh-transformed, and min-max
normalized into the [0, 1] training samples for the generative model.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import CutoffSpec, Grid, check_field, lowpass, restrict_to_coarse, spectral_derivative


@dataclass
class FluctuationSeries:
    """Coarse-grid calibration inputs derived from a fine run."""

    times: np.ndarray
    delta_eta: list[np.ndarray]
    grad_filtered: list[tuple[np.ndarray, np.ndarray]]
    grid: Grid


@dataclass
class CalibrationSolution:
    """Mean-zero least-squares stream function with its relative residual."""

    psi: np.ndarray
    residual: float
    iterations: int
    converged: bool


class CalibrationError(Exception):
    pass


class NonConvergenceError(CalibrationError):
    """CG failed to reach tolerance; carries the best iterate."""

    def __init__(self, solution: CalibrationSolution):
        super().__init__(
            f"calibration solve did not converge in {solution.iterations} iterations "
            f"(residual {solution.residual:.3e})"
        )
        self.solution = solution


def compute_increments(
    fine_etas: Sequence[np.ndarray],
    fine: Grid,
    cutoff: CutoffSpec,
    coarse: Grid,
    times: Sequence[float] | None = None,
) -> FluctuationSeries:
    """Assemble calibration inputs from consecutive fine-grid eta snapshots."""
    if len(fine_etas) < 2:
        raise CalibrationError("need at least 2 fine snapshots")
    n_inc = len(fine_etas) - 1
    if times is None:
        times = np.arange(n_inc, dtype=float)
    else:
        times = np.asarray(times, dtype=float)[:n_inc]

    resid_prev = None
    delta_eta: list[np.ndarray] = []
    grad_filtered: list[tuple[np.ndarray, np.ndarray]] = []
    for i, eta in enumerate(fine_etas):
        eta = check_field(eta, fine)
        smooth = lowpass(eta, fine, cutoff)
        resid = eta - smooth
        if i > 0:
            delta_eta.append(restrict_to_coarse(resid - resid_prev, fine, coarse))
        if i < n_inc:
            gx = restrict_to_coarse(spectral_derivative(smooth, fine, "x"), fine, coarse)
            gy = restrict_to_coarse(spectral_derivative(smooth, fine, "y"), fine, coarse)
            grad_filtered.append((gx, gy))
        resid_prev = resid
    return FluctuationSeries(times=times, delta_eta=delta_eta, grad_filtered=grad_filtered, grid=coarse)


def _diff_x(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Central difference in x with periodic wrap."""
    return (np.roll(f, -1, axis=1) - np.roll(f, 1, axis=1)) / (2.0 * grid.dx)


def _diff_y(f: np.ndarray, grid: Grid) -> np.ndarray:
    return (np.roll(f, -1, axis=0) - np.roll(f, 1, axis=0)) / (2.0 * grid.dy)


def apply_calibration_operator(
    psi: np.ndarray, gx: np.ndarray, gy: np.ndarray, grid: Grid
) -> np.ndarray:
    """L(psi) = gx * Dy(psi) - gy * Dx(psi) with periodic central differences."""
    return gx * _diff_y(psi, grid) - gy * _diff_x(psi, grid)


def _apply_adjoint(r: np.ndarray, gx: np.ndarray, gy: np.ndarray, grid: Grid) -> np.ndarray:
    # Central periodic differences are skew-adjoint: D^T = -D.
    return -_diff_y(gx * r, grid) + _diff_x(gy * r, grid)


def solve_stream_function(
    rhs: np.ndarray,
    gx: np.ndarray,
    gy: np.ndarray,
    grid: Grid,
    tol: float = 1e-8,
    max_iter: int | None = None,
) -> CalibrationSolution:
    """Minimum-norm mean-zero least-squares solution of L(psi) = rhs.

    Conjugate gradients on the normal equations, started from zero and with
    the spatial mean projected out of every iterate, which keeps the solution
    mean-zero and in the row space of L (hence minimum-norm).  Convergence is
    measured on the normal-equation residual relative to its initial value;
    non-convergence raises NonConvergenceError carrying the best iterate.
    """
    rhs = check_field(rhs, grid)
    gx = check_field(gx, grid)
    gy = check_field(gy, grid)
    if max_iter is None:
        max_iter = 10 * grid.npoints

    def project(f):
        return f - f.mean()

    psi = np.zeros(grid.shape)
    r = project(_apply_adjoint(rhs, gx, gy, grid))
    r0_norm = np.linalg.norm(r)
    if r0_norm == 0.0:
        return CalibrationSolution(psi=psi, residual=_ls_residual(psi, rhs, gx, gy, grid), iterations=0, converged=True)

    p = r.copy()
    rs = float(np.sum(r * r))
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        ap = project(_apply_adjoint(apply_calibration_operator(p, gx, gy, grid), gx, gy, grid))
        denom = float(np.sum(p * ap))
        if denom <= 0.0:
            break
        alpha = rs / denom
        psi = psi + alpha * p
        r = r - alpha * ap
        rs_new = float(np.sum(r * r))
        if np.sqrt(rs_new) <= tol * r0_norm:
            rs = rs_new
            converged = True
            break
        beta = rs_new / rs
        rs = rs_new
        p = r + beta * p

    psi = project(psi)
    sol = CalibrationSolution(
        psi=psi,
        residual=_ls_residual(psi, rhs, gx, gy, grid),
        iterations=it,
        converged=converged,
    )
    if not converged:
        raise NonConvergenceError(sol)
    return sol


def _ls_residual(psi, rhs, gx, gy, grid) -> float:
    misfit = np.linalg.norm(apply_calibration_operator(psi, gx, gy, grid) - rhs)
    denom = np.linalg.norm(rhs)
    return float(misfit / denom) if denom > 0 else float(misfit)


@dataclass
class TrainingDataset:
    """Transformed calibration samples with invertible transform metadata."""

    samples: np.ndarray  # (N, nx*ny), entries in [0, 1]
    mean_field: np.ndarray  # (ny, nx)
    arcsinh_scale: float
    norm_min: float
    norm_max: float
    grid: Grid

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]


def build_training_dataset(
    solutions: Sequence[CalibrationSolution],
    grid: Grid,
    arcsinh_scale: float = 1.0,
) -> TrainingDataset:
    """Mean-center, arcsinh-transform, and [0,1]-normalize the psi samples."""
    if len(solutions) < 2:
        raise CalibrationError("need at least 2 calibration solutions")
    if arcsinh_scale <= 0:
        raise CalibrationError("arcsinh_scale must be positive")
    stack = np.stack([s.psi for s in solutions])  # (N, ny, nx)
    mean_field = stack.mean(axis=0)
    centered = stack - mean_field
    warped = np.arcsinh(centered / arcsinh_scale)
    lo = float(warped.min())
    hi = float(warped.max())
    if hi == lo:
        raise CalibrationError("degenerate dataset: all samples identical")
    normalized = (warped - lo) / (hi - lo)
    return TrainingDataset(
        samples=normalized.reshape(len(solutions), -1),
        mean_field=mean_field,
        arcsinh_scale=arcsinh_scale,
        norm_min=lo,
        norm_max=hi,
        grid=grid,
    )


def invert_transform(d: TrainingDataset, sample: np.ndarray) -> np.ndarray:
    """Exact inverse of the dataset transform; accepts values outside [0,1]."""
    flat = np.asarray(sample, dtype=np.float64).reshape(d.grid.shape)
    warped = flat * (d.norm_max - d.norm_min) + d.norm_min
    return np.sinh(warped) * d.arcsinh_scale + d.mean_field
