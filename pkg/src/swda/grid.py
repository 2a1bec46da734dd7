"""
Periodic 2-D grids and spectral operators.

Fields are plain float64 arrays of shape (ny, nx), row-major with y along
axis 0 and x along axis 1; the point (ix, iy) sits at (ix*dx, iy*dy).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Uniform periodic grid on [0, lx) x [0, ly)."""

    nx: int
    ny: int
    lx: float = 1.0
    ly: float = 1.0

    def __post_init__(self):
        if self.nx < 4 or self.ny < 4:
            raise ValueError("grid needs nx, ny >= 4")
        if self.nx % 2 != 0 or self.ny % 2 != 0:
            raise ValueError("grid needs even nx, ny")
        if self.lx <= 0 or self.ly <= 0:
            raise ValueError("domain lengths must be positive")

    @property
    def dx(self) -> float:
        return self.lx / self.nx

    @property
    def dy(self) -> float:
        return self.ly / self.ny

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    @property
    def npoints(self) -> int:
        return self.nx * self.ny

    def coords(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid arrays (x, y), each of shape (ny, nx)."""
        x = np.arange(self.nx) * self.dx
        y = np.arange(self.ny) * self.dy
        return np.meshgrid(x, y, indexing="xy")

    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer wavenumber meshes (kx, ky) in FFT ordering."""
        kx = np.fft.fftfreq(self.nx, d=1.0 / self.nx)
        ky = np.fft.fftfreq(self.ny, d=1.0 / self.ny)
        return np.meshgrid(kx, ky, indexing="xy")


@dataclass(frozen=True)
class CutoffSpec:
    """Per-axis integer wavenumber cutoff for the low-pass filter."""

    f_max: int

    def validate(self, grid: Grid) -> None:
        if not 0 < self.f_max <= min(grid.nx, grid.ny) // 2:
            raise ValueError(
                f"cutoff {self.f_max} out of range for {grid.nx}x{grid.ny} grid"
            )


def check_field(f: np.ndarray, grid: Grid | None = None) -> np.ndarray:
    """Validate a scalar field array: shape, dtype, finiteness."""
    f = np.asarray(f, dtype=np.float64)
    if f.ndim != 2:
        raise ValueError(f"field must be 2-D, got shape {f.shape}")
    if grid is not None and f.shape != grid.shape:
        raise ValueError(f"field shape {f.shape} != grid shape {grid.shape}")
    if not np.all(np.isfinite(f)):
        raise ValueError("field contains non-finite values")
    return f


def spectral_derivative(f: np.ndarray, grid: Grid, axis: str, order: int = 1) -> np.ndarray:
    """Differentiate a periodic field in Fourier space.

    Exact for resolved modes; `axis` is "x" or "y", `order` is 1 or 2.
    """
    f = check_field(f, grid)
    if axis not in ("x", "y"):
        raise ValueError(f"axis must be 'x' or 'y', got {axis!r}")
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    kx, ky = grid.wavenumbers()
    if axis == "x":
        ik = 1j * 2.0 * np.pi / grid.lx * kx
    else:
        ik = 1j * 2.0 * np.pi / grid.ly * ky
    fh = np.fft.fft2(f)
    return np.real(np.fft.ifft2(fh * ik**order))


def laplacian(f: np.ndarray, grid: Grid) -> np.ndarray:
    """Spectral Laplacian (sum of second derivatives on both axes)."""
    return spectral_derivative(f, grid, "x", 2) + spectral_derivative(f, grid, "y", 2)


def lowpass(f: np.ndarray, grid: Grid, cutoff: CutoffSpec) -> np.ndarray:
    """Zero all Fourier modes with |kx| >= f_max or |ky| >= f_max."""
    f = check_field(f, grid)
    cutoff.validate(grid)
    kx, ky = grid.wavenumbers()
    mask = (np.abs(kx) < cutoff.f_max) & (np.abs(ky) < cutoff.f_max)
    fh = np.fft.fft2(f)
    return np.real(np.fft.ifft2(fh * mask))


def grad_perp(psi: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Perpendicular gradient (-d psi/dy, d psi/dx); divergence-free by construction."""
    psi = check_field(psi, grid)
    return (
        -spectral_derivative(psi, grid, "y", 1),
        spectral_derivative(psi, grid, "x", 1),
    )


def restrict_to_coarse(f: np.ndarray, fine: Grid, coarse: Grid) -> np.ndarray:
    """Subsample a fine-grid field at the coarse lattice points."""
    f = check_field(f, fine)
    if fine.nx % coarse.nx != 0 or fine.ny % coarse.ny != 0:
        raise ValueError(
            f"fine grid {fine.nx}x{fine.ny} not divisible by coarse {coarse.nx}x{coarse.ny}"
        )
    sx = fine.nx // coarse.nx
    sy = fine.ny // coarse.ny
    return f[::sy, ::sx].copy()
