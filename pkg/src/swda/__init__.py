"""Stochastic shallow-water data assimilation with generatively calibrated
transport noise: spectral grid operators, rotating shallow-water stepping,
stream-function noise calibration, a diffusion-bridge generative model, and a
tempering/jittering particle filter."""

from .grid import CutoffSpec, Grid

__all__ = ["Grid", "CutoffSpec"]
__version__ = "0.1.0"
