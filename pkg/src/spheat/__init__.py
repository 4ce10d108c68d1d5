"""Stochastic heat equation on the unit sphere: spectral Galerkin in space,
non-uniform drift-implicit Euler-Maruyama in time."""
from .harmonics import analyze, build_grid, eval_ylm, synthesize
from .noise_op import Affine, NoiseSpec, constant, identity
from .random import AngularPowerSpectrum, generate_increments, power_law_spectrum
from .solver import SchemeConfig, coupled_pair, exact_heat_flow, simulate_path
from .timegrid import build_time_grid, uniform_grid

__version__ = "0.1.0"
