"""Angular power spectra, isotropic Gaussian fields and the Brownian
increments driving the Q-Wiener process.

Every noise mode ``(l', m')`` owns its own Philox stream keyed by
``(seed, l'^2 + l' + m')``, so changing the noise truncation never changes
the paths of the modes that are kept.  Increments are drawn on the merged
breakpoint grid and summed upward, which is what lets a coarse run and a
refined run share the same Brownian paths.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .harmonics import FOUR_PI, lm_table, n_coeffs
from .timegrid import TimeGrid


@dataclass(frozen=True, eq=False)
class AngularPowerSpectrum:
    """Non-negative sequence ``A_0..A_ellmax``; zero beyond ``ellmax``."""

    a: np.ndarray

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=float))
        if a.ndim != 1 or a.size == 0:
            raise ValueError("spectrum must be a non-empty 1-d sequence")
        if not np.all(np.isfinite(a)) or np.any(a < 0):
            raise ValueError("spectrum entries must be finite and non-negative")
        object.__setattr__(self, "a", a)

    @property
    def ell_max(self) -> int:
        return self.a.size - 1

    def values(self, L: int) -> np.ndarray:
        """``A_0..A_L``, zero-padded or truncated."""
        out = np.zeros(L + 1)
        n = min(L + 1, self.a.size)
        out[:n] = self.a[:n]
        return out

    def per_mode(self, L: int) -> np.ndarray:
        """``A_ell`` repeated for every ``(ell, m)`` of a degree-L triangle."""
        ells, _ = lm_table(L)
        return self.values(L)[ells]

    def trace(self) -> float:
        ell = np.arange(self.a.size)
        return float(np.sum((2 * ell + 1) * self.a))

    def tail(self, Lambda: int) -> float:
        """``sum_{l' > Lambda} (2l'+1) A_l'``."""
        ell = np.arange(self.a.size)
        keep = ell > Lambda
        return float(np.sum((2 * ell[keep] + 1) * self.a[keep]))

    def truncated(self, Lambda: int) -> "AngularPowerSpectrum":
        return AngularPowerSpectrum(self.values(Lambda))


def power_law_spectrum(a0: float = 100.0, amplitude: float = 100.0, power: float = 2.0,
                       ell_max: int = 10) -> AngularPowerSpectrum:
    """``A_0 = a0`` and ``A_l = amplitude / l**power`` for ``1 <= l <= ell_max``."""
    ell = np.arange(1, ell_max + 1, dtype=float)
    return AngularPowerSpectrum(np.concatenate([[a0], amplitude / ell**power]))


def legendre_series(coef, x):
    """``sum_l coef[l] P_l(x)`` by the Bonnet recurrence."""
    x = np.asarray(x, dtype=float)
    coef = np.asarray(coef, dtype=float)
    p_prev, p = np.ones_like(x), x
    out = coef[0] * p_prev
    if coef.size > 1:
        out = out + coef[1] * p
    for l in range(2, coef.size):
        p_prev, p = p, ((2 * l - 1) * x * p - (l - 1) * p_prev) / l
        out = out + coef[l] * p
    return out


def covariance_kernel(spec: AngularPowerSpectrum, cosgamma):
    """``K(x, y) = sum_l A_l (2l+1)/(4 pi) P_l(x . y)``."""
    cosgamma = np.asarray(cosgamma, dtype=float)
    if np.any(np.abs(cosgamma) > 1.0):
        raise ValueError("cosgamma must lie in [-1, 1]")
    ell = np.arange(spec.a.size)
    return legendre_series(spec.a * (2 * ell + 1) / FOUR_PI, cosgamma)


def sample_isotropic_field(spec: AngularPowerSpectrum, mean: float, rng: np.random.Generator,
                           L: int | None = None, size=None) -> np.ndarray:
    """Karhunen-Loeve coefficients of an isotropic Gaussian field.

    ``c_lm ~ N(0, A_l)`` independently, and ``c_00 ~ N(2 sqrt(pi) mean, A_0)``.
    """
    L = spec.ell_max if L is None else L
    shape = (() if size is None else np.atleast_1d(size).tolist())
    shape = tuple(shape) + (n_coeffs(L),)
    c = rng.standard_normal(shape) * np.sqrt(spec.per_mode(L))
    c[..., 0] += 2.0 * np.sqrt(np.pi) * mean
    return c


def mode_stream(seed: int, mode: int) -> np.random.Generator:
    """Independent counter-based stream for noise mode ``mode`` under ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((int(seed), int(mode)))))


def _segment_sums(fine: np.ndarray, starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
    """Left-to-right sums ``fine[:, a] + fine[:, a+1] + ... + fine[:, b-1]`` along axis 1."""
    lengths = stops - starts
    out = fine[:, starts].copy()
    for r in range(1, int(lengths.max(initial=1))):
        sel = lengths > r
        out[:, sel] += fine[:, starts[sel] + r]
    return out


@dataclass(frozen=True, eq=False)
class IncrementTable:
    """Brownian increments for noise modes ``l' <= Lambda`` on a time grid.

    ``fine[p, k-1, j]`` is ``w_j(tau_k) - w_j(tau_{k-1})`` for path ``p`` and
    mode ``j`` (linear index).  ``own[l']`` holds the increments over the
    per-degree grid ``i/n_l'``, shape ``(paths, n_l', 2l'+1)``, each the
    left-to-right sum of the fine increments it covers.
    """

    grid: TimeGrid
    Lambda: int
    seed: int
    fine: np.ndarray = field(repr=False)
    own: tuple = field(repr=False)

    @property
    def n_paths(self) -> int:
        return self.fine.shape[0]

    def step_increment(self, k: int, ell_prime: int) -> np.ndarray:
        """``w(tau_k) - w(s_{k,l'})`` for the modes of degree ``l'`` (``l'`` in K_k)."""
        if ell_prime not in self.grid.membership[k]:
            raise ValueError(f"degree {ell_prime} has no node at breakpoint {k}")
        j = int(np.searchsorted(self.grid.node_index[ell_prime], k))
        return self.own[ell_prime][:, j - 1, :]

    def restrict(self, coarse: TimeGrid, Lambda: int | None = None) -> "IncrementTable":
        """The same Brownian paths seen on a coarser grid (and fewer modes)."""
        Lambda = self.Lambda if Lambda is None else Lambda
        if Lambda > self.Lambda:
            raise ValueError("cannot add noise modes by restriction")
        if coarse.Lambda < Lambda or not self.grid.contains(coarse):
            raise ValueError("coarse grid is not a sub-grid of the increment grid")
        pos = {t: k for k, t in enumerate(self.grid.tau_exact)}
        cut = np.array([pos[t] for t in coarse.tau_exact])
        fine = _segment_sums(self.fine[..., : n_coeffs(Lambda)], cut[:-1], cut[1:])
        own = _own_increments(self.fine, self.grid, coarse, Lambda, cut)
        return IncrementTable(coarse, Lambda, self.seed, fine, own)


def _own_increments(fine, grid, target, Lambda, cut=None):
    # per-degree increments of ``target``'s node grids, summed from ``fine`` on ``grid``
    own = []
    for lp in range(Lambda + 1):
        nodes = target.node_index[lp] if cut is None else cut[target.node_index[lp]]
        sl = slice(lp * lp, (lp + 1) ** 2)
        own.append(_segment_sums(fine[..., sl], nodes[:-1], nodes[1:]))
    return tuple(own)


def generate_increments(Lambda: int, grid: TimeGrid, seed: int, n_paths: int = 1) -> IncrementTable:
    """Draw Brownian increments on the merged grid and aggregate them per degree.

    Path ``p`` of mode ``j`` uses rows ``p`` of a ``(n_paths, K)`` draw from
    ``mode_stream(seed, j)``, so path 0 is the same for every ``n_paths``.
    """
    if grid.Lambda < Lambda:
        raise ValueError(f"time grid covers degrees <= {grid.Lambda}, need {Lambda}")
    nm = n_coeffs(Lambda)
    sd = np.sqrt(grid.dtau)
    fine = np.empty((n_paths, grid.K, nm))
    for j in range(nm):
        fine[:, :, j] = mode_stream(seed, j).standard_normal((n_paths, grid.K)) * sd
    return IncrementTable(grid, Lambda, seed, fine, _own_increments(fine, grid, grid, Lambda))
