"""Drift-implicit Euler-Maruyama stepping on the merged non-uniform grid.

At breakpoint ``tau_k`` every coefficient of degree ``l <= L`` is updated as

    X(tau_k) = G_l(tau_k)/G_l(tau_{k-1}) * ( X(tau_{k-1})
               + sum_{l' in K_k} sum_m' sqrt(A_l') <B(X(s_k,l')) Y_l'm', Y_lm>
                 * G_l(tau_{k-1})/G_l(s_k,l') * (w(tau_k) - w(s_k,l')) )

where ``s_k,l'`` is the previous node of the degree-l' grid.  The noise sum
is grouped by distinct lookback breakpoint; each group costs one synthesis
and one analysis.  Runs are batched over independent paths (leading axis).
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import harmonics as sh
from .noise_op import NoiseGroup, NoiseSpec, apply_nemytskii, assemble_noise_increment
from .random import AngularPowerSpectrum, IncrementTable, generate_increments
from .timegrid import GammaTable, TimeGrid, build_time_grid


@dataclass(frozen=True, eq=False)
class SchemeConfig:
    """Everything that defines a discrete path except the Brownian increments."""

    L: int
    Lambda: int
    time_grid: TimeGrid
    noise: NoiseSpec
    spectrum: AngularPowerSpectrum
    initial: np.ndarray = field(repr=False)  # full xi; ``xi`` is its degree-L truncation

    def __post_init__(self):
        if self.L < 0 or self.Lambda < 0:
            raise ValueError("L and Lambda must be non-negative")
        if self.time_grid.Lambda < self.Lambda:
            raise ValueError("time grid has fewer degrees than Lambda")
        if self.time_grid.Lambda > self.Lambda:
            object.__setattr__(self, "time_grid", self.time_grid.truncated(self.Lambda))
        if self.noise.Lambda != self.Lambda:
            object.__setattr__(self, "noise", self.noise.truncated(self.Lambda))
        object.__setattr__(self, "initial", np.asarray(self.initial, dtype=float))
        sh.degree_of(self.initial)

    def replace(self, **changes) -> "SchemeConfig":
        return dataclasses.replace(self, **changes)

    def refined(self, factor: int) -> "SchemeConfig":
        return self.replace(time_grid=self.time_grid.refined(factor))

    def extended(self, L: int | None = None, Lambda: int | None = None,
                 noise: NoiseSpec | None = None) -> "SchemeConfig":
        """Same problem with a larger truncation; new noise degrees reuse the
        last step count and (unless ``noise`` is given) the last eta value."""
        L = self.L if L is None else L
        Lambda = self.Lambda if Lambda is None else Lambda
        grid = self.time_grid
        if Lambda > self.Lambda:
            grid = build_time_grid(list(grid.n) + [grid.n[-1]] * (Lambda - self.Lambda))
            if noise is None:
                eta = np.concatenate([self.noise.eta, np.full(
                    sh.n_coeffs(Lambda) - self.noise.eta.size, self.noise.eta[-1])])
                noise = NoiseSpec(self.noise.g, eta)
        noise = self.noise if noise is None else noise
        return self.replace(L=L, Lambda=Lambda, time_grid=grid, noise=noise)

    @cached_property
    def xi(self) -> np.ndarray:
        """Initial coefficients truncated (or padded) to degree ``L``."""
        return sh.resize(self.initial, self.L)

    @cached_property
    def sphere_grid(self) -> sh.SphereGrid:
        # exact for g(u) Y_l'm' Y_lm with affine g
        return sh.grid_for_degree(2 * self.L + self.Lambda, max(self.L, self.Lambda))

    @cached_property
    def gamma_table(self) -> GammaTable:
        return GammaTable(self.time_grid, self.L)

    @cached_property
    def sqrt_a(self) -> np.ndarray:
        return np.sqrt(self.spectrum.values(self.Lambda))


@dataclass(frozen=True, eq=False)
class PathSample:
    """States at every merged breakpoint: ``states[..., k, :]`` is ``X(tau_k)``."""

    tau: np.ndarray
    states: np.ndarray = field(repr=False)
    seed: int | None
    config: SchemeConfig = field(repr=False)
    increments: IncrementTable | None = field(default=None, repr=False)

    @property
    def time_grid(self) -> TimeGrid:
        return self.config.time_grid

    @property
    def final(self) -> np.ndarray:
        return self.states[..., -1, :]


def _mode_slice(lp: int) -> np.ndarray:
    return np.arange(lp * lp, (lp + 1) ** 2)


def _groups(cfg: SchemeConfig, table: IncrementTable, k: int, lookup):
    """Noise groups of step ``k`` in ascending lookback order; ``lookup(j)``
    returns ``(state, g_field or None)`` at breakpoint ``j``."""
    tg = cfg.time_grid
    by_j: dict[int, list[int]] = {}
    for lp in sorted(tg.membership[k]):
        by_j.setdefault(int(tg.lookback[k, lp]), []).append(lp)
    groups = []
    for j in sorted(by_j):
        lps = by_j[j]
        modes = np.concatenate([_mode_slice(lp) for lp in lps])
        w = np.concatenate([cfg.sqrt_a[lp] * table.step_increment(k, lp) for lp in lps], axis=-1)
        state, gf = lookup(j)
        groups.append(NoiseGroup(state, modes, w, cfg.gamma_table.ratio(k - 1, j), gf))
    return groups


def euler_step(history, k: int, increments: IncrementTable, cfg: SchemeConfig,
               per_mode: bool = False) -> np.ndarray:
    """Advance from ``tau_{k-1}`` to ``tau_k``.

    ``history[..., j, :]`` must hold the states at ``tau_0..tau_{k-1}`` (the
    lookback states are read from it); the leading axes index paths.
    """
    history = np.asarray(history, dtype=float)
    if not 1 <= k <= cfg.time_grid.K:
        raise ValueError(f"step index {k} outside 1..{cfg.time_grid.K}")
    if history.shape[-2] < k:
        raise RuntimeError(f"lookback states before breakpoint {k} are missing")
    ells, _ = sh.lm_table(cfg.L)
    x = history[..., k - 1, :]
    if cfg.noise.is_zero:
        incr = 0.0
    else:
        groups = _groups(cfg, increments, k, lambda j: (history[..., j, :], None))
        incr = assemble_noise_increment(cfg.noise, groups, cfg.L, cfg.sphere_grid, per_mode=per_mode)
    return cfg.gamma_table.step[:, k - 1][ells] * (x + incr)


def integrate(cfg: SchemeConfig, increments: IncrementTable, keep: str = "all") -> np.ndarray:
    """Run the scheme for every path in ``increments``.

    Returns states of shape ``(paths, K+1, ncoeff)`` (``keep="all"``) or the
    final states ``(paths, ncoeff)`` (``keep="final"``).
    """
    tg = cfg.time_grid
    if increments.grid is not tg and tuple(increments.grid.tau_exact) != tuple(tg.tau_exact):
        raise ValueError("increments were generated for a different time grid")
    if increments.Lambda < cfg.Lambda:
        raise ValueError("increments do not cover all noise modes")
    P = increments.n_paths
    ells, _ = sh.lm_table(cfg.L)
    step = cfg.gamma_table.step
    grid = cfg.sphere_grid
    noisy = not cfg.noise.is_zero

    last_use: dict[int, int] = {}
    if noisy:
        for k in range(1, tg.K + 1):
            for lp in tg.membership[k]:
                last_use[int(tg.lookback[k, lp])] = k
    cache: dict[int, tuple] = {}

    def remember(j, x):
        if j in last_use:
            cache[j] = (x, apply_nemytskii(cfg.noise, sh.synthesize(x, grid)))

    x = np.broadcast_to(cfg.xi, (P, cfg.xi.size)).copy()
    states = np.empty((P, tg.K + 1, x.shape[-1])) if keep == "all" else None
    if states is not None:
        states[:, 0] = x
    remember(0, x)
    for k in range(1, tg.K + 1):
        if noisy:
            groups = _groups(cfg, increments, k, cache.__getitem__)
            x = x + assemble_noise_increment(cfg.noise, groups, cfg.L, grid)
        x = step[:, k - 1][ells] * x
        if states is not None:
            states[:, k] = x
        remember(k, x)
        for j in [j for j in cache if last_use[j] <= k]:
            del cache[j]
    if not np.all(np.isfinite(x)):
        raise FloatingPointError("non-finite coefficients; the noise is too strong for this grid")
    return states if keep == "all" else x


def simulate_path(cfg: SchemeConfig, seed: int, n_paths: int | None = None,
                  increments: IncrementTable | None = None) -> PathSample:
    """Generate increments from ``seed`` and store the state at every breakpoint.

    With ``n_paths=None`` a single path is returned (no path axis).
    """
    if increments is None:
        increments = generate_increments(cfg.Lambda, cfg.time_grid, seed, n_paths or 1)
    states = integrate(cfg, increments)
    if n_paths is None and increments.n_paths == 1:
        states = states[0]
    return PathSample(cfg.time_grid.tau, states, seed, cfg, increments)


def reference_path(cfg: SchemeConfig, seed: int, refine: int = 1, L_ref: int | None = None,
                   n_paths: int | None = None) -> PathSample:
    """The same scheme on a grid with every ``n_l'`` multiplied by ``refine``
    (and optionally a larger ``L``); its increments can be restricted to
    ``cfg.time_grid`` to drive a coupled coarse run."""
    if refine < 1:
        raise ValueError("refine must be >= 1")
    fine = cfg.extended(L=L_ref).refined(refine)
    return simulate_path(fine, seed, n_paths)


def coupled_pair(cfg: SchemeConfig, seed: int, refine: int = 1, L_ref: int | None = None,
                 Lambda_ref: int | None = None, n_paths: int = 1) -> tuple[PathSample, PathSample]:
    """Reference and approximation driven by the same Brownian paths."""
    ref_cfg = cfg.extended(L=L_ref, Lambda=Lambda_ref).refined(refine)
    table = generate_increments(ref_cfg.Lambda, ref_cfg.time_grid, seed, n_paths)
    ref = PathSample(ref_cfg.time_grid.tau, integrate(ref_cfg, table), seed, ref_cfg, table)
    coarse = table.restrict(cfg.time_grid, cfg.Lambda)
    approx = PathSample(cfg.time_grid.tau, integrate(cfg, coarse), seed, cfg, coarse)
    return ref, approx


def exact_heat_flow(xi, t: float) -> np.ndarray:
    """``exp(-l(l+1) t) xi_lm`` coefficient-wise."""
    if np.any(np.asarray(t) < 0):
        raise ValueError("t must be non-negative")
    xi = np.asarray(xi, dtype=float)
    ells, _ = sh.lm_table(sh.degree_of(xi))
    mu = ells * (ells + 1.0)
    t = np.asarray(t, dtype=float)
    return np.exp(-np.multiply.outer(t, mu)) * xi


def heat_flow_path(cfg: SchemeConfig) -> PathSample:
    """Exact deterministic solution at the breakpoints of ``cfg``."""
    tau = cfg.time_grid.tau
    return PathSample(tau, exact_heat_flow(cfg.initial, tau), None, cfg)
