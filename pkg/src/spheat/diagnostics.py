"""Strong-error estimation, convergence sweeps, isotropy tests and the
deterministic second-moment equation for affine noise."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import harmonics as sh
from .noise_op import Affine
from .random import generate_increments
from .solver import (PathSample, SchemeConfig, coupled_pair, exact_heat_flow, heat_flow_path,
                     integrate, simulate_path)
from .timegrid import uniform_grid


def time_quadrature(tau, values, rule: str = "right") -> np.ndarray:
    """Integrate breakpoint samples over ``[tau_0, tau_K]`` (last axis = time).

    ``right`` is the sum of ``values[k] * (tau_k - tau_{k-1})`` for
    ``k = 1..K``; ``left`` uses ``values[k-1]``; ``trapezoid`` averages both.
    """
    tau = np.asarray(tau, dtype=float)
    values = np.asarray(values, dtype=float)
    dt = np.diff(tau)
    if rule == "right":
        return values[..., 1:] @ dt
    if rule == "left":
        return values[..., :-1] @ dt
    if rule == "trapezoid":
        return 0.5 * (values[..., 1:] + values[..., :-1]) @ dt
    raise ValueError(f"unknown quadrature rule {rule!r}")


def _pad(states: np.ndarray, n: int) -> np.ndarray:
    if states.shape[-1] == n:
        return states
    out = np.zeros(states.shape[:-1] + (n,))
    out[..., : states.shape[-1]] = states
    return out


def path_error(ref: PathSample, approx: PathSample, rule: str = "right"):
    """Time-integrated squared coefficient distance between two paths.

    The reference is read at the breakpoints of ``approx`` (which must all
    be reference breakpoints) and both are zero-padded to a common degree.
    Returns one value per path (or a float for single paths).
    """
    t_ref, t_apx = ref.time_grid.tau_exact, approx.time_grid.tau_exact
    if t_ref[0] != t_apx[0] or t_ref[-1] != t_apx[-1]:
        raise ValueError("paths cover different time ranges")
    pos = {t: k for k, t in enumerate(t_ref)}
    try:
        idx = np.array([pos[t] for t in t_apx])
    except KeyError:
        raise ValueError("approximation breakpoints are not reference breakpoints") from None
    n = max(ref.states.shape[-1], approx.states.shape[-1])
    diff = _pad(ref.states[..., idx, :], n) - _pad(approx.states, n)
    err = time_quadrature(approx.time_grid.tau, np.sum(diff**2, axis=-1), rule)
    return float(err) if np.ndim(err) == 0 else err


def bound_components(cfg: SchemeConfig) -> tuple[float, float, float]:
    """``(1/L^2, sum_{l'<=Lambda} (2l'+1) A_l'/n_l', sum_{l'>Lambda} (2l'+1) A_l')``."""
    A = cfg.spectrum.values(cfg.Lambda)
    lp = np.arange(cfg.Lambda + 1)
    space = 1.0 / cfg.L**2 if cfg.L > 0 else np.inf
    time = float(np.sum((2 * lp + 1) * A / np.asarray(cfg.time_grid.n, dtype=float)))
    return space, time, cfg.spectrum.tail(cfg.Lambda)


@dataclass
class ErrorReport:
    """Monte Carlo estimate of the mean integrated squared error for one config."""

    L: int
    Lambda: int
    n: tuple
    estimate: float
    stderr: float
    n_samples: int
    bound_L: float
    bound_time: float
    bound_tail: float
    samples: np.ndarray = field(default=None, repr=False)

    @property
    def bound_total(self) -> float:
        return self.bound_L + self.bound_time + self.bound_tail

    def row(self) -> dict:
        n = self.n
        n_text = str(n[0]) if len(set(n)) == 1 else " ".join(map(str, n))
        return dict(L=self.L, Lambda=self.Lambda, n=n_text, estimate=self.estimate,
                    stderr=self.stderr, samples=self.n_samples, bound_L=self.bound_L,
                    bound_time=self.bound_time, bound_tail=self.bound_tail)


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    x = np.asarray(x, dtype=float).ravel()
    se = float(np.std(x, ddof=1) / np.sqrt(x.size)) if x.size > 1 else float("nan")
    return float(np.mean(x)), se


def mc_error_estimate(cfg: SchemeConfig, ref_refine: int = 4, seeds: Sequence[int] = (0, 1),
                      L_ref: int | None = None, Lambda_ref: int | None = None,
                      paths_per_seed: int = 1, reference: str = "coupled",
                      rule: str = "right") -> ErrorReport:
    """Mean and standard error of ``path_error`` over coupled reference runs.

    ``reference="coupled"`` compares with the same scheme on a grid refined
    by ``ref_refine`` (and degree ``L_ref``), driven by the same Brownian
    paths; ``reference="exact"`` compares a noise-free config with the
    exact heat flow of the untruncated initial condition.
    """
    seeds = list(seeds)
    if len(seeds) * paths_per_seed < 2:
        raise ValueError("need at least two Monte Carlo samples")
    errs = []
    for seed in seeds:
        if reference == "exact":
            if not cfg.noise.is_zero:
                raise ValueError("the exact reference exists only without noise")
            approx = simulate_path(cfg, seed, n_paths=paths_per_seed)
            errs.append(np.atleast_1d(path_error(heat_flow_path(cfg), approx, rule)))
        elif reference == "coupled":
            ref, approx = coupled_pair(cfg, seed, ref_refine, L_ref, Lambda_ref, paths_per_seed)
            errs.append(np.atleast_1d(path_error(ref, approx, rule)))
        else:
            raise ValueError(f"unknown reference {reference!r}")
    errs = np.concatenate(errs)
    est, se = _mean_se(errs)
    return ErrorReport(cfg.L, cfg.Lambda, cfg.time_grid.n, est, se, errs.size,
                       *bound_components(cfg), samples=errs)


def fit_slope(x, y) -> tuple[float, float]:
    """Least-squares slope and intercept of ``log y`` against ``log x``."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValueError("a slope fit needs at least three points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive values")
    slope, intercept = np.polyfit(np.log(x), np.log(y), 1)
    return float(slope), float(intercept)


@dataclass
class SweepResult:
    axis: str
    values: list
    reports: list
    slope: float
    intercept: float

    def dominance_constant(self) -> float:
        """Smallest ``C`` with ``estimate <= C * bound_total`` on every point."""
        return max(r.estimate / r.bound_total for r in self.reports)


def sweep_config(base: SchemeConfig, axis: str, value: int) -> SchemeConfig:
    """``base`` with one truncation parameter changed."""
    if axis == "L":
        return base.replace(L=int(value))
    if axis == "n":
        return base.replace(time_grid=uniform_grid(int(value), base.Lambda))
    if axis == "Lambda":
        if value > base.Lambda:
            return base.extended(Lambda=int(value))
        return base.replace(Lambda=int(value))
    raise ValueError(f"unknown sweep axis {axis!r}")


def convergence_sweep(base: SchemeConfig, axis: str, values: Sequence[int],
                      seeds: Sequence[int] = (0, 1), ref_refine: int = 4,
                      L_ref: int | None = None, Lambda_ref: int | None = None,
                      paths_per_seed: int = 1, reference: str = "coupled",
                      rule: str = "right") -> SweepResult:
    """Error reports along one axis and the fitted log-log slope.

    On the ``L`` axis the reference degree defaults to ``2 * max(values)``;
    on the ``Lambda`` axis the reference noise degree defaults to
    ``max(values)``.
    """
    values = [int(v) for v in values]
    if len(values) < 3:
        raise ValueError("a convergence sweep needs at least three values")
    if values != sorted(values) or len(set(values)) != len(values):
        raise ValueError("sweep values must be strictly ascending")
    if axis == "L" and L_ref is None:
        L_ref = 2 * values[-1]
    if axis == "Lambda" and Lambda_ref is None:
        Lambda_ref = values[-1]
    reports = []
    for v in values:
        cfg = sweep_config(base, axis, v)
        reports.append(mc_error_estimate(cfg, ref_refine, seeds, L_ref, Lambda_ref,
                                         paths_per_seed, reference, rule))
    slope, intercept = fit_slope(values, [r.estimate for r in reports])
    return SweepResult(axis, values, reports, slope, intercept)


@dataclass
class CovarianceEstimate:
    """Sample second moments ``E[X_a X_b]`` of the coefficients at one time."""

    time: float
    moments: np.ndarray
    stderr: np.ndarray
    n_samples: int
    fourth: np.ndarray = field(repr=False, default=None)


def second_moments(samples: np.ndarray, time: float = 1.0) -> CovarianceEstimate:
    """Second moments and their normal-theory standard errors from ``(N, nc)`` samples."""
    X = np.asarray(samples, dtype=float)
    N = X.shape[0]
    if N < 2:
        raise ValueError("need at least two samples")
    S = X.T @ X / N
    X2 = X * X
    # E[(X_a X_b)^2] for every pair
    M4 = X2.T @ X2 / N
    se = np.sqrt(np.maximum(M4 - S**2, 0.0) / (N - 1))
    return CovarianceEstimate(time, S, se, N, M4)


def mc_second_moments(cfg: SchemeConfig, t: float = 1.0, seeds: Sequence[int] = (0,),
                      paths_per_seed: int = 1000) -> CovarianceEstimate:
    """Run ``paths_per_seed`` paths for every seed and collect the state at ``t``."""
    k = cfg.time_grid.index_of(t)
    final = k == cfg.time_grid.K
    out = []
    for seed in seeds:
        table = generate_increments(cfg.Lambda, cfg.time_grid, seed, paths_per_seed)
        x = integrate(cfg, table, keep="final" if final else "all")
        out.append(x if final else x[:, k])
    return second_moments(np.concatenate(out), float(cfg.time_grid.tau_exact[k]))


@dataclass
class IsotropyResult:
    verdict: str
    estimate: CovarianceEstimate
    max_offdiag_z: float
    max_spread_z: float
    z: float


def isotropy_verdict(est: CovarianceEstimate, L: int, z: float = 4.0) -> IsotropyResult:
    """Compare off-diagonal moments with zero and same-degree diagonal moments
    with each other, both in units of their standard errors."""
    S, se, M4, N = est.moments, est.stderr, est.fourth, est.n_samples
    nc = sh.n_coeffs(L)
    off = ~np.eye(nc, dtype=bool)
    with np.errstate(divide="ignore", invalid="ignore"):
        zo = np.where(se[:nc, :nc] > 0, np.abs(S[:nc, :nc]) / se[:nc, :nc],
                      np.where(S[:nc, :nc] != 0, np.inf, 0.0))
    z_off = float(zo[off].max(initial=0.0))
    z_spread = 0.0
    for ell in range(1, L + 1):
        idx = np.arange(ell * ell, (ell + 1) ** 2)
        for i, a in enumerate(idx):
            for b in idx[i + 1:]:
                d = S[a, a] - S[b, b]
                var = (M4[a, a] + M4[b, b] - 2 * M4[a, b] - d * d) / (N - 1)
                sd = np.sqrt(max(var, 0.0))
                zz = abs(d) / sd if sd > 0 else (np.inf if d != 0 else 0.0)
                z_spread = max(z_spread, float(zz))
    verdict = "ISOTROPIC" if z_off <= z and z_spread <= z else "ANISOTROPIC"
    return IsotropyResult(verdict, est, z_off, z_spread, z)


def isotropy_test(cfg: SchemeConfig, t: float = 1.0, seeds: Sequence[int] = (0,),
                  paths_per_seed: int = 1000, z: float = 4.0) -> IsotropyResult:
    """Monte Carlo check of 2-weak isotropy of the coefficients at time ``t``.

    The initial condition must be constant on the sphere.
    """
    if np.any(cfg.initial[1:]):
        raise ValueError("isotropy test needs a constant initial condition")
    est = mc_second_moments(cfg, t, seeds, paths_per_seed)
    return isotropy_verdict(est, cfg.L, z)


def product_tensor(N: int, Lambda: int) -> np.ndarray:
    """``M[j, a, p] = <Y_a Y_j, Y_p>`` for ``a, p`` of degree ``<= N`` and ``j`` of
    degree ``<= Lambda`` (exact quadrature)."""
    grid = sh.grid_for_degree(2 * N + Lambda, max(N, Lambda))
    ya = sh.synthesize(np.eye(sh.n_coeffs(N)), grid)
    yj = ya[: sh.n_coeffs(Lambda)] if Lambda <= N else sh.synthesize(np.eye(sh.n_coeffs(Lambda)), grid)
    return np.stack([sh.analyze(ya * y, grid, N) for y in yj])


@dataclass
class SecondMomentSolution:
    """``v[a, b]`` approximates ``E[X_a(t) X_b(t)]`` for coefficients of degree ``<= N``."""

    t: float
    N: int
    dt: float
    v: np.ndarray


def second_moment_ode(cfg: SchemeConfig, t_final: float = 1.0, N: int | None = None,
                      dt: float = 1e-3) -> SecondMomentSolution:
    """Integrate the closed equation for ``v = E[X (x) X]`` under affine ``g``.

    With ``g(u) = a u + b`` and ``E[X] = m`` (the exact heat flow),
    ``dv/dt = -(mu_a + mu_b) v + sum_j A_j eta_j^2 M_j^T G M_j`` where
    ``G = a^2 v + a b (m c^T + c m^T) + b^2 c c^T`` and ``c`` is the
    coefficient vector of the constant function 1.  The diagonal part is
    taken implicitly and the rest explicitly.
    """
    g = cfg.noise.g
    if not isinstance(g, Affine):
        raise ValueError("the second-moment equation is closed only for affine g")
    N = cfg.L if N is None else int(N)
    steps = int(round(t_final / dt))
    if steps < 1 or abs(steps * dt - t_final) > 1e-9 * max(1.0, t_final):
        raise ValueError("t_final must be a positive multiple of dt")
    Lam = cfg.Lambda
    nc = sh.n_coeffs(N)
    M = product_tensor(N, Lam)
    w = cfg.spectrum.per_mode(Lam) * cfg.noise.eta**2
    keep = w != 0
    M, w = M[keep], w[keep]
    xi = sh.resize(cfg.initial, N)
    ells, _ = sh.lm_table(N)
    mu = ells * (ells + 1.0)
    damp = 1.0 / (1.0 + dt * (mu[:, None] + mu[None, :]))
    one = np.zeros(nc)
    one[0] = np.sqrt(sh.FOUR_PI)
    a, b = g.a, g.b
    cc = np.outer(one, one)
    v = np.outer(xi, xi)
    for i in range(steps):
        m = exact_heat_flow(xi, i * dt)
        G = a * a * v + a * b * (np.outer(m, one) + np.outer(one, m)) + b * b * cc
        F = np.einsum("j,jap,ab,jbq->pq", w, M, G, M, optimize=True)
        v = damp * (v + dt * F)
    return SecondMomentSolution(steps * dt, N, dt, 0.5 * (v + v.T))


def second_moment_error(cfg: SchemeConfig, t_final: float = 1.0, N: int | None = None,
                        dt: float = 1e-3) -> tuple[SecondMomentSolution, np.ndarray]:
    """Solution at step ``dt`` and an entrywise estimate of its integrator
    error, ``2 |v(dt) - v(dt/2)|`` (Richardson, first-order method)."""
    coarse = second_moment_ode(cfg, t_final, N, dt)
    fine = second_moment_ode(cfg, t_final, N, dt / 2)
    return coarse, 2.0 * np.abs(coarse.v - fine.v)
