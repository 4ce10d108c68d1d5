"""The multiplicative noise operator ``B(u) h = g(u) * (sum eta_lm <h, Y_lm> Y_lm)``."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import harmonics as sh
from .random import AngularPowerSpectrum


@dataclass(frozen=True)
class Affine:
    """``g(x) = a x + b``."""

    a: float
    b: float

    def __call__(self, u):
        if self.a == 0.0:
            return np.full_like(np.asarray(u, dtype=float), self.b)
        return self.a * u + self.b

    @property
    def derivative_bound(self) -> float:
        return abs(self.a)

    @property
    def value_at_zero(self) -> float:
        return self.b

    def __str__(self):
        if (self.a, self.b) == (1.0, 0.0):
            return "identity"
        if self.a == 0.0:
            return f"constant:{self.b!r}"
        return f"affine:{self.a!r},{self.b!r}"


@dataclass(frozen=True)
class Pointwise:
    """A general ``C^1`` function; ``derivative_bound`` is ``sup |g'|`` if known.

    Products ``g(u) Y`` are then not band-limited and the quadrature
    projection aliases the part above the grid's exact degree.
    """

    func: Callable
    derivative_bound: float | None = None

    def __call__(self, u):
        return self.func(u)

    @property
    def value_at_zero(self) -> float:
        return float(self.func(0.0))


def identity() -> Affine:
    return Affine(1.0, 0.0)


def constant(b: float) -> Affine:
    return Affine(0.0, float(b))


def parse_g(text: str) -> Affine:
    """Parse ``identity``, ``constant:b`` or ``affine:a,b``."""
    kind, _, args = text.partition(":")
    try:
        if kind == "identity" and not args:
            return identity()
        if kind == "constant":
            return constant(float(args))
        if kind == "affine":
            a, b = (float(v) for v in args.split(","))
            return Affine(a, b)
    except ValueError:
        pass
    raise ValueError(f"cannot parse noise function {text!r}")


@dataclass(frozen=True, eq=False)
class NoiseSpec:
    """Nemytskii function ``g`` and the multipliers ``eta_lm`` for ``l <= Lambda``."""

    g: Affine | Pointwise
    eta: np.ndarray = field(repr=False)

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        sh.degree_of(eta)
        if not np.all(np.isfinite(eta)):
            raise ValueError("eta must be finite")
        object.__setattr__(self, "eta", eta)

    @property
    def Lambda(self) -> int:
        return sh.degree_of(self.eta)

    @classmethod
    def uniform(cls, g, Lambda: int, value: float = 1.0) -> "NoiseSpec":
        return cls(g, np.full(sh.n_coeffs(Lambda), float(value)))

    @classmethod
    def by_degree(cls, g, values: Sequence[float]) -> "NoiseSpec":
        """``eta_lm = values[l]`` (independent of m)."""
        ells, _ = sh.lm_table(len(values) - 1)
        return cls(g, np.asarray(values, dtype=float)[ells])

    def truncated(self, Lambda: int) -> "NoiseSpec":
        return NoiseSpec(self.g, sh.resize(self.eta, Lambda))

    @property
    def is_affine(self) -> bool:
        return isinstance(self.g, Affine)

    @property
    def is_zero(self) -> bool:
        g0 = isinstance(self.g, Affine) and self.g.a == 0.0 and self.g.b == 0.0
        return g0 or not np.any(self.eta)

    @property
    def sup_eta(self) -> float:
        return float(np.max(np.abs(self.eta)))


def apply_nemytskii(spec: NoiseSpec, u):
    """Pointwise ``g(u(x))`` on grid values."""
    return spec.g(np.asarray(u, dtype=float))


def _check_grid(grid: sh.SphereGrid, degree: int):
    if grid.exact_degree < degree:
        raise ValueError(
            f"grid exact to degree {grid.exact_degree}, products need degree {degree}")


def noise_projection(spec: NoiseSpec, u, source: tuple[int, int], target_L: int,
                     grid: sh.SphereGrid) -> np.ndarray:
    """Coefficients ``<B(u) Y_(l',m'), Y_lm>`` for ``l <= target_L``."""
    u = np.asarray(u, dtype=float)
    lp, mp = source
    if lp > spec.Lambda:
        raise ValueError(f"source degree {lp} exceeds Lambda={spec.Lambda}")
    _check_grid(grid, sh.degree_of(u) + lp + target_L)
    gu = apply_nemytskii(spec, sh.synthesize(u, grid))
    y = sh.synthesize(sh.unit(lp, mp), grid)
    return sh.analyze(gu * (spec.eta[sh.lm_index(lp, mp)] * y), grid, target_L)


@dataclass(frozen=True, eq=False)
class NoiseGroup:
    """Noise modes whose coefficient is frozen at one common state.

    ``weights[..., i]`` multiplies mode ``modes[i]`` (typically
    ``sqrt(A_l') * dw``); ``ratio[l]``, when given, scales the result per
    target degree.  ``g_field`` may carry a precomputed ``g(u)`` on the grid.
    """

    state: np.ndarray
    modes: np.ndarray
    weights: np.ndarray
    ratio: np.ndarray | None = None
    g_field: np.ndarray | None = None


def _validate_groups(spec: NoiseSpec, groups: Sequence[NoiseGroup]):
    seen = set()
    for grp in groups:
        modes = np.asarray(grp.modes)
        if modes.ndim != 1 or np.shape(grp.weights)[-1] != modes.size:
            raise ValueError("each group needs one weight per mode")
        if modes.size and (modes.min() < 0 or modes.max() >= spec.eta.size):
            raise ValueError("group mode outside the noise truncation")
        if seen & set(modes.tolist()) or len(set(modes.tolist())) != modes.size:
            raise ValueError("a noise mode appears more than once in the grouping")
        seen |= set(modes.tolist())


def assemble_noise_increment(spec: NoiseSpec, groups: Sequence[NoiseGroup], target_L: int,
                             grid: sh.SphereGrid, per_mode: bool = False) -> np.ndarray:
    """``sum_groups ratio * sum_modes weight * <B(u_group) Y_mode, Y_lm>``.

    The default path synthesizes one noise field per group, multiplies it
    by ``g(u)`` and analyzes once; ``per_mode=True`` sums
    ``noise_projection`` mode by mode instead.
    """
    _validate_groups(spec, groups)
    ells, _ = sh.lm_table(target_L)
    total = None
    for grp in groups:
        modes = np.asarray(grp.modes)
        w = np.asarray(grp.weights, dtype=float)
        if modes.size == 0:
            continue
        if per_mode:
            lp, mp = sh.lm_table(spec.Lambda)
            part = 0.0
            for i, j in enumerate(modes):
                proj = noise_projection(spec, grp.state, (int(lp[j]), int(mp[j])), target_L, grid)
                part = part + w[..., i, None] * proj
        else:
            _check_grid(grid, sh.degree_of(grp.state) + spec.Lambda + target_L)
            gu = grp.g_field
            if gu is None:
                gu = apply_nemytskii(spec, sh.synthesize(grp.state, grid))
            c = np.zeros(w.shape[:-1] + (sh.n_coeffs(_deg_for(int(modes.max()))),))
            c[..., modes] = w * spec.eta[modes]
            part = sh.analyze(gu * sh.synthesize(c, grid), grid, target_L)
        if grp.ratio is not None:
            part = part * np.asarray(grp.ratio)[ells]
        total = part if total is None else total + part
    if total is None:
        return np.zeros(sh.n_coeffs(target_L))
    return total


def _deg_for(index: int) -> int:
    return int(np.floor(np.sqrt(index)))


def lipschitz_constant(spec: NoiseSpec, q: AngularPowerSpectrum) -> float:
    """``sqrt(Tr Q * |g'|_inf / (4 pi) * sup|eta|^2)`` with ``|g'|_inf`` unsquared."""
    dg = spec.g.derivative_bound
    if dg is None:
        raise ValueError("noise function has no known derivative bound")
    return float(np.sqrt(q.trace() * dg / sh.FOUR_PI * spec.sup_eta**2))


def growth_constant(spec: NoiseSpec, q: AngularPowerSpectrum) -> float:
    """A constant ``c`` with ``||B(u)||_HS <= c (1 + ||u||)``."""
    dg = spec.g.derivative_bound
    if dg is None:
        raise ValueError("noise function has no known derivative bound")
    g0 = spec.g.value_at_zero
    scale = spec.sup_eta**2 * q.trace() / sh.FOUR_PI
    return float(np.sqrt(scale * max(8 * np.pi * g0**2, 2 * dg**2)))


def hilbert_schmidt_norm(spec: NoiseSpec, q: AngularPowerSpectrum, u, grid: sh.SphereGrid) -> float:
    """``||B(u)||`` in the Hilbert-Schmidt norm from ``Q^(1/2) H`` to ``H``
    (noise modes ``l' <= Lambda``), by quadrature."""
    gu2 = apply_nemytskii(spec, sh.synthesize(u, grid)) ** 2
    Lam = spec.Lambda
    ells, ms = sh.lm_table(Lam)
    y = sh.ylm_matrix(Lam, *[a.ravel() for a in grid.mesh()])  # (npts, modes)
    w = (q.per_mode(Lam) * spec.eta**2)
    dens = (y**2 @ w).reshape(grid.shape)
    return float(np.sqrt(sh.integrate(gu2 * dens, grid)))
