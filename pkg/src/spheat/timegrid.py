"""Per-degree uniform time grids, their merged breakpoints and the implicit
Euler approximation ``Gamma_ell`` of the heat semigroup eigenvalues.

Nodes are merged as exact fractions ``j/n``; floats appear only when Gamma
is evaluated.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Merged time grid for noise degrees ``0..Lambda``.

    Attributes
    ----------
    n : tuple of int
        Step count ``n_l'`` of the uniform grid ``j/n_l'`` for every noise degree.
    tau_exact : tuple of Fraction
        Merged breakpoints ``0 = tau_0 < ... < tau_K = 1``.
    membership : tuple of frozenset
        ``membership[k]`` is the set of degrees whose grid contains ``tau_k``.
    lookback : ndarray of int, shape (K+1, Lambda+1)
        ``lookback[k, l']`` is the breakpoint index of the latest node of grid
        ``l'`` strictly before ``tau_k`` (row 0 is -1).
    node_index : tuple of ndarray
        Breakpoint indices of the nodes of each per-degree grid.
    """

    n: tuple[int, ...]
    tau_exact: tuple[Fraction, ...]
    membership: tuple[frozenset, ...]
    lookback: np.ndarray = field(repr=False)
    node_index: tuple[np.ndarray, ...] = field(repr=False)

    @property
    def Lambda(self) -> int:
        return len(self.n) - 1

    @property
    def K(self) -> int:
        return len(self.tau_exact) - 1

    @property
    def tau(self) -> np.ndarray:
        return np.array([float(t) for t in self.tau_exact])

    @property
    def dtau(self) -> np.ndarray:
        return np.array([float(b - a) for a, b in zip(self.tau_exact[:-1], self.tau_exact[1:])])

    def lookback_time(self, k: int, ell_prime: int) -> Fraction:
        return self.tau_exact[self.lookback[k, ell_prime]]

    def index_of(self, t) -> int:
        """Breakpoint index of the exact time ``t`` (raises if not a breakpoint)."""
        t = Fraction(t).limit_denominator(10**12) if isinstance(t, float) else Fraction(t)
        try:
            return self.tau_exact.index(t)
        except ValueError:
            raise ValueError(f"t={t} is not a breakpoint of the grid") from None

    def contains(self, other: "TimeGrid") -> bool:
        """True when every breakpoint of ``other`` is a breakpoint of this grid."""
        return set(other.tau_exact) <= set(self.tau_exact)

    def refined(self, factor: int) -> "TimeGrid":
        if factor < 1:
            raise ValueError("refinement factor must be >= 1")
        return build_time_grid([factor * n for n in self.n])

    def truncated(self, Lambda: int) -> "TimeGrid":
        return build_time_grid(self.n[: Lambda + 1])


def build_time_grid(n: Sequence[int]) -> TimeGrid:
    """Merge the uniform grids ``{j/n[l'] : j = 0..n[l']}``."""
    n = tuple(int(v) for v in n)
    if not n:
        raise ValueError("need at least one step count")
    if any(v < 1 for v in n):
        raise ValueError(f"step counts must be positive, got {n}")
    nodes = sorted({Fraction(j, nl) for nl in n for j in range(nl + 1)})
    position = {t: k for k, t in enumerate(nodes)}
    node_index = tuple(
        np.array([position[Fraction(j, nl)] for j in range(nl + 1)]) for nl in n
    )
    membership = [set() for _ in nodes]
    for lp, idx in enumerate(node_index):
        for k in idx:
            membership[k].add(lp)
    lookback = np.full((len(nodes), len(n)), -1, dtype=int)
    for k in range(1, len(nodes)):
        t = nodes[k]
        for lp, nl in enumerate(n):
            j = math.ceil(t * nl) - 1
            lookback[k, lp] = position[Fraction(j, nl)]
    return TimeGrid(n, tuple(nodes), tuple(frozenset(s) for s in membership),
                    lookback, node_index)


def uniform_grid(n: int, Lambda: int) -> TimeGrid:
    return build_time_grid([n] * (Lambda + 1))


def parse_allocation(rule: str) -> tuple[str, tuple[float, ...]]:
    """Parse ``uniform:n`` or ``sqrtA:N[,delta]`` (delta defaults to 1)."""
    try:
        kind, args = rule.split(":", 1)
        vals = tuple(float(v) for v in args.split(","))
    except ValueError:
        raise ValueError(f"malformed allocation rule {rule!r}") from None
    if kind == "uniform" and len(vals) == 1:
        return kind, vals
    if kind == "sqrtA" and len(vals) in (1, 2):
        return kind, vals if len(vals) == 2 else (vals[0], 1.0)
    raise ValueError(f"unknown allocation rule {rule!r}")


def allocate(rule: str, A: Sequence[float], Lambda: int) -> list[int]:
    """Step counts ``n_0..n_Lambda`` for an allocation rule.

    ``sqrtA:N,delta`` gives ``n_l' = ceil(sqrt(A_l') N**delta)``, at least 1.
    """
    kind, vals = parse_allocation(rule)
    if kind == "uniform":
        return [int(vals[0])] * (Lambda + 1)
    N, delta = vals
    A = list(A) + [0.0] * (Lambda + 1 - len(A))
    return [max(1, math.ceil(math.sqrt(A[l]) * N**delta - 1e-9)) for l in range(Lambda + 1)]


def gamma(ell: int, t: float, grid: TimeGrid) -> float:
    """``Gamma_ell(t) = prod_nu 1 / (1 + mu (t ^ tau_nu - t ^ tau_{nu-1}))``."""
    mu = ell * (ell + 1.0)
    tau = grid.tau
    seg = np.minimum(t, tau[1:]) - np.minimum(t, tau[:-1])
    return float(np.prod(1.0 / (1.0 + mu * seg)))


def gamma_ratio(ell: int, t_hi: float, t_lo: float, grid: TimeGrid) -> float:
    """``Gamma_ell(t_hi) / Gamma_ell(t_lo)`` as a product over the segments
    meeting ``(t_lo, t_hi]``; never forms the two (possibly tiny) factors."""
    if t_lo > t_hi:
        raise ValueError("need t_lo <= t_hi")
    mu = ell * (ell + 1.0)
    tau = grid.tau
    a, b = tau[:-1], tau[1:]
    hit = (b > t_lo) & (a < t_hi)
    lo = np.clip(t_lo, a[hit], b[hit]) - a[hit]
    hi = np.clip(t_hi, a[hit], b[hit]) - a[hit]
    return float(np.prod((1.0 + mu * lo) / (1.0 + mu * hi)))


class GammaTable:
    """Gamma factors at breakpoints for degrees ``0..L``.

    ``step[l, k-1] = Gamma_l(tau_k) / Gamma_l(tau_{k-1})`` and products of
    consecutive columns give every ratio the scheme needs.
    """

    def __init__(self, grid: TimeGrid, L: int):
        self.grid = grid
        self.L = L
        ell = np.arange(L + 1, dtype=float)
        self.mu = ell * (ell + 1.0)
        self.step = 1.0 / (1.0 + np.outer(self.mu, grid.dtau))
        self._values = None

    @property
    def values(self) -> np.ndarray:
        """``Gamma_l(tau_k)`` table of shape ``(L+1, K+1)``."""
        if self._values is None:
            v = np.ones((self.L + 1, self.grid.K + 1))
            v[:, 1:] = np.cumprod(self.step, axis=1)
            self._values = v
        return self._values

    def ratio(self, k_hi: int, k_lo: int) -> np.ndarray:
        """``Gamma_l(tau_{k_hi}) / Gamma_l(tau_{k_lo})`` for all degrees."""
        if k_hi == k_lo:
            return np.ones(self.L + 1)
        return np.prod(self.step[:, k_lo:k_hi], axis=1)
