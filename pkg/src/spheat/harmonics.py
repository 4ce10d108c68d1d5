"""Real spherical harmonics on the unit sphere.

Coefficient arrays ("HarmonicCoeffs") are plain float arrays whose last axis
has length ``(L+1)**2``; entry ``ell**2 + ell + m`` holds the ``(ell, m)``
coefficient.  With this layout the degree-L triangle is a prefix of any
larger triangle, so truncation is slicing and zero-padding is appending.
Leading axes are treated as a batch everywhere.

The basis follows the usual real convention

    Y_lm = sqrt(2) N_l|m| P_l^|m|(cos t) sin(|m| p)    m < 0
    Y_l0 =         N_l0  P_l^0(cos t)
    Y_lm = sqrt(2) N_lm  P_l^m(cos t) cos(m p)         m > 0

with ``N_lm = sqrt((2l+1)/(4 pi) (l-m)!/(l+m)!)`` and ``P_l^m`` carrying the
Condon-Shortley phase ``(-1)**m``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

FOUR_PI = 4.0 * np.pi


def n_coeffs(L: int) -> int:
    """Number of coefficients in a degree-``L`` triangle."""
    return (L + 1) ** 2


def lm_index(ell: int, m: int) -> int:
    if ell < 0 or abs(m) > ell:
        raise ValueError(f"invalid degree/order ({ell}, {m})")
    return ell * ell + ell + m


def degree_of(c) -> int:
    """Degree ``L`` of a coefficient array (from the length of its last axis)."""
    n = np.shape(c)[-1]
    L = int(round(np.sqrt(n))) - 1
    if (L + 1) ** 2 != n:
        raise ValueError(f"coefficient axis of length {n} is not a square")
    return L


def lm_table(L: int) -> tuple[np.ndarray, np.ndarray]:
    """Arrays ``(ell, m)`` for every linear index of a degree-``L`` triangle."""
    ells = np.concatenate([np.full(2 * l + 1, l) for l in range(L + 1)])
    ms = np.concatenate([np.arange(-l, l + 1) for l in range(L + 1)])
    return ells, ms


def eigenvalues(L: int) -> np.ndarray:
    """``mu_ell = ell (ell + 1)`` for ``ell = 0..L``."""
    ell = np.arange(L + 1, dtype=float)
    return ell * (ell + 1.0)


def resize(c, L: int) -> np.ndarray:
    """Truncate or zero-pad coefficients to degree ``L``."""
    c = np.asarray(c, dtype=float)
    n = n_coeffs(L)
    have = c.shape[-1]
    if have >= n:
        return c[..., :n].copy()
    out = np.zeros(c.shape[:-1] + (n,))
    out[..., :have] = c
    return out


def unit(ell: int, m: int, L: int | None = None) -> np.ndarray:
    """Unit coefficient vector ``e_(ell, m)`` of degree ``max(L, ell)``."""
    L = ell if L is None else max(L, ell)
    c = np.zeros(n_coeffs(L))
    c[lm_index(ell, m)] = 1.0
    return c


def assoc_legendre(ell: int, m: int, x):
    """Unnormalized associated Legendre function ``P_ell^m(x)``.

    Includes the Condon-Shortley phase.  Computed by the three-term upward
    recurrence in ``ell``; intended for moderate degrees (no rescaling).
    """
    if m < 0 or m > ell:
        raise ValueError(f"order m={m} outside 0..{ell}")
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > 1.0):
        raise ValueError("assoc_legendre requires |x| <= 1")
    s = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    pmm = np.ones_like(x)
    for k in range(1, m + 1):
        pmm = -(2 * k - 1) * s * pmm
    if ell == m:
        return pmm
    p_prev, p = pmm, x * (2 * m + 1) * pmm
    for l in range(m + 2, ell + 1):
        p_prev, p = p, (x * (2 * l - 1) * p - (l + m - 1) * p_prev) / (l - m)
    return p


def normalized_legendre(L: int, x) -> np.ndarray:
    """Table ``out[ell, m, ...] = N_lm P_ell^m(x)`` for ``0 <= m <= ell <= L``.

    Entries with ``m > ell`` are zero.  The normalized recurrence stays
    in range for degrees well beyond a few hundred.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.maximum(0.0, 1.0 - x * x))
    out = np.zeros((L + 1, L + 1) + x.shape)
    out[0, 0] = 1.0 / np.sqrt(FOUR_PI)
    for m in range(1, L + 1):
        out[m, m] = -np.sqrt((2 * m + 1) / (2.0 * m)) * s * out[m - 1, m - 1]
    for m in range(L):
        out[m + 1, m] = np.sqrt(2 * m + 3.0) * x * out[m, m]
        for l in range(m + 2, L + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            out[l, m] = a * (x * out[l - 1, m] - b * out[l - 2, m])
    return out


def _trig(m: int, phi):
    if m > 0:
        return np.sqrt(2.0) * np.cos(m * phi)
    if m < 0:
        return np.sqrt(2.0) * np.sin(-m * phi)
    return np.ones_like(phi)


def eval_ylm(ell: int, m: int, theta, phi):
    """Evaluate the real spherical harmonic ``Y_(ell, m)`` at ``(theta, phi)``."""
    if ell < 0 or abs(m) > ell:
        raise ValueError(f"invalid degree/order ({ell}, {m})")
    theta = np.asarray(theta, dtype=float)
    phi = np.asarray(phi, dtype=float)
    # the poles carry phi = 0 by convention
    phi = np.where(np.sin(theta) == 0.0, 0.0, phi)
    pbar = normalized_legendre(ell, np.cos(theta))[ell, abs(m)]
    return pbar * _trig(m, phi)


def ylm_matrix(L: int, theta, phi) -> np.ndarray:
    """Matrix ``Y[i, k]`` of all harmonics of degree <= ``L`` at the points."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    phi = np.atleast_1d(np.asarray(phi, dtype=float))
    phi = np.where(np.sin(theta) == 0.0, 0.0, phi)
    pbar = normalized_legendre(L, np.cos(theta))
    out = np.empty((theta.size, n_coeffs(L)))
    for ell in range(L + 1):
        for m in range(-ell, ell + 1):
            out[:, lm_index(ell, m)] = pbar[ell, abs(m)] * _trig(m, phi)
    return out


def evaluate(c, theta, phi) -> np.ndarray:
    """Pointwise sum of ``c_lm Y_lm`` at arbitrary points (shape ``(..., npts)``)."""
    c = np.asarray(c, dtype=float)
    return c @ ylm_matrix(degree_of(c), theta, phi).T


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Gauss-Legendre (in cos theta) times uniform longitude grid.

    ``build_grid(L)`` integrates every polynomial of total degree
    ``2L + 1`` exactly, so products ``Y_lm Y_l'm'`` with ``l, l' <= L`` are
    exact and ``analyze(synthesize(c))`` reproduces degree-L coefficients.
    """

    L: int
    cos_theta: np.ndarray
    theta: np.ndarray
    theta_weights: np.ndarray
    phi: np.ndarray
    # Legendre factors per (m + L, ell, theta node), including sqrt(2) for m != 0
    _leg: np.ndarray = field(repr=False)
    # cos(m phi) / sin(|m| phi) per (m + L, phi node)
    _trig: np.ndarray = field(repr=False)

    @property
    def n_theta(self) -> int:
        return self.theta.size

    @property
    def n_phi(self) -> int:
        return self.phi.size

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_phi)

    @property
    def exact_degree(self) -> int:
        """Largest total polynomial degree integrated exactly."""
        return 2 * self.L + 1

    @property
    def weights(self) -> np.ndarray:
        """Quadrature weight of every node, shape ``(n_theta, n_phi)``."""
        return np.outer(self.theta_weights, np.full(self.n_phi, 2 * np.pi / self.n_phi))

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.theta, self.phi, indexing="ij")


def build_grid(L: int) -> SphereGrid:
    if L < 0:
        raise ValueError("grid degree must be non-negative")
    x, w = np.polynomial.legendre.leggauss(L + 1)
    n_phi = 2 * L + 2
    phi = 2 * np.pi * np.arange(n_phi) / n_phi
    pbar = normalized_legendre(L, x)
    leg = np.zeros((2 * L + 1, L + 1, L + 1))
    trig = np.empty((2 * L + 1, n_phi))
    for m in range(-L, L + 1):
        fac = 1.0 if m == 0 else np.sqrt(2.0)
        leg[m + L] = fac * pbar[:, abs(m), :]
        if m > 0:
            trig[m + L] = np.cos(m * phi)
        elif m < 0:
            trig[m + L] = np.sin(-m * phi)
        else:
            trig[m + L] = 1.0
    return SphereGrid(L, x, np.arccos(x), w, phi, leg, trig)


def grid_for_degree(degree: int, resolve: int = 0) -> SphereGrid:
    """Smallest grid integrating polynomials of total degree ``degree`` exactly
    that can also synthesize and analyze fields up to degree ``resolve``."""
    return build_grid(max(0, degree // 2, resolve))


def _scatter_index(L: int, Lg: int) -> tuple[np.ndarray, np.ndarray]:
    ells, ms = lm_table(L)
    return ms + Lg, ells


def synthesize(c, grid: SphereGrid) -> np.ndarray:
    """Field values ``sum c_lm Y_lm`` on ``grid``; shape ``(..., n_theta, n_phi)``."""
    c = np.asarray(c, dtype=float)
    L = degree_of(c)
    Lg = grid.L
    if L > Lg:
        raise ValueError(f"grid of degree {Lg} cannot represent degree-{L} coefficients")
    batch = c.shape[:-1]
    cb = c.reshape(-1, c.shape[-1])
    B = cb.shape[0]
    mi, li = _scatter_index(L, Lg)
    cp = np.zeros((2 * Lg + 1, B, Lg + 1))
    cp[mi, :, li] = cb.T
    a = np.matmul(cp, grid._leg)  # (M, B, n_theta)
    a = a.transpose(1, 2, 0).reshape(B * grid.n_theta, 2 * Lg + 1)
    f = (a @ grid._trig).reshape(batch + grid.shape)
    return f


def analyze(f, grid: SphereGrid, L: int) -> np.ndarray:
    """Quadrature projection ``c_lm = sum_nodes w f Y_lm`` for ``ell <= L``."""
    Lg = grid.L
    if L > Lg:
        raise ValueError(f"grid of degree {Lg} cannot analyze to degree {L}")
    f = np.asarray(f, dtype=float)
    if f.shape[-2:] != grid.shape:
        raise ValueError(f"field shape {f.shape[-2:]} does not match grid {grid.shape}")
    batch = f.shape[:-2]
    fb = f.reshape(-1, grid.n_phi)
    B = fb.shape[0] // grid.n_theta
    F = fb @ (grid._trig.T * (2 * np.pi / grid.n_phi))  # (B*n_theta, M)
    F = F.reshape(B, grid.n_theta, 2 * Lg + 1) * grid.theta_weights[None, :, None]
    F = F.transpose(2, 0, 1)  # (M, B, n_theta)
    cp = np.matmul(F, grid._leg.transpose(0, 2, 1))  # (M, B, Lg+1)
    mi, li = _scatter_index(L, Lg)
    c = cp[mi, :, li].T
    return c.reshape(batch + (n_coeffs(L),))


def integrate(f, grid: SphereGrid) -> np.ndarray:
    """Quadrature integral of a grid field over the sphere."""
    return np.sum(np.asarray(f) * grid.weights, axis=(-2, -1))


def inner_product(c1, c2) -> np.ndarray:
    """L2(S^2) inner product via Parseval; the shorter array is zero-padded."""
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    n = min(c1.shape[-1], c2.shape[-1])
    return np.sum(c1[..., :n] * c2[..., :n], axis=-1)


def norm(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    return np.sqrt(np.sum(c * c, axis=-1))


def laplace_beltrami(c) -> np.ndarray:
    """Apply the Laplace-Beltrami operator: ``c_lm -> -ell(ell+1) c_lm``."""
    c = np.asarray(c, dtype=float)
    ells, _ = lm_table(degree_of(c))
    return -(ells * (ells + 1.0)) * c
