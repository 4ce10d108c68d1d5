import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spheat import harmonics as sh
from spheat.noise_op import (Affine, NoiseGroup, NoiseSpec, Pointwise, apply_nemytskii,
                             assemble_noise_increment, constant, growth_constant,
                             hilbert_schmidt_norm, identity, lipschitz_constant,
                             noise_projection, parse_g)
from spheat.random import AngularPowerSpectrum, power_law_spectrum


def triple_product_oracle(u, lp, mp, L, g, eta_val):
    # direct quadrature with pointwise harmonic evaluation (no factored transforms)
    grid = sh.build_grid(sh.degree_of(u) + lp + L)
    th, ph = (a.ravel() for a in grid.mesh())
    Y = sh.ylm_matrix(max(L, lp, sh.degree_of(u)), th, ph)
    uu = Y[:, : u.size] @ u
    f = g(uu) * eta_val * Y[:, sh.lm_index(lp, mp)]
    return (Y[:, : sh.n_coeffs(L)] * (f * grid.weights.ravel())[:, None]).sum(axis=0)


def test_nemytskii_examples():
    u = np.linspace(-1, 1, 12).reshape(3, 4)
    spec = NoiseSpec.uniform(identity(), 2)
    np.testing.assert_array_equal(apply_nemytskii(spec, u), u)
    np.testing.assert_array_equal(apply_nemytskii(NoiseSpec.uniform(constant(2.5), 2), u), np.full((3, 4), 2.5))


def test_nemytskii_lipschitz():
    rng = np.random.default_rng(0)
    grid = sh.build_grid(8)
    g = Affine(-1.7, 0.3)
    spec = NoiseSpec.uniform(g, 1)
    for _ in range(10):
        u, v = rng.standard_normal((2, sh.n_coeffs(5)))
        fu, fv = sh.synthesize(u, grid), sh.synthesize(v, grid)
        lhs = np.sqrt(sh.integrate((apply_nemytskii(spec, fu) - apply_nemytskii(spec, fv)) ** 2, grid))
        assert lhs <= g.derivative_bound * sh.norm(u - v) * (1 + 1e-12)


def test_parse_g():
    assert parse_g("identity") == Affine(1.0, 0.0)
    assert parse_g("constant:2") == Affine(0.0, 2.0)
    assert parse_g("affine:0.5,-1") == Affine(0.5, -1.0)
    for text in ("identity:1", "affine:1", "cubic:1", "constant:x"):
        with pytest.raises(ValueError):
            parse_g(text)
    assert str(parse_g("affine:0.5,-1")) == "affine:0.5,-1.0"


def test_projection_with_constant_g():
    L = 5
    eta = np.random.default_rng(1).uniform(0.5, 2, sh.n_coeffs(3))
    spec = NoiseSpec(constant(1.0), eta)
    u = np.random.default_rng(2).standard_normal(sh.n_coeffs(4))
    grid = sh.grid_for_degree(4 + 3 + L)
    out = noise_projection(spec, u, (3, -2), L, grid)
    np.testing.assert_allclose(out, eta[sh.lm_index(3, -2)] * sh.unit(3, -2, L), atol=1e-13)


def test_projection_with_unit_field():
    spec = NoiseSpec.uniform(identity(), 2, 0.7)
    u = 2 * np.sqrt(np.pi) * sh.unit(0, 0)
    grid = sh.grid_for_degree(6, 4)
    np.testing.assert_allclose(noise_projection(spec, u, (2, 1), 4, grid), 0.7 * sh.unit(2, 1, 4), atol=1e-13)


def test_projection_matches_triple_product():
    rng = np.random.default_rng(3)
    g = Affine(0.8, -0.2)
    spec = NoiseSpec(g, rng.uniform(-1, 1, sh.n_coeffs(3)))
    u = rng.standard_normal(sh.n_coeffs(8))
    grid = sh.grid_for_degree(8 + 3 + 8)
    for lp, mp in [(0, 0), (1, -1), (2, 2), (3, 0)]:
        out = noise_projection(spec, u, (lp, mp), 8, grid)
        expect = triple_product_oracle(u, lp, mp, 8, g, spec.eta[sh.lm_index(lp, mp)])
        np.testing.assert_allclose(out, expect, atol=1e-10)


def test_projection_refuses_coarse_grid():
    spec = NoiseSpec.uniform(identity(), 2)
    with pytest.raises(ValueError):
        noise_projection(spec, np.zeros(sh.n_coeffs(4)), (2, 0), 4, sh.grid_for_degree(9))
    with pytest.raises(ValueError):
        noise_projection(spec, np.zeros(1), (3, 0), 2, sh.grid_for_degree(20))


@pytest.mark.parametrize("lp", range(5))
def test_projection_identity(lp):
    # sum over m' and all l of <f Y_l'm', Y_lm>^2 equals (2l'+1)/(4 pi) ||f||^2
    f = np.random.default_rng(10 + lp).standard_normal(sh.n_coeffs(6))
    big = 6 + lp
    spec = NoiseSpec.uniform(identity(), lp)
    grid = sh.grid_for_degree(6 + lp + big)
    total = sum(np.sum(noise_projection(spec, f, (lp, mp), big, grid) ** 2) for mp in range(-lp, lp + 1))
    assert total == pytest.approx((2 * lp + 1) / (4 * np.pi) * sh.norm(f) ** 2, abs=1e-8)


def _random_groups(rng, Lam, P, state_deg, n_groups):
    modes = rng.permutation(sh.n_coeffs(Lam))
    cuts = np.sort(rng.choice(np.arange(1, modes.size), n_groups - 1, replace=False)) if n_groups > 1 else []
    groups = []
    for part in np.split(modes, cuts):
        groups.append(NoiseGroup(rng.standard_normal((P, sh.n_coeffs(state_deg))), np.sort(part),
                                 rng.standard_normal((P, part.size)), rng.uniform(0.2, 1, state_deg + 1)))
    return groups


def test_single_mode_constant_g():
    spec = NoiseSpec.uniform(constant(1.0), 2)
    grp = NoiseGroup(np.zeros(sh.n_coeffs(3)), np.array([sh.lm_index(2, 1)]), np.array([0.37]))
    out = assemble_noise_increment(spec, [grp], 3, sh.grid_for_degree(8))
    np.testing.assert_allclose(out, 0.37 * sh.unit(2, 1, 3), atol=1e-14)


def test_zero_increments_give_zero():
    rng = np.random.default_rng(0)
    spec = NoiseSpec.uniform(identity(), 2)
    grp = NoiseGroup(rng.standard_normal(sh.n_coeffs(4)), np.arange(9), np.zeros(9))
    assert not np.any(assemble_noise_increment(spec, [grp], 4, sh.grid_for_degree(10)))


def test_inconsistent_grouping_refused():
    spec = NoiseSpec.uniform(identity(), 1)
    u = np.zeros(4)
    grid = sh.grid_for_degree(5)
    dup = [NoiseGroup(u, np.array([0, 1]), np.ones(2)), NoiseGroup(u, np.array([1]), np.ones(1))]
    with pytest.raises(ValueError):
        assemble_noise_increment(spec, dup, 1, grid)
    with pytest.raises(ValueError):
        assemble_noise_increment(spec, [NoiseGroup(u, np.array([0, 1]), np.ones(3))], 1, grid)
    with pytest.raises(ValueError):
        assemble_noise_increment(spec, [NoiseGroup(u, np.array([7]), np.ones(1))], 1, grid)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), Lam=st.integers(0, 3), L=st.integers(0, 6),
       n_groups=st.integers(1, 3), a=st.floats(-2, 2), b=st.floats(-2, 2))
def test_grouped_assembly_equals_per_mode_sum(seed, Lam, L, n_groups, a, b):
    rng = np.random.default_rng(seed)
    n_groups = min(n_groups, sh.n_coeffs(Lam))
    spec = NoiseSpec(Affine(a, b), rng.uniform(-1.5, 1.5, sh.n_coeffs(Lam)))
    groups = _random_groups(rng, Lam, 2, L, n_groups)
    grid = sh.grid_for_degree(2 * L + Lam, max(L, Lam))
    fast = assemble_noise_increment(spec, groups, L, grid)
    slow = assemble_noise_increment(spec, groups, L, grid, per_mode=True)
    np.testing.assert_allclose(fast, slow, atol=1e-10)


def test_lipschitz_constant_examples():
    q = power_law_spectrum()
    assert lipschitz_constant(NoiseSpec.uniform(constant(3.0), 2), q) == 0.0
    unit_trace = AngularPowerSpectrum([4 * np.pi])
    assert lipschitz_constant(NoiseSpec.uniform(identity(), 0), unit_trace) == pytest.approx(1.0)
    expect = np.sqrt(q.trace() / (4 * np.pi))
    assert lipschitz_constant(NoiseSpec.uniform(identity(), 10), q) == pytest.approx(expect)
    # the derivative bound enters unsquared
    spec = NoiseSpec.uniform(Affine(4.0, 0.0), 10, 0.5)
    assert lipschitz_constant(spec, q) == pytest.approx(np.sqrt(q.trace() * 4.0 / (4 * np.pi) * 0.25))
    with pytest.raises(ValueError):
        lipschitz_constant(NoiseSpec.uniform(Pointwise(np.tanh), 1), q)


def test_linear_growth():
    rng = np.random.default_rng(5)
    q = power_law_spectrum(ell_max=4)
    for g in (identity(), constant(2.0), Affine(-0.7, 1.3)):
        spec = NoiseSpec(g, rng.uniform(-1, 1, sh.n_coeffs(4)))
        c = growth_constant(spec, q)
        grid = sh.grid_for_degree(2 * 6 + 4 + 2)
        for _ in range(5):
            u = rng.standard_normal(sh.n_coeffs(6)) * rng.uniform(0.01, 10)
            assert hilbert_schmidt_norm(spec, q, u, grid) <= c * (1 + sh.norm(u))


def test_hilbert_schmidt_norm_with_unit_multipliers():
    # with eta = 1 the addition theorem collapses the sum to Tr Q / (4 pi) * ||g(u)||^2
    q = power_law_spectrum(ell_max=3)
    u = np.random.default_rng(8).standard_normal(sh.n_coeffs(4))
    grid = sh.grid_for_degree(12)
    val = hilbert_schmidt_norm(NoiseSpec.uniform(identity(), 3), q, u, grid)
    assert val**2 == pytest.approx(q.trace() / (4 * np.pi) * sh.norm(u) ** 2, rel=1e-12)
