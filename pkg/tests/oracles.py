"""Independent reference implementations of the time-stepping scheme."""
import numpy as np

from spheat import harmonics as sh
from spheat.timegrid import gamma


def projection_tensor(L, Lambda):
    # T[a, b, j] = integral of Y_a Y_b Y_j by pointwise evaluation on a fine product grid
    grid = sh.build_grid(2 * L + Lambda + 2)
    th, ph = (v.ravel() for v in grid.mesh())
    Y = sh.ylm_matrix(max(L, Lambda), th, ph)
    Ya, Yj = Y[:, : sh.n_coeffs(L)], Y[:, : sh.n_coeffs(Lambda)]
    return np.einsum("q,qa,qb,qj->abj", grid.weights.ravel(), Ya, Ya, Yj)


def noise_matrix(cfg, x, T):
    # column j: sqrt(A_l') <g(x) eta_j Y_j, Y_a> for affine g
    g = cfg.noise.g
    cols = g.a * np.einsum("abj,b->aj", T, x) + g.b * np.eye(x.size, T.shape[2])
    return cols * cfg.noise.eta * np.sqrt(cfg.spectrum.per_mode(cfg.Lambda))


def closed_form_oracle(cfg, table, p=0):
    """Evaluate every breakpoint from xi and the increments of the per-degree grids."""
    tg, L = cfg.time_grid, cfg.L
    ells, _ = sh.lm_table(L)
    T = projection_tensor(L, cfg.Lambda)
    X = np.zeros((tg.K + 1, sh.n_coeffs(L)))
    X[0] = cfg.xi
    G = lambda t: np.array([gamma(int(l), t, tg) for l in ells])
    for k in range(1, tg.K + 1):
        t = tg.tau[k]
        X[k] = G(t) * cfg.xi
        for lp in range(cfg.Lambda + 1):
            nodes = tg.node_index[lp]
            modes = np.arange(lp * lp, (lp + 1) ** 2)
            for j in range(1, len(nodes)):
                if nodes[j] > k:
                    break
                a, b = nodes[j - 1], nodes[j]
                dw = table.fine[p, a:b][:, modes].sum(axis=0)
                B = noise_matrix(cfg, X[a], T)[:, modes]
                X[k] += G(t) / G(tg.tau[a]) * (B @ dw)
    return X


def uniform_implicit_em(cfg, table, p=0):
    """Classic implicit Euler-Maruyama with one step size for all degrees."""
    n = cfg.time_grid.n[0]
    dt = 1.0 / n
    ells, _ = sh.lm_table(cfg.L)
    T = projection_tensor(cfg.L, cfg.Lambda)
    x = cfg.xi.copy()
    out = [x]
    for k in range(n):
        x = (x + noise_matrix(cfg, x, T) @ table.fine[p, k]) / (1.0 + dt * ells * (ells + 1.0))
        out.append(x)
    return np.array(out)
