"""Independent reference computations used by the tests.

Nothing here calls into the estimators under test; everything is naive
arithmetic, extended precision or brute-force quadrature.
"""

import mpmath as mp
import numpy as np
from numpy.polynomial.hermite import hermgauss


def naive_log_likelihood(dataset, theta, b, a=None):
    """Sum of log p / log(1 - p) with p formed explicitly, in a fixed loop order."""
    total = 0.0
    for j, i, y in zip(dataset.subject_index, dataset.item_index, dataset.response):
        slope = 1.0 if a is None else a[i]
        p = 1.0 / (1.0 + np.exp(-slope * (theta[j] - b[i])))
        total += np.log(p) if y == 1 else np.log(1.0 - p)
    return total


def mp_e_step_posterior(matrix, b, nodes, weights, dps=50):
    """Normalised posterior over nodes per subject (1PL), in mpmath."""
    mp.mp.dps = dps
    out = []
    for row in matrix:
        terms = []
        for x, w in zip(nodes, weights):
            lik = mp.mpf(w)
            for i, y in enumerate(row):
                if y < 0:
                    continue
                p = 1 / (1 + mp.e ** (-(mp.mpf(x) - mp.mpf(b[i]))))
                lik *= p if y == 1 else 1 - p
            terms.append(lik)
        total = mp.fsum(terms)
        out.append([float(t / total) for t in terms])
    return np.array(out)


def brute_force_marginal_loglik(matrix, b, n_nodes=41, a=None):
    """1PL/2PL marginal log-likelihood by direct per-subject node sums with naive probabilities."""
    x, w = hermgauss(n_nodes)
    nodes, weights = x * np.sqrt(2.0), w / np.sqrt(np.pi)
    weights = weights / weights.sum()
    total = 0.0
    for row in matrix:
        marg = 0.0
        for node, weight in zip(nodes, weights):
            lik = weight
            for i, y in enumerate(row):
                if y < 0:
                    continue
                slope = 1.0 if a is None else a[i]
                p = 1.0 / (1.0 + np.exp(-slope * (node - b[i])))
                lik *= p if y == 1 else 1.0 - p
            marg += lik
        total += np.log(marg)
    return total


def _sig(x):
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def _item_factor(matrix, t1, t2, n_b):
    """prod_i int N(b; 0, 1) prod_j p(z_ji | theta_j, b) db on a grid of (theta_1, theta_2)."""
    xb, wb = hermgauss(n_b)
    b_nodes, b_w = xb * np.sqrt(2.0), wb / np.sqrt(np.pi)
    f = np.ones(np.broadcast(t1, t2).shape)
    for i in range(2):
        lik = 1.0
        for t, y in ((t1, matrix[0, i]), (t2, matrix[1, i])):
            p = _sig(t[..., None] - b_nodes)
            if y == 1:
                lik = lik * p
            elif y == 0:
                lik = lik * (1.0 - p)
        f = f * np.sum(lik * b_w, axis=-1)
    return f


def log_evidence_2x2(matrix, hierarchical=True, n_b=80, n_theta=200, n_mu=60, spread=2.0):
    """log p(Z) for a 1PL model with two subjects and two items.

    b_i ~ N(0, 1). Without the hierarchy theta_j ~ N(0, 1) iid and the
    theta integral is a tensor Gauss-Hermite rule. With it,
    theta | mu, tau ~ N(mu, 1/tau), mu ~ N(0, 1), tau ~ Gamma(1, 1); tau is
    integrated in closed form,

        int Gamma(tau; 1, 1) prod_j N(theta_j; mu, 1/tau) dtau = (1 + S/2)^-2 / (2 pi),

    with S = sum_j (theta_j - mu)^2, mu by Gauss-Hermite, and the
    heavy-tailed theta marginal by Gauss-Legendre after theta = spread * tan(phi).
    """
    matrix = np.asarray(matrix)
    if not hierarchical:
        xt, wt = hermgauss(n_theta)
        u, wu = xt * np.sqrt(2.0), wt / np.sqrt(np.pi)
        T1, T2 = np.meshgrid(u, u, indexing="ij")
        return float(np.log(np.sum(np.outer(wu, wu) * _item_factor(matrix, T1, T2, n_b))))

    xg, wg = np.polynomial.legendre.leggauss(n_theta)
    phi = xg * np.pi / 2.0
    theta = spread * np.tan(phi)
    jac = wg * (np.pi / 2.0) * spread / np.cos(phi) ** 2
    T1, T2 = np.meshgrid(theta, theta, indexing="ij")
    xm, wm = hermgauss(n_mu)
    mu, w_mu = xm * np.sqrt(2.0), wm / np.sqrt(np.pi)
    density = np.zeros_like(T1)
    for m, w in zip(mu, w_mu):
        s = (T1 - m) ** 2 + (T2 - m) ** 2
        density += w * (1.0 + 0.5 * s) ** -2 / (2.0 * np.pi)
    mass = np.outer(jac, jac) * density
    return float(np.log(np.sum(mass * _item_factor(matrix, T1, T2, n_b))))


def central_difference(f, x, h=1e-5):
    return (f(x + h) - f(x - h)) / (2.0 * h)
