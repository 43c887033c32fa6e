import numpy as np
from ehwsn import consts


def make_rng(seed, *keys):
    """
    Make a numpy random generator for a seed stream, optionally split by keys (e.g. a slot index), so that
    each slot draws from its own reproducible stream.

    :param seed: int, seed of the stream
    :param keys: ints, further entropy such as the slot index
    :return: np.random.Generator
    """
    if seed is None:
        raise ValueError("A seed is required to sample random quantities")
    if keys:
        return np.random.default_rng([int(seed)] + [int(k) for k in keys])
    return np.random.default_rng(int(seed))


def spectral_radius(M, tol=consts.SPECTRAL_TOL, max_iter=consts.SPECTRAL_MAX_ITER):
    """
    Perron root of a nonnegative square matrix by power iteration. The iteration runs on M + I, which is
    aperiodic, so that periodic (e.g. off-diagonal only) matrices converge as well.

    :param M: ndarray [n, n], nonnegative entries
    :param tol: float, convergence tolerance on the eigenvalue estimate
    :param max_iter: int, iteration cap
    :return: float, spectral radius of M
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    if n == 0:
        return 0.
    if np.any(M < 0):
        raise ValueError("Power iteration for the Perron root requires a nonnegative matrix")
    S = M + np.eye(n)
    v = np.ones(n) / np.sqrt(n)
    rho = 0.
    for _ in range(max_iter):
        w = S @ v
        norm = np.linalg.norm(w)
        if norm == 0.:
            return 0.
        rho_new = v @ w
        v = w / norm
        if abs(rho_new - rho) <= tol * max(1., abs(rho_new)):
            rho = rho_new
            break
        rho = rho_new
    return max(float(rho) - 1., 0.)


def offdiag(G):
    """
    Copy of a square matrix with the diagonal set to zero.

    :param G: ndarray [n, n]
    :return: ndarray [n, n]
    """
    G = np.array(G, dtype=float)
    np.fill_diagonal(G, 0.)
    return G


def spread(values):
    """
    Max minus min of a set of values, 0 for fewer than two values.

    :param values: array-like
    :return: float
    """
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return 0.
    return float(values.max() - values.min())
