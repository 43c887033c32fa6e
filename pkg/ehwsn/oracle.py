# brute-force reference optimiser and convexity probe for tiny slot problems
import itertools
import logging
from dataclasses import dataclass

import numpy as np

from ehwsn.errors import DimensionError, InfeasibleProblemError
from ehwsn.feasibility import check_problem_feasible, min_power_vector
from ehwsn.helpers import offdiag
from ehwsn.solver import objective_logdomain

logger = logging.getLogger(__name__)

MAX_LINKS = 3
MAX_ENERGY_LINKS = 2


@dataclass(frozen=True)
class GridSpec:
    """
    Resolution of the oracle: samples per log-power axis, samples per transfer axis and the number of step halvings
    of the local refinement.
    """
    power_points: int = 21
    transfer_points: int = 6
    refinements: int = 20


@dataclass(frozen=True)
class OracleResult:
    p: np.ndarray
    ptilde: np.ndarray
    x: np.ndarray
    objective: float
    evaluations: int


def objective_batch(problem, Y):
    """
    Log-domain total delay of many points at once.

    :param problem: SlotProblem
    :param Y: ndarray [n, L], log-powers
    :return: (values [n], smallest capacity margin [n]); values are +inf outside the domain
    """
    ch = problem.channel
    P = np.exp(Y)
    I = ch.sigma[None, :] + P @ offdiag(ch.G)
    u = 0.5 * (Y + np.log(ch.direct)[None, :] - np.log(I)) - problem.d[None, :]
    umin = u.min(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = np.where(umin > 0, np.sum(problem.d[None, :] / np.where(u > 0, u, 1.), axis=1), np.inf)
    return f, umin


def power_caps(problem, transfer=None):
    """
    Largest power each link could use: its owner's energy plus everything the owner could receive.

    :param problem: SlotProblem
    :param transfer: bool, count incoming transfers (default: when the problem has energy links)
    :return: ndarray [L]
    """
    if transfer is None:
        transfer = problem.n_energy > 0
    available = problem.E.copy()
    if transfer:
        for (i, j), eta in zip(problem.energy_links, problem.efficiency):
            available[problem.row[j]] += eta * problem.E[problem.row[i]]
    return available[problem.owner]


def repair_transfers(problem, p, transfer=True, tol=1e-12):
    """
    Smallest transfers that cover the energy deficit of every node at powers p, drawing greedily on the most
    efficient incoming energy links first.

    :param problem: SlotProblem
    :param p: array-like [L], powers
    :param transfer: bool, allow transfers
    :param tol: float, budget tolerance
    :return: ndarray [Q] or None when the deficits cannot be covered
    """
    m = problem.matrices
    x = np.zeros(problem.n_energy)
    residual = problem.E - m.K @ p
    if transfer:
        for r in np.flatnonzero(residual < 0):
            incoming = [q for q, (_, j) in enumerate(problem.energy_links) if problem.row[j] == r]
            incoming.sort(key=lambda q: -problem.efficiency[q])
            for q in incoming:
                eta = problem.efficiency[q]
                donor = problem.row[problem.energy_links[q][0]]
                residual = problem.E - m.K @ p - m.B @ x
                if residual[r] >= 0 or eta <= 0:
                    break
                give = min(-residual[r] / eta, max(residual[donor], 0.))
                x[q] += give
    residual = problem.E - m.K @ p - m.B @ x
    if np.any(residual[problem.budget] < -tol):
        return None
    return x


def _witness_start(problem, transfer):
    report = check_problem_feasible(problem, transfer=transfer)
    if not report.feasible:
        reason = "; ".join(report.reasons) or "no strictly feasible point"
        raise InfeasibleProblemError(f"Empty feasible grid, {reason}", report=report)
    x = repair_transfers(problem, report.witness_p, transfer=transfer)
    if x is None:
        x = np.asarray(report.witness_x, dtype=float)
    return np.log(report.witness_p), x


def brute_force_solve(problem, grid=None, transfer=None):
    """
    Exhaustive grid search over log-powers and transfers followed by a local refinement that halves its step after
    every pass. Powers are log-spaced between the minimum powers and the largest power the owner could afford,
    transfers linearly spaced between 0 and the donor energy. Ties go to the first point in grid order. When no grid
    point is feasible the refinement starts from the strictly feasible witness of the feasibility check. The
    refinement tries every move in {-1, 0, 1}^L with a common step on all axes.

    :param problem: SlotProblem with at most 3 links and 2 energy links
    :param grid: GridSpec (default: GridSpec())
    :param transfer: bool, allow transfers (default: when the problem has energy links)
    :return: OracleResult
    """
    grid = grid or GridSpec()
    if transfer is None:
        transfer = problem.n_energy > 0
    L = problem.n_links
    Q = problem.n_energy if transfer else 0
    if L > MAX_LINKS or Q > MAX_ENERGY_LINKS:
        raise DimensionError(
            f"Oracle handles at most {MAX_LINKS} links and {MAX_ENERGY_LINKS} energy links, got {L} and {Q}"
        )
    p_min = min_power_vector(problem.channel, problem.d, high_sinr=True).p
    cap = power_caps(problem, transfer)
    if np.any(cap <= p_min):
        raise InfeasibleProblemError("Empty feasible grid, a link cannot afford its minimum power")
    lo = np.log(p_min)
    hi = np.log(cap)
    axes = [np.linspace(lo[l], hi[l], grid.power_points) for l in range(L)]
    if Q:
        axes += [
            np.linspace(0., problem.E[problem.row[i]], grid.transfer_points)
            for i, _ in problem.energy_links
        ]
    Z = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, L + Q)
    Y = Z[:, :L]
    X = Z[:, L:] if Q else np.zeros((len(Z), problem.n_energy))
    values, _ = objective_batch(problem, Y)
    m = problem.matrices
    rows = problem.budget
    slack = problem.E[None, rows] - np.exp(Y) @ m.K[rows].T - X @ m.B[rows].T
    values = np.where(np.all(slack >= -1e-12, axis=1), values, np.inf)
    evaluations = len(values)
    best = int(np.argmin(values))
    if np.isfinite(values[best]):
        y = Y[best].copy()
        x = X[best].copy()
        value = float(values[best])
        logger.debug(f"Grid best {value:.10g} after {evaluations} evaluations")
    else:
        # strongly coupled links: the feasible set may lie between grid points
        y, x = _witness_start(problem, bool(Q))
        value = float(objective_batch(problem, y[None, :])[0][0])
        evaluations += 1
        logger.debug(f"No feasible grid point, refining from the feasibility witness ({value:.10g})")

    # one step for every axis, so that diagonal moves keep the power ratios
    step = np.full(L, np.max(hi - lo) / max(grid.power_points - 1, 1))
    moves = np.array([mv for mv in itertools.product((-1., 0., 1.), repeat=L) if any(mv)])
    for _ in range(grid.refinements):
        for _ in range(200):
            candidates = y[None, :] + moves * step[None, :]
            cand_values, _ = objective_batch(problem, candidates)
            evaluations += len(candidates)
            improved = False
            for k in np.argsort(cand_values, kind="stable"):
                if not cand_values[k] < value:
                    break
                x_new = repair_transfers(problem, np.exp(candidates[k]), transfer=bool(Q))
                if x_new is not None:
                    y = candidates[k]
                    x = x_new
                    value = float(cand_values[k])
                    improved = True
                    break
            if not improved:
                break
        step = step / 2.
    return OracleResult(
        p=np.exp(y),
        ptilde=y,
        x=x,
        objective=objective_logdomain(problem, y),
        evaluations=evaluations,
    )


def convexity_probe(problem, n_pairs, rng, domain="log", margin=1e-3, max_batches=100):
    """
    Largest midpoint convexity violation f((a + b) / 2) - (f(a) + f(b)) / 2 of the total delay over random pairs of
    points inside its domain. Points are drawn uniformly between 1.1 times the minimum powers and the power caps,
    in log-powers (domain "log") or in powers (domain "power"); half of the pairs differ in a single coordinate.

    :param problem: SlotProblem
    :param n_pairs: int, number of pairs
    :param rng: np.random.Generator
    :param domain: "log" or "power"
    :param margin: float, smallest capacity margin accepted at a, b and their midpoint
    :param max_batches: int, give up after this many batches of candidate pairs
    :return: float, max violation (positive values witness non-convexity)
    """
    if domain not in ("log", "power"):
        raise ValueError(f'domain must be "log" or "power", got "{domain}"')
    p_min = min_power_vector(problem.channel, problem.d, high_sinr=True).p
    lo = 1.1 * p_min
    hi = power_caps(problem)
    if np.any(hi <= lo):
        raise InfeasibleProblemError("Power caps are below the minimum powers")
    if domain == "log":
        lo, hi = np.log(lo), np.log(hi)
    L = problem.n_links

    def to_log(V):
        return V if domain == "log" else np.log(V)

    violations = []
    for _ in range(max_batches):
        a = rng.uniform(lo, hi, size=(n_pairs, L))
        b = rng.uniform(lo, hi, size=(n_pairs, L))
        axis = rng.random(n_pairs) < 0.5
        k = rng.integers(L, size=n_pairs)
        single = a.copy()
        single[np.arange(n_pairs), k] = b[np.arange(n_pairs), k]
        b = np.where(axis[:, None], single, b)
        mid = 0.5 * (a + b)
        fa, ua = objective_batch(problem, to_log(a))
        fb, ub = objective_batch(problem, to_log(b))
        fm, um = objective_batch(problem, to_log(mid))
        keep = (ua >= margin) & (ub >= margin) & (um >= margin) & np.any(a != b, axis=1)
        violations.extend((fm - 0.5 * (fa + fb))[keep])
        if len(violations) >= n_pairs:
            break
    if not violations:
        raise InfeasibleProblemError("No pair of points inside the domain was found")
    return float(np.max(violations[:n_pairs]))
