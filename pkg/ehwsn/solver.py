# Per-slot delay minimisation. Powers enter through their logarithm y = log(p), in which the high-SINR capacities
# are concave and the total delay is convex; the problem is solved with a primal log-barrier method.
import logging
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy.optimize import linprog

from ehwsn import consts
from ehwsn.channel import (
    ChannelState,
    capacity_approx,
    capacity_exact,
    interference_weights,
    sinr,
    total_delay,
)
from ehwsn.energy import EnergyState, check_energy_budget
from ehwsn.errors import (
    ConfigError,
    ConvergenceError,
    DimensionError,
    InfeasibleProblemError,
    RateInfeasibleError,
    TopologyError,
)
from ehwsn.feasibility import check_problem_feasible
from ehwsn.helpers import spread
from ehwsn.network import incidence_from_links

logger = logging.getLogger(__name__)


class SlotProblem:
    def __init__(
        self,
        data_links,
        d,
        channel,
        energy,
        energy_links=(),
        efficiency=None,
        labels=None,
        half_duplex=True,
    ):
        """
        Delay minimisation problem of one time slot.

        :param data_links: list of (transmitter, receiver) pairs of the active data links
        :param d: array-like [L], flow per active link
        :param channel: ChannelState over the active links
        :param energy: EnergyState or dict {node: energy}, must cover every transmitter, donor and recipient
        :param energy_links: list of (donor, recipient) pairs usable in this slot
        :param efficiency: list of float, transfer efficiency per energy link (default: 0.6)
        :param labels: list of str, link labels (default: "l<transmitter>")
        :param half_duplex: bool, require node-disjoint data links (default: True)
        """
        self.data_links = tuple((int(i), int(j)) for i, j in data_links)
        self.d = np.array(d, dtype=float, ndmin=1)
        self.channel = channel
        self.energy_links = tuple((int(i), int(j)) for i, j in energy_links)
        if efficiency is None:
            efficiency = [consts.EFFICIENCY] * len(self.energy_links)
        self.efficiency = np.array(efficiency, dtype=float, ndmin=1)
        if labels is None:
            labels = [f"l{i}" for i, _ in self.data_links]
        self.labels = list(labels)
        if not isinstance(energy, EnergyState):
            energy = EnergyState(energy, battery=max([consts.BATTERY] + list(energy.values())))
        self.energy = energy
        L = len(self.data_links)
        if self.d.shape != (L,):
            raise DimensionError(f"{self.d.shape[0]} flows given for {L} data links")
        if channel.n_links != L:
            raise DimensionError(f"Channel covers {channel.n_links} links, problem has {L} data links")
        if len(self.efficiency) != len(self.energy_links) or len(self.labels) != L:
            raise DimensionError("Efficiencies or labels do not match the links")
        if np.any(self.d < 0):
            raise ValueError("Flows must be nonnegative")
        if half_duplex:
            endpoints = [n for link in self.data_links for n in link]
            for link in self.data_links:
                if endpoints.count(link[0]) > 1 or endpoints.count(link[1]) > 1:
                    raise TopologyError("Active data links are not node-disjoint", link=link)
        self.nodes = tuple(sorted({n for link in self.data_links + self.energy_links for n in link}))
        self.row = {n: k for k, n in enumerate(self.nodes)}
        self.matrices = incidence_from_links(self.nodes, self.data_links, self.energy_links, self.efficiency)
        for link in self.data_links:
            if link[0] not in energy:
                raise TopologyError(f"Transmitter {link[0]} has no energy budget", link=link)
        for link in self.energy_links:
            for n in link:
                if n not in energy:
                    raise TopologyError(f"Node {n} of an energy link has no energy budget", link=link)
        self.E = energy.vector(self.nodes)
        self.owner = np.array([self.row[i] for i, _ in self.data_links], dtype=int)

    @property
    def n_links(self):
        return len(self.data_links)

    @property
    def n_energy(self):
        return len(self.energy_links)

    @property
    def budget(self):
        """
        Rows of the nodes that transmit, donate or receive energy.
        """
        m = self.matrices
        return np.flatnonzero((m.K != 0).any(axis=1) | (m.B != 0).any(axis=1))

    def without_transfer(self):
        return SlotProblem(self.data_links, self.d, self.channel, self.energy, labels=self.labels, half_duplex=False)

    def with_channel(self, channel):
        return SlotProblem(
            self.data_links,
            self.d,
            channel,
            self.energy,
            self.energy_links,
            self.efficiency,
            labels=self.labels,
            half_duplex=False,
        )

    def to_dict(self):
        return {
            "data_links": [list(link) for link in self.data_links],
            "labels": self.labels,
            "flows": self.d.tolist(),
            "gains": self.channel.G.tolist(),
            "noise": self.channel.sigma.tolist(),
            "energy": {str(n): e for n, e in self.energy.energy.items()},
            "battery": self.energy.battery,
            "energy_links": [list(link) for link in self.energy_links],
            "efficiency": self.efficiency.tolist(),
        }

    @classmethod
    def from_dict(cls, d):
        energy = EnergyState({int(n): e for n, e in d["energy"].items()}, battery=d.get("battery", consts.BATTERY))
        return cls(
            data_links=d["data_links"],
            d=d["flows"],
            channel=ChannelState(d["gains"], d["noise"]),
            energy=energy,
            energy_links=d.get("energy_links", []),
            efficiency=d.get("efficiency", None),
            labels=d.get("labels", None),
            half_duplex=False,
        )


@dataclass(frozen=True)
class SolverOptions:
    mu0: float = 1.
    mu_factor: float = 10.
    tol: float = 1e-8
    newton_tol: float = 1e-20
    max_newton: int = 100
    max_outer: int = 60
    armijo: float = 1e-4
    backtrack: float = 0.5
    rate_margin: float = 1e-9
    transfer_penalty: float = 1e-9
    sinr_threshold: float = consts.SINR_THRESHOLD

    @classmethod
    def from_dict(cls, d):
        names = {f.name: f.type for f in fields(cls)}
        unknown = set(d) - set(names)
        if unknown:
            raise ConfigError(f"Unknown solver options {sorted(unknown)}")
        try:
            opts = cls(**{k: (int(v) if k.startswith("max_") else float(v)) for k, v in d.items()})
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid solver option: {e}")
        if opts.mu0 <= 0 or opts.mu_factor <= 1 or opts.tol <= 0 or not (0 < opts.backtrack < 1):
            raise ConfigError("Solver options out of range: mu0 > 0, mu_factor > 1, tol > 0, 0 < backtrack < 1")
        return opts


@dataclass(frozen=True)
class Solution:
    """
    Optimal powers and transfers of a slot problem, the per-link figures they give and the dual multipliers: lam per
    node (row order of the problem), beta per rate constraint and gamma per energy link.
    """
    p: np.ndarray
    ptilde: np.ndarray
    x: np.ndarray
    sinr: np.ndarray
    capacity_approx: np.ndarray
    capacity_exact: np.ndarray
    delay: np.ndarray
    objective: float
    exact_objective: float
    lam: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    rate_multiplier: float = 0.
    transfer: bool = False
    transfer_penalty: float = 0.
    newton_steps: int = 0
    outer_steps: int = 0
    mu: float = 0.
    termination: str = ""
    low_sinr: tuple = ()

    def to_dict(self):
        out = {}
        for k, v in asdict(self).items():
            out[k] = v.tolist() if isinstance(v, np.ndarray) else v
        out["low_sinr"] = list(self.low_sinr)
        return out

    @classmethod
    def from_dict(cls, d):
        kwargs = {}
        for f in fields(cls):
            if f.name not in d:
                continue
            v = d[f.name]
            kwargs[f.name] = np.asarray(v, dtype=float) if isinstance(v, list) and f.name != "low_sinr" else v
        kwargs["low_sinr"] = tuple(d.get("low_sinr", ()))
        return cls(**kwargs)


@dataclass(frozen=True)
class KktReport:
    """
    Optimality residuals of a solution. `stationarity` holds the Lagrangian gradient per variable (log-powers, then
    transfers), `complementary` the multiplier-slack products (budgets, rate constraints, transfers). The marginal of
    a link is the delay decrease per unit of extra power, which equals the budget multiplier of its owner at the
    optimum. `relative_stationarity` is the power part of the Lagrangian gradient divided by the size of its delay
    and budget terms, plus a floor of consts.REL_STATIONARITY_FLOOR times the largest delay sensitivity of the slot.
    """
    stationarity: np.ndarray
    complementary: np.ndarray
    max_rate_multiplier: float
    marginal: np.ndarray
    lambda_residual: np.ndarray
    max_marginal_spread: float = None
    relative_stationarity: np.ndarray = None

    @property
    def max_stationarity(self):
        return float(np.abs(self.stationarity).max(initial=0.))

    @property
    def max_relative_stationarity(self):
        if self.relative_stationarity is None:
            return 0.
        return float(np.max(self.relative_stationarity, initial=0.))

    @property
    def max_complementary(self):
        return float(np.abs(self.complementary).max(initial=0.))

    @property
    def max_residual(self):
        return max(self.max_stationarity, self.max_complementary, float(self.lambda_residual.max(initial=0.)))

    def ok(self, tol=1e-5, rel_tol=1e-3):
        spread_ok = self.max_marginal_spread is None or self.max_marginal_spread <= tol
        return self.max_residual <= tol and self.max_relative_stationarity <= rel_tol and spread_ok

    def summary(self):
        return {
            "max_stationarity": self.max_stationarity,
            "max_relative_stationarity": self.max_relative_stationarity,
            "max_complementary": self.max_complementary,
            "max_rate_multiplier": self.max_rate_multiplier,
            "max_marginal_spread": self.max_marginal_spread,
            "max_lambda_residual": float(self.lambda_residual.max(initial=0.)),
        }


def _rate_terms(problem, ptilde):
    c = capacity_approx(problem.channel, ptilde)
    W = interference_weights(problem.channel, ptilde)
    return c, c - problem.d, W


def objective_logdomain(problem, ptilde):
    """
    Total delay sum d_l / (c_l - d_l) with high-SINR capacities, as a function of the log-powers. Returns +inf outside
    the domain, i.e. where some link cannot carry its flow.

    :param problem: SlotProblem
    :param ptilde: array-like [L], log-powers
    :return: float
    """
    ptilde = np.asarray(ptilde, dtype=float)
    u = capacity_approx(problem.channel, ptilde) - problem.d
    if np.any(~(u > 0)):
        short = [label for label, u_l in zip(problem.labels, u) if not u_l > 0]
        logger.debug(f"Capacity does not exceed flow on {short}")
        return np.inf
    return float(np.sum(problem.d / u))


def gradient_logdomain(problem, ptilde):
    """
    Gradient of the log-domain total delay. Raising one power increases the capacity of its own link and lowers the
    capacity of every link it interferes with; both effects are included.

    :param problem: SlotProblem
    :param ptilde: array-like [L], log-powers inside the domain
    :return: ndarray [L]
    """
    _, u, W = _rate_terms(problem, ptilde)
    a = -problem.d / u ** 2
    Jc = 0.5 * (np.eye(problem.n_links) - W.T)
    return Jc.T @ a


def hessian_logdomain(problem, ptilde):
    """
    Hessian of the log-domain total delay.

    :param problem: SlotProblem
    :param ptilde: array-like [L], log-powers inside the domain
    :return: ndarray [L, L]
    """
    _, u, W = _rate_terms(problem, ptilde)
    a = -problem.d / u ** 2
    Jc = 0.5 * (np.eye(problem.n_links) - W.T)
    return Jc.T @ np.diag(2 * problem.d / u ** 3) @ Jc - 0.5 * (np.diag(W @ a) - W @ np.diag(a) @ W.T)


def objective_power(problem, p):
    """
    Total delay as a function of the powers themselves; +inf for non-positive powers or outside the domain.

    :param problem: SlotProblem
    :param p: array-like [L], powers
    :return: float
    """
    p = np.asarray(p, dtype=float)
    if np.any(~(p > 0)):
        return np.inf
    return objective_logdomain(problem, np.log(p))


class _Barrier:
    """
    Barrier subproblem over z = (y, x_a): log-powers and the transfers of the usable energy links. Constraints are
    the budgets of the rows in `rows`, the rate margins c_l - d_l >= margin and x_a >= 0.
    """

    def __init__(self, problem, rows, active, options):
        self.problem = problem
        self.options = options
        self.L = problem.n_links
        self.rows = rows
        self.active = active
        self.K = problem.matrices.K[rows]
        self.B = problem.matrices.B[np.ix_(rows, active)]
        self.E = problem.E[rows]
        self.n_constraints = len(rows) + self.L + len(active)

    def split(self, z):
        return z[:self.L], z[self.L:]

    def slacks(self, z):
        y, x = self.split(z)
        c, u, W = _rate_terms(self.problem, y)
        s_b = self.E - self.K @ np.exp(y) - self.B @ x
        s_r = u - self.options.rate_margin
        return s_b, s_r, x, u, W

    def strictly_feasible(self, z):
        s_b, s_r, x, _, _ = self.slacks(z)
        return bool(np.all(s_b > 0) and np.all(s_r > 0) and np.all(x > 0))

    def value(self, z, mu):
        s_b, s_r, x, u, _ = self.slacks(z)
        if not (np.all(s_b > 0) and np.all(s_r > 0) and np.all(x > 0)):
            return np.inf
        f = np.sum(self.problem.d / u)
        barrier = np.log(s_b).sum() + np.log(s_r).sum() + np.log(x).sum()
        return f + self.options.transfer_penalty * x.sum() - mu * barrier

    def derivatives(self, z, mu):
        y, x = self.split(z)
        s_b, s_r, _, u, W = self.slacks(z)
        d = self.problem.d
        L = self.L
        ey = np.exp(y)
        a = -d / u ** 2
        Jc = 0.5 * (np.eye(L) - W.T)
        inv_b = 1. / s_b
        inv_r = 1. / s_r
        g = np.concatenate([
            Jc.T @ a + mu * (self.K.T @ inv_b) * ey - mu * Jc.T @ inv_r,
            self.options.transfer_penalty + mu * self.B.T @ inv_b - mu / x,
        ])
        n = len(z)
        H = np.zeros((n, n))
        H[:L, :L] = (
            Jc.T @ np.diag(2 * d / u ** 3) @ Jc - 0.5 * (np.diag(W @ a) - W @ np.diag(a) @ W.T)
            + mu * np.diag((self.K.T @ inv_b) * ey)
            + mu * Jc.T @ np.diag(inv_r ** 2) @ Jc
            + 0.5 * mu * (np.diag(W @ inv_r) - W @ np.diag(inv_r) @ W.T)
        )
        Js = np.hstack([self.K * ey[None, :], self.B])
        H += mu * Js.T @ np.diag(inv_b ** 2) @ Js
        H[L:, L:] += mu * np.diag(1. / x ** 2)
        return g, H

    def centre(self, z, mu):
        """
        Damped Newton minimisation of the barrier function for fixed mu.

        :return: (z, newton steps, gradient)
        """
        opts = self.options
        steps = 0
        g = None
        for _ in range(opts.max_newton):
            g, H = self.derivatives(z, mu)
            try:
                dz = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                dz = -g
            slope = g @ dz
            if not np.isfinite(slope) or slope >= 0:
                # not a descent direction
                dz = -g
                slope = -g @ g
            decrement = -slope / 2.
            if decrement <= opts.newton_tol:
                break
            phi0 = self.value(z, mu)
            quadratic = decrement < 1e-10
            t = 1.
            while True:
                z_new = z + t * dz
                phi = self.value(z_new, mu)
                if np.isfinite(phi) and (quadratic or phi <= phi0 + opts.armijo * t * slope):
                    break
                t *= opts.backtrack
                if t < 1e-20:
                    return z, steps, g
            steps += 1
            if np.array_equal(z_new, z):
                break
            z = z_new
        return z, steps, g

    def run(self, z):
        opts = self.options
        mu = opts.mu0
        total = 0
        for outer in range(1, opts.max_outer + 1):
            z, steps, g = self.centre(z, mu)
            total += steps
            y, _ = self.split(z)
            f = objective_logdomain(self.problem, y)
            residual = float(np.abs(g).max(initial=0.)) if g is not None else 0.
            if not np.isfinite(f) or not np.all(np.isfinite(z)):
                raise ConvergenceError(f"Barrier iterate left the domain at mu={mu:.3g}", iterate=z)
            logger.debug(
                f"barrier step {outer}: mu={mu:.3g}, objective={f:.10g}, residual={residual:.3g}, newton steps={steps}",
                extra={"mu": mu, "objective": f, "residual": residual, "newton_steps": steps},
            )
            if self.n_constraints * mu < opts.tol:
                return z, mu, total, outer
            mu /= opts.mu_factor
        raise ConvergenceError(
            f"Barrier method did not reach tolerance {opts.tol} in {opts.max_outer} outer steps",
            iterate=z,
        )


def _raise_infeasible(report):
    message = "; ".join(report.reasons) or "slot problem is infeasible"
    if not report.rate_feasible:
        raise RateInfeasibleError(message, spectral_radius=report.spectral_radius, report=report)
    raise InfeasibleProblemError(message, report=report)


def _start_point(problem, report, active, start):
    if start is None:
        y0 = np.log(report.witness_p)
        x0 = report.witness_x if report.witness_x is not None else np.zeros(problem.n_energy)
    elif isinstance(start, Solution):
        y0, x0 = start.ptilde, start.x
    else:
        y0, x0 = start
        x0 = np.zeros(problem.n_energy) if x0 is None else x0
    y0 = np.asarray(y0, dtype=float)
    x0 = np.asarray(x0, dtype=float)
    if y0.shape != (problem.n_links,) or x0.shape != (problem.n_energy,):
        raise DimensionError("Start point does not match the problem dimensions")
    return np.concatenate([y0, x0[active]])


def _polish_transfers(problem, barrier, p, x):
    """
    Smallest total transfer that keeps the powers p within budget, min sum(x) s.t. K.p + B.x <= E, x >= 0. Returns the
    barrier transfers when the linear programme fails.
    """
    if len(barrier.active) == 0:
        return x
    res = linprog(
        c=np.ones(len(barrier.active)),
        A_ub=barrier.B,
        b_ub=barrier.E - barrier.K @ p,
        bounds=(0, None),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:
        logger.debug(f"Transfer polish failed ({res.message}), keeping barrier transfers")
        return x
    x_new = np.maximum(res.x, 0.)
    if np.any(barrier.E - barrier.K @ p - barrier.B @ x_new < -consts.CONSERVATION_TOL):
        logger.debug("Transfer polish violates a budget, keeping barrier transfers")
        return x
    return x_new


def _solve(problem, transfer, options, start):
    options = options or SolverOptions()
    report = check_problem_feasible(problem, transfer=transfer)
    if not report.feasible:
        _raise_infeasible(report)
    m = problem.matrices
    if transfer:
        active = np.flatnonzero(report.usable)
        touched = (m.K != 0).any(axis=1) | (m.B[:, active] != 0).any(axis=1)
    else:
        active = np.zeros(0, dtype=int)
        touched = (m.K != 0).any(axis=1)
    rows = np.flatnonzero(touched)
    barrier = _Barrier(problem, rows, active, options)
    z0 = _start_point(problem, report, active, start)
    if not barrier.strictly_feasible(z0):
        if start is not None:
            raise ValueError("Start point is not strictly feasible")
        raise InfeasibleProblemError("Witness point is not strictly feasible", report=report)
    z, mu, newton_steps, outer_steps = barrier.run(z0)
    y, x_a = barrier.split(z)
    p = np.exp(y)
    s_b, s_r, _, _, _ = barrier.slacks(z)
    lam = np.zeros(len(problem.nodes))
    lam[rows] = mu / s_b
    x = np.zeros(problem.n_energy)
    x[active] = _polish_transfers(problem, barrier, p, x_a)
    if transfer:
        gamma = np.maximum(options.transfer_penalty + m.B.T @ lam, 0.)
    else:
        gamma = np.zeros(problem.n_energy)
    c_approx = capacity_approx(problem.channel, y)
    c_exact = capacity_exact(problem.channel, p)
    s = sinr(problem.channel, p)
    low = tuple(label for label, v in zip(problem.labels, s) if v < options.sinr_threshold)
    if low:
        logger.warning(f"SINR below {options.sinr_threshold:g} on {list(low)}, the high-SINR capacity is loose there")
    delay = problem.d / (c_approx - problem.d)
    return Solution(
        p=p,
        ptilde=y,
        x=x,
        sinr=s,
        capacity_approx=c_approx,
        capacity_exact=c_exact,
        delay=delay,
        objective=total_delay(problem.d, c_approx, problem.labels),
        exact_objective=total_delay(problem.d, c_exact, problem.labels),
        lam=lam,
        beta=np.zeros(problem.n_links),
        gamma=gamma,
        rate_multiplier=float(np.max(mu / s_r)),
        transfer=bool(transfer),
        transfer_penalty=options.transfer_penalty if transfer else 0.,
        newton_steps=newton_steps,
        outer_steps=outer_steps,
        mu=mu,
        termination=f"duality gap {barrier.n_constraints * mu:.3g} below {options.tol:g}",
        low_sinr=low,
    )


def solve_no_transfer(problem, options=None, start=None):
    """
    Minimise the total delay of a slot with every node living on its own energy. Energy links of the problem are
    ignored.

    :param problem: SlotProblem
    :param options: SolverOptions (default: SolverOptions())
    :param start: optional strictly feasible start point, a Solution or a tuple (ptilde, x)
    :return: Solution
    """
    return _solve(problem, False, options, start)


def solve_with_transfer(problem, options=None, start=None):
    """
    Minimise the total delay of a slot jointly over powers and energy transfers. Among optimal transfers the one
    with the smallest total is returned; links with zero efficiency carry nothing.

    :param problem: SlotProblem with at least one energy link
    :param options: SolverOptions (default: SolverOptions())
    :param start: optional strictly feasible start point, a Solution or a tuple (ptilde, x)
    :return: Solution
    """
    if problem.n_energy == 0:
        raise ValueError("Problem has no energy links to transfer energy over")
    return _solve(problem, True, options, start)


def solve(problem, transfer=None, options=None, start=None):
    """
    Solve a slot problem with or without transfer (default: with transfer when the problem has energy links).
    """
    if transfer is None:
        transfer = problem.n_energy > 0
    if transfer and problem.n_energy > 0:
        return solve_with_transfer(problem, options=options, start=start)
    return solve_no_transfer(problem, options=options, start=start)


def kkt_report(problem, solution, tight_tol=1e-6):
    """
    Check the optimality conditions of a solution from its primal and dual values.

    :param problem: SlotProblem
    :param solution: Solution
    :param tight_tol: float, relative slack below which a budget counts as tight (default: 1e-6)
    :return: KktReport
    """
    m = problem.matrices
    y = np.asarray(solution.ptilde, dtype=float)
    lam = np.asarray(solution.lam, dtype=float)
    grad = gradient_logdomain(problem, y)
    power_term = (m.K.T @ lam) * np.exp(y)
    stationarity = grad + power_term
    _, u, W = _rate_terms(problem, y)
    a = np.abs(problem.d / u ** 2)
    sensitivity = 0.5 * (a + W @ a)
    floor = consts.REL_STATIONARITY_FLOOR * float(np.max(sensitivity, initial=0.))
    relative_stationarity = np.abs(stationarity) / (np.abs(grad) + np.abs(power_term) + floor)
    slack = check_energy_budget(m, solution.p, solution.x, problem.E)
    complementary = [lam * slack, np.zeros(problem.n_links)]
    if solution.transfer:
        x = np.asarray(solution.x, dtype=float)
        gamma = np.asarray(solution.gamma, dtype=float)
        stationarity = np.concatenate([stationarity, solution.transfer_penalty + m.B.T @ lam - gamma])
        complementary.append(gamma * x)
    marginal = -np.exp(-y) * grad
    tight = slack <= tight_tol * np.maximum(1., problem.E)
    lambda_residual = np.where(
        tight[problem.owner],
        np.abs(marginal - lam[problem.owner]),
        0.,
    )
    spreads = [
        spread(marginal[problem.owner == r])
        for r in np.unique(problem.owner) if np.sum(problem.owner == r) >= 2
    ]
    return KktReport(
        stationarity=stationarity,
        complementary=np.concatenate(complementary),
        max_rate_multiplier=float(solution.rate_multiplier),
        marginal=marginal,
        lambda_residual=lambda_residual,
        max_marginal_spread=max(spreads) if spreads else None,
        relative_stationarity=relative_stationarity,
    )
