# minimum powers and feasibility certificates of slot problems
import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from ehwsn import consts
from ehwsn.channel import PowerVector
from ehwsn.errors import RateInfeasibleError
from ehwsn.helpers import offdiag, spectral_radius

logger = logging.getLogger(__name__)


def sinr_targets(d, high_sinr=False):
    """
    SINR needed to carry flow d: e^(2d) - 1 under the exact capacity, e^(2d) under the high-SINR capacity.

    :param d: array-like [L], flows
    :param high_sinr: bool, use the high-SINR capacity
    :return: ndarray [L]
    """
    d = np.asarray(d, dtype=float)
    return np.exp(2 * d) if high_sinr else np.expm1(2 * d)


def interference_matrix(ch, d, high_sinr=False):
    """
    Normalised interference matrix M[l, k] = target_l.G_kl / G_ll (k != l) and noise term b_l = target_l.sigma_l / G_ll
    of the minimum power fixed point p = M.p + b.

    :param ch: ChannelState
    :param d: array-like [L], flows
    :param high_sinr: bool, use the high-SINR capacity
    :return: (M, b)
    """
    gamma = sinr_targets(d, high_sinr=high_sinr)
    M = (gamma / ch.direct)[:, None] * offdiag(ch.G).T
    b = gamma * ch.sigma / ch.direct
    return M, b


def min_power_vector(ch, d, high_sinr=False):
    """
    Componentwise minimal powers that meet every rate demand with equality, the solution of (I - M).p = b. It exists
    if and only if the spectral radius of M is below 1.

    :param ch: ChannelState
    :param d: array-like [L], strictly positive flows
    :param high_sinr: bool, meet the demands under the high-SINR capacity instead of the exact one (default: False)
    :return: PowerVector
    """
    d = np.asarray(d, dtype=float)
    if not high_sinr and np.any(d <= 0):
        raise ValueError("Minimum powers under the exact capacity need strictly positive flows")
    M, b = interference_matrix(ch, d, high_sinr=high_sinr)
    rho = spectral_radius(M)
    if rho >= 1.:
        raise RateInfeasibleError(
            f"Rate demands cannot be met under interference, spectral radius {rho:.6g} >= 1",
            spectral_radius=rho,
        )
    p = np.linalg.solve(np.eye(len(d)) - M, b)
    return PowerVector(p)


@dataclass(frozen=True)
class FeasibilityReport:
    """
    Outcome of a feasibility check. Energy figures are given per budget node, i.e. every node that transmits, donates
    or receives energy in the slot.
    """
    feasible: bool
    rate_feasible: bool
    spectral_radius: float
    nodes: tuple = ()
    need: np.ndarray = field(default_factory=lambda: np.zeros(0))
    available: np.ndarray = field(default_factory=lambda: np.zeros(0))
    slack: np.ndarray = field(default_factory=lambda: np.zeros(0))
    p_min: np.ndarray = None
    witness_p: np.ndarray = None
    witness_x: np.ndarray = None
    usable: np.ndarray = None
    reasons: tuple = ()

    def to_frame(self):
        """
        One row per budget node with its minimum energy need, the most it could have available and the slack.

        :return: pd.DataFrame
        """
        return pd.DataFrame(
            {
                "node": list(self.nodes),
                "need": self.need,
                "available": self.available,
                "slack": self.slack,
                "feasible": self.slack >= 0,
            }
        )


def check_problem_feasible(problem, transfer=None):
    """
    Certify that a slot problem has a strictly feasible point under the high-SINR capacity. Minimum powers give the
    energy each node needs; donors spread a fraction of their spare energy over their energy links, and the minimum
    powers scaled by 1 + eps' (eps' at most 0.1) make up the witness point.

    :param problem: SlotProblem
    :param transfer: bool, allow energy transfer (default: when the problem has energy links)
    :return: FeasibilityReport
    """
    if transfer is None:
        transfer = problem.n_energy > 0
    m = problem.matrices
    rows = problem.budget
    nodes = tuple(problem.nodes[r] for r in rows)
    try:
        p_min = min_power_vector(problem.channel, problem.d, high_sinr=True).p
        rho = spectral_radius(interference_matrix(problem.channel, problem.d, high_sinr=True)[0])
    except RateInfeasibleError as e:
        logger.warning(str(e))
        return FeasibilityReport(
            feasible=False,
            rate_feasible=False,
            spectral_radius=e.spectral_radius,
            nodes=nodes,
            reasons=(str(e),),
        )
    E = problem.E
    need = m.K @ p_min
    spare = E - need
    Q = problem.n_energy
    donor = np.array([problem.row[i] for i, _ in problem.energy_links], dtype=int)
    recipient = np.array([problem.row[j] for _, j in problem.energy_links], dtype=int)
    eta = np.asarray(problem.efficiency, dtype=float)
    usable = np.zeros(Q, dtype=bool)
    if transfer and Q > 0:
        usable = (eta > 0) & (spare[donor] > 0)
    # most energy a node could have if every donor gave it all its spare energy
    available = E.copy()
    for q in np.flatnonzero(usable):
        available[recipient[q]] += eta[q] * spare[donor[q]]
    slack = available - need
    reasons = [
        f"node {problem.nodes[r]} needs {need[r]:.6g} but at most {available[r]:.6g} is available"
        for r in rows if slack[r] < 0
    ]
    outdeg = np.bincount(donor[usable], minlength=len(problem.nodes)) if Q > 0 else np.zeros(len(problem.nodes))
    witness_p = None
    witness_x = None
    fractions = consts.WITNESS_FRACTIONS if usable.any() else [0.]
    if not reasons:
        for theta in fractions:
            x = np.zeros(Q)
            if usable.any():
                x[usable] = theta * spare[donor[usable]] / outdeg[donor[usable]]
            avail = (E - m.B @ x)[rows]
            ratio = avail[need[rows] > 0] / need[rows][need[rows] > 0] - 1.
            if np.any(avail <= 0) or np.any(ratio <= 0):
                continue
            eps = min(consts.WITNESS_MARGIN, 0.5 * ratio.min())
            witness_p = p_min * (1. + eps)
            witness_x = x
            break
        if witness_p is None:
            reasons.append("no strictly feasible starting point found")
    return FeasibilityReport(
        feasible=witness_p is not None,
        rate_feasible=True,
        spectral_radius=rho,
        nodes=nodes,
        need=need[rows],
        available=available[rows],
        slack=slack[rows],
        p_min=p_min,
        witness_p=witness_p,
        witness_x=witness_x,
        usable=usable,
        reasons=tuple(reasons),
    )
