# energy arrivals, battery state and transfer accounting
import logging

import numpy as np

from ehwsn import consts
from ehwsn.errors import DimensionError, TopologyError

logger = logging.getLogger(__name__)


class EnergyState:
    def __init__(self, energy, battery=consts.BATTERY):
        """
        Energy available to each node in the current slot.

        :param energy: dict {node: energy}, strictly positive and at most the battery capacity
        :param battery: float, battery capacity Bmax (default: 20)
        """
        self.battery = float(battery)
        self.energy = {int(n): float(e) for n, e in energy.items()}
        for n, e in self.energy.items():
            if not (0. < e <= self.battery):
                raise ValueError(f"Energy {e} of node {n} is not in (0, {self.battery}]")

    @property
    def nodes(self):
        return tuple(sorted(self.energy))

    def __getitem__(self, n):
        return self.energy[n]

    def __contains__(self, n):
        return n in self.energy

    def vector(self, nodes):
        """
        Energies of the given nodes, 0 for nodes without energy state (e.g. the sink).

        :param nodes: list of node ids
        :return: ndarray
        """
        return np.array([self.energy.get(n, 0.) for n in nodes])


class TransferVector:
    def __init__(self, x):
        """
        Energy sent over each energy link.

        :param x: array-like [Q], nonnegative amounts
        """
        x = np.array(x, dtype=float, ndmin=1)
        if np.any(x < 0):
            raise ValueError("Transferred energy must be nonnegative")
        self.x = x

    def __len__(self):
        return len(self.x)


def sample_arrivals(rng, nodes, rate=consts.ARRIVAL_RATE, battery=consts.BATTERY):
    """
    Harvested energy of one slot: Poisson arrivals, redrawn while zero and clamped at the battery capacity.

    :param rng: np.random.Generator
    :param nodes: list of node ids that harvest energy (the sink excluded)
    :param rate: float, Poisson rate (default: 8)
    :param battery: float, battery capacity (default: 20)
    :return: EnergyState
    """
    if rate <= 0:
        raise ValueError(f"Arrival rate must be positive, got {rate}")
    if battery < 1:
        raise ValueError(f"Battery capacity must be at least 1, got {battery}")
    E = rng.poisson(rate, size=len(nodes))
    zero = E == 0
    while zero.any():
        E[zero] = rng.poisson(rate, size=zero.sum())
        zero = E == 0
    E = np.minimum(E, battery)
    return EnergyState(dict(zip(nodes, E.astype(float))), battery=battery)


def available_energy(n, energy, x, links):
    """
    Energy a node can spend on transmission: its own energy plus what it receives over its incoming energy links.

    :param n: int, node id
    :param energy: EnergyState
    :param x: TransferVector or array-like [Q]
    :param links: object with `energy_links` [(donor, recipient), ...] and `efficiency` (e.g. Topology or SlotProblem)
    :return: float
    """
    if n not in energy:
        raise TopologyError(f"Node {n} has no energy state")
    x = x.x if isinstance(x, TransferVector) else np.asarray(x, dtype=float)
    if len(x) != len(links.energy_links):
        raise DimensionError(f"{len(x)} transfers given for {len(links.energy_links)} energy links")
    received = sum(
        eta * x_q for (_, j), eta, x_q in zip(links.energy_links, links.efficiency, x) if j == n
    )
    return energy[n] + float(received)


def check_energy_budget(m, p, x, E):
    """
    Energy budget residual E - K.p - B.x per node; entries >= -1e-9 mean the budgets hold.

    :param m: IncidenceMatrices
    :param p: array-like [L], powers
    :param x: array-like [Q], transfers
    :param E: array-like [N], available energy in row order of m
    :return: ndarray [N]
    """
    p = np.asarray(p, dtype=float)
    x = np.asarray(x, dtype=float)
    E = np.asarray(E, dtype=float)
    N, L, Q = m.shape
    if p.shape != (L,) or x.shape != (Q,) or E.shape != (N,):
        raise DimensionError(
            f"Expected powers ({L},), transfers ({Q},) and energies ({N},), got {p.shape}, {x.shape} and {E.shape}"
        )
    return E - m.K @ p - m.B @ x


def transfer_loss(m, x):
    """
    Energy dissipated by transfers, sum (1 - eta_q).x_q. Each column of B sums to 1 - eta_q.

    :param m: IncidenceMatrices
    :param x: array-like [Q], transfers
    :return: float
    """
    return float(m.B.sum(axis=0) @ np.asarray(x, dtype=float))


def carry_over(arrivals, residual):
    """
    Energy of the next slot when unused energy stays in the battery: residual plus new arrival, clamped at the
    battery capacity.

    :param arrivals: EnergyState, energy harvested for the next slot
    :param residual: dict {node: unused energy of the previous slot}
    :return: EnergyState
    """
    energy = {
        n: min(arrivals.battery, e + max(residual.get(n, 0.), 0.))
        for n, e in arrivals.energy.items()
    }
    return EnergyState(energy, battery=arrivals.battery)
