import numpy as np
import pytest

import ehwsn
from ehwsn.channel import ChannelState
from ehwsn.solver import SlotProblem

# flows and reference SINRs (without and with transfer) of the first slot of the bundled tree
FIRST_SLOT_FLOWS = np.array([0.4585, 0.8752, 0.6869, 0.2313, 0.4887])
FIRST_SLOT_SINR_NO_TRANSFER = np.array([78.6533, 143.1230, 57.5294, 14.3840, 43.8209])
FIRST_SLOT_SINR_TRANSFER = np.array([78.6532, 143.1436, 57.5311, 14.3839, 43.8212])


def random_problem(rng, n_links, n_donors=0, gain_max=0.01, flow_range=(0.1, 0.8), energy_range=(2., 10.)):
    """
    Random slot problem in the high-SINR regime: link l runs from node l + 1 to node 10 * (l + 1), donor q (node
    100 + q) has one energy link into the transmitter of link q.
    """
    G = gain_max * (1. - rng.random((n_links, n_links)))
    np.fill_diagonal(G, 1.)
    data_links = [(l + 1, 10 * (l + 1)) for l in range(n_links)]
    energy_links = [(100 + q, q + 1) for q in range(n_donors)]
    energy = {i: float(rng.uniform(*energy_range)) for i, _ in data_links}
    energy.update({i: float(rng.uniform(*energy_range)) for i, _ in energy_links})
    return SlotProblem(
        data_links=data_links,
        d=rng.uniform(*flow_range, size=n_links),
        channel=ChannelState(G, 1e-5),
        energy=energy,
        energy_links=energy_links,
        efficiency=rng.uniform(0.3, 0.9, size=n_donors),
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tree14():
    return ehwsn.io.read_topology("tree14")


@pytest.fixture
def chain():
    return ehwsn.Topology(nodes=[0, 1, 2, 3], data_links=[(1, 0), (2, 1), (3, 2)], energy_links=[(3, 1)])


@pytest.fixture
def two_link_problem():
    # symmetric pair of links with their own energy budgets, noise dominates the interference
    return SlotProblem(
        data_links=[(1, 10), (2, 20)],
        d=[0.5, 0.5],
        channel=ChannelState([[1., 5e-4], [5e-4, 1.]], 1e-2),
        energy={1: 5., 2: 5.},
    )


@pytest.fixture
def donor_problem():
    # node 2 is short of energy, idle node 3 can give it some
    return SlotProblem(
        data_links=[(1, 10), (2, 20)],
        d=[0.6, 0.4],
        channel=ChannelState([[1., 4e-4], [7e-4, 1.]], 1e-2),
        energy={1: 8., 2: 2., 3: 9.},
        energy_links=[(3, 2)],
        efficiency=[0.6],
    )


@pytest.fixture
def shared_owner_problem():
    # node 1 feeds two links from one budget, node 2 transmits on its own
    return SlotProblem(
        data_links=[(1, 10), (1, 20), (2, 30)],
        d=[0.3, 0.7, 0.5],
        channel=ChannelState([[1., 6e-4, 2e-4], [4e-4, 1., 8e-4], [3e-4, 5e-4, 1.]], 1e-2),
        energy={1: 6., 2: 4.},
        half_duplex=False,
    )


@pytest.fixture
def first_slot():
    return ehwsn.Scenario("first_slot")
