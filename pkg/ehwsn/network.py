# data collection tree, energy link graph, incidence matrices and the half-duplex slot schedule
import logging
from dataclasses import dataclass

import numpy as np

from ehwsn import consts
from ehwsn.errors import DimensionError, TopologyError

logger = logging.getLogger(__name__)


class Topology:
    def __init__(self, nodes, data_links, energy_links=(), efficiency=None, sink=consts.SINK):
        """
        Create a new Topology instance: a data collection tree rooted at the sink plus a set of directed
        energy links. The topology is validated on construction and is read-only afterwards.

        :param nodes: list of int node ids, must contain the sink
        :param data_links: list of (child, parent) pairs, one per non-sink node
        :param energy_links: list of (donor, recipient) pairs
        :param efficiency: list of float transfer efficiencies in (0, 1], one per energy link. If not set, all energy
            links get the default efficiency
        :param sink: int, id of the sink node (default: 0)
        """
        self.nodes = tuple(int(n) for n in nodes)
        self.sink = int(sink)
        self.data_links = tuple((int(i), int(j)) for i, j in data_links)
        self.energy_links = tuple((int(i), int(j)) for i, j in energy_links)
        if efficiency is None:
            efficiency = [consts.EFFICIENCY] * len(self.energy_links)
        self.efficiency = np.array(efficiency, dtype=float)
        self.efficiency.setflags(write=False)
        self.validate()
        self.node_index = {n: k for k, n in enumerate(self.nodes)}
        self.parent = {i: j for i, j in self.data_links}
        self.link_of = {i: l for l, (i, j) in enumerate(self.data_links)}

    @property
    def n_nodes(self):
        return len(self.nodes)

    @property
    def n_links(self):
        return len(self.data_links)

    @property
    def n_energy(self):
        return len(self.energy_links)

    @property
    def labels(self):
        """
        Link labels "l<child>"; a data link is named after its transmitting node.
        """
        return [f"l{i}" for i, _ in self.data_links]

    def validate(self):
        """
        Check the tree and energy link invariants, raise a TopologyError naming the offending link otherwise.
        """
        if len(set(self.nodes)) != len(self.nodes):
            raise TopologyError("Node ids are not unique")
        if self.sink not in self.nodes:
            raise TopologyError(f"Sink {self.sink} is not in the node list")
        known = set(self.nodes)
        parents = {}
        for link in self.data_links:
            i, j = link
            if i not in known or j not in known:
                raise TopologyError("Data link references an unknown node", link=link)
            if i == j:
                raise TopologyError("Data link is a self loop", link=link)
            if i == self.sink:
                raise TopologyError("Sink has an outgoing data link", link=link)
            if i in parents:
                raise TopologyError(f"Node {i} has more than one parent", link=link)
            parents[i] = j
        for n in self.nodes:
            if n != self.sink and n not in parents:
                raise TopologyError(f"Node {n} has no outgoing data link")
        # every path of parents must end at the sink
        for n in self.nodes:
            seen = set()
            node = n
            while node != self.sink:
                if node in seen:
                    raise TopologyError("Data links contain a cycle", link=(node, parents[node]))
                seen.add(node)
                node = parents[node]
        if len(self.efficiency) != len(self.energy_links):
            raise TopologyError(
                f"{len(self.efficiency)} efficiencies given for {len(self.energy_links)} energy links"
            )
        for link, eta in zip(self.energy_links, self.efficiency):
            i, j = link
            if i not in known or j not in known:
                raise TopologyError("Energy link references an unknown node", link=link)
            if i == j:
                raise TopologyError("Energy link is a self loop", link=link)
            if i == self.sink:
                raise TopologyError("Energy link originates at the sink", link=link)
            if not (0. < eta <= 1.):
                raise TopologyError(f"Transfer efficiency {eta} is not in (0, 1]", link=link)

    def depth(self, n):
        """
        Number of hops from node n to the sink.

        :param n: int, node id
        :return: int
        """
        d = 0
        while n != self.sink:
            n = self.parent[n]
            d += 1
        return d

    def children(self, n):
        """
        Children of node n in ascending id order.

        :param n: int, node id
        :return: list of int
        """
        return sorted(i for i, j in self.data_links if j == n)

    @classmethod
    def from_dict(cls, d, efficiency=consts.EFFICIENCY):
        """
        Build a Topology from its config document (see docs), e.g. parsed from JSON.

        :param d: dict with keys "nodes", "data_links", optional "energy_links" and "sink"
        :param efficiency: float, efficiency used for energy links that do not specify one
        :return: Topology
        """
        try:
            energy = d.get("energy_links", [])
            donors = []
            etas = []
            for q in energy:
                if isinstance(q, dict):
                    donors.append((q["donor"], q["recipient"]))
                    etas.append(float(q.get("efficiency", efficiency)))
                else:
                    donors.append((q[0], q[1]))
                    etas.append(float(q[2]) if len(q) > 2 else efficiency)
            return cls(
                nodes=d["nodes"],
                data_links=[tuple(link) for link in d["data_links"]],
                energy_links=donors,
                efficiency=etas,
                sink=d.get("sink", consts.SINK),
            )
        except (KeyError, TypeError, IndexError) as e:
            raise TopologyError(f"Malformed topology document, missing or invalid entry {e}")

    def to_dict(self):
        return {
            "version": consts.CONFIG_VERSION,
            "sink": self.sink,
            "nodes": list(self.nodes),
            "data_links": [list(link) for link in self.data_links],
            "energy_links": [
                {"donor": i, "recipient": j, "efficiency": float(eta)}
                for (i, j), eta in zip(self.energy_links, self.efficiency)
            ],
        }


class IncidenceMatrices:
    def __init__(self, nodes, A, B, K):
        """
        Node-link incidence matrices. Rows follow `nodes`, columns follow the link order they were built from.

        :param nodes: list of node ids, row order
        :param A: ndarray [N, L], data incidence (+1 at transmitter, -1 at receiver)
        :param B: ndarray [N, Q], energy incidence (+1 at donor, -eta at recipient)
        :param K: ndarray [N, L], outgoing link selector, max(A, 0)
        """
        self.nodes = tuple(nodes)
        self.A = A
        self.B = B
        self.K = K
        self.row = {n: k for k, n in enumerate(self.nodes)}

    @property
    def shape(self):
        return self.A.shape[0], self.A.shape[1], self.B.shape[1]


def incidence_from_links(nodes, data_links, energy_links=(), efficiency=()):
    """
    Build incidence matrices for arbitrary directed data and energy links over the given nodes.

    :param nodes: list of node ids (row order)
    :param data_links: list of (transmitter, receiver) pairs
    :param energy_links: list of (donor, recipient) pairs
    :param efficiency: list of float, transfer efficiency per energy link
    :return: IncidenceMatrices
    """
    row = {n: k for k, n in enumerate(nodes)}
    A = np.zeros((len(nodes), len(data_links)))
    for l, (i, j) in enumerate(data_links):
        A[row[i], l] = 1.
        A[row[j], l] = -1.
    B = np.zeros((len(nodes), len(energy_links)))
    for q, ((i, j), eta) in enumerate(zip(energy_links, efficiency)):
        B[row[i], q] = 1.
        B[row[j], q] = -float(eta)
    K = np.maximum(A, 0.)
    return IncidenceMatrices(nodes, A, B, K)


def build_incidence(topology):
    """
    Incidence matrices A, B and K of a topology, rows in topology node order (sink included), columns in
    topology link order.

    :param topology: Topology
    :return: IncidenceMatrices
    """
    return incidence_from_links(
        topology.nodes,
        topology.data_links,
        topology.energy_links,
        topology.efficiency,
    )


@dataclass(frozen=True)
class FlowAssignment:
    """
    Flow per data link and the divergence per node it induces.
    """
    d: np.ndarray
    s: np.ndarray


def assign_flows(m, d):
    """
    Derive the divergence vector s = A.d from the link flows d.

    :param m: IncidenceMatrices
    :param d: array-like [L], nonnegative flows
    :return: FlowAssignment
    """
    d = np.asarray(d, dtype=float)
    if d.shape != (m.A.shape[1],):
        raise DimensionError(f"Flow vector has shape {d.shape}, expected ({m.A.shape[1]},)")
    if np.any(d < 0):
        raise ValueError("Flows must be nonnegative")
    return FlowAssignment(d=d, s=m.A @ d)


def check_flow_conservation(m, d, s):
    """
    Flow conservation residual s - A.d; a max-abs residual below 1e-12 means the flows are conserved.

    :param m: IncidenceMatrices
    :param d: array-like [L], flows
    :param s: array-like [N], divergences
    :return: ndarray [N], residual
    """
    d = np.asarray(d, dtype=float)
    s = np.asarray(s, dtype=float)
    N, L = m.A.shape
    if d.shape != (L,) or s.shape != (N,):
        raise DimensionError(f"Expected flows ({L},) and divergences ({N},), got {d.shape} and {s.shape}")
    return s - m.A @ d


@dataclass(frozen=True)
class Schedule:
    """
    Half-duplex slot schedule of one data collection round. `slots[k]` holds the indices of the data links active
    in slot k, `energy[k]` the indices of the energy links permitted in that slot.
    """
    slots: tuple
    energy: tuple

    def __len__(self):
        return len(self.slots)

    def transmitters(self, topology, k):
        return {topology.data_links[l][0] for l in self.slots[k]}


def half_duplex_schedule(topology):
    """
    Deterministic half-duplex schedule of a data collection round. The data links are coloured greedily by a
    depth-first traversal from the sink (a proper edge colouring, which on a tree needs no more colours than the
    maximum node degree); each colour class becomes a slot. Slots are ordered deepest links first (maximum depth of
    the transmitting node), ties by colour. An energy link is permitted in a slot when its donor does not transmit
    data in that slot and its recipient does.

    :param topology: Topology
    :return: Schedule
    """
    colour = {}
    stack = [(topology.sink, None)]
    while stack:
        node, up = stack.pop()
        used = set() if up is None else {up}
        for child in topology.children(node):
            c = 0
            while c in used:
                c += 1
            used.add(c)
            colour[child] = c
            stack.append((child, c))
    classes = {}
    for l, (i, _) in enumerate(topology.data_links):
        classes.setdefault(colour[i], []).append(l)
    order = sorted(
        classes,
        key=lambda c: (-max(topology.depth(topology.data_links[l][0]) for l in classes[c]), c)
    )
    slots = tuple(tuple(sorted(classes[c])) for c in order)
    energy = []
    for links in slots:
        tx = {topology.data_links[l][0] for l in links}
        energy.append(tuple(
            q for q, (i, j) in enumerate(topology.energy_links) if i not in tx and j in tx
        ))
    schedule = Schedule(slots=slots, energy=tuple(energy))
    logger.debug(f"Schedule with {len(slots)} slots: {[len(s) for s in slots]} links per slot")
    return schedule


def check_schedule(topology, schedule):
    """
    Check the half-duplex, coverage and idle-donor invariants of a schedule.

    :param topology: Topology
    :param schedule: Schedule
    :return: list of str, violations (empty when the schedule is valid)
    """
    problems = []
    covered = set()
    for k, links in enumerate(schedule.slots):
        endpoints = [n for l in links for n in topology.data_links[l]]
        if len(endpoints) != len(set(endpoints)):
            problems.append(f"slot {k + 1}: a node serves more than one active data link")
        covered.update(links)
        tx = schedule.transmitters(topology, k)
        for q in schedule.energy[k]:
            if topology.energy_links[q][0] in tx:
                problems.append(f"slot {k + 1}: donor of energy link {q} transmits data")
    missing = set(range(topology.n_links)) - covered
    if missing:
        problems.append(f"data links {sorted(missing)} are never scheduled")
    return problems
