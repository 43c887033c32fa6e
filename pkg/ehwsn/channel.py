# Channel gains, SINR, capacities and M/M/1 delay. Gain matrices use G[k, l] = gain from the transmitter of link k
# to the receiver of link l, so column l collects everything heard at the receiver of link l.
import numpy as np

from ehwsn import consts
from ehwsn.errors import CapacityViolationError, DimensionError
from ehwsn.helpers import offdiag


class ChannelState:
    def __init__(self, G, sigma):
        """
        Gain matrix and receiver noise of the active links of one slot.

        :param G: array-like [L, L], diagonal holds the direct link gains, off-diagonal the interference gains
        :param sigma: float or array-like [L], noise power per link
        """
        G = np.array(G, dtype=float, ndmin=2)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise DimensionError(f"Gain matrix must be square, got shape {G.shape}")
        sigma = np.broadcast_to(np.asarray(sigma, dtype=float), (G.shape[0],)).copy()
        if np.any(G < 0):
            raise ValueError("Gains must be nonnegative")
        if np.any(np.diag(G) <= 0):
            raise ValueError("Direct link gains must be strictly positive")
        if np.any(sigma <= 0):
            raise ValueError("Noise powers must be strictly positive")
        G.setflags(write=False)
        sigma.setflags(write=False)
        self.G = G
        self.sigma = sigma

    @property
    def n_links(self):
        return self.G.shape[0]

    @property
    def direct(self):
        return np.diag(self.G)

    def orthogonal(self):
        """
        Same channel with every interference gain removed.

        :return: ChannelState
        """
        return ChannelState(np.diag(self.direct), self.sigma)

    def subset(self, idx):
        """
        Channel restricted to the links in idx (in that order).

        :param idx: list of int, link indices
        :return: ChannelState
        """
        idx = np.asarray(idx, dtype=int)
        return ChannelState(self.G[np.ix_(idx, idx)], self.sigma[idx])


class PowerVector:
    def __init__(self, p):
        """
        Transmit powers of the active links together with their logarithm.

        :param p: array-like [L], strictly positive powers
        """
        p = np.array(p, dtype=float, ndmin=1)
        if np.any(~(p > 0)):
            raise ValueError("Powers must be strictly positive")
        self.p = p
        self.ptilde = np.log(p)

    @classmethod
    def from_log(cls, ptilde):
        obj = cls.__new__(cls)
        obj.ptilde = np.array(ptilde, dtype=float, ndmin=1)
        obj.p = np.exp(obj.ptilde)
        return obj

    def __len__(self):
        return len(self.p)


def _powers(p):
    if isinstance(p, PowerVector):
        return p.p
    return np.asarray(p, dtype=float)


def interference(ch, p):
    """
    Interference plus noise at the receiver of every link.

    :param ch: ChannelState
    :param p: PowerVector or array-like [L]
    :return: ndarray [L]
    """
    p = _powers(p)
    if p.shape != (ch.n_links,):
        raise DimensionError(f"Power vector has shape {p.shape}, expected ({ch.n_links},)")
    return ch.sigma + offdiag(ch.G).T @ p


def sinr(ch, p, l=None):
    """
    Received SINR G_ll.p_l / (sum_k!=l G_kl.p_k + sigma_l) of link l, or of all links when l is not given.

    :param ch: ChannelState
    :param p: PowerVector or array-like [L]
    :param l: int, link index (default: all links)
    :return: float or ndarray [L]
    """
    p = _powers(p)
    values = ch.direct * p / interference(ch, p)
    return values if l is None else float(values[l])


def capacity_exact(ch, p, l=None):
    """
    Shannon capacity 1/2.ln(1 + SINR) in nats per channel use.

    :param ch: ChannelState
    :param p: PowerVector or array-like [L]
    :param l: int, link index (default: all links)
    :return: float or ndarray [L]
    """
    values = 0.5 * np.log1p(sinr(ch, p))
    return values if l is None else float(values[l])


def capacity_approx(ch, ptilde, l=None):
    """
    High-SINR capacity 1/2.ln(SINR) as a function of log-powers. Always an underestimate of the exact capacity, the
    gap being 1/2.ln(1 + 1/SINR).

    :param ch: ChannelState
    :param ptilde: PowerVector or array-like [L], log-powers
    :param l: int, link index (default: all links)
    :return: float or ndarray [L]
    """
    if isinstance(ptilde, PowerVector):
        ptilde = ptilde.ptilde
    ptilde = np.asarray(ptilde, dtype=float)
    values = 0.5 * (ptilde + np.log(ch.direct) - np.log(interference(ch, np.exp(ptilde))))
    return values if l is None else float(values[l])


def interference_weights(ch, ptilde):
    """
    Share of each interferer in the interference plus noise of each receiver: W[k, l] = G_kl.p_k / I_l with
    W[l, l] = 0. The gradient of the approximate capacities with respect to the log-powers is 1/2.(I - W^T).

    :param ch: ChannelState
    :param ptilde: array-like [L], log-powers
    :return: ndarray [L, L]
    """
    p = np.exp(np.asarray(ptilde, dtype=float))
    return offdiag(ch.G) * p[:, None] / interference(ch, p)[None, :]


def link_delay(d, c, link=None):
    """
    M/M/1 delay d / (c - d) of a single link.

    :param d: float, flow
    :param c: float, capacity
    :param link: label of the link, used in the error message
    :return: float
    """
    if not c > d:
        raise CapacityViolationError(link, d, c)
    return d / (c - d)


def total_delay(d, c, labels=None):
    """
    Total M/M/1 delay over all links.

    :param d: array-like [L], flows
    :param c: array-like [L], capacities
    :param labels: list of link labels, used in error messages (default: link index)
    :return: float
    """
    d = np.asarray(d, dtype=float)
    c = np.asarray(c, dtype=float)
    if d.shape != c.shape:
        raise DimensionError(f"Flows {d.shape} and capacities {c.shape} do not match")
    if labels is None:
        labels = list(range(len(d)))
    return float(sum(link_delay(d_l, c_l, link=label) for d_l, c_l, label in zip(d, c, labels)))


def sample_gains(rng, n_links, gain_max=consts.GAIN_MAX, noise=consts.NOISE):
    """
    Random channel of the active links of one slot: unit direct gains, interference gains uniform in (0, gain_max]
    and equal noise on every link.

    :param rng: np.random.Generator
    :param n_links: int, number of active links
    :param gain_max: float, upper bound of the interference gains (default: 0.01)
    :param noise: float, noise power (default: 1e-5)
    :return: ChannelState
    """
    # 1 - U[0, 1) is uniform in (0, 1]
    G = gain_max * (1. - rng.random((n_links, n_links)))
    np.fill_diagonal(G, 1.)
    return ChannelState(G, np.full(n_links, noise))
