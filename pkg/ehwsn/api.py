# here, high-level API classes are defined
import logging
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from ehwsn import consts, io
from ehwsn.channel import ChannelState, sample_gains
from ehwsn.energy import EnergyState, carry_over, check_energy_budget, sample_arrivals
from ehwsn.errors import ConfigError, InfeasibleProblemError
from ehwsn.helpers import make_rng
from ehwsn.network import Topology, half_duplex_schedule
from ehwsn.solver import SlotProblem, SolverOptions, kkt_report, solve

logger = logging.getLogger(__name__)

PARAMETERS = {
    "arrival_rate": consts.ARRIVAL_RATE,
    "flow_max": consts.FLOW_MAX,
    "gain_max": consts.GAIN_MAX,
    "noise": consts.NOISE,
    "efficiency": consts.EFFICIENCY,
    "battery": consts.BATTERY,
    "sinr_threshold": consts.SINR_THRESHOLD,
    "carry_over": False,
}


@dataclass(frozen=True)
class ScenarioConfig:
    """
    Everything needed to reproduce an experiment. Explicit flows, energies and gains take precedence over sampling;
    each sampled quantity has its own seed so that one factor can be varied at a time.
    """
    topology: Topology
    channel: str = "interference"
    transfer: bool = True
    seed_gains: int = None
    seed_flows: int = None
    seed_energy: int = None
    arrival_rate: float = consts.ARRIVAL_RATE
    flow_max: float = consts.FLOW_MAX
    gain_max: float = consts.GAIN_MAX
    noise: float = consts.NOISE
    efficiency: float = consts.EFFICIENCY
    battery: float = consts.BATTERY
    sinr_threshold: float = consts.SINR_THRESHOLD
    carry_over: bool = False
    solver: SolverOptions = field(default_factory=SolverOptions)
    slots: int = None
    flows: dict = None
    energy: dict = None
    gains: np.ndarray = None
    name: str = ""

    @classmethod
    def from_dict(cls, d, base_path=".", name=""):
        """
        Build a configuration from a scenario document (see the docs for its schema).

        :param d: dict, parsed scenario document
        :param base_path: str, directory that relative topology paths are taken from
        :param name: str, name of the scenario
        :return: ScenarioConfig
        """
        io.check_version(d, name or "scenario")
        unknown = set(d) - {
            "version", "name", "topology", "channel", "transfer", "seeds", "parameters", "solver", "slots", "flows",
            "energy", "gains",
        }
        if unknown:
            raise ConfigError(f"Unknown scenario entries {sorted(unknown)}")
        params = dict(PARAMETERS)
        for k, v in d.get("parameters", {}).items():
            if k not in PARAMETERS:
                raise ConfigError(f"Unknown parameter {k}")
            try:
                params[k] = bool(v) if k == "carry_over" else float(v)
            except (TypeError, ValueError):
                raise ConfigError(f"Parameter {k} must be a number, got {v!r}")
        if "topology" not in d:
            raise ConfigError("Scenario has no topology")
        topology = io.read_topology(d["topology"], base_path=base_path, efficiency=params["efficiency"])
        seeds = d.get("seeds", {})
        unknown = set(seeds) - {"gains", "flows", "energy"}
        if unknown:
            raise ConfigError(f"Unknown seeds {sorted(unknown)}")
        gains = d.get("gains")
        try:
            flows = {int(k): float(v) for k, v in d["flows"].items()} if "flows" in d else None
            energy = {int(k): float(v) for k, v in d["energy"].items()} if "energy" in d else None
            gains = np.array(gains, dtype=float) if gains is not None else None
        except (AttributeError, TypeError, ValueError) as e:
            raise ConfigError(f"Explicit flows, energy and gains must be numeric: {e}")
        config = cls(
            topology=topology,
            channel=parse_channel(d.get("channel", "interference")),
            transfer=parse_transfer(d.get("transfer", "on")),
            seed_gains=seeds.get("gains"),
            seed_flows=seeds.get("flows"),
            seed_energy=seeds.get("energy"),
            solver=SolverOptions.from_dict(
                {"sinr_threshold": params["sinr_threshold"], **d.get("solver", {})}
            ),
            slots=d.get("slots"),
            flows=flows,
            energy=energy,
            gains=gains,
            name=d.get("name", name),
            **params,
        )
        config.validate()
        return config

    def replace(self, **kwargs):
        """
        Copy of the configuration with some fields replaced, e.g. to override settings from the command line.
        """
        if "channel" in kwargs:
            kwargs["channel"] = parse_channel(kwargs["channel"])
        if "transfer" in kwargs:
            kwargs["transfer"] = parse_transfer(kwargs["transfer"])
        return replace(self, **kwargs)

    def validate(self):
        if self.channel not in ("orthogonal", "interference"):
            raise ConfigError(f"Unknown channel mode {self.channel}")
        if self.slots is not None and (not isinstance(self.slots, (int, np.integer)) or self.slots < 1):
            raise ConfigError(f"A round needs a whole number of at least one slot, got {self.slots!r}")
        if self.flow_max <= 0 or self.gain_max <= 0 or self.noise <= 0 or self.arrival_rate <= 0:
            raise ConfigError("Flow, gain, noise and arrival parameters must be positive")
        if self.battery < 1:
            raise ConfigError(f"Battery capacity must be at least 1, got {self.battery}")
        L = self.topology.n_links
        if self.gains is not None:
            if self.gains.shape != (L, L):
                raise ConfigError(f"Gain matrix must be {L}x{L} over the data links, got {self.gains.shape}")
            try:
                ChannelState(self.gains, self.noise)
            except ValueError as e:
                raise ConfigError(f"Invalid gain matrix: {e}")
        if self.flows is not None:
            missing = [i for i, _ in self.topology.data_links if i not in self.flows]
            if missing:
                raise ConfigError(f"No flow given for the links of nodes {missing}")
            bad = [i for i, v in self.flows.items() if not (np.isfinite(v) and v > 0)]
            if bad:
                raise ConfigError(f"Flows must be positive, got invalid flows for nodes {bad}")
        if self.energy is not None:
            missing = [n for n in self.topology.nodes if n != self.topology.sink and n not in self.energy]
            if missing:
                raise ConfigError(f"No energy given for nodes {missing}")
            bad = [n for n, e in self.energy.items() if not (np.isfinite(e) and e > 0)]
            if bad:
                raise ConfigError(f"Energy must be positive, got invalid energy for nodes {bad}")
        for quantity, explicit, seed in (
            ("gains", self.gains, self.seed_gains),
            ("flows", self.flows, self.seed_flows),
            ("energy", self.energy, self.seed_energy),
        ):
            if explicit is None and seed is None:
                raise ConfigError(f"Neither explicit {quantity} nor a {quantity} seed are given")
            if seed is not None and (not isinstance(seed, (int, np.integer)) or seed < 0):
                raise ConfigError(f"The {quantity} seed must be a nonnegative integer, got {seed!r}")


def parse_channel(mode):
    try:
        return consts.CHANNEL_MODES[str(mode).lower()]
    except KeyError:
        raise ConfigError(f'Channel mode must be "oc" or "ifc", got "{mode}"')


def parse_transfer(mode):
    key = mode if isinstance(mode, bool) else str(mode).lower()
    try:
        return consts.TRANSFER_MODES[key]
    except KeyError:
        raise ConfigError(f'Transfer mode must be "on" or "off", got "{mode}"')


@dataclass
class SlotResult:
    """
    Outcome of one slot of a round. `index` counts slots within the round (0-based), `slot` is the schedule slot it
    runs. Infeasible slots have no solution and count with an infinite delay.
    """
    index: int
    slot: int
    problem: SlotProblem
    solution: object = None
    kkt: object = None
    reason: str = ""

    @property
    def feasible(self):
        return self.solution is not None

    @property
    def delay(self):
        return self.solution.objective if self.feasible else np.inf

    def received(self):
        """
        Energy received over energy links per node, in the row order of the problem.
        """
        recv = np.zeros(len(self.problem.nodes))
        if self.feasible:
            for ((_, j), eta, x_q) in zip(self.problem.energy_links, self.problem.efficiency, self.solution.x):
                recv[self.problem.row[j]] += eta * x_q
        return recv

    def residual(self):
        """
        Energy left per node after the slot.

        :return: dict {node: energy}
        """
        energy = dict(self.problem.energy.energy)
        if self.feasible:
            left = check_energy_budget(self.problem.matrices, self.solution.p, self.solution.x, self.problem.E)
            for n, r in zip(self.problem.nodes, left):
                if n in energy:
                    energy[n] = max(float(r), 0.)
        return energy

    def to_frame(self):
        """
        One row per active link.

        :return: pd.DataFrame
        """
        pr = self.problem
        L = pr.n_links
        if self.feasible:
            s = self.solution
            recv = self.received()[pr.owner]
            cols = {
                "power": s.p,
                "sinr": s.sinr,
                "capacity_approx": s.capacity_approx,
                "capacity_exact": s.capacity_exact,
                "delay": s.delay,
                "transferred_in": recv,
                "lambda_node": np.asarray(s.lam)[pr.owner],
            }
        else:
            cols = {k: np.full(L, np.nan) for k in (
                "power", "sinr", "capacity_approx", "capacity_exact", "delay", "transferred_in", "lambda_node"
            )}
        return pd.DataFrame(
            {
                "slot": np.full(L, self.index + 1),
                "link": pr.labels,
                "flow": pr.d,
                **cols,
                "feasible": np.full(L, self.feasible),
            },
            columns=consts.LINK_COLUMNS,
        )


@dataclass
class RoundResult:
    slots: list = field(default_factory=list)

    @property
    def delays(self):
        return np.array([s.delay for s in self.slots])

    @property
    def cumulative(self):
        """
        Total delay accumulated over the feasible slots up to each slot. Infeasible slots add nothing; they are
        counted by `infeasible_count`.
        """
        delays = self.delays
        return np.cumsum(np.where(np.isfinite(delays), delays, 0.))

    @property
    def infeasible_count(self):
        """
        Number of infeasible slots up to each slot.
        """
        return np.cumsum([not s.feasible for s in self.slots]).astype(int)

    def to_frame(self):
        if not self.slots:
            return pd.DataFrame(columns=consts.LINK_COLUMNS)
        return pd.concat([s.to_frame() for s in self.slots], ignore_index=True)

    def summary(self):
        """
        One row per slot: its delay, the cumulative delay, the lowest SINR, the links below the high-SINR threshold
        and the largest optimality residual, plus the running count of infeasible slots.

        :return: pd.DataFrame
        """
        rows = []
        for s, cum, skipped in zip(self.slots, self.cumulative, self.infeasible_count):
            rows.append({
                "slot": s.index + 1,
                "delay": s.delay,
                "cumulative_delay": cum,
                "feasible": s.feasible,
                "min_sinr": float(np.min(s.solution.sinr)) if s.feasible else np.nan,
                "low_sinr_links": ";".join(s.solution.low_sinr) if s.feasible else "",
                "kkt_residual": s.kkt.max_residual if s.kkt is not None else np.nan,
                "infeasible_slots": int(skipped),
            })
        return pd.DataFrame(rows, columns=consts.SUMMARY_COLUMNS)

    def to_file(self, path=".", prefix="round"):
        """
        Write <path>/<prefix>_links.csv and <path>/<prefix>_summary.csv.

        :param path: str, output directory (default: ".")
        :param prefix: str, file name prefix (default: "round")
        :return: list of written paths
        """
        return io.export_results(self, path=path, prefix=prefix)


class Scenario:
    def __init__(self, config):
        """
        Create a new Scenario instance from a configuration. The half-duplex schedule is derived from the topology;
        flows are fixed for the whole round.

        :param config: ScenarioConfig, or str with a config path or bundled scenario name
        """
        if isinstance(config, str):
            config = io.read_config(config)
        config.validate()
        self.config = config
        self.topology = config.topology
        self.schedule = half_duplex_schedule(self.topology)
        self.n_slots = int(config.slots) if config.slots is not None else len(self.schedule)
        self._flows = None

    @property
    def flows(self):
        """
        Flow per data link in topology order, explicit or drawn uniformly from (0, flow_max].
        """
        if self._flows is None:
            if self.config.flows is not None:
                self._flows = np.array([self.config.flows[i] for i, _ in self.topology.data_links])
            else:
                rng = make_rng(self.config.seed_flows)
                self._flows = self.config.flow_max * (1. - rng.random(self.topology.n_links))
        return self._flows

    def schedule_slot(self, k):
        if not 0 <= k < self.n_slots:
            raise ConfigError(f"Slot index {k} is outside the round of {self.n_slots} slots")
        return k % len(self.schedule)

    def channel(self, k):
        """
        Channel of the active links of round slot k, with interference removed in orthogonal mode.

        :param k: int, slot index within the round (0-based)
        :return: ChannelState
        """
        links = self.schedule.slots[self.schedule_slot(k)]
        if self.config.gains is not None:
            ch = ChannelState(self.config.gains, self.config.noise).subset(links)
        else:
            ch = sample_gains(make_rng(self.config.seed_gains, k), len(links), self.config.gain_max, self.config.noise)
        return ch.orthogonal() if self.config.channel == "orthogonal" else ch

    def arrivals(self, k):
        """
        Energy harvested for round slot k.

        :param k: int, slot index within the round (0-based)
        :return: EnergyState
        """
        if self.config.energy is not None:
            battery = max([self.config.battery] + list(self.config.energy.values()))
            return EnergyState(self.config.energy, battery=battery)
        nodes = [n for n in self.topology.nodes if n != self.topology.sink]
        return sample_arrivals(
            make_rng(self.config.seed_energy, k), nodes, rate=self.config.arrival_rate, battery=self.config.battery
        )

    def slot_problem(self, k, energy=None):
        """
        Assemble the problem of round slot k.

        :param k: int, slot index within the round (0-based)
        :param energy: EnergyState to use instead of the arrivals of the slot
        :return: SlotProblem
        """
        s = self.schedule_slot(k)
        links = list(self.schedule.slots[s])
        energy_links = list(self.schedule.energy[s]) if self.config.transfer else []
        return SlotProblem(
            data_links=[self.topology.data_links[l] for l in links],
            d=self.flows[links],
            channel=self.channel(k),
            energy=energy if energy is not None else self.arrivals(k),
            energy_links=[self.topology.energy_links[q] for q in energy_links],
            efficiency=self.topology.efficiency[energy_links],
            labels=[self.topology.labels[l] for l in links],
        )

    def run_slot(self, k, energy=None, strict=False):
        """
        Solve round slot k. Infeasible slots are logged and returned without a solution unless strict is set.

        :param k: int, slot index within the round (0-based)
        :param energy: EnergyState to use instead of the arrivals of the slot
        :param strict: bool, raise InfeasibleProblemError for infeasible slots
        :return: SlotResult
        """
        problem = self.slot_problem(k, energy=energy)
        try:
            solution = solve(problem, transfer=self.config.transfer, options=self.config.solver)
        except InfeasibleProblemError as e:
            if strict:
                raise
            logger.warning(f"Slot {k + 1} is infeasible: {e}")
            return SlotResult(index=k, slot=self.schedule_slot(k), problem=problem, reason=str(e))
        return SlotResult(
            index=k,
            slot=self.schedule_slot(k),
            problem=problem,
            solution=solution,
            kkt=kkt_report(problem, solution),
        )

    def iter_round(self):
        """
        Run the slots of a round one by one, carrying unused energy over when configured.

        :return: generator of SlotResult
        """
        previous = None
        for k in range(self.n_slots):
            energy = self.arrivals(k)
            if self.config.carry_over and previous is not None:
                energy = carry_over(energy, previous.residual())
            previous = self.run_slot(k, energy=energy)
            yield previous

    def run_round(self):
        """
        Run a full data collection round.

        :return: RoundResult
        """
        return RoundResult(slots=list(self.iter_round()))


def run_slot(config, k):
    """
    Solve slot k (0-based) of the round described by config.

    :param config: ScenarioConfig or name/path of a scenario
    :param k: int, slot index within the round
    :return: SlotResult
    """
    return Scenario(config).run_slot(k)


def run_round(config):
    """
    Run the full data collection round described by config.

    :param config: ScenarioConfig or name/path of a scenario
    :return: RoundResult
    """
    return Scenario(config).run_round()


def export_results(result, path=".", prefix="round"):
    if isinstance(result, SlotResult):
        result = RoundResult(slots=[result])
    return io.export_results(result, path=path, prefix=prefix)
