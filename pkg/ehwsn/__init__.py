__version__ = "0.1.0"
from ehwsn import consts
from ehwsn import errors
from ehwsn import helpers
from ehwsn import network
from ehwsn import channel
from ehwsn import energy
from ehwsn import feasibility
from ehwsn import solver
from ehwsn import oracle
from ehwsn import io
from ehwsn import cli
from .api import *
from .errors import *
from .network import Topology, build_incidence, check_flow_conservation, half_duplex_schedule
from .solver import SlotProblem, Solution, SolverOptions, kkt_report, solve
