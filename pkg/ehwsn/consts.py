SINK = 0
CONFIG_VERSION = 1

# experiment defaults
ARRIVAL_RATE = 8.0
BATTERY = 20.0
FLOW_MAX = 1.0
GAIN_MAX = 0.01
NOISE = 1e-5
EFFICIENCY = 0.6
SINR_THRESHOLD = 5.0

# feasibility
WITNESS_MARGIN = 0.1
WITNESS_FRACTIONS = [0.5, 0.75, 0.9, 0.99]
SPECTRAL_TOL = 1e-10
SPECTRAL_MAX_ITER = 10000

# tolerances used for checking results
CONSERVATION_TOL = 1e-12
# fraction of the largest delay sensitivity of a slot added to the scale of relative stationarity
REL_STATIONARITY_FLOOR = 1e-4
BUDGET_TOL = 1e-9
DUAL_TOL = 1e-9

CHANNEL_MODES = {
    "orthogonal": "orthogonal",
    "oc": "orthogonal",
    "interference": "interference",
    "ifc": "interference",
}
TRANSFER_MODES = {
    "on": True,
    "off": False,
    True: True,
    False: False,
}

LINK_COLUMNS = [
    "slot",
    "link",
    "flow",
    "power",
    "sinr",
    "capacity_approx",
    "capacity_exact",
    "delay",
    "transferred_in",
    "lambda_node",
    "feasible",
]
SUMMARY_COLUMNS = [
    "slot",
    "delay",
    "cumulative_delay",
    "feasible",
    "min_sinr",
    "low_sinr_links",
    "kkt_residual",
    "infeasible_slots",
]
FLOAT_FORMAT = "%.6g"
