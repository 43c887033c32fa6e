# I/O functionality for ehwsn: scenario and topology documents, bundled scenarios, CSV and JSON results
import json
import logging
import os

import numpy as np

from ehwsn import consts
from ehwsn.errors import ConfigError, ResultIOError
from ehwsn.network import Topology
from ehwsn.solver import SlotProblem, Solution

logger = logging.getLogger(__name__)

# high level variables
PATH = os.path.dirname(__file__)
DATA_PATH = os.path.join(PATH, "data")


def bundled_scenarios():
    """
    Names of the scenarios shipped with the package, usable wherever a config path is expected.

    :return: list of str
    """
    return sorted(os.path.splitext(fn)[0] for fn in os.listdir(DATA_PATH) if fn.endswith(".json"))


def resolve(ref, base_path="."):
    """
    Path of a document reference: the name of a bundled scenario or a path, relative paths taken from base_path.

    :param ref: str, name or path
    :param base_path: str, directory of the referring document
    :return: str
    """
    if ref in bundled_scenarios():
        return os.path.join(DATA_PATH, f"{ref}.json")
    return ref if os.path.isabs(ref) else os.path.join(base_path, ref)


def read_json(fn):
    """
    Read a UTF-8 JSON document.

    :param fn: str, path
    :return: dict
    """
    try:
        with open(fn, "r", encoding="utf-8") as f:
            return json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{fn} is not valid JSON: {e}")
    except OSError as e:
        raise ResultIOError(f"Could not read document ({e.strerror})", path=fn)


def check_version(doc, fn="document"):
    version = doc.get("version") if isinstance(doc, dict) else None
    if version is None:
        raise ConfigError(f"{fn} has no version field")
    if version != consts.CONFIG_VERSION:
        raise ConfigError(f"{fn} has unsupported version {version}, expected {consts.CONFIG_VERSION}")


def read_topology(ref, base_path=".", efficiency=consts.EFFICIENCY):
    """
    Read a topology from an inline document, a bundled scenario name or a file. A scenario document may be given as
    well, its topology is used.

    :param ref: dict, str name or str path
    :param base_path: str, directory that relative paths are taken from
    :param efficiency: float, efficiency of energy links that do not specify one
    :return: Topology
    """
    if isinstance(ref, str):
        fn = resolve(ref, base_path)
        doc = read_json(fn)
        check_version(doc, fn)
        base_path = os.path.dirname(fn)
    else:
        doc = ref
    if "topology" in doc:
        return read_topology(doc["topology"], base_path=base_path, efficiency=efficiency)
    return Topology.from_dict(doc, efficiency=efficiency)


def read_config(ref):
    """
    Read a scenario configuration from a file or by the name of a bundled scenario.

    :param ref: str, name or path
    :return: ehwsn.ScenarioConfig
    """
    from ehwsn.api import ScenarioConfig
    fn = resolve(ref)
    doc = read_json(fn)
    logger.debug(f"Read scenario from {fn}")
    return ScenarioConfig.from_dict(doc, base_path=os.path.dirname(fn), name=os.path.splitext(os.path.basename(fn))[0])


def write_frame(df, fn):
    """
    Write a table to CSV with floats printed to 6 significant digits.

    :param df: pd.DataFrame
    :param fn: str, path
    :return: str, path
    """
    try:
        df.to_csv(fn, index=False, float_format=consts.FLOAT_FORMAT)
    except OSError as e:
        raise ResultIOError(f"Could not write results ({e.strerror})", path=fn)
    return fn


def export_results(result, path=".", prefix="round"):
    """
    Write a round result to <path>/<prefix>_links.csv (one row per slot and link) and <path>/<prefix>_summary.csv
    (one row per slot with the cumulative delay).

    :param result: RoundResult
    :param path: str, output directory
    :param prefix: str, file name prefix
    :return: list of written paths
    """
    if not os.path.isdir(path):
        raise ResultIOError("Output directory does not exist", path=path)
    return [
        write_frame(result.to_frame(), os.path.join(path, f"{prefix}_links.csv")),
        write_frame(result.summary(), os.path.join(path, f"{prefix}_summary.csv")),
    ]


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"{type(obj)} is not JSON serialisable")


def write_solution(fn, problem, solution, meta=None):
    """
    Store a slot problem with its solution, e.g. to check its optimality conditions later.

    :param fn: str, path
    :param problem: SlotProblem
    :param solution: Solution
    :param meta: dict, extra information stored alongside (e.g. slot and scenario)
    :return: str, path
    """
    doc = {
        "version": consts.CONFIG_VERSION,
        "meta": meta or {},
        "problem": problem.to_dict(),
        "solution": solution.to_dict(),
    }
    try:
        with open(fn, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=2, default=_jsonable)
    except OSError as e:
        raise ResultIOError(f"Could not write solution ({e.strerror})", path=fn)
    return fn


def read_solution(fn):
    """
    Read a slot problem and its solution written by write_solution.

    :param fn: str, path
    :return: (SlotProblem, Solution, meta dict)
    """
    doc = read_json(fn)
    check_version(doc, fn)
    try:
        return SlotProblem.from_dict(doc["problem"]), Solution.from_dict(doc["solution"]), doc.get("meta", {})
    except (KeyError, TypeError) as e:
        raise ConfigError(f"{fn} is not a stored solution, missing or invalid entry {e}")
