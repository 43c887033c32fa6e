import logging

import numpy as np
import pandas as pd
import pytest

import ehwsn
from conftest import FIRST_SLOT_FLOWS
from ehwsn import consts
from ehwsn.api import ScenarioConfig, parse_channel, parse_transfer
from ehwsn.errors import ConfigError, InfeasibleProblemError


def chain_config(**kwargs):
    topology = ehwsn.Topology(nodes=[0, 1, 2, 3], data_links=[(1, 0), (2, 1), (3, 2)], energy_links=[(3, 1)])
    return ScenarioConfig(topology=topology, seed_gains=1, seed_flows=2, seed_energy=3, **kwargs)


def test_parse_modes():
    assert parse_channel("oc") == "orthogonal"
    assert parse_channel("IFC") == "interference"
    assert parse_transfer("off") is False
    assert parse_transfer(True) is True
    with pytest.raises(ConfigError):
        parse_channel("mimo")
    with pytest.raises(ConfigError):
        parse_transfer("maybe")


def test_config_from_dict():
    doc = {
        "version": 1,
        "topology": "tree14",
        "channel": "oc",
        "transfer": "off",
        "seeds": {"gains": 1, "flows": 2, "energy": 3},
        "parameters": {"battery": 15, "carry_over": True},
        "solver": {"tol": 1e-7},
        "slots": 6,
    }
    config = ScenarioConfig.from_dict(doc, name="custom")
    assert config.channel == "orthogonal" and not config.transfer
    assert config.battery == 15. and config.carry_over
    assert config.solver.tol == 1e-7
    assert config.topology.n_links == 14
    assert config.name == "custom"


@pytest.mark.parametrize(
    "change",
    [
        {"version": 2},
        {"color": "blue"},
        {"seeds": {"gains": 1, "flows": 2, "noise": 3}},
        {"parameters": {"temperature": 3}},
        {"solver": {"tolerance": 1e-3}},
        {"channel": "mimo"},
        {"seeds": {"gains": 1, "flows": 2}},
        {"slots": 0},
        {"gains": [[1., 0.], [0., 1.]]},
    ],
)
def test_config_invalid(change):
    doc = {"version": 1, "topology": "tree14", "seeds": {"gains": 1, "flows": 2, "energy": 3}, **change}
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(doc)


def test_config_replace():
    config = chain_config()
    other = config.replace(channel="oc", transfer="off", seed_gains=9)
    assert other.channel == "orthogonal" and not other.transfer and other.seed_gains == 9
    assert config.channel == "interference" and config.transfer


def test_scenario_slots():
    scenario = ehwsn.Scenario(chain_config(slots=5))
    assert len(scenario.schedule) == 2 and scenario.n_slots == 5
    assert [scenario.schedule_slot(k) for k in range(5)] == [0, 1, 0, 1, 0]
    with pytest.raises(ConfigError):
        scenario.schedule_slot(5)


def test_scenario_sampling():
    scenario = ehwsn.Scenario("tree14")
    d = scenario.flows
    assert d.shape == (14,) and np.all((d > 0) & (d <= 1))
    # flows are fixed for the whole round
    assert scenario.slot_problem(0).d.tolist() == d[list(scenario.schedule.slots[0])].tolist()
    # each slot draws its own channel and energy, reproducibly
    np.testing.assert_array_equal(scenario.channel(0).G, ehwsn.Scenario("tree14").channel(0).G)
    assert scenario.channel(0).G.shape == (5, 5)
    assert scenario.arrivals(0).energy != scenario.arrivals(1).energy
    assert scenario.arrivals(0).energy == scenario.arrivals(0).energy
    orthogonal = ehwsn.Scenario(scenario.config.replace(channel="oc"))
    np.testing.assert_array_equal(orthogonal.channel(0).G, np.eye(5))


def test_first_slot_problem(first_slot):
    problem = first_slot.slot_problem(0)
    assert problem.labels == ["l1", "l8", "l9", "l12", "l13"]
    np.testing.assert_allclose(problem.d, FIRST_SLOT_FLOWS)
    assert problem.energy_links == ((4, 1), (7, 8), (10, 9), (11, 12), (14, 13))
    np.testing.assert_allclose(problem.efficiency, 0.6)
    E = {n: problem.E[problem.row[n]] for n in (1, 8, 9, 12, 13, 4, 7, 10, 11, 14)}
    assert E == {1: 9., 8: 10., 9: 7., 12: 8., 13: 9., 4: 11., 7: 10., 10: 8., 11: 4., 14: 6.}


def test_first_slot_orthogonal_transfer(first_slot):
    # every donor hands over all of its energy, so each transmitter spends E + eta * E_donor
    scenario = ehwsn.Scenario(first_slot.config.replace(channel="orthogonal"))
    result = scenario.run_slot(0)
    assert result.feasible
    np.testing.assert_allclose(result.solution.p, [15.6, 16., 11.8, 10.4, 12.6], atol=1e-3)
    np.testing.assert_allclose(result.solution.x, [11., 10., 8., 4., 6.], atol=1e-3)


def test_first_slot_interference(first_slot):
    on = first_slot.run_slot(0)
    off = ehwsn.Scenario(first_slot.config.replace(transfer="off")).run_slot(0)
    s = on.solution
    # the objective follows from the reported SINRs
    d = on.problem.d
    assert s.objective == pytest.approx(np.sum(d / (0.5 * np.log(s.sinr) - d)), rel=1e-8)
    assert on.delay <= off.delay + 1e-8
    assert on.kkt.ok()
    assert off.kkt.ok()
    assert s.exact_objective <= s.objective


def test_slot_result_frame(first_slot):
    result = first_slot.run_slot(0)
    df = result.to_frame()
    assert list(df.columns) == consts.LINK_COLUMNS
    assert len(df) == 5
    assert df["slot"].tolist() == [1] * 5
    assert df["link"].tolist() == ["l1", "l8", "l9", "l12", "l13"]
    np.testing.assert_allclose(df["transferred_in"], 0.6 * result.solution.x)
    assert df["feasible"].all()
    residual = result.residual()
    assert set(residual) == set(result.problem.energy.energy)
    assert all(0. <= residual[n] <= result.problem.energy[n] + 1e-9 for n in (4, 7, 10, 11, 14))


def test_infeasible_slot_recorded(caplog):
    topology = ehwsn.Topology(nodes=[0, 1, 2], data_links=[(1, 0), (2, 1)])
    config = ScenarioConfig(topology=topology, seed_gains=1, energy={1: 1e-9, 2: 1e-9}, flows={1: 0.5, 2: 0.5})
    with caplog.at_level(logging.WARNING, logger="ehwsn.api"):
        result = ehwsn.run_round(config)
    assert len(result.slots) == 2
    assert not any(s.feasible for s in result.slots)
    assert np.all(np.isinf(result.delays))
    assert "infeasible" in caplog.text
    summary = result.summary()
    assert summary["feasible"].tolist() == [False, False]
    # infeasible slots keep their infinite delay but add nothing to the running total
    np.testing.assert_array_equal(result.cumulative, [0., 0.])
    assert summary["infeasible_slots"].tolist() == [1, 2]
    assert np.isinf(summary["delay"]).all()
    assert result.to_frame()["power"].isna().all()
    with pytest.raises(InfeasibleProblemError):
        ehwsn.Scenario(config).run_slot(0, strict=True)


def test_run_round_chain():
    result = ehwsn.run_round(chain_config())
    assert len(result.slots) == 2
    assert all(s.feasible for s in result.slots)
    cumulative = result.cumulative
    assert len(cumulative) == 2
    assert np.all(np.diff(cumulative) >= 0)
    summary = result.summary()
    assert list(summary.columns) == consts.SUMMARY_COLUMNS
    assert summary["slot"].tolist() == [1, 2]
    assert summary["infeasible_slots"].tolist() == [0, 0]
    np.testing.assert_allclose(summary["cumulative_delay"], cumulative)


def test_run_slot_reproduces_round():
    config = ehwsn.io.read_config("tree14")
    result = ehwsn.run_round(config)
    assert len(result.slots) == 3
    for k in range(3):
        assert ehwsn.run_slot(config, k).delay == result.slots[k].delay


def test_carry_over():
    config = chain_config(carry_over=True)
    scenario = ehwsn.Scenario(config)
    results = list(scenario.iter_round())
    first = results[0].residual()
    arrivals = scenario.arrivals(1)
    energy = results[1].problem.energy
    for n in arrivals.nodes:
        assert energy[n] == pytest.approx(min(config.battery, arrivals[n] + first[n]))


def test_export_deterministic(tmp_path):
    config = chain_config()
    for name in ("a", "b"):
        (tmp_path / name).mkdir()
        ehwsn.export_results(ehwsn.run_round(config), path=str(tmp_path / name), prefix="chain")
    for suffix in ("links", "summary"):
        a = (tmp_path / "a" / f"chain_{suffix}.csv").read_bytes()
        b = (tmp_path / "b" / f"chain_{suffix}.csv").read_bytes()
        assert a == b
    links = pd.read_csv(tmp_path / "a" / "chain_links.csv")
    assert list(links.columns) == consts.LINK_COLUMNS
    assert len(links) == 3


def test_export_single_slot(tmp_path, first_slot):
    fns = ehwsn.export_results(first_slot.run_slot(0), path=str(tmp_path), prefix="first")
    assert len(pd.read_csv(fns[0])) == 5
    assert len(pd.read_csv(fns[1])) == 1


@pytest.mark.slow
def test_ordering_laws():
    # matched seeds: zeroing interference and enabling transfers never increase the delay of a slot
    base = ehwsn.io.read_config("tree14")
    for seed in range(20):
        config = base.replace(seed_gains=seed, seed_flows=100 + seed, seed_energy=200 + seed)
        cumulative = {}
        for channel in ("orthogonal", "interference"):
            for transfer in (False, True):
                result = ehwsn.run_round(config.replace(channel=channel, transfer=transfer))
                assert np.all(np.diff(result.cumulative) >= 0)
                cumulative[channel, transfer] = result.cumulative
        tol = 1e-6 * (1. + cumulative["interference", False])
        assert np.all(cumulative["interference", False] >= cumulative["interference", True] - tol)
        assert np.all(cumulative["orthogonal", False] >= cumulative["orthogonal", True] - tol)
        assert np.all(cumulative["interference", True] >= cumulative["orthogonal", True] - tol)
        assert np.all(cumulative["interference", False] >= cumulative["orthogonal", False] - tol)
