import numpy as np
import pytest

from conftest import random_problem
from ehwsn.channel import ChannelState, capacity_approx, capacity_exact, sample_gains
from ehwsn.errors import InfeasibleProblemError, RateInfeasibleError
from ehwsn.feasibility import check_problem_feasible, interference_matrix, min_power_vector, sinr_targets
from ehwsn.helpers import spectral_radius
from ehwsn.solver import SlotProblem, solve


def fixed_point_powers(M, b, tol=1e-15, max_iter=100000):
    p = np.zeros(len(b))
    for _ in range(max_iter):
        p_new = M @ p + b
        if np.max(np.abs(p_new - p)) <= tol * np.max(np.abs(p_new)):
            return p_new
        p = p_new
    raise AssertionError("fixed point iteration did not converge")


def test_sinr_targets():
    np.testing.assert_allclose(sinr_targets([0.5]), [np.e - 1.])
    np.testing.assert_allclose(sinr_targets([0.5], high_sinr=True), [np.e])


def test_min_power_matches_fixed_point(rng):
    for _ in range(100):
        L = rng.integers(1, 6)
        ch = sample_gains(rng, L, gain_max=rng.uniform(0.001, 0.05))
        d = rng.uniform(0.05, 1., size=L)
        for high_sinr in (False, True):
            M, b = interference_matrix(ch, d, high_sinr=high_sinr)
            p = min_power_vector(ch, d, high_sinr=high_sinr).p
            np.testing.assert_allclose(p, fixed_point_powers(M, b), rtol=1e-10)


def test_min_power_meets_demand_exactly(rng):
    ch = sample_gains(rng, 4)
    d = rng.uniform(0.1, 0.9, size=4)
    pv = min_power_vector(ch, d)
    np.testing.assert_allclose(capacity_exact(ch, pv.p), d, rtol=1e-10)
    pv = min_power_vector(ch, d, high_sinr=True)
    np.testing.assert_allclose(capacity_approx(ch, pv.ptilde), d, rtol=1e-10)


def test_min_power_single_link():
    ch = ChannelState([[2.]], 1e-4)
    p = min_power_vector(ch, [0.5]).p
    np.testing.assert_allclose(p, (np.e - 1.) * 1e-4 / 2.)


def test_min_power_rate_infeasible():
    ch = ChannelState([[1., 2.], [2., 1.]], 1e-5)
    with pytest.raises(RateInfeasibleError) as e:
        min_power_vector(ch, [1., 1.])
    # M = (e^2 - 1) * [[0, 2], [2, 0]]
    assert e.value.spectral_radius == pytest.approx(2. * np.expm1(2.), rel=1e-6)
    assert e.value.category == "infeasible"
    assert spectral_radius(interference_matrix(ch, [1., 1.])[0]) >= 1.


def test_min_power_exact_needs_positive_flow():
    with pytest.raises(ValueError):
        min_power_vector(ChannelState(np.eye(2), 1e-5), [0.5, 0.])


def test_feasible_report(donor_problem):
    report = check_problem_feasible(donor_problem)
    assert report.feasible and report.rate_feasible
    assert report.spectral_radius < 1.
    assert report.nodes == (1, 2, 3)
    assert report.usable.tolist() == [True]
    # the witness is strictly inside every constraint
    m = donor_problem.matrices
    slack = donor_problem.E - m.K @ report.witness_p - m.B @ report.witness_x
    assert np.all(slack[donor_problem.budget] > 0)
    assert np.all(capacity_approx(donor_problem.channel, np.log(report.witness_p)) > donor_problem.d)
    assert np.all(report.witness_x > 0)
    assert np.all(report.witness_p > report.p_min)
    df = report.to_frame()
    assert list(df.columns) == ["node", "need", "available", "slack", "feasible"]
    assert df["feasible"].all()


def test_energy_infeasible():
    problem = SlotProblem(
        data_links=[(1, 10), (2, 20)],
        d=[0.5, 0.5],
        channel=ChannelState([[1., 0.01], [0.01, 1.]], 1e-5),
        energy={1: 5., 2: 1e-7},
    )
    report = check_problem_feasible(problem)
    assert report.rate_feasible and not report.feasible
    assert any("node 2" in r for r in report.reasons)
    assert report.to_frame()["feasible"].tolist() == [True, False]
    with pytest.raises(InfeasibleProblemError) as e:
        solve(problem)
    assert not isinstance(e.value, RateInfeasibleError)
    assert e.value.report is not None


def test_transfer_restores_feasibility():
    problem = SlotProblem(
        data_links=[(1, 10)],
        d=[0.5],
        channel=ChannelState([[1.]], 1e-5),
        energy={1: 1e-6, 3: 10.},
        energy_links=[(3, 1)],
    )
    assert not check_problem_feasible(problem, transfer=False).feasible
    report = check_problem_feasible(problem, transfer=True)
    assert report.feasible
    # the recipient could receive eta times the spare energy of the donor
    assert report.to_frame().set_index("node").loc[1, "available"] == pytest.approx(1e-6 + 0.6 * 10., rel=1e-6)


def test_rate_infeasible_problem():
    problem = SlotProblem(
        data_links=[(1, 10), (2, 20)],
        d=[1., 1.],
        channel=ChannelState([[1., 2.], [2., 1.]], 1e-5),
        energy={1: 5., 2: 5.},
    )
    report = check_problem_feasible(problem)
    assert not report.feasible and not report.rate_feasible
    with pytest.raises(RateInfeasibleError):
        solve(problem)


def test_random_problems_feasible(rng):
    for _ in range(20):
        problem = random_problem(rng, 3, n_donors=2)
        report = check_problem_feasible(problem)
        assert report.feasible, report.reasons


def rebuild(problem, d=None, energy_scale=1.):
    energy = {n: energy_scale * e for n, e in problem.energy.energy.items()}
    return SlotProblem(
        data_links=problem.data_links,
        d=problem.d if d is None else d,
        channel=problem.channel,
        energy=energy,
        energy_links=problem.energy_links,
        efficiency=problem.efficiency,
    )


def test_feasibility_monotone(rng):
    # budgets of the order of the minimum powers, so that both outcomes occur
    outcomes = set()
    for _ in range(50):
        problem = random_problem(rng, 3, n_donors=rng.integers(0, 3), energy_range=(1e-5, 8e-5))
        feasible = check_problem_feasible(problem).feasible
        outcomes.add(feasible)
        more_energy = check_problem_feasible(rebuild(problem, energy_scale=2.)).feasible
        less_flow = check_problem_feasible(rebuild(problem, d=0.7 * problem.d)).feasible
        if feasible:
            assert more_energy and less_flow
        less_energy = check_problem_feasible(rebuild(problem, energy_scale=0.5)).feasible
        more_flow = check_problem_feasible(rebuild(problem, d=1.3 * problem.d)).feasible
        if not feasible:
            assert not less_energy and not more_flow
    assert outcomes == {True, False}


def test_rate_threshold_bisection():
    # symmetric pair with cross gain g: the high-SINR demands e^(2d) are met iff g.e^(2d) < 1
    g = 0.3
    ch = ChannelState([[1., g], [g, 1.]], 1e-5)

    def rate_feasible(d):
        problem = SlotProblem(data_links=[(1, 10), (2, 20)], d=[d, d], channel=ch, energy={1: 20., 2: 20.})
        return check_problem_feasible(problem).rate_feasible

    lo, hi = 0.01, 2.
    assert rate_feasible(lo) and not rate_feasible(hi)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if rate_feasible(mid):
            lo = mid
        else:
            hi = mid
    assert lo == pytest.approx(-0.5 * np.log(g), rel=1e-8)
    M, _ = interference_matrix(ch, [lo, lo], high_sinr=True)
    assert spectral_radius(M) == pytest.approx(1., abs=1e-8)
    assert spectral_radius(M) < 1.
