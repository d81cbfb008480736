import json

import numpy as np
import pytest

from greenlab.errors import ConfigError, DomainError
from greenlab.green_measure import sample_measure, sample_orbits
from greenlab.linearization import (
    CONVERGING,
    DIVERGING,
    INCONCLUSIVE,
    INVERSE_DIFFERENTIAL,
    ROTATION_TOLERANCE,
    SQRT_D,
    b_membership,
    ball_points,
    distortion_profile,
    dump_trace,
    lb_membership,
    linearization_test,
    mass_curves,
    mass_curves_grid,
    membership,
    sqrt_d_linearization_test,
    v_membership,
)
from greenlab.projective import normalize
from greenlab.zoo import zoo_entry

# real fixed point of the Lattes doubling map, with multiplier -2
LATTES_FIXED_POINT = normalize([np.sqrt(1.0 + 2.0 / np.sqrt(3.0)), 1.0])
CIRCLE_FIXED_POINT = normalize([1.0, 1.0])


@pytest.fixture(params=("power_2_1", "lattes_doubling", "ueda_power_2_1"))
def f(request):
    return zoo_entry(request.param).map


@pytest.fixture(scope="module")
def power_map():
    return zoo_entry("power_2_1").map


@pytest.fixture(scope="module")
def circle_sample(power_map):
    return sample_measure(power_map, 500, seed=21)


@pytest.fixture(scope="module")
def lattes_sample():
    return sample_measure(zoo_entry("lattes_doubling").map, 60, seed=22)


def test_ball_points():
    for k in (1, 2):
        points = ball_points(k, 200)
        assert points.shape == (200, k)
        assert np.all(np.linalg.norm(points, axis=1) < 1.0)
    assert np.array_equal(ball_points(2, 50), ball_points(2, 50))


def test_every_point_is_a_member_at_time_zero(f):
    x = sample_measure(f, 1, seed=1).points[0]
    record = membership(f, x, 0, rho=0.1, tau=2.0, nu=0.5)
    assert record.in_B and record.in_LB and record.in_V
    assert record.sigma_max_inv == pytest.approx(1.0)
    assert record.log_jac_ratio == pytest.approx(0.0, abs=1e-12)


def test_lb_is_contained_in_b(lattes_sample):
    f = zoo_entry("lattes_doubling").map
    for x in lattes_sample.points:
        for n in (1, 3, 5):
            record = membership(f, x, n, rho=0.05, tau=2.0, nu=0.3)
            assert record.in_B or not record.in_LB
            assert record.in_LB == lb_membership(f, x, n, 0.05, 2.0)
            assert record.in_B == b_membership(f, x, n, 0.05)
            assert record.in_V == v_membership(f, x, n, 0.3)


def test_power_map_memberships_on_the_circle(power_map, circle_sample):
    for x in circle_sample.points[:20]:
        for n in range(7):
            record = membership(power_map, x, n, rho=0.1, tau=2.0, nu=0.3)
            assert record.in_B
            assert record.in_LB == record.in_B
            assert record.sigma_max_inv == pytest.approx(2.0 ** -n)
            assert record.log_jac_ratio == pytest.approx(n * np.log(2.0), abs=1e-6)
            # |J|^2 = 4^n against d^n = 2^n: in V(0.3) up to n = 3 only
            assert record.in_V == (n <= 3)


def test_critical_points_are_never_members():
    f = zoo_entry("power_2_1").map
    critical = normalize([1.0, 0.0])
    record = membership(f, critical, 2, rho=0.1, tau=10.0, nu=0.1)
    assert not (record.in_B or record.in_LB or record.in_V)

    lattes = zoo_entry("lattes_doubling").map
    critical = normalize([1j, 1.0])
    assert not b_membership(lattes, critical, 1, 0.1)
    assert not lb_membership(lattes, critical, 1, 0.1, 10.0)
    assert not v_membership(lattes, critical, 1, 0.1)


def test_parameters_are_checked(power_map):
    x = CIRCLE_FIXED_POINT
    with pytest.raises(DomainError):
        b_membership(power_map, x, 1, 0.5)
    with pytest.raises(DomainError):
        lb_membership(power_map, x, 1, 0.1, 0.0)
    with pytest.raises(DomainError):
        v_membership(power_map, x, 1, 1.5)


def test_power_map_mass_curves(power_map, circle_sample):
    table = mass_curves(power_map, circle_sample, range(6), rho=0.1, tau=2.0, nu=0.3)

    assert list(table.columns) == ["n", "mass_B", "se_B", "mass_LB", "se_LB", "mass_V", "se_V"]
    assert table.n.tolist() == list(range(6))
    assert np.all(table.mass_B == 1.0)
    assert np.all(table.mass_LB == table.mass_B)
    assert table.mass_V.tolist() == [1.0, 1.0, 1.0, 1.0, 0.0, 0.0]


def test_cubic_power_map_loses_v_mass():
    f = zoo_entry("power_3_1").map
    sample = sample_measure(f, 500, seed=23)
    table = mass_curves(f, sample, [0, 8], rho=0.1, tau=2.0, nu=0.3)
    assert table.mass_V.tolist() == [1.0, 0.0]


def test_lattes_masses_stay_positive():
    f = zoo_entry("lattes_doubling").map
    sample = sample_measure(f, 500, seed=24)
    table = mass_curves(f, sample, range(13), rho=0.05, tau=10.0, nu=0.3)

    assert table.mass_V.min() >= 0.3
    assert np.all(table.mass_LB > 0.5)
    assert np.all(table.mass_LB <= table.mass_B)


def test_mass_curves_grid_orderings(circle_sample, power_map):
    rhos, taus, nus = (0.2, 0.05), (0.5, 2.0, 50.0), (0.5, 0.1)
    tables = mass_curves_grid(power_map, circle_sample, [0, 2, 5], rhos, taus, nus)
    assert len(tables) == 12

    for rho in rhos:
        for nu in nus:
            masses = [tables[(rho, tau, nu)].mass_LB.to_numpy() for tau in taus]
            assert np.all(masses[0] <= masses[1]) and np.all(masses[1] <= masses[2])
        for tau in taus:
            assert np.all(tables[(rho, tau, 0.5)].mass_V <= tables[(rho, tau, 0.1)].mass_V)
            table = tables[(rho, tau, 0.5)]
            assert np.all(table.mass_LB <= table.mass_B)


def test_mass_curves_preconditions(power_map, circle_sample):
    small = sample_measure(power_map, 499, seed=24)
    with pytest.raises(DomainError):
        mass_curves(power_map, small, range(3), 0.1, 2.0, 0.3)
    with pytest.raises(ConfigError):
        mass_curves_grid(power_map, circle_sample, [], (0.1,), (2.0,), (0.3,))
    with pytest.raises(DomainError):
        mass_curves(power_map, circle_sample, [-1, 2], 0.1, 2.0, 0.3)


def test_distortion_on_p1_is_trivial(lattes_sample):
    frame = distortion_profile(zoo_entry("lattes_doubling").map, lattes_sample, 4)
    assert np.allclose(frame.condition, 1.0)
    assert frame.within_bound.all()


def test_distortion_sandwich_on_the_ueda_lattes_map():
    f = zoo_entry("ueda_lattes_doubling").map
    sample = sample_measure(f, 200, seed=25)
    frame = distortion_profile(f, sample, 6, rho=0.05, tau=10.0, nu=0.3)

    assert np.all(frame.bound == 100.0 / 0.3)
    assert (frame.in_LB & frame.in_V).any()
    assert frame.within_bound.all()
    members = frame[frame.in_LB & frame.in_V]
    assert np.all(members.condition <= members.bound)


def test_sqrt_d_test_diverges_at_a_power_map_fixed_point(power_map):
    trace = sqrt_d_linearization_test(power_map, CIRCLE_FIXED_POINT, 16)
    assert trace.kind == SQRT_D
    assert trace.verdict == DIVERGING
    assert trace.exit_step is not None and trace.exit_step <= 16
    # every time recurs at a fixed point with a positive multiplier
    assert trace.recurrence_times == tuple(range(trace.exit_step + 1))
    assert trace.diameters[-1] >= 2.0 * trace.diameters[0]


def test_linearization_test_converges_at_a_power_map_fixed_point(power_map):
    trace = linearization_test(power_map, CIRCLE_FIXED_POINT, 10)
    assert trace.kind == INVERSE_DIFFERENTIAL
    assert trace.verdict == CONVERGING
    assert trace.exit_step is None
    assert trace.sup_deviation[-1] < 1e-3


def test_sqrt_d_test_converges_at_the_lattes_fixed_point():
    f = zoo_entry("lattes_doubling").map
    trace = sqrt_d_linearization_test(f, LATTES_FIXED_POINT, 12)

    # the multiplier -2 only returns to the identity rotation at even times
    assert all(n % 2 == 0 for n in trace.recurrence_times)
    assert len(trace.subsequence) >= 3
    assert trace.verdict == CONVERGING
    assert trace.sup_deviation[-1] < 1e-3


def test_sqrt_d_test_converges_on_lattes_sample_points():
    f = zoo_entry("lattes_doubling").map
    sample = sample_measure(f, 20, seed=26)
    traces = [sqrt_d_linearization_test(f, x, 10_000) for x in sample.points]

    verdicts = [trace.verdict for trace in traces]
    assert verdicts.count(CONVERGING) >= 16
    for trace in traces:
        if trace.verdict == CONVERGING:
            assert all(b < a for a, b in zip(trace.sup_deviation, trace.sup_deviation[1:]))
            assert set(trace.subsequence) <= set(trace.recurrence_times)


def test_sqrt_d_test_diverges_on_power_map_sample_points(power_map):
    sample = sample_orbits(power_map, 40, 400, seed=27)
    verdicts = [
        sqrt_d_linearization_test(power_map, x, 400, orbit=orbit).verdict
        for x, orbit in zip(sample.points, sample.orbits)
    ]
    assert verdicts.count(DIVERGING) >= 38


def test_trace_invariants_and_export(power_map, tmp_path):
    trace = sqrt_d_linearization_test(power_map, CIRCLE_FIXED_POINT, 10)
    assert all(a < b for a, b in zip(trace.subsequence, trace.subsequence[1:]))
    assert set(trace.subsequence) <= set(trace.recurrence_times)
    assert len(trace.sup_deviation) == len(trace.subsequence) - 1
    assert len(trace.diameters) == len(trace.recurrence_times)

    path = tmp_path / "trace.json"
    dump_trace(trace, path)
    data = json.loads(path.read_text())
    assert data["verdict"] == trace.verdict
    assert data["subsequence"] == list(trace.subsequence)
    assert data["recurrence_times"] == list(trace.recurrence_times)
    assert data["rotation_tolerance"] == ROTATION_TOLERANCE
    assert data["kind"] == SQRT_D


def test_without_recurrences_the_test_is_inconclusive(power_map):
    trace = sqrt_d_linearization_test(power_map, CIRCLE_FIXED_POINT, 0)
    assert trace.subsequence == (0,)
    assert trace.recurrence_times == (0,)
    assert trace.sup_deviation == ()
    assert trace.verdict == INCONCLUSIVE
    assert trace.reason


def test_renormalization_arguments(power_map):
    with pytest.raises(DomainError):
        sqrt_d_linearization_test(power_map, CIRCLE_FIXED_POINT, 5, ball_radius=0.5)
    with pytest.raises(DomainError):
        linearization_test(power_map, CIRCLE_FIXED_POINT, 5, recurrence_radius=0.0)
    with pytest.raises(DomainError):
        linearization_test(power_map, CIRCLE_FIXED_POINT, -1)
