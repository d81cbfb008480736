import logging
from dataclasses import replace

import numpy as np
import pytest

from greenlab.dimension import (
    DimensionReport,
    dim_upper_bound,
    dimension_consistency,
    local_dimension,
    pointwise_slopes,
    uniform_circle_sample,
    uniform_sphere_sample,
    with_upper_bound,
)
from greenlab.errors import DomainError
from greenlab.green_measure import sample_measure
from greenlab.lyapunov import SpectrumEstimate
from greenlab.zoo import zoo_entry


def estimate(lambdas, standard_errors):
    return SpectrumEstimate(
        lambdas=tuple(lambdas),
        standard_errors=tuple(standard_errors),
        n_steps=200,
        n_orbits=500,
        sum_check_residual=0.0,
    )


def report(measured, ci95):
    return DimensionReport(
        upper_bound=None,
        measured_local_dim=measured,
        ci95=ci95,
        r_range=(0.05, 0.2),
        n_pairs=1000,
    )


@pytest.fixture(scope="module")
def circle():
    return uniform_circle_sample(3000)


@pytest.fixture(scope="module")
def circle_report(circle):
    return local_dimension(circle)


@pytest.mark.parametrize(
    "k, d, lambda_k, bound",
    [
        (1, 2, np.log(2.0), 1.0),
        (2, 4, np.log(2.0), 4.0),
        (1, 4, np.log(4.0), 1.0),
        (2, 2, np.log(2.0), 3.0),
    ],
)
def test_upper_bound_examples(k, d, lambda_k, bound):
    assert dim_upper_bound(k, d, lambda_k) == pytest.approx(bound)


def test_upper_bound_monotonicity():
    lambdas = np.linspace(0.7, 3.0, 12)
    for k in (1, 2):
        bounds = [dim_upper_bound(k, 4, l) for l in lambdas]
        assert all(a > b for a, b in zip(bounds, bounds[1:]))

        bounds = [dim_upper_bound(k, d, 3.0) for d in (2, 3, 4, 9)]
        assert all(a < b for a, b in zip(bounds, bounds[1:]))


def test_upper_bound_domain(caplog):
    for lambda_k in (0.0, -1.0):
        with pytest.raises(DomainError):
            dim_upper_bound(1, 2, lambda_k)

    with caplog.at_level(logging.WARNING, logger="greenlab"):
        dim_upper_bound(1, 4, 0.5)
    assert "Briend-Duval" in caplog.text


def test_pointwise_slopes():
    log_radii = np.log(np.geomspace(0.01, 0.1, 5))
    counts = np.stack(
        [
            np.round(1e6 * np.exp(log_radii)),
            np.round(1e6 * np.exp(2.0 * log_radii)),
            [0, 0, 0, 5, 50],
        ]
    ).astype(int)

    slopes = pointwise_slopes(log_radii, counts)
    assert len(slopes) == 2
    assert slopes.tolist() == pytest.approx([1.0, 2.0], abs=1e-3)


def test_circle_calibration(circle_report):
    assert circle_report.measured_local_dim == pytest.approx(1.0, abs=0.1)
    assert circle_report.ci95[0] <= circle_report.measured_local_dim <= circle_report.ci95[1]
    assert circle_report.k == 1
    assert circle_report.n_pairs >= 100


def test_sphere_calibration():
    result = local_dimension(uniform_sphere_sample(4000))
    assert result.measured_local_dim == pytest.approx(2.0, abs=0.1)
    assert 0.0 < result.r_range[0] < result.r_range[1] <= 0.2


def test_power_map_measure_has_dimension_one():
    sample = sample_measure(zoo_entry("power_2_1").map, 3000, seed=5)
    assert local_dimension(sample).measured_local_dim == pytest.approx(1.0, abs=0.1)


def test_lattes_measure_has_dimension_two():
    sample = sample_measure(zoo_entry("lattes_doubling").map, 5000, seed=31)
    result = local_dimension(sample)

    assert result.measured_local_dim == pytest.approx(2.0, abs=0.15)
    # the density singularities at the postcritical points pull the pooled
    # pair count down, not the typical point
    assert result.correlation_dim < result.measured_local_dim


def test_reordering_does_not_change_the_estimate(circle):
    reordered = replace(circle, points=circle.points[::-1], map_label="relabelled")
    first = local_dimension(circle, 0.02, 0.15)
    second = local_dimension(reordered, 0.02, 0.15)

    assert first.measured_local_dim == second.measured_local_dim
    assert first.counts == second.counts


def test_preconditions(circle):
    with pytest.raises(DomainError):
        local_dimension(uniform_circle_sample(1999))
    with pytest.raises(DomainError):
        local_dimension(circle, 0.1, 0.05)
    with pytest.raises(DomainError):
        local_dimension(circle, 0.05, 0.5)


def test_report_with_upper_bound(circle_report):
    completed = with_upper_bound(circle_report, estimate([np.log(2.0)], [0.0]), 2)
    assert completed.upper_bound == pytest.approx(1.0)
    assert completed.d == 2
    assert completed.lambda_k == pytest.approx(np.log(2.0))
    assert completed.measured_local_dim == circle_report.measured_local_dim

    data = completed.to_dict()
    for key in ("upper_bound", "measured", "ci95", "correlation_dim", "r_range", "n_pairs"):
        assert key in data
    assert len(data["radii"]) == len(data["counts"]) == 10


def test_power_map_is_consistent_but_not_maximal(circle_report):
    verdict = dimension_consistency(circle_report, estimate([np.log(2.0)], [0.001]), 2)
    assert verdict.within_bound
    assert not verdict.maximal_candidate
    assert verdict.minimal_exponents is None
    assert verdict.consistent


def test_maximal_dimension_with_minimal_exponents():
    verdict = dimension_consistency(report(1.95, (1.9, 2.0)), estimate([np.log(2.0)], [0.001]), 4)
    assert verdict.upper_bound == pytest.approx(2.0)
    assert verdict.within_bound
    assert verdict.maximal_candidate
    assert verdict.minimal_exponents
    assert verdict.consistent


def test_maximal_dimension_with_large_exponents_is_flagged():
    # exponents 20 SE above 1/2 log 4, measured dimension still under the bound
    spectrum = estimate([0.5 * np.log(4.0) + 0.02], [0.001])
    verdict = dimension_consistency(report(1.95, (1.9, 2.0)), spectrum, 4)
    assert verdict.within_bound
    assert verdict.maximal_candidate
    assert verdict.minimal_exponents is False
    assert not verdict.consistent


def test_dimension_above_the_bound_is_flagged():
    verdict = dimension_consistency(report(1.95, (1.9, 2.0)), estimate([0.9], [0.001]), 4)
    assert verdict.upper_bound == pytest.approx(np.log(4.0) / 0.9)
    assert not verdict.within_bound
    assert not verdict.consistent
