import os

import numpy as np
import pytest

from greenlab.endomorphism import from_components, map_to_dict
from greenlab.errors import ConfigError, DomainError
from greenlab.zoo import (
    ZOO_LABELS,
    Expected,
    ZooEntry,
    chebyshev,
    chebyshev_coefficients,
    doubling_components,
    doubling_residual,
    lattes_p1_doubling,
    load_entry,
    oracle_residual,
    power_map,
    save_entry,
    semiconjugacy_residual,
    ueda_sym2,
    zoo_entry,
)


@pytest.fixture(params=ZOO_LABELS)
def entry(request):
    return zoo_entry(request.param)


def test_every_entry_builds(entry):
    f = entry.map
    assert f.label == entry.label
    if entry.expected.lambdas is not None:
        assert len(entry.expected.lambdas) == f.dim
    if entry.expected.lattes:
        assert np.allclose(entry.expected.lambdas, 0.5 * np.log(f.degree))


def test_save_and_load(entry, tmp_path):
    paths = save_entry(entry, str(tmp_path))
    assert [os.path.basename(p) for p in paths] == ["map.json", "expected.json"]

    loaded = load_entry(str(tmp_path / entry.label))
    assert loaded.label == entry.label
    assert np.array_equal(loaded.map.coefficients, entry.map.coefficients)
    assert loaded.map.construction == entry.map.construction
    assert loaded.expected == entry.expected


def test_unknown_label():
    with pytest.raises(ConfigError):
        zoo_entry("not_a_map")


def test_broken_entry_directory(tmp_path):
    with pytest.raises(ConfigError):
        load_entry(str(tmp_path))


def test_power_maps():
    f = power_map(3, 2).map
    assert f.dim == 2 and f.degree == 3
    assert f.topological_degree == 9
    with pytest.raises(DomainError):
        power_map(1)


@pytest.mark.parametrize(
    "d, coefficients",
    [
        (2, [1.0, 0.0, -2.0]),
        (3, [1.0, 0.0, -3.0, 0.0]),
        (4, [1.0, 0.0, -4.0, 0.0, 2.0]),
    ],
)
def test_chebyshev_coefficients(d, coefficients):
    assert chebyshev_coefficients(d).tolist() == coefficients


def test_chebyshev_entry():
    entry = chebyshev(3)
    assert entry.expected.dimension == 1.0
    assert not entry.expected.lattes
    with pytest.raises(DomainError):
        chebyshev(1)


def test_doubling_components():
    numerator, denominator = doubling_components(4.0, 0.0)
    f = from_components([numerator, denominator])
    assert f.coefficients[0].real.tolist() == [1.0, 0.0, 2.0, 0.0, 1.0]
    assert f.coefficients[1].real.tolist() == [0.0, 4.0, 0.0, -4.0, 0.0]


@pytest.mark.parametrize("g2, g3", [(4.0, 0.0), (0.0, 1.0), (2.0, 1.0)])
def test_doubling_commutes_with_the_group_law(g2, g3):
    entry = lattes_p1_doubling(g2, g3)
    assert entry.map.degree == 4
    assert entry.expected.lattes
    assert doubling_residual(entry.map, g2, g3) < 1e-9


def test_cusp_and_node_are_rejected():
    # g2^3 = 27 g3^2: a node at g2 = 3, g3 = 1 and a cusp at the origin
    for g2, g3 in ((3.0, 1.0), (0.0, 0.0)):
        with pytest.raises(DomainError):
            lattes_p1_doubling(g2, g3)


def test_symmetric_square_of_the_power_map():
    f = ueda_sym2(power_map(2)).map
    # [s0^2 : s1^2 - 2 s0 s2 : s2^2]
    expected = from_components(
        [{(2, 0, 0): 1.0}, {(0, 2, 0): 1.0, (1, 0, 1): -2.0}, {(0, 0, 2): 1.0}]
    )
    assert np.allclose(f.coefficients, expected.coefficients)
    assert f.construction == "ueda_sym2"
    assert f.base_map.label == "power_2_1"


def test_symmetric_square_of_the_lattes_map():
    base = lattes_p1_doubling()
    entry = ueda_sym2(base)
    assert entry.map.dim == 2
    assert entry.map.topological_degree == 16
    assert entry.expected.lattes
    assert entry.expected.dimension == 4.0
    assert semiconjugacy_residual(entry.map, base.map) < 1e-9

    data = map_to_dict(entry.map)
    assert data["construction"]["kind"] == "ueda_sym2"
    assert data["construction"]["base"]["label"] == "lattes_doubling"


def test_symmetric_squares_need_a_map_of_the_line():
    with pytest.raises(DomainError):
        ueda_sym2(power_map(2, 2))


def test_lattes_entries_must_expect_minimal_exponents():
    f = power_map(2).map
    with pytest.raises(ConfigError):
        ZooEntry(f, Expected(lambdas=(np.log(2.0),), dimension=2.0, lattes=True))
    with pytest.raises(ConfigError):
        ZooEntry(f, Expected(lambdas=None, dimension=2.0, lattes=True))

    ZooEntry(f, Expected(lambdas=(0.5 * np.log(2.0),), dimension=2.0, lattes=True))


@pytest.mark.parametrize(
    "label, name",
    [
        ("lattes_doubling", "doubling"),
        ("ueda_lattes_doubling", "semiconjugacy"),
        ("ueda_power_2_1", "semiconjugacy"),
        ("power_2_1", None),
        ("perturbed_power_0.1", None),
    ],
)
def test_oracle_residuals(label, name, tmp_path):
    entry = zoo_entry(label)
    found = oracle_residual(entry)
    if name is None:
        assert found is None
        return

    kind, residual, tolerance = found
    assert kind == name
    assert residual < tolerance

    save_entry(entry, str(tmp_path))
    assert oracle_residual(load_entry(str(tmp_path / label)))[1] == pytest.approx(residual)


def test_the_curve_travels_with_lattes_entries():
    assert zoo_entry("lattes_doubling").expected.curve == (4.0, 0.0)
    assert zoo_entry("ueda_lattes_doubling").expected.curve == (4.0, 0.0)
    assert zoo_entry("chebyshev_2").expected.curve is None
