import math

import numpy as np
import pytest

from qkdsim.errors import InvalidArgumentError
from qkdsim.models import Basis
from qkdsim.polarization import (
    AnalyzerAxis, JonesVector, StokesVector, angular_distance, dop, ensemble_average,
    jones_to_stokes, max_pairwise_distance, projection_probability, rotate, rotate_about_s1
)

H = 1.0 / math.sqrt(2.0)


@pytest.mark.parametrize("ex, ey, expected", [
    (1, 0, (1.0, 0.0, 0.0)),
    (H, H, (0.0, 1.0, 0.0)),
    (H, 1j * H, (0.0, 0.0, 1.0)),
    (H, -1j * H, (0.0, 0.0, -1.0)),
])
def test_jones_to_stokes_convention(ex, ey, expected):
    s = jones_to_stokes(JonesVector(complex(ex), complex(ey)))
    assert s.as_array() == pytest.approx(expected, abs=1e-12)


def test_zero_jones_vector_is_rejected():
    with pytest.raises(InvalidArgumentError):
        JonesVector(0j, 0j)


def test_random_pure_states_have_unit_length():
    rng = np.random.default_rng(7)
    for ex, ey in rng.standard_normal((200, 2)) + 1j * rng.standard_normal((200, 2)):
        j = JonesVector(complex(ex), complex(ey)).normalized()
        assert j.power == pytest.approx(1.0, abs=1e-12)
        assert jones_to_stokes(j).length == pytest.approx(1.0, abs=1e-12)


def test_stokes_longer_than_one_is_rejected():
    with pytest.raises(InvalidArgumentError):
        StokesVector(0.0, 1.0, 0.1)


@pytest.mark.parametrize("s, expected", [
    ((0.0, 0.0, 0.0), 0.0),
    ((0.0, 1.0, 0.0), 1.0),
    ((0.0, 0.3, 0.4), 0.5),
])
def test_dop(s, expected):
    assert dop(StokesVector(*s)) == pytest.approx(expected, abs=1e-15)


def test_ensemble_of_opposite_states_cancels():
    avg = ensemble_average([(1.0, StokesVector(0, 1, 0)), (1.0, StokesVector(0, -1, 0))])
    assert avg.as_array() == pytest.approx([0.0, 0.0, 0.0], abs=1e-15)


def test_single_member_ensemble():
    avg = ensemble_average([(3.7, StokesVector(0, 0, 1))])
    assert avg.as_array() == pytest.approx([0.0, 0.0, 1.0])


def test_ring_of_states_averages_to_zero():
    angles = np.arange(100) * 2.0 * math.pi / 100
    states = [(1.0, StokesVector(0.0, math.cos(a), math.sin(a))) for a in angles]
    assert ensemble_average(states).length < 1e-12


def test_zero_weights_are_rejected():
    with pytest.raises(InvalidArgumentError):
        ensemble_average([(0.0, StokesVector(0, 1, 0))])
    with pytest.raises(InvalidArgumentError):
        ensemble_average([])


def test_weight_rescaling_does_not_change_average():
    rng = np.random.default_rng(3)
    vectors = [StokesVector.from_array(v / np.linalg.norm(v)) for v in rng.standard_normal((20, 3))]
    weights = rng.random(20)
    a = ensemble_average(list(zip(weights, vectors)))
    b = ensemble_average(list(zip(weights * 17.5, vectors)))
    assert a.as_array() == pytest.approx(b.as_array(), abs=1e-12)


def test_dop_is_invariant_under_rotation_about_s1():
    rng = np.random.default_rng(4)
    vectors = [StokesVector.from_array(v / np.linalg.norm(v)) for v in rng.standard_normal((30, 3))]
    weights = rng.random(30)
    before = dop(ensemble_average(list(zip(weights, vectors))))
    rotated = [rotate_about_s1(v, 1.234) for v in vectors]
    after = dop(ensemble_average(list(zip(weights, rotated))))
    assert after == pytest.approx(before, abs=1e-12)


@pytest.mark.parametrize("s, expected", [
    ((0.0, 1.0, 0.0), 1.0),
    ((0.0, 0.0, 1.0), 0.5),
    ((0.0, 0.8, 0.0), 0.9),
])
def test_projection_probability(s, expected):
    axis = AnalyzerAxis.for_basis(Basis.DIAGONAL)
    assert projection_probability(StokesVector(*s), axis) == pytest.approx(expected, abs=1e-12)


def test_complementary_ports_sum_to_one():
    rng = np.random.default_rng(5)
    for v in rng.standard_normal((50, 3)):
        s = StokesVector.from_array(v / np.linalg.norm(v) * rng.random())
        for basis in Basis:
            a = AnalyzerAxis.for_basis(basis)
            assert projection_probability(s, a) + projection_probability(s, -a) == pytest.approx(1.0, abs=1e-12)


def test_analyzer_axis_must_be_unit():
    with pytest.raises(InvalidArgumentError):
        AnalyzerAxis(StokesVector(0.0, 0.5, 0.0), Basis.DIAGONAL)


def test_rotation_about_s1_is_right_handed():
    #a quarter turn about s1 takes D to R
    r = rotate_about_s1(StokesVector(0, 1, 0), math.pi / 2.0)
    assert r.as_array() == pytest.approx([0.0, 0.0, 1.0], abs=1e-12)
    r = rotate(StokesVector(1, 0, 0), (0.0, 0.0, 1.0), math.pi / 2.0)
    assert r.as_array() == pytest.approx([0.0, 1.0, 0.0], abs=1e-12)


def test_great_circle_distances():
    assert angular_distance([0, 1, 0], [0, -1, 0]) == pytest.approx(math.pi)
    assert angular_distance([0, 1, 0], [0, 0, 0.5]) == pytest.approx(math.pi / 2.0)
    ring = np.array([[0, 1, 0], [0, 0, 1], [0, -1, 0]], dtype=float)
    assert max_pairwise_distance(ring) == pytest.approx(math.pi)
    assert max_pairwise_distance(ring[:1]) == 0.0
