import math
import pytest
import numpy as np

from src.errors import OutOfDomainError
from src.flow import cell_image, field_value, flow_points, time_t_map
from src.models import IntegratorConfig
from src.system_registry import system_registry

CFG = IntegratorConfig()


@pytest.fixture
def figure1():
    return system_registry.build("figure1")


@pytest.fixture
def linear_sink():
    return system_registry.build("linear_sink")


def test_field_value_examples(figure1):
    assert field_value(system_registry.build("trivial"), 0.7) == 0.0
    assert field_value(figure1, 1.0) == pytest.approx(1.0)
    assert field_value(figure1, 2.7) == 0.0
    cantor = system_registry.build("cantor", {"kind": "standard", "depth": "1"})
    assert field_value(cantor, 0.5) == pytest.approx(1 / 6)


def test_field_value_out_of_domain(figure1):
    with pytest.raises(OutOfDomainError):
        field_value(figure1, 5.5)
    with pytest.raises(OutOfDomainError):
        field_value(figure1, float("nan"))


def test_field_vanishes_on_circle_arc():
    circle = system_registry.build("circle_arc")
    assert field_value(circle, 0.1) == 0.0
    assert field_value(circle, 0.5) == pytest.approx(0.25)
    assert field_value(circle, 0.9) == pytest.approx(0.1)


def test_time_t_map_identity_flow():
    assert time_t_map(system_registry.build("trivial"), 0.3, 5.0, CFG) == 0.3


def test_time_t_map_linear_sink_closed_form(linear_sink):
    rng = np.random.default_rng(5)
    for T in rng.uniform(0.05, 5.0, size=50):
        xs = rng.uniform(-1.0, 1.0, size=20)
        assert np.max(np.abs(flow_points(linear_sink, xs, T, CFG) - xs * math.exp(-T))) <= 1e-6
    for x in (-1.0, 0.0, 0.5, 1.0):
        assert time_t_map(linear_sink, x, 2.0, CFG) == pytest.approx(x * math.exp(-2.0), abs=1e-6)


def test_time_t_map_figure1_piecewise(figure1):
    # x' = x - 3.5 until x = 4.25 at t = ln 1.5, then x' = 5 - x
    expected = 5.0 - 1.125 * math.exp(-1.0)
    assert time_t_map(figure1, 4.0, 1.0, CFG) == pytest.approx(expected, abs=1e-4)


def test_fixed_points_map_to_themselves_exactly(figure1):
    for x in (0.0, 2.0, 2.7, 3.5, 5.0):
        for T in (0.5, 2.0, 7.3):
            assert time_t_map(figure1, x, T, CFG) == x


def test_time_t_map_rejects_nonpositive_time(figure1):
    with pytest.raises(ValueError):
        time_t_map(figure1, 1.0, 0.0, CFG)


def test_circle_results_are_reduced():
    circle = system_registry.build("circle_arc")
    # the orbit of 0.9 creeps toward the arc end at 1 = 0 without wrapping
    assert time_t_map(circle, 0.9, 3.0, CFG) == pytest.approx(1.0 - 0.1 * math.exp(-3.0), abs=1e-6)
    assert 0.0 <= time_t_map(circle, 0.6, 20.0, CFG) < 1.0


@pytest.mark.parametrize("name", ["trivial", "figure1", "linear_sink", "circle_arc", "cantor"])
def test_order_preservation(name):
    sys = system_registry.build(name)
    rng = np.random.default_rng(7)
    xs = np.sort(rng.uniform(sys.domain.lower, sys.domain.upper, size=1000))
    ys = flow_points(sys, xs, 2.0, CFG)
    assert np.all(np.diff(ys) >= 0.0)


def test_semigroup(linear_sink, figure1):
    for sys in (linear_sink, figure1):
        xs = np.linspace(sys.domain.lower, sys.domain.upper, 37)
        once = flow_points(sys, flow_points(sys, xs, 1.0, CFG), 1.0, CFG)
        twice = flow_points(sys, xs, 2.0, CFG)
        assert np.max(np.abs(once - twice)) <= 1e-6


def test_cell_image_examples(linear_sink, figure1):
    assert cell_image(system_registry.build("trivial"), (0.25, 0.5), 2.0, CFG) == (0.25, 0.5)
    assert cell_image(figure1, (2.5, 2.6), 2.0, CFG) == (2.5, 2.6)
    lo, hi = cell_image(linear_sink, (0.5, 0.75), 1.0, CFG)
    assert lo == pytest.approx(0.5 * math.exp(-1.0), abs=1e-6)
    assert hi == pytest.approx(0.75 * math.exp(-1.0), abs=1e-6)


def test_cell_image_padding_is_clamped_to_domain():
    trivial = system_registry.build("trivial")
    padded = IntegratorConfig(pad=0.01)
    assert cell_image(trivial, (0.25, 0.5), 1.0, padded) == pytest.approx((0.24, 0.51))
    assert cell_image(trivial, (0.0, 0.1), 1.0, padded) == pytest.approx((0.0, 0.11))
