import numpy as np
import pytest

from legalrisk.app.core.strategy import (
    GRADED_FRACTION,
    GRADED_MIN_WIDTH,
    ClosedFormStrategy,
    PiecewiseConstantStrategy,
    constant_strategy,
)


def test_piecewise_constant_holds_left_value():
    strategy = PiecewiseConstantStrategy([0.0, 0.5, 1.0], [1.0, 3.0])
    assert strategy(0.0) == 1.0
    assert strategy(0.49) == 1.0
    assert strategy(0.5) == 3.0
    assert strategy(1.0) == 3.0
    assert strategy.breakpoints == (0.5,)
    np.testing.assert_allclose(strategy.widths, [0.5, 0.5])


@pytest.mark.parametrize(
    "edges,values",
    [
        ([0.0, 1.0], [1.0, 2.0]),
        ([0.0, 0.5, 0.5], [1.0, 2.0]),
        ([0.1, 1.0], [1.0]),
    ],
)
def test_piecewise_constant_rejects_bad_edges(edges, values):
    with pytest.raises(ValueError):
        PiecewiseConstantStrategy(edges, values)


def test_scaled_keeps_shape_and_flags():
    base = ClosedFormStrategy(lambda t: 1.0 / (1.0 - t), 1.0, singular_at_end=True)
    scaled = base.scaled(2.0)
    assert scaled(0.5) == pytest.approx(4.0)
    assert scaled.singular_at_end


def test_segments_split_on_breakpoints():
    strategy = PiecewiseConstantStrategy([0.0, 0.25, 0.5, 1.0], [1.0, 2.0, 3.0])
    assert strategy.segments() == [(0.0, 0.25), (0.25, 0.5), (0.5, 1.0)]
    assert strategy.segments(0.4) == [(0.0, 0.25), (0.25, 0.4)]


def test_segments_grade_toward_singular_end():
    strategy = ClosedFormStrategy(lambda t: 1.0 / (1.0 - t), 1.0, singular_at_end=True)
    segments = strategy.segments()
    ends = [b for _, b in segments]
    assert ends[-1] < 1.0
    assert 1.0 - GRADED_FRACTION in ends
    widths = np.diff([a for a, _ in segments[1:7]])
    np.testing.assert_allclose(widths[1:] / widths[:-1], 0.5)


def test_tail_covers_sliver_left_by_graded_mesh():
    strategy = ClosedFormStrategy(lambda t: 1.0 / (1.0 - t), 1.0, singular_at_end=True)
    start, end = strategy.tail()
    assert end == 1.0
    assert start == strategy.segments()[-1][1]
    assert 1.0 - start >= GRADED_MIN_WIDTH
    assert strategy.segments()[-1][1] - strategy.segments()[-1][0] >= GRADED_MIN_WIDTH
    assert strategy.tail(0.5) is None
    assert constant_strategy(1.0, 1.0).tail() is None


def test_constant_strategy_scalar_and_array():
    strategy = constant_strategy(2.5, 1.0)
    assert strategy(0.3) == 2.5
    np.testing.assert_allclose(strategy(np.linspace(0.0, 0.9, 4)), 2.5)
