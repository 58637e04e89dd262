import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsampleflow.errors import InvalidIndexError, ParameterError, SizeError
from qsampleflow.grid import GridSpec, flatten, grid_point, unflatten, wave_vector


def test_grid_point_examples():
    assert grid_point(GridSpec(1.0, 4, 1), 3) == pytest.approx([0.75])
    assert grid_point(GridSpec(2 * math.pi, 2, 2), (1, 0)) == pytest.approx([math.pi, 0.0])
    with pytest.raises(InvalidIndexError):
        grid_point(GridSpec(1.0, 4, 1), 4)


def test_wave_vector_examples():
    g = GridSpec(2 * math.pi, 4, 1)
    assert [wave_vector(g, j)[0] for j in range(4)] == pytest.approx([-2, -1, 0, 1])
    assert wave_vector(GridSpec(1.0, 2, 1), 1) == pytest.approx([0.0])
    assert wave_vector(GridSpec(2 * math.pi, 8, 2), (4, 5)) == pytest.approx([0.0, 1.0])
    with pytest.raises(InvalidIndexError):
        wave_vector(g, -1)


def test_flatten_examples():
    g = GridSpec(1.0, 4, 2)
    assert flatten(g, (0, 0)) == 0
    assert flatten(g, (1, 2)) == 6
    g3 = GridSpec(1.0, 4, 3)
    assert [flatten(g3, unflatten(g3, i)) for i in range(g3.size)] == list(range(g3.size))
    with pytest.raises(InvalidIndexError):
        unflatten(g3, g3.size)


def test_points_table_matches_scalar_helpers():
    g = GridSpec(3.0, 4, 2)
    pts, kv = g.points(), g.wavevectors()
    for idx in itertools.product(range(4), repeat=2):
        i = flatten(g, idx)
        assert np.allclose(pts[i], grid_point(g, idx))
        assert np.allclose(kv[i], wave_vector(g, idx))


@pytest.mark.parametrize("N,d", [(3, 1), (1, 1), (6, 2), (4, 0)])
def test_invalid_specs(N, d):
    with pytest.raises(ParameterError):
        GridSpec(1.0, N, d)


def test_cap():
    with pytest.raises(SizeError):
        GridSpec(1.0, 64, 3, cap=4096)
    assert GridSpec(1.0, 16, 3, cap=4096).size == 4096
    assert GridSpec(1.0, 8, 2).n_qubits == 6


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.data())
def test_flatten_roundtrip(log_n, d, data):
    g = GridSpec(1.0, 2 ** log_n, d)
    i = data.draw(st.integers(0, g.size - 1))
    assert flatten(g, unflatten(g, i)) == i
