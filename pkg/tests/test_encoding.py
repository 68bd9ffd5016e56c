import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dagkit.dag import build_dag, compute_depth
from dagkit.encoding import add_encoding, depth_encoding
from dagkit.errors import ShapeMismatch
from helpers import chain, random_dag


def test_depth_zero_row_pattern():
    enc = depth_encoding(compute_depth(build_dag(1, [])), 6)
    assert enc.pe[0].tolist() == [0.0, 1.0, 0.0, 1.0, 0.0, 1.0]


def test_depth_one_d2():
    enc = depth_encoding(compute_depth(chain(2)), 2)
    # depth 1, i=0: divisor 10000^0 = 1
    assert enc.pe[1, 0] == pytest.approx(math.sin(1.0), abs=1e-12)
    assert enc.pe[1, 1] == pytest.approx(math.cos(1.0), abs=1e-12)
    assert enc.pe[1, 0] == pytest.approx(0.841471, abs=1e-6)
    assert enc.pe[1, 1] == pytest.approx(0.540302, abs=1e-6)


def test_equal_depth_equal_rows():
    # both sinks of a fanned-out diamond variant sit at depth 2
    g = build_dag(5, [(0, 1), (0, 2), (1, 3), (2, 3), (1, 4)])
    depths = compute_depth(g)
    assert depths.depth[3] == depths.depth[4]
    enc = depth_encoding(depths, 8)
    assert np.array_equal(enc.pe[3], enc.pe[4])


def test_odd_dimension_sine_tail():
    d = 5
    enc = depth_encoding(compute_depth(chain(4)), d)
    assert enc.pe.shape == (4, d)
    # the unpaired last column (2i = d - 1) carries the sine term
    for v in range(4):
        expected = math.sin(v / 10000.0 ** ((d - 1) / d))
        assert enc.pe[v, d - 1] == pytest.approx(expected, abs=1e-12)


def test_entries_bounded():
    enc = depth_encoding(compute_depth(chain(50)), 9)
    assert np.all(enc.pe <= 1.0) and np.all(enc.pe >= -1.0)


def test_injective_over_practical_depths():
    depths = np.arange(1001)
    from dagkit.dag import DepthVector

    enc = depth_encoding(DepthVector(depth=depths, dag_depth=1000), 16)
    assert np.unique(enc.pe, axis=0).shape[0] == 1001


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10**9), st.integers(min_value=1, max_value=9))
def test_pure_function_of_depth(seed, d):
    g = random_dag(seed, max_n=20, scramble=True)
    depths = compute_depth(g)
    enc = depth_encoding(depths, d)
    for v in range(g.n):
        for u in range(g.n):
            if depths.depth[v] == depths.depth[u]:
                assert np.array_equal(enc.pe[v], enc.pe[u])


def test_add_encoding():
    g = chain(3)
    enc = depth_encoding(compute_depth(g), 2)
    zeros = np.zeros((3, 2))
    assert np.array_equal(add_encoding(zeros, enc), enc.pe)

    # d=1 at depth 0 gives a zero encoding row: identity on features
    single = build_dag(1, [])
    enc1 = depth_encoding(compute_depth(single), 1)
    feats = np.array([[3.5]])
    assert np.array_equal(add_encoding(feats, enc1), feats)

    from dagkit.dag import DepthVector

    enc_row = depth_encoding(DepthVector(depth=np.array([0]), dag_depth=0), 2)
    assert add_encoding(np.array([[1.0, 1.0]]), enc_row).tolist() == [[1.0, 2.0]]

    with pytest.raises(ShapeMismatch):
        add_encoding(np.zeros((3, 3)), enc)
