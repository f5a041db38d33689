import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from scenedistill.core import FlowField, MotionProbMap
from scenedistill.errors import UnknownClassId
from scenedistill.motion import (CLASS_IDS, MotionConfig, consistency_mask, dynamic_prior_mask, final_mask,
                                 motion_probability, motion_segmentation)

CAR, ROAD = CLASS_IDS["car"], CLASS_IDS["road"]


def px(u, v):
    return FlowField(np.array([[[u, v]]], float))


def prob(a, b, **kw):
    return motion_probability(px(*a), px(*b), MotionConfig(**kw)).values[0, 0]


@pytest.mark.parametrize("a, b, expected", [
    ((1, 0), (1, 0), 0.0),
    ((1, 0), (-1, 0), 1.0),
    ((2, 0), (1, 0), 0.5),
    ((0, 1), (1, 0), 0.5),
])
def test_probability_examples(a, b, expected):
    assert prob(a, b) == expected


def test_probability_near_zero_vectors():
    assert prob((0, 0), (0, 0)) == 0.0
    assert prob((1e-5, 0), (0, -1e-5)) == 0.0
    # one side vanishes: direction undefined, magnitude ratio decides
    assert prob((0, 0), (2, 0)) == 1.0
    assert prob((5e-4, 0), (0, 1e-3)) == pytest.approx(0.5)


vec = arrays(np.float64, (3, 3, 2), elements=st.floats(-50, 50, allow_nan=False))


@given(vec, vec, st.floats(0.01, 100))
def test_probability_properties(a, b, k):
    fa, fb = FlowField(a), FlowField(b)
    p = motion_probability(fa, fb).values
    assert np.all((p >= 0) & (p <= 1))
    assert np.allclose(p, motion_probability(fb, fa).values, atol=1e-12)
    # scale invariance only holds where neither side crosses the zero-vector guard
    na, nb = np.hypot(a[..., 0], a[..., 1]), np.hypot(b[..., 0], b[..., 1])
    big = (np.minimum(na, nb) * min(k, 1.0) > 1e-2)
    scaled = motion_probability(FlowField(a * k), FlowField(b * k)).values
    assert np.allclose(scaled[big], p[big], atol=1e-9)


def test_probability_validity():
    f = FlowField(np.ones((1, 2, 2)), valid=[[True, False]])
    p = motion_probability(f, FlowField(np.ones((1, 2, 2))))
    assert p.valid.tolist() == [[True, False]]
    assert consistency_mask(p).tolist() == [[1, 0]]


@pytest.mark.parametrize("p, expected", [(0.0, 1), (0.5, 0), (1.0, 0)])
def test_consistency_examples(p, expected):
    assert consistency_mask(MotionProbMap(np.array([[p]])), MotionConfig(xi=0.5))[0, 0] == expected


def test_dynamic_prior_examples():
    assert dynamic_prior_mask([[CAR]])[0, 0] == 1
    assert dynamic_prior_mask([[ROAD]])[0, 0] == 0
    assert not dynamic_prior_mask(np.full((4, 4), ROAD)).any()
    assert dynamic_prior_mask([[255]])[0, 0] == 0
    assert dynamic_prior_mask([[CLASS_IDS["person"]]])[0, 0] == 1
    with pytest.raises(UnknownClassId):
        dynamic_prior_mask([[19]])


def test_config_rejects_unknown_dynamic_ids():
    with pytest.raises(UnknownClassId):
        MotionConfig(dynamic_class_ids={3, 40})


@pytest.mark.parametrize("d, c, b, out", [(1, 0, 1, 1), (0, 0, 1, 0), (1, 1, 0, 0)])
def test_final_mask_examples(d, c, b, out):
    assert final_mask([[d]], [[c]], [[b]])[0, 0] == out


def test_final_mask_truth_table():
    table = list(itertools.product((0, 1), repeat=3))
    md, mc, mb = (np.array([[t[i] for t in table]]) for i in range(3))
    got = final_mask(md, mc, mb)[0]
    for (d, c, b), m in zip(table, got):
        assert m == min(max(d, c), b)
        assert m == int((d or c) and b)


def test_segmentation_examples():
    labels = np.array([[CAR, ROAD]])
    same = FlowField(np.array([[[1.0, 2.0], [3.0, -1.0]]]))
    assert not motion_segmentation(same, same, labels).any()
    sf = FlowField(np.array([[[4.0, 0.0], [4.0, 0.0]]]))
    fr = FlowField(np.array([[[1.0, 0.0], [1.0, 0.0]]]))
    assert motion_segmentation(sf, fr, labels, MotionConfig(tau=0.5)).tolist() == [[1, 0]]
    # without semantics the road pixel is reported too
    assert motion_segmentation(sf, fr, None).tolist() == [[1, 1]]
