import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from scenedistill.core import DepthMap, FlowField
from scenedistill.errors import NoValidPixels, UnknownClassId
from scenedistill.metrics import (DepthEvalConfig, FlowStats, eval_depth, eval_depth_by_range, eval_flow,
                                  eval_motion_seg, eval_semantic, flow_stats, mean_depth_metrics,
                                  semantic_confusion)


def depth(values):
    return DepthMap.from_array(np.atleast_2d(np.asarray(values, float)))


def test_depth_perfect_and_scaled(rng):
    gt = depth(rng.uniform(1, 60, (6, 8)))
    m = eval_depth(gt, gt)
    assert (m.abs_rel, m.rmse, m.delta1) == (0.0, 0.0, 1.0)
    half = eval_depth(DepthMap(gt.values * 0.5), gt)
    assert half.abs_rel < 1e-12 and half.rmse < 1e-12 and half.delta1 == 1.0


def test_depth_hand_computed():
    m = eval_depth(depth([1.0, 2.0]), depth([2.0, 4.0]), DepthEvalConfig(median_scaling=False))
    assert m.abs_rel == 0.5 and m.delta1 == 0.0
    assert m.sq_rel == pytest.approx((1 / 2 + 4 / 4) / 2)
    assert m.rmse == pytest.approx(np.sqrt(2.5))
    assert m.rmse_log == pytest.approx(np.log(2))


def test_depth_range_and_clamp():
    gt = depth([[10.0, 90.0, 0.0]])
    pred = depth([[200.0, 5.0, 3.0]])
    m = eval_depth(pred, gt, DepthEvalConfig(median_scaling=False))
    # only the 10 m pixel is evaluated and the prediction is clamped to 80 m
    assert m.abs_rel == pytest.approx(7.0)
    with pytest.raises(NoValidPixels):
        eval_depth(pred, depth([[90.0, 100.0, 120.0]]))


def test_depth_ordering_invariants(rng):
    for _ in range(10):
        gt = depth(rng.uniform(1, 80, (5, 5)))
        m = eval_depth(depth(rng.uniform(1, 80, (5, 5))), gt)
        assert m.delta1 <= m.delta2 <= m.delta3 <= 1 and min(m.abs_rel, m.rmse) >= 0


@given(st.floats(1e-3, 1e3))
def test_depth_rescaling_invariance(k):
    rng = np.random.default_rng(5)
    gt = depth(rng.uniform(1, 80, (7, 9)))
    pred = depth(rng.uniform(1, 30, (7, 9)))
    a = eval_depth(pred, gt).as_dict()
    b = eval_depth(DepthMap(pred.values * k), gt).as_dict()
    assert all(abs(a[key] - b[key]) <= 1e-12 * max(1.0, abs(a[key])) for key in a)


def test_depth_by_range_and_mean():
    gt = depth([[5.0, 30.0, 70.0]])
    out = eval_depth_by_range(gt, gt, DepthEvalConfig(range_caps=(50,)))
    assert list(out) == ["cap_80", "cap_50"]
    m = mean_depth_metrics([eval_depth(depth([[1.0]]), depth([[2.0]]), DepthEvalConfig(median_scaling=False)),
                            eval_depth(gt, gt)])
    assert m.abs_rel == 0.25


def flow(u, v=0.0):
    return FlowField(np.array([[[u, v]]], float))


def test_flow_examples():
    assert eval_flow(flow(3.0), flow(3.0)).as_dict() == {"epe_noc": 0.0, "epe_all": 0.0, "f1": 0.0}
    assert eval_flow(flow(14.0), flow(10.0)).f1 == 1.0
    assert eval_flow(flow(104.0), flow(100.0)).f1 == 0.0


def test_flow_noc_and_validity():
    gt = FlowField(np.zeros((1, 3, 2)), valid=[[True, True, False]])
    pred = FlowField(np.array([[[1.0, 0], [3.0, 4.0], [50.0, 0]]]))
    m = eval_flow(pred, gt, noc_mask=[[1, 0, 1]])
    assert m.epe_all == 3.0 and m.epe_noc == 1.0 and m.f1 == 0.5
    with pytest.raises(NoValidPixels):
        eval_flow(pred, FlowField(np.zeros((1, 3, 2)), valid=np.zeros((1, 3))))


def test_flow_stats_pool(rng):
    a = [FlowField(rng.normal(0, 5, (4, 4, 2))) for _ in range(4)]
    pooled = flow_stats(a[0], a[1]) + flow_stats(a[2], a[3])
    both = flow_stats(FlowField(np.concatenate([a[0].uv, a[2].uv])), FlowField(np.concatenate([a[1].uv, a[3].uv])))
    assert pooled.metrics().epe_all == pytest.approx(both.metrics().epe_all)
    assert pooled.outliers == both.outliers
    assert (FlowStats() + pooled) == pooled


def brute_force_flow(pred, gt):
    epes, outliers = [], 0
    for y in range(gt.shape[0]):
        for x in range(gt.shape[1]):
            du, dv = pred[y, x] - gt[y, x]
            e = (du * du + dv * dv) ** 0.5
            epes.append(e)
            outliers += e > 3 and e > 0.05 * (gt[y, x, 0] ** 2 + gt[y, x, 1] ** 2) ** 0.5
    return sum(epes) / len(epes), outliers / len(epes)


def brute_force_iou(pred, gt, classes):
    out = {}
    for c in classes:
        inter = sum(1 for p, g in zip(pred.ravel(), gt.ravel()) if p == c and g == c)
        union = sum(1 for p, g in zip(pred.ravel(), gt.ravel()) if p == c or g == c)
        if union:
            out[c] = inter / union
    return out


def test_flow_matches_recount(rng):
    for _ in range(5):
        gt = rng.normal(0, 20, (16, 16, 2))
        pred = gt + rng.normal(0, 3, (16, 16, 2))
        epe, f1 = brute_force_flow(pred, gt)
        m = eval_flow(FlowField(pred), FlowField(gt))
        assert m.epe_all == pytest.approx(epe, rel=1e-12) and m.f1 == f1


def test_motion_seg_examples():
    assert eval_motion_seg([[1, 0], [0, 1]], [[1, 0], [0, 1]]).as_dict()["mean_iou"] == 1.0
    m = eval_motion_seg([[1, 1], [0, 0]], [[1, 0], [0, 0]])
    assert m.pixel_acc == 0.75
    assert m.per_class_iou == {"static": 2 / 3, "moving": 0.5}
    assert m.mean_iou == pytest.approx(7 / 12)
    assert m.mean_acc == pytest.approx((2 / 3 + 1) / 2)
    assert m.fw_iou == pytest.approx(0.75 * 2 / 3 + 0.25 * 0.5)
    degenerate = eval_motion_seg(np.zeros((3, 3)), np.zeros((3, 3)))
    assert degenerate.pixel_acc == 1.0 and degenerate.mean_iou == 1.0
    assert "moving" not in degenerate.per_class_iou


def test_motion_seg_matches_recount(rng):
    for _ in range(5):
        pred, gt = rng.integers(0, 2, (16, 16)), rng.integers(0, 2, (16, 16))
        ref = brute_force_iou(pred, gt, (0, 1))
        m = eval_motion_seg(pred, gt)
        assert m.per_class_iou == {("static", "moving")[c]: v for c, v in ref.items()}
        assert m.pixel_acc == (pred == gt).mean()


def test_semantic_examples():
    gt = np.array([[0, 0, 1, 1]])
    assert eval_semantic(gt, gt).miou_class == 1.0
    m = eval_semantic(np.zeros((1, 4), int), gt)
    assert m.per_class_iou == {"road": 0.5, "sidewalk": 0.0}
    assert m.miou_class == 0.25 and m.pixel_acc == 0.5
    # road and sidewalk share the "flat" category
    assert m.miou_category == 1.0
    with pytest.raises(NoValidPixels):
        eval_semantic(gt, np.full((1, 4), 255))
    with pytest.raises(UnknownClassId):
        eval_semantic(np.array([[19, 0, 0, 0]]), gt)


def test_semantic_ignore_handling():
    conf = semantic_confusion(np.array([[255, 2, 3]]), np.array([[2, 2, 255]]), class_count=5)
    assert conf.shape == (5, 6)
    assert conf[2, 5] == 1 and conf[2, 2] == 1 and conf.sum() == 2
    m = eval_semantic(np.array([[255, 2, 3]]), np.array([[2, 2, 255]]), class_count=5)
    assert m.per_class_iou == {"2": 0.5} and m.pixel_acc == 0.5


def test_semantic_matches_recount(rng):
    for _ in range(5):
        pred, gt = rng.integers(0, 6, (16, 16)), rng.integers(0, 6, (16, 16))
        m = eval_semantic(pred, gt, class_count=6)
        ref = brute_force_iou(pred, gt, range(6))
        assert m.per_class_iou == {str(c): v for c, v in ref.items()}
        assert m.miou_class == pytest.approx(np.mean(list(ref.values())), rel=1e-12)


def test_metrics_are_permutation_invariant(rng):
    pred, gt = rng.integers(0, 4, (8, 8)), rng.integers(0, 4, (8, 8))
    perm = rng.permutation(64)
    a = eval_semantic(pred, gt, class_count=4)
    b = eval_semantic(pred.ravel()[perm].reshape(8, 8), gt.ravel()[perm].reshape(8, 8), class_count=4)
    assert a == b
